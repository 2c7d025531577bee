//! Named, counter-addressed random sub-streams.
//!
//! Every random draw in a simulation is taken from a ChaCha stream keyed by
//! `(master seed, purpose, index path)`, so the value of any draw depends only
//! on where it sits in the experiment and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Channel = 1,
    Noise = 2,
    Payload = 3,
    Weights = 4,
    Offset = 5,
    SnrDraw = 6,
    Pilot = 7,
}

/// Which phase of an experiment a trial belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    FsTraining,
    CeTraining,
    Calibration,
    /// Evaluation at the given sweep-point index.
    Evaluation(u64),
}

impl Phase {
    fn code(self) -> u64 {
        match self {
            Phase::FsTraining => 1,
            Phase::CeTraining => 2,
            Phase::Calibration => 3,
            Phase::Evaluation(i) => 0x100 + i,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream for `(master, purpose, path)`.
pub fn substream(master: u64, purpose: Purpose, path: &[u64]) -> StreamRng {
    let mut state = master;
    let mut acc = splitmix64(&mut state) ^ (purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    for &p in path {
        let mut s = acc ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        acc = splitmix64(&mut s);
    }
    let mut seed = [0u8; 32];
    let mut s = acc;
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stream for one trial of one experiment phase.
pub fn trial_stream(master: u64, purpose: Purpose, phase: Phase, trial: u64) -> StreamRng {
    substream(master, purpose, &[phase.code(), trial])
}
