//! Training sequences, payloads, frames and the shift constructions of the
//! received-signal model.

use rand::Rng;

use crate::numerics::ComplexMatrix;
use crate::{Error, Result, C64};

/// One transmit frame: `ns` training samples followed by `m - ns` payload samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    samples: Vec<C64>,
    ns: usize,
}

impl Frame {
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn training(&self) -> &[C64] {
        &self.samples[..self.ns]
    }

    pub fn payload(&self) -> &[C64] {
        &self.samples[self.ns..]
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }
}

/// `m` received samples observed with the frame start at `true_offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    pub samples: Vec<C64>,
    pub true_offset: usize,
}

impl SampleWindow {
    pub fn new(samples: Vec<C64>, true_offset: usize) -> Result<Self> {
        if true_offset >= samples.len() {
            return Err(Error::InvalidArgument(format!(
                "offset {true_offset} outside window of {} samples",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            true_offset,
        })
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu sequence of length `ns` with root `root`.
///
/// Uses `exp(-jπ·root·n·(n + c)/ns)` with `c = ns mod 2`, i.e. `n²` for even
/// lengths and `n(n+1)` for odd ones, so the periodic autocorrelation is ideal
/// for any length.
pub fn zadoff_chu(ns: usize, root: u64) -> Result<Vec<C64>> {
    if ns < 2 {
        return Err(Error::InvalidArgument(format!(
            "Zadoff-Chu length must be at least 2, got {ns}"
        )));
    }
    if root == 0 || gcd(root, ns as u64) != 1 {
        return Err(Error::InvalidArgument(format!(
            "Zadoff-Chu root {root} is not coprime with length {ns}"
        )));
    }
    let c = (ns % 2) as u128;
    let period = 2 * ns as u128;
    Ok((0..ns as u128)
        .map(|n| {
            // reduce the exponent exactly before going to floating point
            let k = (root as u128 * n * (n + c)) % period;
            C64::from_polar(1.0, -std::f64::consts::PI * k as f64 / ns as f64)
        })
        .collect())
}

/// Gray-mapped QPSK symbol for the bit pair `(first, second)`:
/// `00 → (1+j)/√2`, `01 → (−1+j)/√2`, `11 → (−1−j)/√2`, `10 → (1−j)/√2`.
pub fn qpsk_symbol(first: bool, second: bool) -> C64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(if second { -a } else { a }, if first { -a } else { a })
}

/// `count` Gray-mapped QPSK symbols drawn from `bits`.
pub fn qpsk_payload<R: Rng + ?Sized>(bits: &mut R, count: usize) -> Vec<C64> {
    (0..count)
        .map(|_| {
            let pair: u8 = bits.random_range(0..4);
            qpsk_symbol(pair & 0b10 != 0, pair & 0b01 != 0)
        })
        .collect()
}

/// Concatenates training and payload into a frame.
pub fn build_frame(training: &[C64], payload: &[C64], m: usize) -> Result<Frame> {
    if training.len() > m {
        return Err(Error::InvalidArgument(format!(
            "training length {} exceeds frame length {m}",
            training.len()
        )));
    }
    if payload.len() != m - training.len() {
        return Err(Error::LengthMismatch {
            what: "payload",
            expected: m - training.len(),
            actual: payload.len(),
        });
    }
    let mut samples = Vec::with_capacity(m);
    samples.extend_from_slice(training);
    samples.extend_from_slice(payload);
    Ok(Frame {
        samples,
        ns: training.len(),
    })
}

/// Right cyclic shift: `out[i] = v[(i - tau) mod M]`.
pub fn cyclic_shift(v: &[C64], tau: usize) -> Result<Vec<C64>> {
    let m = v.len();
    if tau >= m.max(1) {
        return Err(Error::InvalidArgument(format!(
            "shift {tau} outside [0, {}]",
            m.saturating_sub(1)
        )));
    }
    let mut out = Vec::with_capacity(m);
    out.extend_from_slice(&v[m - tau..]);
    out.extend_from_slice(&v[..m - tau]);
    Ok(out)
}

fn check_shift_inputs(current: &[C64], previous: &[C64], l: usize) -> Result<()> {
    let m = current.len();
    if previous.len() != m {
        return Err(Error::LengthMismatch {
            what: "previous frame",
            expected: m,
            actual: previous.len(),
        });
    }
    if l == 0 || l > m {
        return Err(Error::InvalidArgument(format!(
            "tap count {l} outside [1, {m}]"
        )));
    }
    Ok(())
}

/// Inter-frame shift matrix (`M × L`): entry `(r, c)` is `current[r - c]`
/// when `r ≥ c`, otherwise the tail sample `previous[M + r - c]`.
pub fn shift_matrix(current: &[C64], previous: &[C64], l: usize) -> Result<ComplexMatrix> {
    check_shift_inputs(current, previous, l)?;
    let m = current.len();
    Ok(ComplexMatrix::from_fn(m, l, |r, c| {
        if r >= c {
            current[r - c]
        } else {
            previous[m + r - c]
        }
    }))
}

/// `shift_matrix(current, previous, taps.len()) · taps` without forming the matrix.
pub fn convolve_frames(current: &[C64], previous: &[C64], taps: &[C64]) -> Result<Vec<C64>> {
    check_shift_inputs(current, previous, taps.len())?;
    let m = current.len();
    Ok((0..m)
        .map(|r| {
            taps.iter()
                .enumerate()
                .map(|(c, &h)| {
                    let x = if r >= c { current[r - c] } else { previous[m + r - c] };
                    x * h
                })
                .sum()
        })
        .collect())
}
