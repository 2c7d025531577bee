//! Rician multipath channel with exponential power-delay profile, and the
//! received-window construction.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::impairment::{add_awgn, complex_normal, NoiseSpec};
use crate::signal::{convolve_frames, cyclic_shift, SampleWindow};
use crate::{Error, Result, C64};

/// Which taps carry the deterministic line-of-sight component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LosProfile {
    /// Only the first (direct) path, `h_LOS = [1, 0, …, 0]`.
    #[default]
    FirstTap,
    /// Every tap, `h_LOS = [1, 1, …, 1]`.
    AllTaps,
}

impl LosProfile {
    pub fn name(self) -> &'static str {
        match self {
            LosProfile::FirstTap => "first-tap",
            LosProfile::AllTaps => "all-taps",
        }
    }

    fn los(self, l: usize) -> f64 {
        match self {
            LosProfile::FirstTap if l > 0 => 0.0,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for LosProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-tap" => Ok(LosProfile::FirstTap),
            "all-taps" => Ok(LosProfile::AllTaps),
            other => Err(Error::Config(format!("unknown LOS profile {other:?}"))),
        }
    }
}

/// Rician channel statistics.
///
/// Tap `l` is `sqrt(p_l / Z)·(sqrt(K/(K+1))·h_LOS_l + sqrt(1/(K+1))·g_l)` with
/// `g_l ~ CN(0, 1)`, `p_l ∝ exp(−η·l)` and `Z` chosen so that `E‖h‖² = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub l: usize,
    /// Linear LOS-to-scattered power ratio; infinite for a pure LOS channel.
    pub k_factor: f64,
    pub eta: f64,
    pub los: LosProfile,
}

impl ChannelModel {
    pub fn new(l: usize, k_factor: f64, eta: f64, los: LosProfile) -> Result<Self> {
        if l == 0 || k_factor.is_nan() || k_factor < 0.0 || !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "channel needs l >= 1, k >= 0, eta >= 0 (got l={l}, k={k_factor}, eta={eta})"
            )));
        }
        Ok(Self { l, k_factor, eta, los })
    }

    /// `(sqrt(K/(K+1)), sqrt(1/(K+1)))`.
    pub fn mixing(&self) -> (f64, f64) {
        let k = self.k_factor;
        if k.is_infinite() {
            (1.0, 0.0)
        } else {
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        }
    }

    /// Per-tap amplitude scale `sqrt(p_l / Z)`.
    fn amplitudes(&self) -> Vec<f64> {
        let profile = power_profile(self.l, self.eta);
        let (a, b) = self.mixing();
        let z: f64 = profile
            .iter()
            .enumerate()
            .map(|(i, p)| p * (a * a * self.los.los(i) + b * b))
            .sum();
        profile.iter().map(|p| (p / z).sqrt()).collect()
    }

    /// `E[tap_l]` for every tap.
    pub fn tap_means(&self) -> Vec<f64> {
        let (a, _) = self.mixing();
        self.amplitudes()
            .iter()
            .enumerate()
            .map(|(i, s)| s * a * self.los.los(i))
            .collect()
    }

    /// `Var[tap_l]` for every tap.
    pub fn tap_variances(&self) -> Vec<f64> {
        let (_, b) = self.mixing();
        self.amplitudes().iter().map(|s| s * s * b * b).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let (a, b) = self.mixing();
        let taps = self
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let scattered = if b > 0.0 { complex_normal(rng) * b } else { C64::new(0.0, 0.0) };
                (C64::new(a * self.los.los(i), 0.0) + scattered) * s
            })
            .collect();
        ChannelRealization {
            taps,
            k_factor: self.k_factor,
            decay_eta: self.eta,
            power_profile: power_profile(self.l, self.eta),
        }
    }
}

/// One block-fading channel draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<C64>,
    /// Linear LOS-to-scattered power ratio; `f64::INFINITY` is a pure LOS channel.
    pub k_factor: f64,
    pub decay_eta: f64,
    pub power_profile: Vec<f64>,
}

impl ChannelRealization {
    pub fn l(&self) -> usize {
        self.taps.len()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Deterministic channel with the given taps (profile derived from tap powers).
    pub fn fixed(taps: Vec<C64>) -> Self {
        let total: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        let power_profile = taps
            .iter()
            .map(|t| if total > 0.0 { t.norm_sqr() / total } else { 0.0 })
            .collect();
        Self {
            taps,
            k_factor: f64::INFINITY,
            decay_eta: 0.0,
            power_profile,
        }
    }
}

/// Normalised exponential profile `exp(−η·l) / Σ exp(−η·l')`.
pub fn power_profile(l: usize, eta: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|i| (-eta * i as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Draws `l` taps from the default [`ChannelModel`] (LOS on the first tap).
pub fn draw_channel<R: Rng + ?Sized>(l: usize, k: f64, eta: f64, rng: &mut R) -> Result<ChannelRealization> {
    Ok(ChannelModel::new(l, k, eta, LosProfile::default())?.draw(rng))
}

/// Cyclically delays `y` by `tau`, scales it to the SNR and adds noise.
pub fn window_from_signal<R: Rng + ?Sized>(
    y: &[C64],
    tau: usize,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<SampleWindow> {
    let shifted = cyclic_shift(y, tau)?;
    SampleWindow::new(add_awgn(&shifted, noise, rng), tau)
}

/// Received window for a frame pair passed through `h` and observed at offset `tau`.
pub fn receive_window<R: Rng + ?Sized>(
    current_frame_tx: &[C64],
    previous_frame_tx: &[C64],
    h: &ChannelRealization,
    tau: usize,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<SampleWindow> {
    let y = convolve_frames(current_frame_tx, previous_frame_tx, &h.taps)?;
    window_from_signal(&y, tau, noise, rng)
}

/// Writes `trial,tap,re,im` rows for debugging channel draws.
pub fn dump_taps_csv<'a, W: Write>(
    out: &mut W,
    realizations: impl IntoIterator<Item = (usize, &'a ChannelRealization)>,
) -> std::io::Result<()> {
    writeln!(out, "trial,tap,re,im")?;
    for (trial, h) in realizations {
        for (i, t) in h.taps.iter().enumerate() {
            writeln!(out, "{trial},{i},{:e},{:e}", t.re, t.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn profile_normalised_and_exponential() {
        let p = power_profile(8, 0.2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 1..8 {
            assert!((p[i] / p[i - 1] - (-0.2f64).exp()).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = draw_channel(8, 8.0, 0.2, &mut rng).unwrap();
        assert_eq!(h.l(), 8);
        assert_eq!(h.power_profile, p);
    }

    #[test]
    fn pure_los_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = draw_channel(4, f64::INFINITY, 0.2, &mut rng).unwrap();
        assert_eq!(h.taps, vec![c(1.0), c(0.0), c(0.0), c(0.0)]);
        let all = ChannelModel::new(4, f64::INFINITY, 0.2, LosProfile::AllTaps).unwrap().draw(&mut rng);
        for (t, p) in all.taps.iter().zip(&all.power_profile) {
            assert!((t - c(p.sqrt())).norm() < 1e-15);
        }
    }

    #[test]
    fn rician_moments_and_k_factor() {
        let n = 100_000;
        for los in [LosProfile::FirstTap, LosProfile::AllTaps] {
            let model = ChannelModel::new(8, 8.0, 0.2, los).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let draws: Vec<ChannelRealization> = (0..n).map(|_| model.draw(&mut rng)).collect();
            let (means, vars) = (model.tap_means(), model.tap_variances());
            let mut energy = 0.0;
            for l in 0..8 {
                let mean: C64 = draws.iter().map(|h| h.taps[l]).sum::<C64>() / n as f64;
                let var = draws.iter().map(|h| (h.taps[l] - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
                let sigma_mean = (vars[l] / 2.0 / n as f64).sqrt();
                assert!((mean.re - means[l]).abs() < 3.0 * sigma_mean, "{los:?} tap {l}");
                assert!(mean.im.abs() < 3.0 * sigma_mean);
                // |g|² is exponential, so the sample variance has relative sd 1/sqrt(n)
                assert!((var - vars[l]).abs() < 3.0 * vars[l] / (n as f64).sqrt(), "{los:?} tap {l}");
                if means[l] > 0.0 {
                    let k_hat = mean.norm_sqr() / var;
                    assert!((k_hat / 8.0 - 1.0).abs() < 0.05);
                }
                energy += mean.norm_sqr() + var;
            }
            assert!((energy - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50_000;
        let mut mean = [C64::new(0.0, 0.0); 4];
        let mut pow = [0.0; 4];
        for _ in 0..n {
            let h = draw_channel(4, 0.0, 0.5, &mut rng).unwrap();
            for i in 0..4 {
                mean[i] += h.taps[i];
                pow[i] += h.taps[i].norm_sqr();
            }
        }
        let p = power_profile(4, 0.5);
        for i in 0..4 {
            let m = mean[i] / n as f64;
            let sigma = (p[i] / n as f64).sqrt();
            assert!(m.norm() < 4.0 * sigma);
            assert!((pow[i] / n as f64 - p[i]).abs() < 0.03 * p[i]);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(draw_channel(0, 1.0, 0.2, &mut rng).is_err());
        assert!(draw_channel(2, -1.0, 0.2, &mut rng).is_err());
        assert!(draw_channel(2, 1.0, -0.2, &mut rng).is_err());
        assert!("sideways".parse::<LosProfile>().is_err());
        assert_eq!("all-taps".parse::<LosProfile>().unwrap(), LosProfile::AllTaps);
    }

    #[test]
    fn identity_channel_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cur: Vec<C64> = (0..10).map(|i| C64::new(i as f64, -(i as f64))).collect();
        let prev = vec![c(9.0); 10];
        let h = ChannelRealization::fixed(vec![c(1.0)]);
        let noise = NoiseSpec::new(0.0, 1.0).unwrap().without_noise();
        let w = receive_window(&cur, &prev, &h, 0, &noise, &mut rng).unwrap();
        assert_eq!(w.samples, cur);
        assert_eq!(w.true_offset, 0);
    }

    #[test]
    fn two_tap_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cur = vec![c(1.0), c(2.0), c(3.0), c(4.0)];
        let prev = vec![c(5.0), c(6.0), c(7.0), c(8.0)];
        let h = ChannelRealization::fixed(vec![c(1.0), c(0.5)]);
        let noise = NoiseSpec::new(0.0, 1.0).unwrap().without_noise();
        let w = receive_window(&cur, &prev, &h, 0, &noise, &mut rng).unwrap();
        let expect = [1.0 + 0.5 * 8.0, 2.0 + 0.5, 3.0 + 1.0, 4.0 + 1.5];
        for (a, b) in w.samples.iter().zip(expect) {
            assert!((a - c(b)).norm() < 1e-12);
        }

        let w5 = receive_window(&cur, &prev, &h, 3, &noise, &mut rng).unwrap();
        assert_eq!(w5.samples, cyclic_shift(&w.samples, 3).unwrap());
        assert!(receive_window(&cur, &prev, &h, 4, &noise, &mut rng).is_err());
    }

    #[test]
    fn window_is_linear_in_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cur: Vec<C64> = (0..16).map(|_| complex_normal(&mut rng)).collect();
        let prev: Vec<C64> = (0..16).map(|_| complex_normal(&mut rng)).collect();
        let noise = NoiseSpec::new(0.0, 1.0).unwrap().without_noise();
        for _ in 0..10 {
            let a: Vec<C64> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let b: Vec<C64> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let sum: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let wa = receive_window(&cur, &prev, &ChannelRealization::fixed(a), 5, &noise, &mut rng).unwrap();
            let wb = receive_window(&cur, &prev, &ChannelRealization::fixed(b), 5, &noise, &mut rng).unwrap();
            let ws = receive_window(&cur, &prev, &ChannelRealization::fixed(sum), 5, &noise, &mut rng).unwrap();
            for i in 0..16 {
                assert!((wa.samples[i] + wb.samples[i] - ws.samples[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_dump() {
        let h = ChannelRealization::fixed(vec![c(1.0), C64::new(0.0, -0.5)]);
        let mut out = Vec::new();
        dump_taps_csv(&mut out, [(3, &h)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("trial,tap,re,im\n3,0,"));
    }
}
