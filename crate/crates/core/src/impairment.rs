//! Saleh-model power amplifier, EVM measurement and drive-gain calibration,
//! and additive white Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Memoryless Saleh AM/AM and AM/PM coefficients plus the input drive gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpaParams {
    pub alpha_a: f64,
    pub beta_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
    pub drive_gain: f64,
}

impl Default for HpaParams {
    fn default() -> Self {
        Self {
            alpha_a: 2.16,
            beta_a: 1.15,
            alpha_phi: 4.00,
            beta_phi: 9.10,
            drive_gain: 1.0,
        }
    }
}

impl HpaParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_a, self.beta_a, self.alpha_phi, self.beta_phi, self.drive_gain];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "HPA coefficients and drive gain must be finite and positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_drive_gain(self, drive_gain: f64) -> Self {
        Self { drive_gain, ..self }
    }

    /// Output amplitude for input amplitude `r` (after drive gain).
    pub fn am_am(&self, r: f64) -> f64 {
        self.alpha_a * r / (1.0 + self.beta_a * r * r)
    }

    /// Added phase in radians for input amplitude `r` (after drive gain).
    pub fn am_pm(&self, r: f64) -> f64 {
        self.alpha_phi * r * r / (1.0 + self.beta_phi * r * r)
    }
}

/// Passes `x` through the amplifier.
pub fn hpa_apply(x: &[C64], p: &HpaParams) -> Vec<C64> {
    x.iter()
        .map(|&v| {
            let r = p.drive_gain * v.norm();
            if r == 0.0 {
                return C64::new(0.0, 0.0);
            }
            C64::from_polar(p.am_am(r), v.arg() + p.am_pm(r))
        })
        .collect()
}

/// Which EVM formula to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvmDefinition {
    /// `sqrt(‖x̃ − x_ref‖ / ‖x_ref‖)`: square root over a ratio of unsquared norms.
    #[default]
    RootRatio,
    /// `‖x̃ − x_ref‖ / ‖x_ref‖`.
    Standard,
}

impl EvmDefinition {
    pub fn name(self) -> &'static str {
        match self {
            EvmDefinition::RootRatio => "root-ratio",
            EvmDefinition::Standard => "standard",
        }
    }
}

impl std::str::FromStr for EvmDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root-ratio" => Ok(EvmDefinition::RootRatio),
            "standard" => Ok(EvmDefinition::Standard),
            other => Err(Error::Config(format!("unknown EVM definition {other:?}"))),
        }
    }
}

/// Error vector magnitude in percent of `distorted` against the best linear
/// complex-gain fit `α·reference`, `α = ⟨reference, distorted⟩ / ‖reference‖²`.
pub fn evm(distorted: &[C64], reference: &[C64], definition: EvmDefinition) -> Result<f64> {
    if distorted.len() != reference.len() || reference.is_empty() {
        return Err(Error::LengthMismatch {
            what: "EVM inputs",
            expected: reference.len(),
            actual: distorted.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|v| v.norm_sqr()).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let gain: C64 = reference
        .iter()
        .zip(distorted)
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        / ref_energy;
    let fit_energy = gain.norm_sqr() * ref_energy;
    if fit_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err_energy: f64 = reference
        .iter()
        .zip(distorted)
        .map(|(x, y)| (y - gain * x).norm_sqr())
        .sum();
    let ratio = (err_energy / fit_energy).sqrt();
    Ok(100.0
        * match definition {
            EvmDefinition::RootRatio => ratio.sqrt(),
            EvmDefinition::Standard => ratio,
        })
}

/// Result of a drive-gain calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub drive_gain: f64,
    pub achieved_evm: f64,
}

pub const DRIVE_GAIN_RANGE: (f64, f64) = (1e-3, 1e3);
/// Stop once the measured EVM is this close (percentage points) to the target.
const CALIBRATION_TOLERANCE_PP: f64 = 0.01;

/// Finds a drive gain at which `pilot` passed through the amplifier shows
/// `target_evm` percent EVM, by bisection on `log g` over [`DRIVE_GAIN_RANGE`].
pub fn calibrate_drive_gain(
    target_evm: f64,
    p: &HpaParams,
    pilot: &[C64],
    definition: EvmDefinition,
) -> Result<Calibration> {
    if !target_evm.is_finite() {
        return Err(Error::InvalidArgument("EVM target must be finite".into()));
    }
    let measure = |g: f64| evm(&hpa_apply(pilot, &p.with_drive_gain(g)), pilot, definition);
    let (mut lo, mut hi) = (DRIVE_GAIN_RANGE.0.ln(), DRIVE_GAIN_RANGE.1.ln());
    let (evm_lo, evm_hi) = (measure(lo.exp())?, measure(hi.exp())?);
    if !(evm_lo <= target_evm && target_evm <= evm_hi) {
        return Err(Error::CalibrationUnreachable {
            target: target_evm,
            low: evm_lo,
            high: evm_hi,
        });
    }
    let mut best = if (evm_lo - target_evm).abs() < (evm_hi - target_evm).abs() {
        Calibration { drive_gain: lo.exp(), achieved_evm: evm_lo }
    } else {
        Calibration { drive_gain: hi.exp(), achieved_evm: evm_hi }
    };
    for _ in 0..200 {
        if (best.achieved_evm - target_evm).abs() < CALIBRATION_TOLERANCE_PP {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let e = measure(mid.exp())?;
        if (e - target_evm).abs() < (best.achieved_evm - target_evm).abs() {
            best = Calibration { drive_gain: mid.exp(), achieved_evm: e };
        }
        if e < target_evm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// SNR and the mean signal power it is referenced to.
///
/// Noise variance is fixed at one; the signal is scaled so its mean power
/// becomes `10^(snr_db/10)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub signal_power: f64,
    /// Scale the signal but add no noise.
    pub noise_free: bool,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, signal_power: f64) -> Result<Self> {
        if !(signal_power.is_finite() && signal_power > 0.0) || !snr_db.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise spec needs finite SNR and positive signal power, got {snr_db} dB / {signal_power}"
            )));
        }
        Ok(Self {
            snr_db,
            signal_power,
            noise_free: false,
        })
    }

    pub fn without_noise(self) -> Self {
        Self {
            noise_free: true,
            ..self
        }
    }

    /// Amplitude factor applied to the signal.
    pub fn amplitude_scale(&self) -> f64 {
        (10f64.powf(self.snr_db / 10.0) / self.signal_power).sqrt()
    }
}

/// One `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Scales `x` to the requested SNR and adds unit-variance complex noise.
pub fn add_awgn<R: Rng + ?Sized>(x: &[C64], spec: &NoiseSpec, rng: &mut R) -> Vec<C64> {
    let a = spec.amplitude_scale();
    x.iter()
        .map(|&v| {
            let s = v * a;
            if spec.noise_free {
                s
            } else {
                s + complex_normal(rng)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_pilot(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| complex_normal(&mut rng)).collect()
    }

    #[test]
    fn hpa_zero_and_reference_point() {
        let p = HpaParams::default();
        assert_eq!(hpa_apply(&[C64::new(0.0, 0.0)], &p)[0], C64::new(0.0, 0.0));

        let y = hpa_apply(&[C64::new(1.0, 0.0)], &p)[0];
        assert!((y.norm() - 2.16 / 2.15).abs() < 1e-12);
        assert!((y.norm() - 1.004651).abs() < 1e-6);
        assert!((y.arg() - 4.00 / 10.10).abs() < 1e-12);
        assert!((y.arg() - 0.396040).abs() < 1e-6);
    }

    #[test]
    fn hpa_asymptotics() {
        let p = HpaParams::default();
        let r = 1e6;
        assert!((p.am_am(r) * p.beta_a * r / p.alpha_a - 1.0).abs() < 1e-9);
        assert!((p.am_pm(r) - p.alpha_phi / p.beta_phi).abs() < 1e-9);
    }

    #[test]
    fn am_am_rises_then_saturates() {
        let p = HpaParams::default();
        let peak = 1.0 / p.beta_a.sqrt();
        let mut prev = p.am_am(0.0);
        for i in 1..1000 {
            let r = peak * i as f64 / 1000.0;
            let a = p.am_am(r);
            assert!(a > prev);
            prev = a;
        }
        prev = p.am_am(peak);
        for i in 1..1000 {
            let r = peak * (1.0 + i as f64 / 100.0);
            let a = p.am_am(r);
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn hpa_phase_offset_depends_only_on_amplitude() {
        let p = HpaParams { drive_gain: 0.7, ..Default::default() };
        for k in 0..16 {
            let theta = k as f64 * 0.39;
            let x = C64::from_polar(0.8, theta);
            let y = hpa_apply(&[x], &p)[0];
            let d = (y / x).arg();
            assert!((d - p.am_pm(0.7 * 0.8)).abs() < 1e-12);
        }
    }

    #[test]
    fn evm_definitions() {
        let x = gaussian_pilot(64, 1);
        assert_eq!(evm(&x, &x, EvmDefinition::RootRatio).unwrap(), 0.0);
        assert_eq!(evm(&x, &x, EvmDefinition::Standard).unwrap(), 0.0);

        // distortion orthogonal to x with norm ratio 0.1225
        let e = gaussian_pilot(64, 9);
        let proj: C64 = x.iter().zip(&e).map(|(a, b)| a.conj() * b).sum::<C64>()
            / x.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let e: Vec<C64> = e.iter().zip(&x).map(|(b, a)| b - proj * a).collect();
        let xn: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let en: f64 = e.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let d: Vec<C64> = x.iter().zip(&e).map(|(a, b)| a + b * (0.1225 * xn / en)).collect();
        assert!((evm(&d, &x, EvmDefinition::Standard).unwrap() - 12.25).abs() < 1e-9);
        assert!((evm(&d, &x, EvmDefinition::RootRatio).unwrap() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn evm_rotation_invariant() {
        let x = gaussian_pilot(256, 2);
        let p = HpaParams { drive_gain: 0.5, ..Default::default() };
        let y = hpa_apply(&x, &p);
        let rot = C64::from_polar(1.0, 1.234);
        let xr: Vec<C64> = x.iter().map(|v| v * rot).collect();
        let yr: Vec<C64> = y.iter().map(|v| v * rot).collect();
        let a = evm(&y, &x, EvmDefinition::Standard).unwrap();
        let b = evm(&yr, &xr, EvmDefinition::Standard).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn evm_errors() {
        let z = vec![C64::new(0.0, 0.0); 4];
        assert!(matches!(evm(&z, &z, EvmDefinition::Standard), Err(Error::ZeroReference)));
        assert!(evm(&z[..2], &z, EvmDefinition::Standard).is_err());
        assert!(evm(&[], &[], EvmDefinition::Standard).is_err());
    }

    #[test]
    fn calibration_hits_target_and_is_monotone() {
        let pilot = gaussian_pilot(10_000, 3);
        let p = HpaParams::default();
        let cal = calibrate_drive_gain(35.0, &p, &pilot, EvmDefinition::RootRatio).unwrap();
        assert!((cal.achieved_evm - 35.0).abs() < 0.1);
        let measured = evm(&hpa_apply(&pilot, &p.with_drive_gain(cal.drive_gain)), &pilot, EvmDefinition::RootRatio).unwrap();
        assert!((34.9..=35.1).contains(&measured));
        let doubled = evm(&hpa_apply(&pilot, &p.with_drive_gain(2.0 * cal.drive_gain)), &pilot, EvmDefinition::RootRatio).unwrap();
        assert!(doubled > measured);

        let again = calibrate_drive_gain(35.0, &p, &pilot, EvmDefinition::RootRatio).unwrap();
        assert_eq!(cal, again);
    }

    #[test]
    fn calibration_zero_target_unreachable() {
        let pilot = gaussian_pilot(1000, 4);
        let err = calibrate_drive_gain(0.0, &HpaParams::default(), &pilot, EvmDefinition::RootRatio);
        assert!(matches!(err, Err(Error::CalibrationUnreachable { .. })));
    }

    #[test]
    fn calibration_fails_on_constant_modulus_pilot() {
        // a memoryless amplifier is a pure complex gain on constant-envelope input
        let pilot = crate::signal::zadoff_chu(64, 1).unwrap();
        let err = calibrate_drive_gain(35.0, &HpaParams::default(), &pilot, EvmDefinition::RootRatio);
        assert!(matches!(err, Err(Error::CalibrationUnreachable { .. })));
    }

    #[test]
    fn noise_variance_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zeros = vec![C64::new(0.0, 0.0); 1_000_000];
        let spec = NoiseSpec::new(0.0, 1.0).unwrap();
        let n = add_awgn(&zeros, &spec, &mut rng);
        let var = n.iter().map(|v| v.norm_sqr()).sum::<f64>() / n.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "variance {var}");

        let x = gaussian_pilot(10_000, 6);
        let p = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        let clean = add_awgn(&x, &NoiseSpec::new(0.0, p).unwrap().without_noise(), &mut rng);
        let p2 = clean.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((p2 - 1.0).abs() < 0.01);

        let spec = NoiseSpec::new(13.0, 2.0).unwrap().without_noise();
        let y = add_awgn(&x, &spec, &mut rng);
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(*b, a * spec.amplitude_scale());
        }
        assert!(NoiseSpec::new(10.0, 0.0).is_err());
    }
}
