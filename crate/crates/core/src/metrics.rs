//! Error probability of frame synchronization and channel-estimation NMSE.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Ground truth and estimate of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub tau_true: usize,
    pub tau_hat: usize,
    pub h_true: Vec<C64>,
    pub h_hat: Vec<C64>,
}

impl TrialOutcome {
    pub fn sync_error(&self) -> bool {
        self.tau_hat != self.tau_true
    }

    /// `‖ĥ − h‖² / ‖h‖²`.
    pub fn normalized_error(&self) -> Result<f64> {
        normalized_error(&self.h_hat, &self.h_true)
    }
}

/// `‖ĥ − h‖² / ‖h‖²` for one trial.
pub fn normalized_error(h_hat: &[C64], h_true: &[C64]) -> Result<f64> {
    if h_hat.len() != h_true.len() {
        return Err(Error::LengthMismatch {
            what: "channel estimate",
            expected: h_true.len(),
            actual: h_hat.len(),
        });
    }
    let energy: f64 = h_true.iter().map(|v| v.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::ZeroChannel(0));
    }
    let err: f64 = h_hat.iter().zip(h_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / energy)
}

/// `N_error / N_r`.
pub fn error_probability(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let errors = outcomes.iter().filter(|o| o.sync_error()).count();
    Ok(errors as f64 / outcomes.len() as f64)
}

/// Mean of the per-trial normalized squared errors.
pub fn nmse(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut acc = Tally::default();
    for (i, o) in outcomes.iter().enumerate() {
        acc.push(o).map_err(|e| match e {
            Error::ZeroChannel(_) => Error::ZeroChannel(i),
            other => other,
        })?;
    }
    Ok(acc.nmse_sum / acc.trials as f64)
}

/// Running totals for one (estimator, sweep point) cell. Merging tallies in
/// a fixed order gives a deterministic result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub sync_errors: u64,
    pub nmse_sum: f64,
}

impl Tally {
    pub fn push(&mut self, o: &TrialOutcome) -> Result<()> {
        self.record(o.sync_error(), o.normalized_error()?);
        Ok(())
    }

    pub fn record(&mut self, sync_error: bool, normalized_error: f64) {
        self.trials += 1;
        self.sync_errors += sync_error as u64;
        self.nmse_sum += normalized_error;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        self.sync_errors += other.sync_errors;
        self.nmse_sum += other.nmse_sum;
    }

    pub fn error_probability(&self) -> Result<f64> {
        if self.trials == 0 {
            return Err(Error::EmptyOutcomes);
        }
        Ok(self.sync_errors as f64 / self.trials as f64)
    }

    pub fn nmse(&self) -> Result<f64> {
        if self.trials == 0 {
            return Err(Error::EmptyOutcomes);
        }
        Ok(self.nmse_sum / self.trials as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn outcome(tau_true: usize, tau_hat: usize, h: Vec<C64>, h_hat: Vec<C64>) -> TrialOutcome {
        TrialOutcome {
            tau_true,
            tau_hat,
            h_true: h,
            h_hat,
        }
    }

    fn h() -> Vec<C64> {
        vec![C64::new(0.6, -0.2), C64::new(0.1, 0.3)]
    }

    #[test]
    fn error_probability_counts() {
        let all: Vec<_> = (0..100).map(|i| outcome(i, i, h(), h())).collect();
        assert_eq!(error_probability(&all).unwrap(), 0.0);
        let some: Vec<_> = (0..100).map(|i| outcome(i, if i < 5 { i + 1 } else { i }, h(), h())).collect();
        assert_eq!(error_probability(&some).unwrap(), 0.05);
        assert!(matches!(error_probability(&[]), Err(Error::EmptyOutcomes)));
    }

    #[test]
    fn nmse_reference_values() {
        let exact = vec![outcome(0, 0, h(), h()); 3];
        assert_eq!(nmse(&exact).unwrap(), 0.0);
        let zero = vec![outcome(0, 0, h(), vec![C64::new(0.0, 0.0); 2]); 3];
        assert!((nmse(&zero).unwrap() - 1.0).abs() < 1e-15);
        let double = vec![outcome(0, 0, h(), h().iter().map(|v| v * 2.0).collect()); 3];
        assert!((nmse(&double).unwrap() - 1.0).abs() < 1e-15);
        let bad = vec![outcome(0, 0, vec![C64::new(0.0, 0.0); 2], h())];
        assert!(matches!(nmse(&bad), Err(Error::ZeroChannel(_))));
    }

    #[test]
    fn nmse_is_mean_of_ratios() {
        let a = outcome(0, 0, vec![C64::new(1.0, 0.0)], vec![C64::new(0.0, 0.0)]);
        let b = outcome(0, 0, vec![C64::new(10.0, 0.0)], vec![C64::new(10.0, 0.0)]);
        assert!((nmse(&[a, b]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_guessing_error_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 100_000;
        let outcomes: Vec<_> = (0..n)
            .map(|_| outcome(rng.random_range(0..160), rng.random_range(0..160), h(), h()))
            .collect();
        let p = 159.0 / 160.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((error_probability(&outcomes).unwrap() - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn tally_matches_batch_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let outcomes: Vec<_> = (0..50)
            .map(|_| {
                let t = rng.random_range(0..4);
                outcome(t, rng.random_range(0..4), h(), vec![C64::new(rng.random(), rng.random()); 2])
            })
            .collect();
        let mut left = Tally::default();
        let mut right = Tally::default();
        for o in &outcomes[..20] {
            left.push(o).unwrap();
        }
        for o in &outcomes[20..] {
            right.push(o).unwrap();
        }
        left.merge(&right);
        assert_eq!(left.error_probability().unwrap(), error_probability(&outcomes).unwrap());
        assert!((left.nmse().unwrap() - nmse(&outcomes).unwrap()).abs() < 1e-12);
        assert!(Tally::default().nmse().is_err());
    }
}
