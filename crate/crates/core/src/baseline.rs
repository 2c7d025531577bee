//! Classical joint frame-sync / channel estimators.
//!
//! * projection metric + least-squares channel fit (`ml`)
//! * cyclic cross-correlation + orthogonal matching pursuit (`omp`)
//!
//! The cross-correlation metric and the OMP estimate are also the input
//! features of the cascaded networks.

use serde::{Deserialize, Serialize};

use crate::numerics::{self, ComplexMatrix};
use crate::signal::SampleWindow;
use crate::{Error, Result, C64};

/// Joint estimate produced by any estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct JfsceEstimate {
    pub tau_hat: usize,
    pub h_hat: Vec<C64>,
    /// Per-offset synchronization metric used to pick `tau_hat`.
    pub metric: Vec<f64>,
}

/// Measurement matrix used by the OMP channel estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmpMatrixMode {
    /// Fully-loaded convolution rows of the known training sequence only.
    #[default]
    TrainingOnly,
    /// All `M` rows built from the complete transmitted frame (payload known to
    /// the estimator), indices taken modulo `M`.
    GenieFrame,
}

impl OmpMatrixMode {
    pub fn name(self) -> &'static str {
        match self {
            OmpMatrixMode::TrainingOnly => "training-only",
            OmpMatrixMode::GenieFrame => "genie-frame",
        }
    }
}

impl std::str::FromStr for OmpMatrixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training-only" => Ok(OmpMatrixMode::TrainingOnly),
            "genie-frame" => Ok(OmpMatrixMode::GenieFrame),
            other => Err(Error::Config(format!("unknown OMP matrix mode {other:?}"))),
        }
    }
}

/// Index of the first maximum.
pub fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Precomputed training-sequence geometry shared by the classical estimators.
#[derive(Clone, Debug)]
pub struct BaselineReceiver {
    training: Vec<C64>,
    m: usize,
    l: usize,
    conv: ComplexMatrix,
    /// `I − B`, the projector onto the orthogonal complement of the training subspace.
    complement: ComplexMatrix,
    conv_pinv: ComplexMatrix,
}

impl BaselineReceiver {
    pub fn new(training: &[C64], m: usize, l: usize) -> Result<Self> {
        if training.len() > m {
            return Err(Error::InvalidArgument(format!(
                "training length {} exceeds window length {m}",
                training.len()
            )));
        }
        let conv = numerics::training_convolution_matrix(training, l)?;
        let projector = numerics::projection_matrix(&conv)?;
        let complement = ComplexMatrix::identity(conv.rows()).sub(&projector);
        let conv_pinv = numerics::pinv(&conv, None)?;
        Ok(Self {
            training: training.to_vec(),
            m,
            l,
            conv,
            complement,
            conv_pinv,
        })
    }

    pub fn training(&self) -> &[C64] {
        &self.training
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn ns(&self) -> usize {
        self.training.len()
    }

    fn check(&self, window: &SampleWindow) -> Result<()> {
        if window.m() != self.m {
            return Err(Error::LengthMismatch {
                what: "window",
                expected: self.m,
                actual: window.m(),
            });
        }
        Ok(())
    }

    fn check_tau(&self, tau: usize) -> Result<()> {
        if tau >= self.m {
            return Err(Error::InvalidArgument(format!("offset {tau} outside [0, {})", self.m)));
        }
        Ok(())
    }

    /// Received samples that, under frame start `tau`, carry only training
    /// symbols through all `L` taps.
    pub fn training_segment(&self, window: &SampleWindow, tau: usize) -> Vec<C64> {
        let start = tau + self.l - 1;
        (0..self.conv.rows())
            .map(|r| window.samples[(start + r) % self.m])
            .collect()
    }

    /// Projection metric `q(τ) = r_τᴴ (B − I) r_τ = −‖(I − B) r_τ‖²` for every
    /// offset, and its argmax.
    pub fn fs_projection(&self, window: &SampleWindow) -> Result<(usize, Vec<f64>)> {
        self.check(window)?;
        let metric: Vec<f64> = (0..self.m)
            .map(|tau| {
                let r = self.training_segment(window, tau);
                -self.complement.mul_vec(&r).iter().map(|v| v.norm_sqr()).sum::<f64>()
            })
            .collect();
        Ok((argmax_first(metric.iter().copied()), metric))
    }

    /// Least-squares channel fit of the training segment at `tau_hat`.
    pub fn ce_ml(&self, window: &SampleWindow, tau_hat: usize) -> Result<Vec<C64>> {
        self.check(window)?;
        self.check_tau(tau_hat)?;
        Ok(self.conv_pinv.mul_vec(&self.training_segment(window, tau_hat)))
    }

    /// Cyclic cross-correlation `u = Sᴴ r` at every lag and `argmax |u_i|²`.
    pub fn fs_crosscorr(&self, window: &SampleWindow) -> Result<(usize, Vec<C64>)> {
        self.check(window)?;
        let r = &window.samples;
        let u: Vec<C64> = (0..self.m)
            .map(|i| {
                self.training
                    .iter()
                    .enumerate()
                    .map(|(k, s)| s.conj() * r[(k + i) % self.m])
                    .sum()
            })
            .collect();
        Ok((argmax_first(u.iter().map(|v| v.norm_sqr())), u))
    }

    /// OMP channel estimate over the training convolution rows at `tau_hat`.
    pub fn omp_ce(&self, window: &SampleWindow, tau_hat: usize, iters: usize) -> Result<Vec<C64>> {
        self.check(window)?;
        self.check_tau(tau_hat)?;
        let y = self.training_segment(window, tau_hat);
        Ok(omp(&self.conv, &y, iters)?.coefficients)
    }

    /// OMP over all `M` rows of the full known frame, indices modulo `M`.
    pub fn omp_ce_genie(
        &self,
        window: &SampleWindow,
        tau_hat: usize,
        frame: &[C64],
        iters: usize,
    ) -> Result<Vec<C64>> {
        self.check(window)?;
        self.check_tau(tau_hat)?;
        if frame.len() != self.m {
            return Err(Error::LengthMismatch {
                what: "genie frame",
                expected: self.m,
                actual: frame.len(),
            });
        }
        let m = self.m;
        let phi = ComplexMatrix::from_fn(m, self.l, |i, c| frame[(i + 2 * m - tau_hat - c) % m]);
        Ok(omp(&phi, &window.samples, iters)?.coefficients)
    }

    /// `ml` estimator: projection sync, then least-squares channel.
    pub fn estimate_ml(&self, window: &SampleWindow) -> Result<JfsceEstimate> {
        let (tau_hat, metric) = self.fs_projection(window)?;
        let h_hat = self.ce_ml(window, tau_hat)?;
        Ok(JfsceEstimate { tau_hat, h_hat, metric })
    }

    /// `omp` estimator: correlation sync, then OMP channel.
    pub fn estimate_omp(
        &self,
        window: &SampleWindow,
        iters: usize,
        mode: OmpMatrixMode,
        frame: Option<&[C64]>,
    ) -> Result<JfsceEstimate> {
        let (tau_hat, u) = self.fs_crosscorr(window)?;
        let h_hat = match mode {
            OmpMatrixMode::TrainingOnly => self.omp_ce(window, tau_hat, iters)?,
            OmpMatrixMode::GenieFrame => {
                let frame = frame.ok_or_else(|| {
                    Error::InvalidArgument("genie OMP mode needs the transmitted frame".into())
                })?;
                self.omp_ce_genie(window, tau_hat, frame, iters)?
            }
        };
        Ok(JfsceEstimate {
            tau_hat,
            h_hat,
            metric: u.iter().map(|v| v.norm_sqr()).collect(),
        })
    }
}

/// Output of [`omp`].
#[derive(Clone, Debug, PartialEq)]
pub struct OmpSolution {
    /// One entry per column of the measurement matrix; unselected atoms are zero.
    pub coefficients: Vec<C64>,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first and after every iteration.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with exactly `iters` iterations.
///
/// Each step picks the atom with the largest normalised correlation with the
/// residual and re-fits all selected atoms jointly by least squares, kept as
/// an incremental QR factorisation of the selected columns.
pub fn omp(phi: &ComplexMatrix, y: &[C64], iters: usize) -> Result<OmpSolution> {
    let (rows, cols) = (phi.rows(), phi.cols());
    if y.len() != rows {
        return Err(Error::LengthMismatch {
            what: "OMP observation",
            expected: rows,
            actual: y.len(),
        });
    }
    if iters > cols || iters > rows {
        return Err(Error::InvalidArgument(format!(
            "OMP iterations {iters} exceed measurement matrix {rows}x{cols}"
        )));
    }
    let atoms: Vec<Vec<C64>> = (0..cols).map(|c| phi.column(c)).collect();
    let norms: Vec<f64> = atoms
        .iter()
        .map(|a| a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::RankDeficient("OMP measurement matrix has a zero column"));
    }

    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let norm = |a: &[C64]| a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();

    let mut residual = y.to_vec();
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(iters);
    // r_cols[k] holds column k of the upper-triangular factor
    let mut r_cols: Vec<Vec<C64>> = Vec::with_capacity(iters);
    let mut support = Vec::with_capacity(iters);
    let mut residual_norms = vec![norm(&residual)];

    for _ in 0..iters {
        let pick = argmax_first((0..cols).map(|c| {
            if support.contains(&c) {
                f64::NEG_INFINITY
            } else {
                dot(&atoms[c], &residual).norm() / norms[c]
            }
        }));
        let mut v = atoms[pick].clone();
        let mut coeffs = vec![C64::new(0.0, 0.0); q.len()];
        // two Gram-Schmidt passes keep Q orthonormal to working precision
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let proj = dot(qk, &v);
                coeffs[k] += proj;
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= proj * qi;
                }
            }
        }
        let diag = norm(&v);
        if diag <= 1e-12 * norms[pick] {
            return Err(Error::RankDeficient("OMP selected a linearly dependent atom"));
        }
        for vi in v.iter_mut() {
            *vi /= diag;
        }
        coeffs.push(C64::new(diag, 0.0));
        let step = dot(&v, &residual);
        for (ri, vi) in residual.iter_mut().zip(&v) {
            *ri -= step * vi;
        }
        q.push(v);
        r_cols.push(coeffs);
        support.push(pick);
        residual_norms.push(norm(&residual));
    }

    // back-substitution R x = Qᴴ y
    let k = q.len();
    let qty: Vec<C64> = q.iter().map(|qk| dot(qk, y)).collect();
    let mut x = vec![C64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut acc = qty[i];
        for j in i + 1..k {
            acc -= r_cols[j][i] * x[j];
        }
        x[i] = acc / r_cols[i][i];
    }
    let mut coefficients = vec![C64::new(0.0, 0.0); cols];
    for (&atom, value) in support.iter().zip(x) {
        coefficients[atom] = value;
    }
    Ok(OmpSolution {
        coefficients,
        support,
        residual_norms,
    })
}

/// Projection-metric frame sync on a window of length `M`.
pub fn fs_projection(window: &SampleWindow, s: &[C64], l: usize) -> Result<(usize, Vec<f64>)> {
    BaselineReceiver::new(s, window.m(), l)?.fs_projection(window)
}

/// Least-squares channel estimate at `tau_hat`.
pub fn ce_ml(window: &SampleWindow, tau_hat: usize, s: &[C64], l: usize) -> Result<Vec<C64>> {
    BaselineReceiver::new(s, window.m(), l)?.ce_ml(window, tau_hat)
}

/// Cross-correlation frame sync.
pub fn fs_crosscorr(window: &SampleWindow, s: &[C64]) -> Result<(usize, Vec<C64>)> {
    BaselineReceiver::new(s, window.m(), 1)?.fs_crosscorr(window)
}

/// OMP channel estimate at `tau_hat` over the training-only measurement matrix.
pub fn omp_ce(window: &SampleWindow, tau_hat: usize, s: &[C64], l: usize, iters: usize) -> Result<Vec<C64>> {
    if iters > l {
        return Err(Error::InvalidArgument(format!("OMP iterations {iters} exceed tap count {l}")));
    }
    BaselineReceiver::new(s, window.m(), l)?.omp_ce(window, tau_hat, iters)
}
