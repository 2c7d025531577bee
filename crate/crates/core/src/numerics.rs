//! Dense complex kernels shared by the baselines and ELM training.
//!
//! Decompositions (SVD, Hermitian eigendecomposition) and GEMM come from
//! `faer`; everything built on top of them lives here. All products run
//! sequentially so results never depend on the worker count.

use faer::linalg::matmul::triangular::BlockStructure;
use faer::linalg::matmul::{self, triangular};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::{Error, Result, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Row/column indexed complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(Mat<C64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(Mat::from_fn(rows, cols, f))
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix entries",
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        Ok(Self::from_fn(rows, cols, |r, c| entries[r * cols + c]))
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::LengthMismatch {
                what: "matrix column",
                expected: rows,
                actual: bad.len(),
            });
        }
        Ok(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn from_faer(m: Mat<C64>) -> Self {
        Self(m)
    }

    pub fn as_faer(&self) -> MatRef<'_, C64> {
        self.0.as_ref()
    }

    pub fn into_faer(self) -> Mat<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.0[(r, c)] = v;
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.0[(r, c)]);
            }
        }
        out
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows()).map(|r| self.0[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint().to_owned())
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::LengthMismatch {
                what: "matrix product inner dimension",
                expected: self.cols(),
                actual: rhs.rows(),
            });
        }
        Ok(Self(gemm(self.as_faer(), rhs.as_faer())))
    }

    /// Matrix-vector product. Panics on a dimension mismatch.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols(), x.len(), "matrix-vector dimension mismatch");
        (0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.0[(r, c)] * x[c]).sum())
            .collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm_l2()
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Self {
        Self(&self.0 - &rhs.0)
    }

    pub fn is_finite(&self) -> bool {
        (0..self.cols()).all(|c| (0..self.rows()).all(|r| self.0[(r, c)].is_finite()))
    }
}

/// `a · b`, sequential.
pub(crate) fn gemm(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul::matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// Default relative singular-value cutoff: machine epsilon times the larger dimension.
pub fn default_tolerance(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols).max(1) as f64
}

/// Moore-Penrose pseudoinverse by SVD. Singular values below `tol · σ_max`
/// are treated as zero; `None` selects [`default_tolerance`].
pub fn pinv(a: &ComplexMatrix, tol: Option<f64>) -> Result<ComplexMatrix> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return Ok(ComplexMatrix::zeros(cols, rows));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("pinv input has non-finite entries".into()));
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(rows, cols));
    let svd = a.0.thin_svd().map_err(|_| Error::SvdNoConvergence)?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let sigma_max = (0..k).map(|i| s[i].re).fold(0.0_f64, f64::max);
    let cutoff = tol * sigma_max;

    // V · diag(1/σ) · Uᴴ restricted to the retained singular triplets
    let u = svd.U();
    let v = svd.V();
    let keep: Vec<usize> = (0..k).filter(|&i| s[i].re > cutoff && s[i].re > 0.0).collect();
    let scaled_v = Mat::from_fn(cols, keep.len(), |r, j| v[(r, keep[j])] * (1.0 / s[keep[j]].re));
    let u_kept = Mat::from_fn(rows, keep.len(), |r, j| u[(r, keep[j])]);
    let mut out = Mat::zeros(cols, rows);
    matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        scaled_v.as_ref(),
        u_kept.adjoint(),
        ONE,
        Par::Seq,
    );
    Ok(ComplexMatrix(out))
}

/// Minimum-norm least-squares solution of `a·x ≈ b`.
pub fn lstsq(a: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    if a.rows() == 0 {
        return Err(Error::InvalidArgument("lstsq needs at least one row".into()));
    }
    if b.len() != a.rows() {
        return Err(Error::LengthMismatch {
            what: "lstsq right-hand side",
            expected: a.rows(),
            actual: b.len(),
        });
    }
    Ok(pinv(a, None)?.mul_vec(b))
}

/// `M × M` circulant-style matrix whose column `i` is the zero-padded
/// training sequence cyclically shifted right by `i`. `Sᴴ·r` is the cyclic
/// cross-correlation of `r` with the training sequence at every lag.
pub fn training_toeplitz_full(s: &[C64], m: usize) -> Result<ComplexMatrix> {
    if s.len() > m {
        return Err(Error::InvalidArgument(format!(
            "training length {} exceeds window length {m}",
            s.len()
        )));
    }
    Ok(ComplexMatrix::from_fn(m, m, |r, i| {
        let k = (r + m - i) % m;
        if k < s.len() {
            s[k]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// `(Ns − L + 1) × L` convolution matrix of the training sequence restricted
/// to fully-loaded rows: entry `(r, c) = s[r + L − 1 − c]`.
pub fn training_convolution_matrix(s: &[C64], l: usize) -> Result<ComplexMatrix> {
    if l == 0 || s.len() < l {
        return Err(Error::InvalidArgument(format!(
            "training length {} shorter than tap count {l}",
            s.len()
        )));
    }
    Ok(ComplexMatrix::from_fn(s.len() - l + 1, l, |r, c| s[r + l - 1 - c]))
}

/// Relative eigenvalue floor below which `AᴴA` counts as singular.
const RANK_TOL: f64 = 1e-12;

/// Orthogonal projector `A (AᴴA)⁻¹ Aᴴ` onto the column space of a full
/// column rank `A`.
pub fn projection_matrix(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.cols();
    if n == 0 || a.rows() < n {
        return Err(Error::RankDeficient("projection needs rows >= cols >= 1"));
    }
    let a_h = a.0.adjoint().to_owned();
    let gram = gemm(a_h.as_ref(), a.0.as_ref());
    let inv = hermitian_pinv(gram.as_ref(), Some(RANK_TOL), true)?;
    let left = gemm(a.0.as_ref(), inv.as_ref());
    Ok(ComplexMatrix(gemm(left.as_ref(), a_h.as_ref())))
}

/// Pseudoinverse of a Hermitian matrix (only the lower triangle is read)
/// via eigendecomposition, dropping eigenvalues at or below
/// `rel_tol · λ_max`. With `strict`, any dropped eigenvalue is an error.
fn hermitian_pinv(g: MatRef<'_, C64>, rel_tol: Option<f64>, strict: bool) -> Result<Mat<C64>> {
    let n = g.nrows();
    let evd = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence)?;
    let lambda = evd.S().column_vector();
    let u = evd.U();
    let lambda_max = (0..n).map(|i| lambda[i].re).fold(0.0_f64, f64::max);
    let tol = rel_tol.unwrap_or(f64::EPSILON * n as f64) * lambda_max;
    let keep: Vec<usize> = (0..n).filter(|&i| lambda[i].re > tol).collect();
    if strict && keep.len() < n {
        return Err(Error::RankDeficient("Gram matrix is singular"));
    }
    let scaled = Mat::from_fn(n, keep.len(), |r, j| u[(r, keep[j])] * (1.0 / lambda[keep[j]].re));
    let u_kept = Mat::from_fn(n, keep.len(), |r, j| u[(r, keep[j])]);
    let mut out = Mat::zeros(n, n);
    matmul::matmul(out.as_mut(), Accum::Replace, scaled.as_ref(), u_kept.adjoint(), ONE, Par::Seq);
    Ok(out)
}

/// Blockwise accumulator for the least-squares system `W · F ≈ T`, where the
/// feature matrix `F` (`features × N`) is too large to hold at once.
///
/// Keeps `G = F Fᴴ` and `C = T Fᴴ`; [`NormalEquations::solve`] returns
/// `C · G†`, which equals `T · F†` because `F† = Fᴴ (F Fᴴ)†`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    gram: Mat<C64>,
    cross: Mat<C64>,
    samples: usize,
}

impl NormalEquations {
    pub fn new(features: usize, outputs: usize) -> Self {
        Self {
            gram: Mat::zeros(features, features),
            cross: Mat::zeros(outputs, features),
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds a block of samples given column-wise.
    pub fn accumulate(&mut self, features: MatRef<'_, C64>, targets: MatRef<'_, C64>) -> Result<()> {
        if features.nrows() != self.gram.nrows() {
            return Err(Error::LengthMismatch {
                what: "feature block rows",
                expected: self.gram.nrows(),
                actual: features.nrows(),
            });
        }
        if targets.nrows() != self.cross.nrows() || targets.ncols() != features.ncols() {
            return Err(Error::LengthMismatch {
                what: "target block shape",
                expected: self.cross.nrows() * features.ncols(),
                actual: targets.nrows() * targets.ncols(),
            });
        }
        triangular::matmul(
            self.gram.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            features,
            BlockStructure::Rectangular,
            features.adjoint(),
            BlockStructure::Rectangular,
            ONE,
            Par::Seq,
        );
        matmul::matmul(
            self.cross.as_mut(),
            Accum::Add,
            targets,
            features.adjoint(),
            ONE,
            Par::Seq,
        );
        self.samples += features.ncols();
        Ok(())
    }

    /// Solves for `W`. Eigenvalues of `G` below `eps · features · λ_max` are
    /// discarded, which is the precision floor of the squared system.
    pub fn solve(&self) -> Result<ComplexMatrix> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("no samples accumulated".into()));
        }
        let g_pinv = hermitian_pinv(self.gram.as_ref(), None, false)?;
        Ok(ComplexMatrix(gemm(self.cross.as_ref(), g_pinv.as_ref())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn pinv_of_identity_and_rank_deficient_diagonal() {
        let i = ComplexMatrix::identity(4);
        assert!(pinv(&i, None).unwrap().sub(&i).norm() < 1e-14);

        let d = ComplexMatrix::from_row_major(2, 2, &[c(2.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        let p = pinv(&d, None).unwrap();
        let expect = ComplexMatrix::from_row_major(2, 2, &[c(0.5), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!(p.sub(&expect).norm() < 1e-15);
    }

    #[test]
    fn pinv_left_inverse_of_tall_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 8, 5);
        let p = pinv(&a, None).unwrap();
        let r = p.mul(&a).unwrap().sub(&ComplexMatrix::identity(5));
        assert!(r.norm() < 1e-9);
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let a = ComplexMatrix::from_row_major(1, 1, &[C64::new(f64::NAN, 0.0)]).unwrap();
        assert!(pinv(&a, None).is_err());
    }

    #[test]
    fn penrose_identities_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (r, cc) = (rng.random_range(1..=64), rng.random_range(1..=64));
            let a = random_matrix(&mut rng, r, cc);
            let p = pinv(&a, None).unwrap();
            let scale = a.norm().max(1.0);
            let apa = a.mul(&p).unwrap().mul(&a).unwrap();
            assert!(apa.sub(&a).norm() < 1e-9 * scale);
            let pap = p.mul(&a).unwrap().mul(&p).unwrap();
            assert!(pap.sub(&p).norm() < 1e-9 * p.norm().max(1.0));
            let ap = a.mul(&p).unwrap();
            assert!(ap.sub(&ap.adjoint()).norm() < 1e-9 * scale);
            let pa = p.mul(&a).unwrap();
            assert!(pa.sub(&pa.adjoint()).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn lstsq_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 6, 6);
        let b: Vec<C64> = (0..6).map(|i| c(i as f64)).collect();
        let x = lstsq(&a, &b).unwrap();
        let res: f64 = a.mul_vec(&x).iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum();
        assert!(res.sqrt() < 1e-9);

        let tall = random_matrix(&mut rng, 10, 3);
        let x0 = vec![c(1.0), C64::new(-2.0, 0.5), C64::new(0.0, 3.0)];
        let b = tall.mul_vec(&x0);
        let x = lstsq(&tall, &b).unwrap();
        let res: f64 = tall.mul_vec(&x).iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum();
        assert!(res.sqrt() < 1e-9);

        let ones = ComplexMatrix::from_fn(4, 1, |_, _| c(1.0));
        let x = lstsq(&ones, &[c(1.0), c(2.0), c(3.0), c(4.0)]).unwrap();
        assert!((x[0] - c(2.5)).norm() < 1e-12);

        assert!(lstsq(&ones, &[c(1.0)]).is_err());
        assert!(lstsq(&ComplexMatrix::zeros(0, 2), &[]).is_err());
    }

    #[test]
    fn toeplitz_full_columns_and_correlation() {
        let s = crate::signal::zadoff_chu(8, 1).unwrap();
        let m = 20;
        let big = training_toeplitz_full(&s, m).unwrap();
        let col0 = big.column(0);
        for r in 0..m {
            assert_eq!(col0[r], if r < 8 { s[r] } else { c(0.0) });
        }
        let energy: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        for i in 0..m {
            let n: f64 = big.column(i).iter().map(|v| v.norm_sqr()).sum();
            assert!((n - energy).abs() < 1e-12);
        }
        let mut padded = s.clone();
        padded.resize(m, c(0.0));
        for tau in [0, 5, 17] {
            let r = crate::signal::cyclic_shift(&padded, tau).unwrap();
            let u = big.adjoint().mul_vec(&r);
            assert!((u[tau] - c(energy)).norm() < 1e-12);
        }
        assert!(training_toeplitz_full(&s, 4).is_err());
    }

    #[test]
    fn convolution_matrix_matches_direct_convolution() {
        let s = crate::signal::zadoff_chu(32, 1).unwrap();
        let one = training_convolution_matrix(&s, 1).unwrap();
        assert_eq!(one.column(0), s);

        let a = training_convolution_matrix(&s, 8).unwrap();
        assert_eq!((a.rows(), a.cols()), (25, 8));
        let taps: Vec<C64> = (0..8).map(|i| C64::new(1.0 / (i + 1) as f64, 0.1 * i as f64)).collect();
        let y = a.mul_vec(&taps);
        for (r, yr) in y.iter().enumerate() {
            let n = r + 7;
            let direct: C64 = (0..8).map(|l| taps[l] * s[n - l]).sum();
            assert!((yr - direct).norm() < 1e-12);
        }
        assert!(training_convolution_matrix(&s[..4], 8).is_err());
    }

    #[test]
    fn projection_properties() {
        let i = ComplexMatrix::identity(5);
        assert!(projection_matrix(&i).unwrap().sub(&i).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 12, 4);
        let b = projection_matrix(&a).unwrap();
        assert!(b.mul(&b).unwrap().sub(&b).norm() < 1e-9);
        assert!(b.sub(&b.adjoint()).norm() < 1e-9);
        let x = vec![c(1.0), c(-1.0), C64::new(0.0, 2.0), c(0.5)];
        let ax = a.mul_vec(&x);
        let bax = b.mul_vec(&ax);
        for (u, v) in ax.iter().zip(&bax) {
            assert!((u - v).norm() < 1e-9);
        }

        let deficient = ComplexMatrix::from_fn(6, 2, |r, _| c(r as f64));
        assert!(matches!(projection_matrix(&deficient), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn normal_equations_match_pinv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_matrix(&mut rng, 6, 40);
        let t = random_matrix(&mut rng, 3, 40);
        let direct = t.mul(&pinv(&f, None).unwrap()).unwrap();

        let mut ne = NormalEquations::new(6, 3);
        for start in (0..40).step_by(7) {
            let end = (start + 7).min(40);
            let fb = f.as_faer().subcols(start, end - start);
            let tb = t.as_faer().subcols(start, end - start);
            ne.accumulate(fb, tb).unwrap();
        }
        assert_eq!(ne.samples(), 40);
        let w = ne.solve().unwrap();
        assert!(w.sub(&direct).norm() < 1e-9 * direct.norm());
    }
}
