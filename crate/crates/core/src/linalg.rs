//! Small dense Hermitian-matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative eigenvalue floor: values in `[-PSD_TOL * mu_max, 0)` are clamped to zero.
pub const PSD_TOL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-9;

/// Eigen-decomposition of a PSD matrix with the small negative eigenvalues clamped.
#[derive(Clone, Debug)]
pub struct PsdEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl PsdEigen {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `V diag(f(mu)) V†`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &mu) in self.values.iter().enumerate() {
            let s = f(mu);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn sqrt(&self) -> CMatrix {
        self.reconstruct(f64::sqrt)
    }
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn check_square(m: &CMatrix, n: usize, name: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Matrix(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Validates that `m` is Hermitian positive semi-definite and returns its clamped spectrum.
pub fn psd_eigen(m: &CMatrix, name: &str) -> Result<PsdEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::Matrix(format!("{name} must be square")));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Matrix(format!("{name} has non-finite entries")));
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::Matrix(format!(
            "{name} is not Hermitian (max asymmetry {asym:e})"
        )));
    }
    hermitian_eigen_clamped(&hermitian_part(m), name)
}

/// Spectrum of a matrix already known to be Hermitian, clamping round-off negatives.
pub(crate) fn hermitian_eigen_clamped(m: &CMatrix, name: &str) -> Result<PsdEigen> {
    let eig = SymmetricEigen::new(m.clone());
    let mu_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let floor = -PSD_TOL * mu_max.max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(eig.eigenvalues.len());
    for &mu in eig.eigenvalues.iter() {
        if mu < floor {
            return Err(Error::Matrix(format!(
                "{name} is not positive semi-definite (eigenvalue {mu:e})"
            )));
        }
        values.push(mu.max(0.0));
    }
    Ok(PsdEigen {
        values,
        vectors: eig.eigenvectors,
    })
}

/// `I_{n_r} ⊗ sigma`: block diagonal with `n_r` copies of `sigma`.
pub fn kron_identity(n_r: usize, sigma: &CMatrix) -> CMatrix {
    let n_t = sigma.nrows();
    let mut out = CMatrix::zeros(n_r * n_t, n_r * n_t);
    for b in 0..n_r {
        out.view_mut((b * n_t, b * n_t), (n_t, n_t)).copy_from(sigma);
    }
    out
}

/// Sum of the `n_r` diagonal `n_t x n_t` blocks of `m`.
pub fn block_diagonal_sum(m: &CMatrix, n_t: usize, n_r: usize) -> CMatrix {
    let mut out = CMatrix::zeros(n_t, n_t);
    for b in 0..n_r {
        out += m.view((b * n_t, b * n_t), (n_t, n_t));
    }
    out
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_real(n: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(n, n, entries.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// Row-major nested `[re, im]` pairs, the JSON matrix layout.
pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Matrix("empty matrix".into()));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Matrix("ragged matrix rows".into()));
    }
    Ok(CMatrix::from_row_iterator(
        n,
        m,
        rows.iter().flatten().map(|&[re, im]| Complex64::new(re, im)),
    ))
}

pub fn to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// `log det(A)` for Hermitian positive definite `A`, via Cholesky.
pub fn log_det_hpd(a: &CMatrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(
        chol.l_dirty()
            .diagonal()
            .iter()
            .map(|z| 2.0 * z.re.ln())
            .sum(),
    )
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
