//! Separable power-exponential correlation with a nugget, dense factored
//! covariance matrices, and the partitioned-inverse extension.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Floor applied to the nugget.
pub const NUGGET_MIN: f64 = 1e-8;

/// The power of the separable family. Fixed.
pub const POWER: f64 = 2.0;

/// Range and nugget parameters of the correlation function.
///
/// `range[i]` is in squared input units: the correlation between two points
/// differing by `h` in coordinate `i` only is `exp(-h^2 / range[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationParams {
    pub range: Vec<f64>,
    pub nugget: f64,
}

impl CorrelationParams {
    /// Validates the ranges and clamps the nugget to [`NUGGET_MIN`].
    pub fn new(range: Vec<f64>, nugget: f64) -> Result<Self> {
        for (index, &value) in range.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveRange { index, value });
            }
        }
        Ok(Self { range, nugget: clamp_nugget(nugget) })
    }

    pub fn dim(&self) -> usize {
        self.range.len()
    }
}

pub fn clamp_nugget(g: f64) -> f64 {
    if g.is_nan() || g < NUGGET_MIN {
        NUGGET_MIN
    } else {
        g
    }
}

/// `K(x, y) = exp(-sum_i |x_i - y_i|^2 / d_i) + g [x == y]`.
pub fn correlation(x: &[f64], y: &[f64], params: &CorrelationParams) -> Result<f64> {
    let m = params.dim();
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x.len() });
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: y.len() });
    }
    if let Some((index, &value)) = params.range.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::NonPositiveRange { index, value });
    }
    Ok(Kernel::new(params, None).eval(x, y))
}

/// A correlation function ready for repeated evaluation.
///
/// Dimensions switched off in `active` do not enter the distance sum; this is
/// how per-dimension linear (LLM) indicators act on the kernel.
#[derive(Debug, Clone)]
pub struct Kernel {
    inv_range: Vec<f64>,
    nugget: f64,
}

impl Kernel {
    pub fn new(params: &CorrelationParams, active: Option<&[bool]>) -> Self {
        let inv_range = params
            .range
            .iter()
            .enumerate()
            .map(|(i, d)| match active {
                Some(mask) if !mask[i] => 0.0,
                _ => 1.0 / d,
            })
            .collect();
        Self { inv_range, nugget: params.nugget }
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Correlation without the nugget term.
    #[inline]
    pub fn eval_smooth(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((a, b), w) in x.iter().zip(y).zip(&self.inv_range) {
            let h = a - b;
            s += h * h * w;
        }
        (-s).exp()
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.eval_smooth(x, y);
        if x == y {
            k + self.nugget
        } else {
            k
        }
    }

    /// Vector of correlations between `x` and every row of `design`.
    pub fn cross(&self, x: &[f64], design: &[Vec<f64>]) -> DVector<f64> {
        DVector::from_iterator(design.len(), design.iter().map(|row| self.eval(x, row)))
    }

    /// Correlation matrix of a design. The nugget sits on the diagonal only,
    /// one per observation, so repeated inputs stay positive definite.
    pub fn matrix(&self, design: &[Vec<f64>]) -> DMatrix<f64> {
        let n = design.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0 + self.nugget;
            for j in 0..i {
                let v = self.eval_smooth(&design[i], &design[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// A symmetric positive-definite matrix together with its Cholesky factor
/// and log-determinant.
#[derive(Debug, Clone)]
pub struct FactoredMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
    log_det: f64,
}

/// Pivots smaller than this fraction of the largest diagonal entry are
/// treated as a rank deficiency.
const PIVOT_TOL: f64 = 1e-13;

impl FactoredMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let scale = matrix.diagonal().iter().cloned().fold(0.0_f64, f64::max);
        let chol = nalgebra::Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.unpack();
        let mut log_det = 0.0;
        for i in 0..lower.nrows() {
            let p = lower[(i, i)];
            if !(p * p > PIVOT_TOL * scale) {
                return Err(Error::NotPositiveDefinite);
            }
            log_det += 2.0 * p.ln();
        }
        Ok(Self { matrix, lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular Cholesky factor `L` with `L L^T = A`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("factor has a nonzero diagonal")
    }

    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("factor has a nonzero diagonal")
    }

    /// `L^{-T} b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .tr_solve_lower_triangular(b)
            .expect("factor has a nonzero diagonal")
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_lower(b);
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a nonzero diagonal")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.solve_lower_mat(b);
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a nonzero diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Correlation matrix of a design, factored.
///
/// Fails with [`Error::NotPositiveDefinite`] when the matrix is numerically
/// singular, e.g. for repeated rows with a zero nugget.
pub fn covariance_matrix(design: &[Vec<f64>], params: &CorrelationParams) -> Result<FactoredMatrix> {
    if design.is_empty() {
        return Err(Error::EmptyData);
    }
    let m = params.dim();
    if let Some(row) = design.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: row.len() });
    }
    FactoredMatrix::new(Kernel::new(params, None).matrix(design))
}

/// Inverse of the bordered matrix `[[C, m], [m^T, kappa]]` from `C^{-1}`.
///
/// With `mu = 1 / (kappa - m^T C^{-1} m)` and `g = -mu C^{-1} m` the result is
/// `[[C^{-1} + g g^T / mu, g], [g^T, mu]]`, computed in `O(N^2)`.
pub fn partition_inverse_extend(
    c_inv: &DMatrix<f64>,
    mcol: &DVector<f64>,
    kappa: f64,
) -> Result<DMatrix<f64>> {
    let n = c_inv.nrows();
    if c_inv.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c_inv.ncols() });
    }
    if mcol.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mcol.len() });
    }
    let cm = c_inv * mcol;
    let schur = kappa - mcol.dot(&cm);
    if !(schur > 0.0) || !schur.is_finite() {
        return Err(Error::DegenerateExtension(schur));
    }
    let mu = 1.0 / schur;
    let g = cm * (-mu);
    let mut out = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = c_inv[(i, j)] + g[i] * g[j] / mu;
        }
        out[(n, j)] = g[j];
        out[(j, n)] = g[j];
    }
    out[(n, n)] = mu;
    Ok(out)
}
