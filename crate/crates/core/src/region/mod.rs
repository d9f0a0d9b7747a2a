//! Per-leaf hierarchical Gaussian process with a linear mean.
//!
//! Everything a leaf needs is split into two cached layers:
//!
//! * [`KernelFit`] depends on the inputs, responses and correlation
//!   parameters only (the `O(n^3)` part);
//! * [`BetaFit`] adds the prior on the regression coefficients (the `O(m^3)`
//!   part), so Gibbs updates of `tau2`, `beta0` and `W` never refactor `K`.
//!
//! Predictions use the universal-kriging form
//! `var = sigma2 [K(x,x) - k^T K^{-1} k + h^T V h]` with
//! `h = f(x) - F^T K^{-1} k` and `V = (F^T K^{-1} F + W^{-1}/tau2)^{-1}`,
//! which is algebraically the same as `sigma2 [kappa - q^T C^{-1} q]` with
//! `C = K + tau2 F W F^T` but never forms `C`.

mod alc;
mod predict;
mod prior;
mod sampling;

pub use alc::{alc_gp, alc_llm, degenerate_alc_count};
pub use predict::{marginal_loglik, predictive_moments, PointTerms, PredictiveMoments, Predictor};
pub use prior::{CorrelationPrior, GammaComponent};
pub use sampling::{
    correlation_log_target, draw_inv_gamma, draw_wishart, gibbs_update_linear, llm_update,
    mh_update_correlation, sample_beta, sample_sigma2_given_beta, update_hierarchy, update_region_linear,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{CorrelationParams, FactoredMatrix, Kernel};

/// Columns of the mean design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanBasis {
    /// `f(x) = (1)`.
    Constant,
    /// `f(x) = (1, x^T)`.
    Linear,
}

impl MeanBasis {
    pub fn size(self, dim: usize) -> usize {
        match self {
            MeanBasis::Constant => 1,
            MeanBasis::Linear => dim + 1,
        }
    }

    pub fn row(self, x: &[f64]) -> DVector<f64> {
        match self {
            MeanBasis::Constant => DVector::from_element(1, 1.0),
            MeanBasis::Linear => {
                DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()))
            }
        }
    }
}

/// Inputs, responses and design matrix of one region.
#[derive(Debug, Clone)]
pub struct RegionData {
    x: Vec<Vec<f64>>,
    z: DVector<f64>,
    f: DMatrix<f64>,
    basis: MeanBasis,
}

impl RegionData {
    pub fn new(x: Vec<Vec<f64>>, z: Vec<f64>, basis: MeanBasis) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyData);
        }
        if x.len() != z.len() {
            return Err(Error::LengthMismatch(x.len(), z.len()));
        }
        let dim = x[0].len();
        if let Some(row) = x.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
        }
        let m = basis.size(dim);
        let f = DMatrix::from_fn(x.len(), m, |i, j| match (basis, j) {
            (_, 0) => 1.0,
            (_, j) => x[i][j - 1],
        });
        Ok(Self { z: DVector::from_vec(z), x, f, basis })
    }

    /// Subset of rows of a larger data set.
    pub fn subset(x: &[Vec<f64>], z: &[f64], idx: &[usize], basis: MeanBasis) -> Result<Self> {
        Self::new(idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| z[i]).collect(), basis)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Number of mean coefficients.
    pub fn m(&self) -> usize {
        self.f.ncols()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn basis(&self) -> MeanBasis {
        self.basis
    }
}

/// Parameters of one region.
///
/// `linear[i] == true` means the limiting linear model governs dimension `i`
/// (that dimension drops out of the correlation). When every entry is true
/// the correlation matrix is `(1 + g) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionParams {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub corr: CorrelationParams,
    pub linear: Vec<bool>,
}

impl RegionParams {
    pub fn new(m: usize, corr: CorrelationParams) -> Self {
        let dim = corr.dim();
        Self { beta: DVector::zeros(m), sigma2: 1.0, tau2: 1.0, corr, linear: vec![false; dim] }
    }

    pub fn all_linear(&self) -> bool {
        !self.linear.is_empty() && self.linear.iter().all(|&b| b)
    }

    /// Dimensions that still enter the correlation.
    pub fn active(&self) -> Vec<bool> {
        self.linear.iter().map(|b| !b).collect()
    }
}

/// Prior on the mean coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaPrior {
    /// Improper flat prior: `beta0 = 0`, `tau2 = infinity`.
    Flat,
    /// `beta ~ N(beta0, sigma2 tau2 W)` with hyperpriors on `beta0` and `W`.
    Hierarchical,
}

/// Shape of the inverse-gamma prior on `sigma2`.
pub const DEFAULT_ALPHA_SIGMA: f64 = 5.0;
/// Scale of the inverse-gamma prior on `sigma2`. Small, so that leaves
/// with flat or near-linear data get a small `sigma2`.
pub const DEFAULT_Q_SIGMA: f64 = 0.02;

/// Hierarchical-prior state shared by all regions.
#[derive(Debug, Clone)]
pub struct HierarchyParams {
    pub beta_prior: BetaPrior,
    pub beta0: DVector<f64>,
    w: DMatrix<f64>,
    w_inv: DMatrix<f64>,
    w_log_det: f64,
    pub mu: DVector<f64>,
    pub b_cov: DMatrix<f64>,
    pub rho: f64,
    pub v: DMatrix<f64>,
    pub alpha_sigma: f64,
    pub q_sigma: f64,
    pub alpha_tau: f64,
    pub q_tau: f64,
}

impl HierarchyParams {
    /// Default constants: `alpha_sigma = 5`, `q_sigma = 0.02`,
    /// `alpha_tau = q_tau = 5`, `rho = m + 1`, `V = I`, `mu = 0`, `B = 1e4 I`, `W = I`.
    pub fn default_for(m: usize, beta_prior: BetaPrior) -> Self {
        let eye = DMatrix::identity(m, m);
        Self {
            beta_prior,
            beta0: DVector::zeros(m),
            w: eye.clone(),
            w_inv: eye.clone(),
            w_log_det: 0.0,
            mu: DVector::zeros(m),
            b_cov: eye.clone() * 1e4,
            rho: (m + 1) as f64,
            v: eye,
            alpha_sigma: DEFAULT_ALPHA_SIGMA,
            q_sigma: DEFAULT_Q_SIGMA,
            alpha_tau: 5.0,
            q_tau: 5.0,
        }
    }

    pub fn m(&self) -> usize {
        self.beta0.len()
    }

    pub fn is_flat(&self) -> bool {
        self.beta_prior == BetaPrior::Flat
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_inv(&self) -> &DMatrix<f64> {
        &self.w_inv
    }

    pub fn set_w(&mut self, w: DMatrix<f64>) -> Result<()> {
        let fw = FactoredMatrix::new(w)?;
        self.w_inv = fw.inverse();
        self.w_log_det = fw.log_det();
        self.w = fw.matrix().clone();
        Ok(())
    }

    pub fn set_w_inv(&mut self, w_inv: DMatrix<f64>) -> Result<()> {
        let f = FactoredMatrix::new(w_inv)?;
        self.w = f.inverse();
        self.w_log_det = -f.log_det();
        self.w_inv = f.matrix().clone();
        Ok(())
    }

    pub fn w_log_det(&self) -> f64 {
        self.w_log_det
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.rho < m as f64 {
            return Err(Error::Config(format!("rho = {} must be at least m = {m}", self.rho)));
        }
        for (name, v) in [
            ("alpha_sigma", self.alpha_sigma),
            ("q_sigma", self.q_sigma),
            ("alpha_tau", self.alpha_tau),
            ("q_tau", self.q_tau),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        FactoredMatrix::new(self.w.clone())?;
        Ok(())
    }
}

/// Factorization of the correlation matrix of a region.
#[derive(Debug, Clone)]
pub enum CorrFactor {
    Dense { factor: FactoredMatrix, kernel: Kernel },
    /// `K = scale I`, the all-linear case.
    ScaledIdentity { scale: f64 },
}

/// Quantities that depend on the data and the correlation parameters only.
#[derive(Debug, Clone)]
pub struct KernelFit {
    pub(crate) factor: CorrFactor,
    /// `K^{-1} F`
    pub(crate) kinv_f: DMatrix<f64>,
    /// `K^{-1} Z`
    pub(crate) kinv_z: DVector<f64>,
    /// `F^T K^{-1} F`
    pub(crate) ftkf: DMatrix<f64>,
    /// `F^T K^{-1} Z`
    pub(crate) ftkz: DVector<f64>,
    /// `Z^T K^{-1} Z`
    pub(crate) ztkz: f64,
    pub(crate) log_det_k: f64,
    pub(crate) nugget: f64,
}

impl KernelFit {
    pub fn new(data: &RegionData, corr: &CorrelationParams, linear: &[bool]) -> Result<Self> {
        if corr.dim() != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: corr.dim() });
        }
        let n = data.n();
        let all_linear = !linear.is_empty() && linear.iter().all(|&b| b);
        let (factor, kinv_f, kinv_z, log_det_k) = if all_linear {
            let scale = 1.0 + corr.nugget;
            (
                CorrFactor::ScaledIdentity { scale },
                data.f() / scale,
                data.z() / scale,
                n as f64 * scale.ln(),
            )
        } else {
            let active: Vec<bool> = linear.iter().map(|b| !b).collect();
            let kernel = Kernel::new(corr, Some(&active));
            let factor = FactoredMatrix::new(kernel.matrix(data.x()))?;
            let kinv_f = factor.solve_mat(data.f());
            let kinv_z = factor.solve(data.z());
            let log_det = factor.log_det();
            (CorrFactor::Dense { factor, kernel }, kinv_f, kinv_z, log_det)
        };
        let ftkf = data.f().transpose() * &kinv_f;
        let ftkf = (&ftkf + ftkf.transpose()) * 0.5;
        let ftkz = data.f().transpose() * &kinv_z;
        let ztkz = data.z().dot(&kinv_z);
        Ok(Self { factor, kinv_f, kinv_z, ftkf, ftkz, ztkz, log_det_k, nugget: corr.nugget })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.factor, CorrFactor::ScaledIdentity { .. })
    }

    pub fn log_det_k(&self) -> f64 {
        self.log_det_k
    }
}

/// Posterior quantities for the mean coefficients given a [`KernelFit`].
#[derive(Debug, Clone)]
pub struct BetaFit {
    /// Factor of `V^{-1} = F^T K^{-1} F (+ W^{-1}/tau2)`.
    pub(crate) precision: FactoredMatrix,
    pub(crate) v: DMatrix<f64>,
    pub(crate) beta_tilde: DVector<f64>,
    /// Quadratic form entering the inverse-gamma update of `sigma2`.
    pub(crate) s: f64,
    /// `m log tau2 + log|W|` (zero for the flat prior).
    pub(crate) log_det_prior: f64,
    pub(crate) flat: bool,
}

impl BetaFit {
    pub fn new(kfit: &KernelFit, tau2: f64, hier: &HierarchyParams) -> Result<Self> {
        let m = kfit.ftkf.nrows();
        if hier.m() != m {
            return Err(Error::DimensionMismatch { expected: m, got: hier.m() });
        }
        let flat = hier.is_flat();
        let (prec, rhs, prior_quad, log_det_prior) = if flat {
            (kfit.ftkf.clone(), kfit.ftkz.clone(), 0.0, 0.0)
        } else {
            if !(tau2 > 0.0) {
                return Err(Error::Config(format!("tau2 must be positive, got {tau2}")));
            }
            let wi = hier.w_inv() / tau2;
            let wb0 = &wi * &hier.beta0;
            (
                &kfit.ftkf + &wi,
                &kfit.ftkz + &wb0,
                hier.beta0.dot(&wb0),
                m as f64 * tau2.ln() + hier.w_log_det(),
            )
        };
        let precision = FactoredMatrix::new(prec)?;
        let beta_tilde = precision.solve(&rhs);
        let s = kfit.ztkz + prior_quad - beta_tilde.dot(&rhs);
        let v = precision.inverse();
        Ok(Self { precision, v, beta_tilde, s: s.max(0.0), log_det_prior, flat })
    }

    pub fn beta_tilde(&self) -> &DVector<f64> {
        &self.beta_tilde
    }

    /// Unscaled posterior covariance of the coefficients (`V`).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Effective number of observations in the `sigma2` update.
    pub fn n_eff(&self, n: usize) -> f64 {
        if self.flat {
            n as f64 - self.v.nrows() as f64
        } else {
            n as f64
        }
    }

    /// Log marginal likelihood with `beta` and `sigma2` integrated out.
    pub fn log_marginal(&self, kfit: &KernelFit, n: usize, hier: &HierarchyParams) -> f64 {
        use statrs::function::gamma::ln_gamma;
        let a = hier.alpha_sigma / 2.0;
        let b = hier.q_sigma / 2.0;
        let n_eff = self.n_eff(n);
        let half = n_eff / 2.0;
        let log_det_c = kfit.log_det_k + self.log_det_prior + self.precision.log_det();
        // Flat prior: log|F^T K^-1 F| enters with the same sign as log|C|.
        -half * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det_c + a * b.ln() - ln_gamma(a)
            + ln_gamma(a + half)
            - (a + half) * (b + self.s / 2.0).ln()
    }
}
