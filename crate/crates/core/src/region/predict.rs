use std::borrow::Cow;

use nalgebra::DVector;

use super::{BetaFit, CorrFactor, HierarchyParams, KernelFit, RegionData, RegionParams};
use crate::error::{Error, Result};

/// Predictive mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Per-point quantities reused across many covariance evaluations.
#[derive(Debug, Clone)]
pub struct PointTerms {
    x: Vec<f64>,
    /// `L^{-1} k(x)`; empty in the all-linear case where `k(x) = 0`.
    lk: DVector<f64>,
    /// `L_P^{-1} h(x)` with `P = V^{-1}`.
    lh: DVector<f64>,
    f: DVector<f64>,
    k: DVector<f64>,
}

impl PointTerms {
    pub fn x(&self) -> &[f64] {
        &self.x
    }
}

/// A region's predictive distribution at fixed parameters.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    data: &'a RegionData,
    kfit: Cow<'a, KernelFit>,
    bfit: BetaFit,
    sigma2: f64,
    /// `K^{-1} (Z - F beta_tilde)`
    resid: DVector<f64>,
}

impl<'a> Predictor<'a> {
    pub fn new(data: &'a RegionData, params: &RegionParams, hier: &HierarchyParams) -> Result<Self> {
        let kfit = KernelFit::new(data, &params.corr, &params.linear)?;
        Self::build(data, Cow::Owned(kfit), params.tau2, params.sigma2, hier)
    }

    /// Reuses an existing kernel factorization.
    pub fn from_fit(
        data: &'a RegionData,
        kfit: &'a KernelFit,
        tau2: f64,
        sigma2: f64,
        hier: &HierarchyParams,
    ) -> Result<Self> {
        Self::build(data, Cow::Borrowed(kfit), tau2, sigma2, hier)
    }

    fn build(
        data: &'a RegionData,
        kfit: Cow<'a, KernelFit>,
        tau2: f64,
        sigma2: f64,
        hier: &HierarchyParams,
    ) -> Result<Self> {
        let bfit = BetaFit::new(&kfit, tau2, hier)?;
        let resid = &kfit.kinv_z - &kfit.kinv_f * &bfit.beta_tilde;
        Ok(Self { data, kfit, bfit, sigma2, resid })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn beta_fit(&self) -> &BetaFit {
        &self.bfit
    }

    pub fn kernel_fit(&self) -> &KernelFit {
        &self.kfit
    }

    pub fn is_linear(&self) -> bool {
        self.kfit.is_linear()
    }

    pub fn nugget(&self) -> f64 {
        self.kfit.nugget
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.data.dim() {
            return Err(Error::DimensionMismatch { expected: self.data.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn terms(&self, x: &[f64]) -> Result<PointTerms> {
        self.check_dim(x)?;
        let f = self.data.basis().row(x);
        let (k, lk, h) = match &self.kfit.factor {
            CorrFactor::Dense { factor, kernel } => {
                let k = kernel.cross(x, self.data.x());
                let lk = factor.solve_lower(&k);
                let h = &f - self.kfit.kinv_f.tr_mul(&k);
                (k, lk, h)
            }
            CorrFactor::ScaledIdentity { .. } => (DVector::zeros(0), DVector::zeros(0), f.clone()),
        };
        let lh = self.bfit.precision.solve_lower(&h);
        Ok(PointTerms { x: x.to_vec(), lk, lh, f, k })
    }

    fn corr(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.kfit.factor {
            CorrFactor::Dense { kernel, .. } => kernel.eval(a, b),
            CorrFactor::ScaledIdentity { scale } => {
                if a == b {
                    *scale
                } else {
                    0.0
                }
            }
        }
    }

    /// Posterior covariance between two inputs divided by `sigma2`.
    pub fn scaled_cov(&self, a: &PointTerms, b: &PointTerms) -> f64 {
        let mut c = self.corr(&a.x, &b.x) + a.lh.dot(&b.lh);
        if !a.lk.is_empty() {
            c -= a.lk.dot(&b.lk);
        }
        c
    }

    pub fn mean_from_terms(&self, t: &PointTerms) -> f64 {
        let mut m = t.f.dot(&self.bfit.beta_tilde);
        if !t.k.is_empty() {
            m += t.k.dot(&self.resid);
        }
        m
    }

    /// Predictive mean only; `O(n)` per point.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let f = self.data.basis().row(x);
        let mut m = f.dot(&self.bfit.beta_tilde);
        if let CorrFactor::Dense { kernel, .. } = &self.kfit.factor {
            m += self
                .data
                .x()
                .iter()
                .zip(self.resid.iter())
                .map(|(row, r)| kernel.eval(x, row) * r)
                .sum::<f64>();
        }
        Ok(m)
    }

    pub fn moments_from_terms(&self, t: &PointTerms) -> PredictiveMoments {
        PredictiveMoments {
            mean: self.mean_from_terms(t),
            variance: (self.sigma2 * self.scaled_cov(t, t)).max(0.0),
        }
    }

    pub fn moments(&self, x: &[f64]) -> Result<PredictiveMoments> {
        Ok(self.moments_from_terms(&self.terms(x)?))
    }

    /// `f(a)^T V f(b)`, the linear-model covariance term.
    pub fn linear_cross(&self, a: &[f64], b: &[f64]) -> f64 {
        let fa = self.data.basis().row(a);
        let fb = self.data.basis().row(b);
        fa.dot(&(&self.bfit.v * fb))
    }
}

/// Predictive mean and variance of a new observation at `x`.
pub fn predictive_moments(
    region: &RegionData,
    params: &RegionParams,
    hier: &HierarchyParams,
    x: &[f64],
) -> Result<PredictiveMoments> {
    Predictor::new(region, params, hier)?.moments(x)
}

/// Log marginal likelihood of the region's responses with the mean
/// coefficients and `sigma2` integrated out.
pub fn marginal_loglik(region: &RegionData, params: &RegionParams, hier: &HierarchyParams) -> Result<f64> {
    let kfit = KernelFit::new(region, &params.corr, &params.linear)?;
    let bfit = BetaFit::new(&kfit, params.tau2, hier)?;
    Ok(bfit.log_marginal(&kfit, region.n(), hier))
}
