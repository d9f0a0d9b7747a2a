use std::sync::atomic::{AtomicUsize, Ordering};

use super::{HierarchyParams, KernelFit, PointTerms, Predictor, RegionData, RegionParams};
use crate::error::Result;

/// Denominators at or below this value are treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

static DEGENERATE: AtomicUsize = AtomicUsize::new(0);

/// Number of ALC evaluations so far whose denominator was degenerate.
pub fn degenerate_alc_count() -> usize {
    DEGENERATE.load(Ordering::Relaxed)
}

fn reduction(sigma2: f64, cross: f64, denom: f64) -> f64 {
    if !(denom > DEGENERATE_TOL) {
        DEGENERATE.fetch_add(1, Ordering::Relaxed);
        return 0.0;
    }
    sigma2 * cross * cross / denom
}

impl Predictor<'_> {
    /// Reduction in predictive variance at `y` from observing at `xt`.
    pub fn alc(&self, xt: &PointTerms, y: &PointTerms) -> f64 {
        reduction(self.sigma2(), self.scaled_cov(xt, y), self.scaled_cov(xt, xt))
    }

    /// Sum of [`Predictor::alc`] over several references sharing one
    /// candidate.
    pub fn alc_sum(&self, xt: &PointTerms, ys: &[PointTerms]) -> f64 {
        let denom = self.scaled_cov(xt, xt);
        if !(denom > DEGENERATE_TOL) {
            DEGENERATE.fetch_add(1, Ordering::Relaxed);
            return 0.0;
        }
        let s2 = self.sigma2() / denom;
        ys.iter()
            .map(|y| {
                let c = self.scaled_cov(xt, y);
                s2 * c * c
            })
            .sum()
    }

    /// Linear-model reduction `sigma2 [f(y)^T V f(x)]^2 / (1 + g + f(x)^T V f(x))`.
    pub fn alc_linear(&self, xt: &[f64], y: &[f64]) -> f64 {
        let denom = 1.0 + self.nugget() + self.linear_cross(xt, xt);
        reduction(self.sigma2(), self.linear_cross(y, xt), denom)
    }
}

/// Expected reduction in predictive variance at `y` when `xtilde` is added
/// to the region's data, computed without refactoring.
pub fn alc_gp(
    region: &RegionData,
    params: &RegionParams,
    hier: &HierarchyParams,
    xtilde: &[f64],
    y: &[f64],
) -> Result<f64> {
    let p = Predictor::new(region, params, hier)?;
    let t = p.terms(xtilde)?;
    let u = p.terms(y)?;
    Ok(p.alc(&t, &u))
}

/// ALC under the region's limiting linear model (correlation `(1 + g) I`).
///
/// The linear indicators in `params` are ignored; the computation always uses
/// the all-linear model.
pub fn alc_llm(
    region: &RegionData,
    params: &RegionParams,
    hier: &HierarchyParams,
    xtilde: &[f64],
    y: &[f64],
) -> Result<f64> {
    let all = vec![true; region.dim()];
    let kfit = KernelFit::new(region, &params.corr, &all)?;
    let p = Predictor::from_fit(region, &kfit, params.tau2, params.sigma2, hier)?;
    Ok(p.alc_linear(xtilde, y))
}
