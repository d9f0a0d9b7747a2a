use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use super::{BetaFit, CorrelationPrior, HierarchyParams, KernelFit, RegionData, RegionParams};
use crate::error::{Error, Result};
use crate::kernel::{clamp_nugget, FactoredMatrix};

/// Draw from the inverse-gamma law with density proportional to
/// `x^(-shape-1) exp(-scale / x)`.
pub fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// Wishart draw with `df` degrees of freedom and scale matrix `scale`
/// (mean `df * scale`), by the Bartlett decomposition.
pub fn draw_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= (p as f64) - 1.0 {
        return Err(Error::Config(format!("Wishart degrees of freedom {df} too small for dimension {p}")));
    }
    let l = FactoredMatrix::new(scale.clone())?.lower().clone();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi: f64 = ChiSquared::new(df - i as f64).expect("positive df").sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = l * a;
    let out = &la * la.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

fn std_normal_vec<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `beta ~ N(beta_tilde, sigma2 V)`.
pub fn sample_beta<R: Rng + ?Sized>(bfit: &BetaFit, sigma2: f64, rng: &mut R) -> DVector<f64> {
    let e = std_normal_vec(bfit.beta_tilde.len(), rng);
    &bfit.beta_tilde + bfit.precision.solve_upper(&e) * sigma2.sqrt()
}

/// `sigma2 | beta` from its inverse-gamma full conditional.
pub fn sample_sigma2_given_beta<R: Rng + ?Sized>(
    kfit: &KernelFit,
    n: usize,
    beta: &DVector<f64>,
    tau2: f64,
    hier: &HierarchyParams,
    rng: &mut R,
) -> f64 {
    let quad = kfit.ztkz - 2.0 * beta.dot(&kfit.ftkz) + beta.dot(&(&kfit.ftkf * beta));
    let (shape, scale) = if hier.is_flat() {
        (hier.alpha_sigma / 2.0 + n as f64 / 2.0, (hier.q_sigma + quad.max(0.0)) / 2.0)
    } else {
        let d = beta - &hier.beta0;
        let prior = d.dot(&(hier.w_inv() * &d)) / tau2;
        (
            (hier.alpha_sigma + (n + beta.len()) as f64) / 2.0,
            (hier.q_sigma + quad.max(0.0) + prior) / 2.0,
        )
    };
    draw_inv_gamma(shape, scale, rng)
}

/// Blocked Gibbs step for one region: `(sigma2, beta)` jointly given `tau2`
/// (with `beta` integrated out of the `sigma2` draw), then `tau2` given the
/// rest when `update_tau2` is set and the prior is hierarchical.
pub fn update_region_linear<R: Rng + ?Sized>(
    kfit: &KernelFit,
    n: usize,
    params: &mut RegionParams,
    hier: &HierarchyParams,
    update_tau2: bool,
    rng: &mut R,
) -> Result<()> {
    let bfit = BetaFit::new(kfit, params.tau2, hier)?;
    let a = hier.alpha_sigma / 2.0 + bfit.n_eff(n) / 2.0;
    let b = (hier.q_sigma + bfit.s) / 2.0;
    params.sigma2 = draw_inv_gamma(a, b, rng);
    params.beta = sample_beta(&bfit, params.sigma2, rng);
    if update_tau2 && !hier.is_flat() {
        let d = &params.beta - &hier.beta0;
        let quad = d.dot(&(hier.w_inv() * &d)) / params.sigma2;
        let m = d.len() as f64;
        params.tau2 = draw_inv_gamma((hier.alpha_tau + m) / 2.0, (hier.q_tau + quad) / 2.0, rng);
    }
    Ok(())
}

/// Draws `beta0` and then `W^{-1}` from their full conditionals given the
/// per-region `(beta, sigma2, tau2)`. No-op for the flat prior.
pub fn update_hierarchy<R: Rng + ?Sized>(
    hier: &mut HierarchyParams,
    states: &[&RegionParams],
    rng: &mut R,
) -> Result<()> {
    if hier.is_flat() || states.is_empty() {
        return Ok(());
    }
    let m = hier.m();
    let b_inv = FactoredMatrix::new(hier.b_cov.clone())?.inverse();
    let mut weight = 0.0;
    let mut beta_sum = DVector::zeros(m);
    for s in states {
        let w = 1.0 / (s.sigma2 * s.tau2);
        weight += w;
        beta_sum += &s.beta * w;
    }
    let prec = &b_inv + hier.w_inv() * weight;
    let prec = FactoredMatrix::new((&prec + prec.transpose()) * 0.5)?;
    let rhs = &b_inv * &hier.mu + hier.w_inv() * beta_sum;
    let mean = prec.solve(&rhs);
    let e = std_normal_vec(m, rng);
    hier.beta0 = mean + prec.solve_upper(&e);

    let mut scatter = &hier.v * hier.rho;
    for s in states {
        let d = &s.beta - &hier.beta0;
        scatter += (&d * d.transpose()) / (s.sigma2 * s.tau2);
    }
    let scale = FactoredMatrix::new((&scatter + scatter.transpose()) * 0.5)?.inverse();
    let w_inv = draw_wishart(hier.rho + states.len() as f64, &scale, rng)?;
    hier.set_w_inv(w_inv)
}

/// One full Gibbs pass over the linear parameters of every region followed
/// by the shared hierarchy.
pub fn gibbs_update_linear<R: Rng + ?Sized>(
    states: &mut [RegionParams],
    hier: &mut HierarchyParams,
    regions: &[RegionData],
    rng: &mut R,
) -> Result<()> {
    if states.len() != regions.len() {
        return Err(Error::LengthMismatch(states.len(), regions.len()));
    }
    for (s, r) in states.iter_mut().zip(regions) {
        let kfit = KernelFit::new(r, &s.corr, &s.linear)?;
        update_region_linear(&kfit, r.n(), s, hier, true, rng)?;
    }
    let refs: Vec<&RegionParams> = states.iter().collect();
    update_hierarchy(hier, &refs, rng)
}

/// Log marginal likelihood plus log prior of the correlation parameters.
pub fn correlation_log_target(
    kfit: &KernelFit,
    n: usize,
    params: &RegionParams,
    hier: &HierarchyParams,
    prior: &CorrelationPrior,
    with_indicators: bool,
) -> Result<f64> {
    let bfit = BetaFit::new(kfit, params.tau2, hier)?;
    Ok(bfit.log_marginal(kfit, n, hier) + prior.log_density(&params.corr, &params.linear, with_indicators))
}

fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Metropolis-Hastings update of one correlation coordinate: range `coord`
/// for `coord < dim`, the nugget for `coord == dim`.
///
/// The proposal multiplies the current value by `exp(step * N(0,1))`.
/// Proposals whose correlation matrix fails to factor are rejected. On
/// acceptance `params` and `kfit` are replaced. Returns whether the move was
/// accepted.
#[allow(clippy::too_many_arguments)]
pub fn mh_update_correlation<R: Rng + ?Sized>(
    region: &RegionData,
    params: &mut RegionParams,
    kfit: &mut KernelFit,
    hier: &HierarchyParams,
    prior: &CorrelationPrior,
    coord: usize,
    with_indicators: bool,
    rng: &mut R,
) -> Result<bool> {
    let dim = params.corr.dim();
    if coord > dim {
        return Err(Error::DimensionMismatch { expected: dim, got: coord });
    }
    if coord == dim && prior.fixed_nugget.is_some() {
        return Ok(false);
    }
    let old = if coord == dim { params.corr.nugget } else { params.corr.range[coord] };
    let z: f64 = rng.sample(StandardNormal);
    let mut new = old * (prior.mh_step * z).exp();
    if coord == dim {
        new = clamp_nugget(new);
    }
    if !(new.is_finite() && new > 0.0) {
        return Ok(false);
    }
    let mut cand = params.clone();
    if coord == dim {
        cand.corr.nugget = new;
    } else {
        cand.corr.range[coord] = new;
    }
    let Ok(new_fit) = KernelFit::new(region, &cand.corr, &cand.linear) else {
        return Ok(false);
    };
    let n = region.n();
    let cur = correlation_log_target(kfit, n, params, hier, prior, with_indicators)?;
    let Ok(prop) = correlation_log_target(&new_fit, n, &cand, hier, prior, with_indicators) else {
        return Ok(false);
    };
    let log_ratio = prop - cur + (new / old).ln();
    if !log_ratio.is_nan() && metropolis(log_ratio, rng) {
        *params = cand;
        *kfit = new_fit;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Metropolis flip of the linear indicator of dimension `dim_i`.
#[allow(clippy::too_many_arguments)]
pub fn llm_update<R: Rng + ?Sized>(
    region: &RegionData,
    params: &mut RegionParams,
    kfit: &mut KernelFit,
    hier: &HierarchyParams,
    prior: &CorrelationPrior,
    dim_i: usize,
    rng: &mut R,
) -> Result<bool> {
    if dim_i >= params.linear.len() {
        return Err(Error::DimensionMismatch { expected: params.linear.len(), got: dim_i });
    }
    let mut cand = params.clone();
    cand.linear[dim_i] = !cand.linear[dim_i];
    let Ok(new_fit) = KernelFit::new(region, &cand.corr, &cand.linear) else {
        return Ok(false);
    };
    let n = region.n();
    let cur = correlation_log_target(kfit, n, params, hier, prior, true)?;
    let Ok(prop) = correlation_log_target(&new_fit, n, &cand, hier, prior, true) else {
        return Ok(false);
    };
    let log_ratio = prop - cur;
    if !log_ratio.is_nan() && metropolis(log_ratio, rng) {
        *params = cand;
        *kfit = new_fit;
        Ok(true)
    } else {
        Ok(false)
    }
}
