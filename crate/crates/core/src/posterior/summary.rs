use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelClass;
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::region::{HierarchyParams, PointTerms, Predictor, RegionData, RegionParams};
use crate::rng::substream;
use crate::tree::Tree;

/// Fewest saved samples the predictive quantiles are computed from.
pub const MIN_SAMPLES: usize = 30;

/// One saved state of the chain.
#[derive(Debug, Clone)]
pub struct Sample {
    pub tree: Tree<RegionParams>,
    pub hier: HierarchyParams,
    pub log_posterior: f64,
    /// Chain round at which the sample was saved; keys its predictive draws.
    pub round: u64,
}

/// Saved samples together with the data they were fitted to.
#[derive(Debug, Clone)]
pub struct PosteriorSampleSet {
    x: Vec<Vec<f64>>,
    z: Vec<f64>,
    bounds: Bounds,
    class: ModelClass,
    samples: Vec<Sample>,
    map: Option<Sample>,
    thin: usize,
    exec: Exec,
}

/// Posterior predictive summary at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

impl PredictiveSummary {
    pub fn width(&self) -> f64 {
        self.q95 - self.q05
    }
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics: with `h = n p` and `k = floor(h)`, returns
/// `x_(k) + (h - k) (x_(k+1) - x_(k))` (1-based), clamped to the sample range.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = n as f64 * p.clamp(0.0, 1.0);
    let k = h.floor() as usize;
    if k == 0 {
        return sorted[0];
    }
    if k >= n {
        return sorted[n - 1];
    }
    sorted[k - 1] + (h - k as f64) * (sorted[k] - sorted[k - 1])
}

/// Per-leaf predictors for one sample.
pub struct SampleEvaluator<'a> {
    sample: &'a Sample,
    regions: Vec<RegionData>,
}

impl<'a> SampleEvaluator<'a> {
    pub fn new(set: &PosteriorSampleSet, sample: &'a Sample) -> Result<Self> {
        let basis = set.class.basis();
        let regions = sample
            .tree
            .leaf_members(&set.x)
            .iter()
            .map(|rows| RegionData::subset(&set.x, &set.z, rows, basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sample, regions })
    }

    pub fn sample(&self) -> &Sample {
        self.sample
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        self.sample.tree.assign_region(x)
    }

    /// One predictor per leaf, in leaf order.
    pub fn predictors(&self) -> Result<Vec<Predictor<'_>>> {
        self.regions
            .iter()
            .zip(self.sample.tree.leaves())
            .map(|(r, p)| Predictor::new(r, p, &self.sample.hier))
            .collect()
    }
}

impl PosteriorSampleSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: Vec<Vec<f64>>,
        z: Vec<f64>,
        bounds: Bounds,
        class: ModelClass,
        samples: Vec<Sample>,
        map: Option<Sample>,
        thin: usize,
        exec: Exec,
    ) -> Self {
        Self { x, z, bounds, class, samples, map, thin: thin.max(1), exec }
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn class(&self) -> ModelClass {
        self.class
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    /// Highest-posterior state seen in the current trial.
    pub fn map(&self) -> Option<&Sample> {
        self.map.as_ref()
    }

    pub(crate) fn set_map(&mut self, map: Option<Sample>) {
        self.map = map;
    }

    pub(crate) fn push(&mut self, s: Sample) {
        self.samples.push(s);
    }

    /// Keeps only the samples at the given positions (in that order).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = self.clone();
        out.samples = idx.iter().map(|&i| self.samples[i].clone()).collect();
        out
    }

    fn need(&self, needed: usize) -> Result<()> {
        if self.samples.len() < needed {
            return Err(Error::TooFewSamples { needed, have: self.samples.len() });
        }
        Ok(())
    }

    fn check_points(&self, xs: &[Vec<f64>]) -> Result<()> {
        xs.iter().try_for_each(|x| self.bounds.check(x))
    }

    /// Posterior mean at each input (average of per-sample predictive means).
    pub fn posterior_mean(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.need(1)?;
        self.check_points(xs)?;
        let per = par::map_slice(self.exec, &self.samples, |s| -> Result<Vec<f64>> {
            let ev = SampleEvaluator::new(self, s)?;
            let preds = ev.predictors()?;
            xs.iter().map(|x| preds[ev.leaf_of(x)].mean(x)).collect()
        });
        let mut acc = vec![0.0; xs.len()];
        for r in per {
            for (a, v) in acc.iter_mut().zip(r?) {
                *a += v;
            }
        }
        let n = self.samples.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    /// Per-sample predictive means and one normal draw per point. Each sample
    /// draws from a substream of `seed` keyed by its round, so results depend
    /// neither on scheduling nor on sample order.
    fn means_and_draws(&self, xs: &[Vec<f64>], seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        par::map_slice(self.exec, &self.samples, |s| {
            let ev = SampleEvaluator::new(self, s)?;
            let preds = ev.predictors()?;
            let mut rng = substream(seed, "predictive-draw", s.round);
            let mut means = Vec::with_capacity(xs.len());
            let mut draws = Vec::with_capacity(xs.len());
            for x in xs {
                let m = preds[ev.leaf_of(x)].moments(x)?;
                let e: f64 = rng.sample(StandardNormal);
                means.push(m.mean);
                draws.push(m.mean + m.variance.sqrt() * e);
            }
            Ok((means, draws))
        })
        .into_iter()
        .collect()
    }

    /// Posterior predictive mean and central 90% interval at each input.
    pub fn predict_aggregate(&self, xs: &[Vec<f64>], seed: u64) -> Result<Vec<PredictiveSummary>> {
        self.need(MIN_SAMPLES)?;
        self.check_points(xs)?;
        let per = self.means_and_draws(xs, seed)?;
        let n = per.len() as f64;
        let mut column = Vec::with_capacity(per.len());
        Ok((0..xs.len())
            .map(|j| {
                let mean = per.iter().map(|(m, _)| m[j]).sum::<f64>() / n;
                column.clear();
                column.extend(per.iter().map(|(_, d)| d[j]));
                column.sort_by(f64::total_cmp);
                PredictiveSummary {
                    mean,
                    q05: empirical_quantile(&column, 0.05),
                    q95: empirical_quantile(&column, 0.95),
                }
            })
            .collect())
    }

    /// ALM score: width of the central 90% predictive interval.
    pub fn alm_stat(&self, cands: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
        Ok(self.predict_aggregate(cands, seed)?.iter().map(|s| s.width().max(0.0)).collect())
    }

    /// ALC score: expected reduction in predictive variance averaged over
    /// the references `refs` and over samples. References outside the
    /// candidate's leaf contribute 0.
    pub fn alc_stat(&self, cands: &[Vec<f64>], refs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.need(1)?;
        if refs.is_empty() {
            return Err(Error::Config("ALC needs at least one reference point".into()));
        }
        self.check_points(cands)?;
        self.check_points(refs)?;
        let per = par::map_slice(self.exec, &self.samples, |s| alc_one_sample(self, s, cands, refs));
        let mut acc = vec![0.0; cands.len()];
        for r in per {
            for (a, v) in acc.iter_mut().zip(r?) {
                *a += v;
            }
        }
        let scale = (self.samples.len() * refs.len()) as f64;
        Ok(acc.into_iter().map(|a| a / scale).collect())
    }

    /// CSV rows `id,alm,alc,mean,q05,q95` (with header) for the candidates.
    pub fn summary_csv(&self, cands: &[Vec<f64>], refs: &[Vec<f64>], seed: u64) -> Result<String> {
        let summary = self.predict_aggregate(cands, seed)?;
        let alc = self.alc_stat(cands, refs)?;
        let mut out = String::from("id,alm,alc,mean,q05,q95\n");
        for (i, (s, c)) in summary.iter().zip(&alc).enumerate() {
            let _ = writeln!(out, "{i},{},{c},{},{},{}", s.width().max(0.0), s.mean, s.q05, s.q95);
        }
        Ok(out)
    }
}

/// Sum over references of the per-sample ALC reduction, per candidate.
fn alc_one_sample(set: &PosteriorSampleSet, s: &Sample, cands: &[Vec<f64>], refs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let ev = SampleEvaluator::new(set, s)?;
    let preds = ev.predictors()?;
    let mut ref_leaf: Vec<Vec<&[f64]>> = vec![Vec::new(); preds.len()];
    for y in refs {
        ref_leaf[ev.leaf_of(y)].push(y);
    }
    let mut ref_terms: Vec<Option<Vec<PointTerms>>> = vec![None; preds.len()];
    cands
        .iter()
        .map(|xt| {
            let leaf = ev.leaf_of(xt);
            let ys = &ref_leaf[leaf];
            if ys.is_empty() {
                return Ok(0.0);
            }
            let p = &preds[leaf];
            if p.is_linear() {
                return Ok(ys.iter().map(|y| p.alc_linear(xt, y)).sum());
            }
            if ref_terms[leaf].is_none() {
                ref_terms[leaf] = Some(ys.iter().map(|y| p.terms(y)).collect::<Result<_>>()?);
            }
            let t = p.terms(xt)?;
            Ok(p.alc_sum(&t, ref_terms[leaf].as_deref().expect("filled above")))
        })
        .collect()
}
