use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use super::{ChainConfig, ChainSettings, PosteriorSampleSet, Sample};
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::kernel::CorrelationParams;
use crate::region::{
    draw_inv_gamma, llm_update, mh_update_correlation, update_hierarchy, update_region_linear, BetaFit,
    BetaPrior, CorrelationPrior, HierarchyParams, KernelFit, MeanBasis, RegionData, RegionParams,
};
use crate::tree::{
    propose_move, random_prune_restart, split_candidates, tree_logprior, LeafModel, MapTracker, MoveKind, Node,
    Tree,
};

#[derive(Debug, Clone)]
struct LeafFit {
    version: u64,
    rows: Vec<usize>,
    corr: CorrelationParams,
    linear: Vec<bool>,
    data: RegionData,
    kfit: KernelFit,
}

/// Leaf parameters plus a cached factorization of the leaf's data.
#[derive(Debug, Clone)]
pub struct LeafState {
    pub params: RegionParams,
    fit: Option<Arc<LeafFit>>,
}

impl LeafState {
    pub fn new(params: RegionParams) -> Self {
        Self { params, fit: None }
    }

    fn fit(&mut self, data: &DataRef<'_>, rows: &[usize]) -> Result<Arc<LeafFit>> {
        if let Some(f) = &self.fit {
            if f.version == data.version
                && f.rows == rows
                && f.corr == self.params.corr
                && f.linear == self.params.linear
            {
                return Ok(f.clone());
            }
        }
        let region = RegionData::subset(data.x, data.z, rows, data.basis)?;
        let kfit = KernelFit::new(&region, &self.params.corr, &self.params.linear)?;
        let f = Arc::new(LeafFit {
            version: data.version,
            rows: rows.to_vec(),
            corr: self.params.corr.clone(),
            linear: self.params.linear.clone(),
            data: region,
            kfit,
        });
        self.fit = Some(f.clone());
        Ok(f)
    }
}

#[derive(Clone, Copy)]
struct DataRef<'a> {
    x: &'a [Vec<f64>],
    z: &'a [f64],
    basis: MeanBasis,
    version: u64,
}

struct ChainModel<'a> {
    data: DataRef<'a>,
    config: &'a ChainConfig,
    hier: &'a HierarchyParams,
    prior: &'a CorrelationPrior,
    n_min: usize,
}

impl ChainModel<'_> {
    fn fresh_params<R: Rng + ?Sized>(&self, rng: &mut R) -> RegionParams {
        let class = self.config.class;
        let (corr, mut linear) = self.prior.draw(class.llm(), rng);
        if !class.gp() {
            linear = vec![true; corr.dim()];
        }
        let tau2 = match (self.config.fixed_tau2, self.hier.beta_prior) {
            (Some(t), _) => t,
            (None, BetaPrior::Flat) => 1.0,
            (None, BetaPrior::Hierarchical) => {
                draw_inv_gamma(self.hier.alpha_tau / 2.0, self.hier.q_tau / 2.0, rng)
            }
        };
        RegionParams { beta: DVector::zeros(self.hier.m()), sigma2: 1.0, tau2, corr, linear }
    }

    /// Starting state of the root leaf: prior-drawn except for the ranges
    /// (mean of the short-range prior component), the nugget (0.1) and the
    /// linear indicators (all off for classes with a GP).
    fn initial_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> LeafState {
        let mut p = self.fresh_params(rng);
        let c = self.prior.range_mixture[0];
        for (d, s) in p.corr.range.iter_mut().zip(&self.prior.range_scale) {
            *d = s * c.shape / c.rate;
        }
        if self.prior.fixed_nugget.is_none() {
            p.corr.nugget = INITIAL_NUGGET;
        }
        if self.config.class.gp() {
            p.linear.iter_mut().for_each(|b| *b = false);
        }
        LeafState::new(p)
    }

    fn leaf_log_marginal(&self, leaf: &mut LeafState, rows: &[usize]) -> Result<f64> {
        let f = leaf.fit(&self.data, rows)?;
        let b = BetaFit::new(&f.kfit, leaf.params.tau2, self.hier)?;
        Ok(b.log_marginal(&f.kfit, rows.len(), self.hier))
    }
}

impl LeafModel for ChainModel<'_> {
    type Leaf = LeafState;

    fn inputs(&self) -> &[Vec<f64>] {
        self.data.x
    }

    fn n_min(&self) -> usize {
        self.n_min
    }

    fn log_lik(&self, leaf: &mut LeafState, rows: &[usize]) -> Option<f64> {
        self.leaf_log_marginal(leaf, rows).ok()
    }

    fn draw_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> LeafState {
        LeafState::new(self.fresh_params(rng))
    }

}

const INITIAL_NUGGET: f64 = 0.1;

/// A Markov chain over the tree, the leaf parameters and the shared
/// hierarchy, for one response.
#[derive(Debug, Clone)]
pub struct Chain {
    config: ChainConfig,
    x: Vec<Vec<f64>>,
    z: Vec<f64>,
    version: u64,
    bounds: Bounds,
    prior: CorrelationPrior,
    hier: HierarchyParams,
    tree: Tree<LeafState>,
    round: u64,
    map: MapTracker<Sample>,
}

impl Chain {
    pub fn new<R: Rng + ?Sized>(
        config: ChainConfig,
        x: Vec<Vec<f64>>,
        z: Vec<f64>,
        bounds: Bounds,
        rng: &mut R,
    ) -> Result<Self> {
        config.settings.validate()?;
        check_data(&x, &z, &bounds)?;
        let dim = bounds.dim();
        let m = config.class.basis().size(dim);
        let mut prior = CorrelationPrior::for_widths(&bounds.widths());
        prior.fixed_nugget = config.fixed_nugget;
        let mut hier = HierarchyParams::default_for(m, config.beta_prior);
        hier.alpha_sigma = config.alpha_sigma;
        hier.q_sigma = config.q_sigma;
        hier.validate()?;
        let mut chain = Self {
            config,
            x,
            z,
            version: 0,
            bounds,
            prior,
            hier,
            tree: Tree::new(LeafState::new(RegionParams::new(m, CorrelationParams::new(vec![1.0; dim], 0.1)?))),
            round: 0,
            map: MapTracker::new(),
        };
        let leaf = chain.model().initial_leaf(rng);
        chain.tree = Tree::new(leaf);
        if chain.x.len() < chain.n_min() {
            return Err(Error::Config(format!(
                "need at least {} data points, have {}",
                chain.n_min(),
                chain.x.len()
            )));
        }
        Ok(chain)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn n_min(&self) -> usize {
        if self.config.class.treed() {
            self.config.n_min(self.bounds.dim())
        } else {
            1
        }
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

    pub fn hier(&self) -> &HierarchyParams {
        &self.hier
    }

    pub fn prior(&self) -> &CorrelationPrior {
        &self.prior
    }

    pub fn tree(&self) -> &Tree<LeafState> {
        &self.tree
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn data(&self) -> DataRef<'_> {
        DataRef { x: &self.x, z: &self.z, basis: self.config.class.basis(), version: self.version }
    }

    fn model(&self) -> ChainModel<'_> {
        ChainModel {
            data: self.data(),
            config: &self.config,
            hier: &self.hier,
            prior: &self.prior,
            n_min: self.n_min(),
        }
    }

    /// Replaces the data set. A tree that no longer describes a valid
    /// partition of the new inputs is reset to its leftmost leaf.
    pub fn set_data(&mut self, x: Vec<Vec<f64>>, z: Vec<f64>) -> Result<()> {
        check_data(&x, &z, &self.bounds)?;
        self.x = x;
        self.z = z;
        self.version += 1;
        if !self.tree_is_valid() {
            let leftmost = self.tree.leaves()[0].clone();
            self.tree = Tree::new(leftmost);
        }
        Ok(())
    }

    fn tree_is_valid(&self) -> bool {
        let n_min = self.n_min();
        if self.tree.leaf_members(&self.x).iter().any(|r| r.len() < n_min) {
            return false;
        }
        self.tree.internal_paths().iter().all(|p| {
            let Some(s) = self.tree.node(p).and_then(Node::as_split) else {
                return false;
            };
            let rows = self.tree.rows_at(p, &self.x);
            let b = self.tree.bounds_at(p, &self.bounds);
            split_candidates(&self.x, &rows, s.dim, &b).binary_search_by(|c| c.total_cmp(&s.value)).is_ok()
        })
    }

    /// Starts a new trial: randomly prunes the tree back and forgets the
    /// previous trial's MAP tree.
    pub fn restart<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let placeholder = Tree::new(self.tree.leaves()[0].clone());
        let tree = std::mem::replace(&mut self.tree, placeholder);
        self.tree = random_prune_restart(tree, self.config.p_restart, rng);
        self.map.reset();
    }

    /// One MCMC round.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let class = self.config.class;
        if class.treed() {
            let grow = rng.random::<bool>();
            let model = ChainModel {
                data: DataRef { x: &self.x, z: &self.z, basis: class.basis(), version: self.version },
                config: &self.config,
                hier: &self.hier,
                prior: &self.prior,
                n_min: self.config.n_min(self.bounds.dim()),
            };
            let tree = &mut self.tree;
            let kind = if grow { MoveKind::Grow } else { MoveKind::Prune };
            propose_move(tree, kind, &model, &self.config.tree_prior, &self.bounds, rng);
            propose_move(tree, MoveKind::Change, &model, &self.config.tree_prior, &self.bounds, rng);
            propose_move(tree, MoveKind::Swap, &model, &self.config.tree_prior, &self.bounds, rng);
        }

        let dim = self.bounds.dim();
        // Ranges then nugget, one coordinate at a time; only the nugget
        // for classes without a GP.
        let coords = if class.gp() { 0..dim + 1 } else { dim..dim + 1 };
        let members = self.tree.leaf_members(&self.x);
        let data = DataRef { x: &self.x, z: &self.z, basis: class.basis(), version: self.version };
        let update_tau2 = self.config.fixed_tau2.is_none();
        for (leaf, rows) in self.tree.leaves_mut().into_iter().zip(&members) {
            let fit = leaf.fit(&data, rows)?;
            update_region_linear(&fit.kfit, rows.len(), &mut leaf.params, &self.hier, update_tau2, rng)?;
            let mut owned = Arc::unwrap_or_clone(leaf.fit.take().expect("fit cached above"));
            drop(fit);
            for c in coords.clone() {
                mh_update_correlation(
                    &owned.data,
                    &mut leaf.params,
                    &mut owned.kfit,
                    &self.hier,
                    &self.prior,
                    c,
                    class.llm(),
                    rng,
                )?;
                if class.llm() && c < dim {
                    llm_update(&owned.data, &mut leaf.params, &mut owned.kfit, &self.hier, &self.prior, c, rng)?;
                }
            }
            owned.corr = leaf.params.corr.clone();
            owned.linear = leaf.params.linear.clone();
            leaf.fit = Some(Arc::new(owned));
        }
        if !self.config.fixed_hierarchy {
            let states: Vec<&RegionParams> = self.tree.leaves().into_iter().map(|l| &l.params).collect();
            update_hierarchy(&mut self.hier, &states, rng)?;
        }
        self.round += 1;
        Ok(())
    }

    /// Log posterior of the current tree and leaf correlation parameters,
    /// with the linear parameters integrated out.
    pub fn log_posterior(&mut self) -> f64 {
        let members = self.tree.leaf_members(&self.x);
        let mut lp = tree_logprior(&self.tree, &self.config.tree_prior, &self.x, &self.bounds);
        let llm = self.config.class.llm();
        let data = self.data();
        let model = ChainModel {
            data,
            config: &self.config,
            hier: &self.hier,
            prior: &self.prior,
            n_min: self.n_min(),
        };
        let mut leaves = self.tree.leaves().into_iter().cloned().collect::<Vec<_>>();
        for (leaf, rows) in leaves.iter_mut().zip(&members) {
            match model.leaf_log_marginal(leaf, rows) {
                Ok(v) => lp += v,
                Err(_) => return f64::NEG_INFINITY,
            }
            lp += self.prior.log_density(&leaf.params.corr, &leaf.params.linear, llm);
        }
        lp
    }

    pub fn snapshot(&self, log_posterior: f64) -> Sample {
        Sample {
            tree: self.tree.map_leaves(|l| l.params.clone()),
            hier: self.hier.clone(),
            log_posterior,
            round: self.round,
        }
    }

    fn track_map(&mut self) -> f64 {
        let lp = self.log_posterior();
        if self.map.score().is_none_or(|s| lp > s) {
            let snap = self.snapshot(lp);
            self.map.update(lp, &snap);
        }
        lp
    }

    /// Runs burn-in and sampling rounds and returns the saved samples.
    pub fn run<R: Rng + ?Sized>(&mut self, settings: ChainSettings, rng: &mut R) -> Result<PosteriorSampleSet> {
        settings.validate()?;
        let mut samples = Vec::with_capacity(settings.saved());
        for r in 0..settings.total {
            self.step(rng)?;
            let lp = self.track_map();
            if r >= settings.burn_in && (r - settings.burn_in + 1).is_multiple_of(settings.thin) {
                samples.push(self.snapshot(lp));
            }
        }
        Ok(self.sample_set(samples, settings.thin))
    }

    /// Continues the chain for `rounds` more rounds, appending samples every
    /// `set.thin()` rounds.
    pub fn extend<R: Rng + ?Sized>(
        &mut self,
        set: &mut PosteriorSampleSet,
        rounds: usize,
        rng: &mut R,
    ) -> Result<()> {
        let thin = set.thin();
        for r in 0..rounds {
            self.step(rng)?;
            let lp = self.track_map();
            if (r + 1) % thin == 0 {
                set.push(self.snapshot(lp));
            }
        }
        set.set_map(self.map.best().cloned());
        Ok(())
    }

    fn sample_set(&self, samples: Vec<Sample>, thin: usize) -> PosteriorSampleSet {
        PosteriorSampleSet::new(
            self.x.clone(),
            self.z.clone(),
            self.bounds.clone(),
            self.config.class,
            samples,
            self.map.best().cloned(),
            thin,
            self.config.exec,
        )
    }
}

fn check_data(x: &[Vec<f64>], z: &[f64], bounds: &Bounds) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyData);
    }
    if x.len() != z.len() {
        return Err(Error::LengthMismatch(x.len(), z.len()));
    }
    for row in x {
        bounds.check(row)?;
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite response {v}")));
    }
    Ok(())
}

/// Builds a chain from scratch and runs it once.
pub fn run_chain<R: Rng + ?Sized>(
    x: Vec<Vec<f64>>,
    z: Vec<f64>,
    bounds: Bounds,
    config: ChainConfig,
    rng: &mut R,
) -> Result<PosteriorSampleSet> {
    let settings = config.settings;
    let mut chain = Chain::new(config, x, z, bounds, rng)?;
    chain.run(settings, rng)
}
