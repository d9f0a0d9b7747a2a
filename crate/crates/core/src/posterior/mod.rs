//! MCMC over trees and leaf parameters, and the statistics computed from the
//! saved samples.

mod chain;
mod summary;

pub use chain::{run_chain, Chain, LeafState};
pub use summary::{
    empirical_quantile, PosteriorSampleSet, PredictiveSummary, Sample, SampleEvaluator,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::region::{BetaPrior, MeanBasis, DEFAULT_ALPHA_SIGMA, DEFAULT_Q_SIGMA};
use crate::tree::TreePrior;

/// Surrogate model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelClass {
    /// Treed constant-mean model (`K = (1+g) I`).
    Bcart,
    /// Treed linear model (`K = (1+g) I`).
    Btlm,
    /// Single stationary GP.
    Bgp,
    /// Treed GP.
    Btgp,
    /// Treed GP with per-dimension linear indicators.
    Btgpllm,
}

impl ModelClass {
    pub const ALL: [ModelClass; 5] =
        [ModelClass::Bcart, ModelClass::Btlm, ModelClass::Bgp, ModelClass::Btgp, ModelClass::Btgpllm];

    pub fn treed(self) -> bool {
        self != ModelClass::Bgp
    }

    /// Whether leaves carry a GP correlation (otherwise `K = (1+g) I`).
    pub fn gp(self) -> bool {
        matches!(self, ModelClass::Bgp | ModelClass::Btgp | ModelClass::Btgpllm)
    }

    pub fn llm(self) -> bool {
        self == ModelClass::Btgpllm
    }

    pub fn basis(self) -> MeanBasis {
        match self {
            ModelClass::Bcart => MeanBasis::Constant,
            _ => MeanBasis::Linear,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Bcart => "bcart",
            ModelClass::Btlm => "btlm",
            ModelClass::Bgp => "bgp",
            ModelClass::Btgp => "btgp",
            ModelClass::Btgpllm => "btgpllm",
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model class {s:?}")))
    }
}

/// Burn-in, total rounds and thinning of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSettings {
    pub burn_in: usize,
    pub total: usize,
    pub thin: usize,
}

impl ChainSettings {
    pub fn new(burn_in: usize, total: usize, thin: usize) -> Result<Self> {
        let s = Self { burn_in, total, thin };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total {
            return Err(Error::Config(format!("burn-in {} must be below total {}", self.burn_in, self.total)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of samples a run saves.
    pub fn saved(&self) -> usize {
        (self.total - self.burn_in) / self.thin
    }
}

/// Everything that configures a chain apart from the data.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub class: ModelClass,
    pub settings: ChainSettings,
    pub beta_prior: BetaPrior,
    pub tree_prior: TreePrior,
    /// Minimum points per leaf; `None` means `max(dim + 2, 10)`.
    pub n_min: Option<usize>,
    /// Probability of collapsing each eligible node between trials.
    pub p_restart: f64,
    /// Hold the nugget at this value.
    pub fixed_nugget: Option<f64>,
    /// Hold every leaf's `tau2` at this value (hierarchical prior only).
    pub fixed_tau2: Option<f64>,
    /// Skip the `beta0` / `W` updates.
    pub fixed_hierarchy: bool,
    /// Inverse-gamma shape and scale of the `sigma2` prior.
    pub alpha_sigma: f64,
    pub q_sigma: f64,
    pub exec: Exec,
}

impl ChainConfig {
    pub fn new(class: ModelClass, settings: ChainSettings) -> Self {
        Self {
            class,
            settings,
            beta_prior: BetaPrior::Flat,
            tree_prior: TreePrior::default(),
            n_min: None,
            p_restart: 0.5,
            fixed_nugget: None,
            fixed_tau2: None,
            fixed_hierarchy: false,
            alpha_sigma: DEFAULT_ALPHA_SIGMA,
            q_sigma: DEFAULT_Q_SIGMA,
            exec: Exec::default(),
        }
    }

    pub fn n_min(&self, dim: usize) -> usize {
        self.n_min.unwrap_or((dim + 2).max(10))
    }
}
