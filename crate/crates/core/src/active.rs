//! The adaptive sampler: one chain per response, candidate generation from
//! the MAP tree, and ranking by ALM or ALC.

use std::fmt;
use std::str::FromStr;

use crate::bounds::Bounds;
use crate::bench::rmse;
use crate::cluster::{Sampler, TrialInput, TrialOutput};
use crate::design::{self, generate, pool_multiresponse, rank_queue, CandidateSet, Generator};
use crate::error::{Error, Result};
use crate::par;
use crate::posterior::{Chain, ChainConfig, PosteriorSampleSet};
use crate::rng::{derive_seed, substream};

/// Candidate scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heuristic {
    Alm,
    Alc,
}

impl Heuristic {
    pub const ALL: [Heuristic; 2] = [Heuristic::Alm, Heuristic::Alc];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Alm => "alm",
            Heuristic::Alc => "alc",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown heuristic {s:?}")))
    }
}

/// Truth on a fixed grid, for per-trial RMSE.
#[derive(Debug, Clone)]
pub struct TruthGrid {
    pub x: Vec<Vec<f64>>,
    /// One column of true values per response.
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BasConfig {
    pub chain: ChainConfig,
    pub generator: Generator,
    pub heuristic: Heuristic,
    pub n_candidates: usize,
    pub seed: u64,
    /// Drive every response's chain from the same random stream.
    pub common_streams: bool,
}

impl BasConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain.settings.validate()?;
        if self.generator == Generator::Tme && !self.chain.class.treed() {
            return Err(Error::Config(format!("{} has no tree to drive tme candidates", self.chain.class)));
        }
        if self.n_candidates == 0 {
            return Err(Error::Config("need at least one candidate per trial".into()));
        }
        Ok(())
    }
}

/// What one trial produced, kept for export.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub candidates: CandidateSet,
    pub scores: Vec<f64>,
    pub order: Vec<usize>,
}

impl TrialRecord {
    pub fn queue_csv(&self) -> String {
        design::queue_csv(&self.candidates, &self.scores, &self.order)
    }
}

/// Adaptive sampler over a fixed input box.
pub struct BasSampler {
    config: BasConfig,
    bounds: Bounds,
    chains: Vec<Option<Chain>>,
    last: Vec<Option<PosteriorSampleSet>>,
    truth: Option<TruthGrid>,
    pub history: Vec<TrialRecord>,
}

impl BasSampler {
    pub fn new(config: BasConfig, bounds: Bounds, truth: Option<TruthGrid>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, bounds, chains: Vec::new(), last: Vec::new(), truth, history: Vec::new() })
    }

    /// Sample sets from the latest trial, one per response.
    pub fn posteriors(&self) -> Vec<&PosteriorSampleSet> {
        self.last.iter().flatten().collect()
    }

    /// Posterior means at `xs` under the latest trial's surrogate; `None`
    /// before the first trial.
    pub fn impute(&self, output: usize, xs: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Some(Vec::new()));
        }
        match self.last.get(output).and_then(Option::as_ref) {
            Some(set) => set.posterior_mean(xs).map(Some),
            None => Ok(None),
        }
    }

    fn score(&self, set: &PosteriorSampleSet, cands: &[Vec<f64>], trial: usize, output: usize) -> Result<Vec<f64>> {
        match self.config.heuristic {
            Heuristic::Alm => {
                let stream = if self.config.common_streams { 0 } else { output as u64 };
                set.alm_stat(cands, derive_seed(derive_seed(self.config.seed, "alm", stream), "trial", trial as u64))
            }
            Heuristic::Alc => set.alc_stat(cands, cands),
        }
    }
}

impl Sampler for BasSampler {
    fn trial(&mut self, input: TrialInput<'_>) -> Result<TrialOutput> {
        let n_out = input.z.first().map_or(0, Vec::len);
        if n_out == 0 {
            return Err(Error::EmptyData);
        }
        if self.chains.len() != n_out {
            self.chains = (0..n_out).map(|_| None).collect();
            self.last = vec![None; n_out];
        }
        let mut x_all: Vec<Vec<f64>> = input.x.to_vec();
        x_all.extend(input.running.iter().cloned());

        let mut columns = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut z: Vec<f64> = input.z.iter().map(|r| r[o]).collect();
            let imputed = match self.impute(o, input.running)? {
                Some(v) => v,
                // No surrogate yet: fall back to the observed mean.
                None => vec![z.iter().sum::<f64>() / z.len() as f64; input.running.len()],
            };
            z.extend(imputed);
            columns.push(z);
        }

        let seed = self.config.seed;
        let trial = input.trial;
        let chain_cfg = self.config.chain.clone();
        let common = self.config.common_streams;
        let bounds = self.bounds.clone();
        let jobs: Vec<(usize, Option<Chain>, Vec<f64>)> =
            self.chains.iter_mut().map(Option::take).zip(columns).enumerate().map(|(o, (c, z))| (o, c, z)).collect();
        let results = par::map_vec(chain_cfg.exec, jobs, |(o, chain, z)| -> Result<(Chain, PosteriorSampleSet)> {
            let stream = if common { 0 } else { o as u64 };
            let mut rng = substream(derive_seed(seed, "chain", stream), "trial", trial as u64);
            let mut chain = match chain {
                Some(mut c) => {
                    c.set_data(x_all.clone(), z)?;
                    c.restart(&mut rng);
                    c
                }
                None => Chain::new(chain_cfg.clone(), x_all.clone(), z, bounds.clone(), &mut rng)?,
            };
            let set = chain.run(chain_cfg.settings, &mut rng)?;
            Ok((chain, set))
        });
        for (o, r) in results.into_iter().enumerate() {
            let (c, s) = r?;
            self.chains[o] = Some(c);
            self.last[o] = Some(s);
        }
        let sets: Vec<&PosteriorSampleSet> = self.last.iter().flatten().collect();

        let map_tree = sets[0].map().map(|s| &s.tree);
        let cands = generate(
            self.config.generator,
            map_tree,
            &self.bounds,
            self.config.n_candidates,
            &x_all,
            derive_seed(seed, "design", trial as u64),
            chain_cfg.exec,
        )?;
        let rows = sets
            .iter()
            .enumerate()
            .map(|(o, s)| self.score(s, &cands.points, trial, o))
            .collect::<Result<Vec<_>>>()?;
        let pooled = pool_multiresponse(&rows)?;
        let order = rank_queue(&pooled)?;
        let queue = order.iter().map(|&i| cands.points[i].clone()).collect();

        let rmse = match &self.truth {
            Some(t) => {
                let mut acc = 0.0;
                for (o, s) in sets.iter().enumerate() {
                    acc += rmse(&s.posterior_mean(&t.x)?, &t.z[o])?;
                }
                Some(acc / n_out as f64)
            }
            None => None,
        };
        self.history.push(TrialRecord { trial, candidates: cands, scores: pooled, order });
        Ok(TrialOutput { queue, rmse })
    }
}
