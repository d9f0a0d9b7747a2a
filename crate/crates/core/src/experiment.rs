//! End-to-end adaptive runs on the synthetic benchmarks, and the grid of
//! model / candidate / heuristic combinations.

use std::fmt::Write as _;

use crate::active::{BasConfig, BasSampler, Heuristic, TrialRecord, TruthGrid};
use crate::bench::{rmse, Benchmark};
use crate::cluster::{emcee_loop, job_rng, Cluster, ClusterConfig, RunLog};
use crate::design::{lhs, me_candidates, Generator};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::posterior::{run_chain, ChainConfig, ChainSettings, ModelClass, PosteriorSampleSet};
use crate::rng::{derive_seed, substream};

/// One adaptive run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub bench: Benchmark,
    pub bas: BasConfig,
    pub cluster: ClusterConfig,
    pub n_initial: usize,
    /// `Lh` or `Me`.
    pub initial: Generator,
    /// Total evaluations, initial design included.
    pub budget: usize,
    /// Compute RMSE to the truth after every trial.
    pub trial_rmse: bool,
    /// Chain used for the final treed GP LLM refit.
    pub final_settings: ChainSettings,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.bas.validate()?;
        self.cluster.validate()?;
        self.final_settings.validate()?;
        if self.n_initial == 0 {
            return Err(Error::Config("initial design must not be empty".into()));
        }
        if self.budget < self.n_initial {
            return Err(Error::Config(format!(
                "budget {} is below the initial design size {}",
                self.budget, self.n_initial
            )));
        }
        if self.initial == Generator::Tme {
            return Err(Error::Config("initial design must be lh or me".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    pub history: Vec<TrialRecord>,
    /// Final treed GP LLM fit per response.
    pub final_fit: Vec<PosteriorSampleSet>,
    pub final_rmse: f64,
}

impl RunResult {
    /// MAP tree of the final fit (first response) in text form.
    pub fn map_tree_text(&self) -> Option<String> {
        self.final_fit.first()?.map().map(|s| s.tree.to_text())
    }

    /// CSV rows `i,x0..,z0..` of the evaluated design.
    pub fn design_csv(&self) -> String {
        design_csv(&self.log.design())
    }
}

pub fn design_csv(design: &[(Vec<f64>, Vec<f64>)]) -> String {
    let (dx, dz) = design.first().map_or((0, 0), |(x, z)| (x.len(), z.len()));
    let mut out = String::from("i");
    for j in 0..dx {
        let _ = write!(out, ",x{j}");
    }
    for j in 0..dz {
        let _ = write!(out, ",z{j}");
    }
    out.push('\n');
    for (i, (x, z)) in design.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in x.iter().chain(z) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Initial design of `n` points from substream `(seed, "initial-design")`.
pub fn initial_design(bench: &Benchmark, n: usize, generator: Generator, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = substream(seed, "initial-design", 0);
    match generator {
        Generator::Lh => Ok(lhs(n, &bench.bounds, &mut rng)),
        Generator::Me => Ok(me_candidates(&bench.bounds, n, &[], &mut rng)?.points),
        Generator::Tme => Err(Error::Config("initial design must be lh or me".into())),
    }
}

fn truth_grid(bench: &Benchmark, seed: u64) -> Result<TruthGrid> {
    let x = bench.truth_grid(derive_seed(seed, "truth-grid", 0));
    let mut z = vec![Vec::with_capacity(x.len()); bench.n_outputs()];
    for p in &x {
        for (o, v) in bench.truth(p)?.into_iter().enumerate() {
            z[o].push(v);
        }
    }
    Ok(TruthGrid { x, z })
}

/// Fits a treed GP LLM per response to `design` and returns the fits and
/// the RMSE of their posterior means on the benchmark's truth grid
/// (averaged over responses). `chain` supplies everything but the model
/// class.
pub fn final_fit(
    bench: &Benchmark,
    design: &[(Vec<f64>, Vec<f64>)],
    chain: &ChainConfig,
    seed: u64,
) -> Result<(Vec<PosteriorSampleSet>, f64)> {
    let exec = chain.exec;
    let truth = truth_grid(bench, seed)?;
    let x: Vec<Vec<f64>> = design.iter().map(|(x, _)| x.clone()).collect();
    let outputs: Vec<usize> = (0..bench.n_outputs()).collect();
    let fits = par::map_slice(exec, &outputs, |&o| -> Result<(PosteriorSampleSet, f64)> {
        let z: Vec<f64> = design.iter().map(|(_, z)| z[o]).collect();
        let mut cfg = chain.clone();
        cfg.class = ModelClass::Btgpllm;
        let mut rng = substream(derive_seed(seed, "final-fit", o as u64), "chain", 0);
        let set = run_chain(x.clone(), z, bench.bounds.clone(), cfg, &mut rng)?;
        let e = rmse(&set.posterior_mean(&truth.x)?, &truth.z[o])?;
        Ok((set, e))
    });
    let mut sets = Vec::new();
    let mut total = 0.0;
    for f in fits {
        let (s, e) = f?;
        sets.push(s);
        total += e;
    }
    Ok((sets, total / outputs.len() as f64))
}

/// Initial design, adaptive loop to the budget, and final refit.
pub fn run_adaptive(spec: &RunSpec) -> Result<RunResult> {
    spec.validate()?;
    let seed = spec.bas.seed;
    let bench = &spec.bench;
    let x0 = initial_design(bench, spec.n_initial, spec.initial, seed)?;
    let mut initial = Vec::with_capacity(x0.len());
    for (i, x) in x0.into_iter().enumerate() {
        let z = bench.evaluate(&x, &mut substream(seed, "initial-noise", i as u64))?;
        initial.push((x, z));
    }
    let truth = if spec.trial_rmse { Some(truth_grid(bench, seed)?) } else { None };
    let mut sampler = BasSampler::new(spec.bas.clone(), bench.bounds.clone(), truth)?;
    let mut cluster = Cluster::new(spec.cluster, substream(seed, "cluster", 0))?;
    let noise_seed = derive_seed(seed, "noise", 0);
    let mut responder = |job: usize, x: &[f64]| bench.evaluate(x, &mut job_rng(noise_seed, job));
    let log = emcee_loop(&mut cluster, &mut sampler, &mut responder, initial, spec.budget)?;
    if let Some(e) = &log.error {
        return Err(Error::Sampler(e.clone()));
    }
    let mut chain = spec.bas.chain.clone();
    chain.settings = spec.final_settings;
    let (final_fit, final_rmse) = final_fit(bench, &log.design(), &chain, seed)?;
    Ok(RunResult { log, history: std::mem::take(&mut sampler.history), final_fit, final_rmse })
}

/// Model class, candidate generator and heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Combo {
    pub class: ModelClass,
    pub generator: Generator,
    pub heuristic: Heuristic,
}

impl Combo {
    pub fn validate(&self) -> Result<()> {
        if self.generator == Generator::Tme && !self.class.treed() {
            return Err(Error::Config(format!("combination {}/tme is not defined", self.class)));
        }
        Ok(())
    }
}

/// Every valid combination (`bgp` with `tme` is excluded).
pub fn all_combos() -> Vec<Combo> {
    let mut out = Vec::new();
    for class in ModelClass::ALL {
        for generator in Generator::ALL {
            for heuristic in Heuristic::ALL {
                let c = Combo { class, generator, heuristic };
                if c.validate().is_ok() {
                    out.push(c);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ComboResult {
    pub combo: Combo,
    /// Final RMSE per repeat.
    pub rmse: Vec<f64>,
}

impl ComboResult {
    pub fn mean(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len() as f64
    }

    /// Standard error of the mean (0 for a single repeat).
    pub fn se(&self) -> f64 {
        let n = self.rmse.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        (self.rmse.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    }
}

/// Runs every combo `repeats` times from `base` (whose class, generator
/// and heuristic are overridden). Repeat `r` uses the seed
/// `derive_seed(base.bas.seed, "repeat", r)` for every combo, so combos see
/// the same initial designs.
pub fn experiment_runner(base: &RunSpec, combos: &[Combo], repeats: usize, exec: Exec) -> Result<Vec<ComboResult>> {
    for c in combos {
        c.validate()?;
    }
    if repeats == 0 {
        return Err(Error::Config("need at least one repeat".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..combos.len()).flat_map(|c| (0..repeats).map(move |r| (c, r))).collect();
    let out = par::map_slice(exec, &jobs, |&(c, r)| -> Result<f64> {
        let combo = combos[c];
        let mut spec = base.clone();
        spec.bas.chain.class = combo.class;
        spec.bas.generator = combo.generator;
        spec.bas.heuristic = combo.heuristic;
        spec.bas.seed = derive_seed(base.bas.seed, "repeat", r as u64);
        Ok(run_adaptive(&spec)?.final_rmse)
    });
    let mut results: Vec<ComboResult> =
        combos.iter().map(|&combo| ComboResult { combo, rmse: Vec::with_capacity(repeats) }).collect();
    for (&(c, _), r) in jobs.iter().zip(out) {
        results[c].rmse.push(r?);
    }
    Ok(results)
}

/// CSV `model,cands,as,rmse,se,repeats,seed,budget`, sorted by mean RMSE
/// (ties keep the input order).
pub fn results_csv(results: &[ComboResult], seed: u64, budget: usize) -> String {
    let mut idx: Vec<usize> = (0..results.len()).collect();
    idx.sort_by(|&a, &b| results[a].mean().total_cmp(&results[b].mean()).then(a.cmp(&b)));
    let mut out = String::from("model,cands,as,rmse,se,repeats,seed,budget\n");
    for i in idx {
        let r = &results[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{seed},{budget}",
            r.combo.class,
            r.combo.generator,
            r.combo.heuristic,
            r.mean(),
            r.se(),
            r.rmse.len()
        );
    }
    out
}
