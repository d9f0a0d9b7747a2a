//! Flat `key=value` run configuration.
//!
//! One entry per line, `#` starts a comment, keys carry a section prefix
//! (`chain.B=2000`). Unknown or repeated keys are errors. `seed` is
//! mandatory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use bas::active::{BasConfig, Heuristic};
use bas::bench::{Benchmark, BenchmarkName};
use bas::cluster::ClusterConfig;
use bas::design::Generator;
use bas::experiment::{all_combos, Combo, RunSpec};
use bas::par::Exec;
use bas::posterior::{ChainConfig, ChainSettings, ModelClass};
use bas::region::{BetaPrior, DEFAULT_ALPHA_SIGMA, DEFAULT_Q_SIGMA};
use bas::{Error, Result};
use sha2::{Digest, Sha256};

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "bench.name",
    "bench.noise_sd",
    "model.class",
    "model.beta_prior",
    "model.alpha_sigma",
    "model.q_sigma",
    "chain.B",
    "chain.T",
    "chain.E",
    "final.B",
    "final.T",
    "final.E",
    "design.generator",
    "design.heuristic",
    "design.candidates",
    "design.common_streams",
    "initial.n",
    "initial.type",
    "run.budget",
    "run.trial_rmse",
    "cluster.agents",
    "cluster.base_delay",
    "cluster.poisson_mean",
    "cluster.max_in_flight",
    "cluster.sampler_delay",
    "fit.data",
    "fit.n",
    "fit.response",
    "rmse.design",
    "grid.combos",
    "grid.repeats",
    "exec.parallel",
    "out",
];

/// Keys that do not change any output byte and stay out of the hash.
const UNHASHED: &[&str] = &["exec.parallel", "out"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub bench: Option<Benchmark>,
    pub class: ModelClass,
    pub beta_prior: BetaPrior,
    pub alpha_sigma: f64,
    pub q_sigma: f64,
    pub chain: ChainSettings,
    pub final_chain: ChainSettings,
    pub generator: Generator,
    pub heuristic: Heuristic,
    pub n_candidates: usize,
    pub common_streams: bool,
    pub n_initial: usize,
    pub initial: Generator,
    pub budget: usize,
    pub trial_rmse: bool,
    pub cluster: ClusterConfig,
    pub fit_data: Option<PathBuf>,
    pub fit_n: usize,
    pub fit_response: usize,
    pub rmse_design: Option<PathBuf>,
    pub combos: Vec<Combo>,
    pub repeats: usize,
    pub exec: Exec,
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_prior(value: &str) -> Result<BetaPrior> {
    match value {
        "flat" => Ok(BetaPrior::Flat),
        "hierarchical" => Ok(BetaPrior::Hierarchical),
        _ => Err(config_err(format!("model.beta_prior: unknown prior {value:?}"))),
    }
}

fn prior_name(p: BetaPrior) -> &'static str {
    match p {
        BetaPrior::Flat => "flat",
        BetaPrior::Hierarchical => "hierarchical",
    }
}

/// `class/generator/heuristic`, e.g. `btgp/tme/alc`.
pub fn parse_combo(s: &str) -> Result<Combo> {
    let parts: Vec<&str> = s.split('/').map(str::trim).collect();
    let [class, generator, heuristic] = parts[..] else {
        return Err(config_err(format!("combo {s:?} is not model/cands/as")));
    };
    let combo = Combo { class: class.parse()?, generator: generator.parse()?, heuristic: heuristic.parse()? };
    combo.validate()?;
    Ok(combo)
}

fn combo_name(c: &Combo) -> String {
    format!("{}/{}/{}", c.class, c.generator, c.heuristic)
}

/// Splits config text into entries.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_err(format!("line {}: expected key=value, got {line:?}", lineno + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(config_err(format!("line {}: unknown key {k:?}", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(config_err(format!("line {}: key {k:?} given twice", lineno + 1)));
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Parses config text; `seed` overrides the file's seed.
    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut e = parse_entries(text)?;
        if let Some(s) = seed {
            e.insert("seed".into(), s.to_string());
        }
        Self::from_entries(&e)
    }

    fn from_entries(e: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| e.get(k).map(String::as_str);
        let num = |k: &str, default: usize| -> Result<usize> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };
        let positive = |k: &str, default: f64| -> Result<f64> {
            let v: f64 = get(k).map_or(Ok(default), |v| parse_value(k, v))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(config_err(format!("{k} must be positive, got {v}")))
            }
        };
        let seed = parse_value("seed", get("seed").ok_or_else(|| config_err("seed is mandatory"))?)?;

        let bench = match get("bench.name") {
            Some(name) => {
                let b = Benchmark::new(BenchmarkName::from_str(name)?);
                Some(match get("bench.noise_sd") {
                    Some(v) => b.with_noise(parse_value("bench.noise_sd", v)?)?,
                    None => b,
                })
            }
            None if get("bench.noise_sd").is_some() => return Err(config_err("bench.noise_sd needs bench.name")),
            None => None,
        };
        let chain = ChainSettings::new(num("chain.B", 500)?, num("chain.T", 2000)?, num("chain.E", 2)?)?;
        let final_chain = ChainSettings::new(
            num("final.B", chain.burn_in)?,
            num("final.T", chain.total)?,
            num("final.E", chain.thin)?,
        )?;
        let defaults = ClusterConfig::default();
        let cluster = ClusterConfig {
            n_agents: num("cluster.agents", defaults.n_agents)?,
            base_delay: get("cluster.base_delay")
                .map_or(Ok(defaults.base_delay), |v| parse_value("cluster.base_delay", v))?,
            poisson_mean: get("cluster.poisson_mean")
                .map_or(Ok(defaults.poisson_mean), |v| parse_value("cluster.poisson_mean", v))?,
            max_in_flight: num("cluster.max_in_flight", defaults.max_in_flight)?,
            sampler_delay: get("cluster.sampler_delay")
                .map_or(Ok(defaults.sampler_delay), |v| parse_value("cluster.sampler_delay", v))?,
        };
        cluster.validate()?;
        let combos = match get("grid.combos") {
            None | Some("all") => all_combos(),
            Some(list) => list.split(',').map(parse_combo).collect::<Result<_>>()?,
        };
        let exec = if get("exec.parallel").map_or(Ok(true), |v| parse_bool("exec.parallel", v))? {
            Exec::Parallel
        } else {
            Exec::Sequential
        };
        let cfg = Self {
            seed,
            bench,
            class: get("model.class").map_or(Ok(ModelClass::Btgpllm), str::parse)?,
            beta_prior: get("model.beta_prior").map_or(Ok(BetaPrior::Flat), parse_prior)?,
            alpha_sigma: positive("model.alpha_sigma", DEFAULT_ALPHA_SIGMA)?,
            q_sigma: positive("model.q_sigma", DEFAULT_Q_SIGMA)?,
            chain,
            final_chain,
            generator: get("design.generator").map_or(Ok(Generator::Tme), str::parse)?,
            heuristic: get("design.heuristic").map_or(Ok(Heuristic::Alc), str::parse)?,
            n_candidates: num("design.candidates", 20)?,
            common_streams: get("design.common_streams")
                .map_or(Ok(false), |v| parse_bool("design.common_streams", v))?,
            n_initial: num("initial.n", 10)?,
            initial: get("initial.type").map_or(Ok(Generator::Me), str::parse)?,
            budget: num("run.budget", 50)?,
            trial_rmse: get("run.trial_rmse").map_or(Ok(true), |v| parse_bool("run.trial_rmse", v))?,
            cluster,
            fit_data: get("fit.data").map(PathBuf::from),
            fit_n: num("fit.n", 50)?,
            fit_response: num("fit.response", 0)?,
            rmse_design: get("rmse.design").map(PathBuf::from),
            combos,
            repeats: num("grid.repeats", 1)?,
            exec,
            out: get("out").map(PathBuf::from),
        };
        if cfg.initial == Generator::Tme {
            return Err(config_err("initial.type must be lh or me"));
        }
        Ok(cfg)
    }

    /// Every setting, resolved, one `key=value` per line in [`KEYS`] order.
    /// Optional paths that are unset are left out.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("seed", self.seed.to_string());
        if let Some(b) = &self.bench {
            put("bench.name", b.name.to_string());
            put("bench.noise_sd", b.noise_sd.to_string());
        }
        put("model.class", self.class.to_string());
        put("model.beta_prior", prior_name(self.beta_prior).into());
        put("model.alpha_sigma", self.alpha_sigma.to_string());
        put("model.q_sigma", self.q_sigma.to_string());
        put("chain.B", self.chain.burn_in.to_string());
        put("chain.T", self.chain.total.to_string());
        put("chain.E", self.chain.thin.to_string());
        put("final.B", self.final_chain.burn_in.to_string());
        put("final.T", self.final_chain.total.to_string());
        put("final.E", self.final_chain.thin.to_string());
        put("design.generator", self.generator.to_string());
        put("design.heuristic", self.heuristic.to_string());
        put("design.candidates", self.n_candidates.to_string());
        put("design.common_streams", self.common_streams.to_string());
        put("initial.n", self.n_initial.to_string());
        put("initial.type", self.initial.to_string());
        put("run.budget", self.budget.to_string());
        put("run.trial_rmse", self.trial_rmse.to_string());
        put("cluster.agents", self.cluster.n_agents.to_string());
        put("cluster.base_delay", self.cluster.base_delay.to_string());
        put("cluster.poisson_mean", self.cluster.poisson_mean.to_string());
        put("cluster.max_in_flight", self.cluster.max_in_flight.to_string());
        put("cluster.sampler_delay", self.cluster.sampler_delay.to_string());
        if let Some(p) = &self.fit_data {
            put("fit.data", p.display().to_string());
        }
        put("fit.n", self.fit_n.to_string());
        put("fit.response", self.fit_response.to_string());
        if let Some(p) = &self.rmse_design {
            put("rmse.design", p.display().to_string());
        }
        put("grid.combos", self.combos.iter().map(combo_name).collect::<Vec<_>>().join(","));
        put("grid.repeats", self.repeats.to_string());
        put("exec.parallel", (self.exec == Exec::Parallel).to_string());
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        out
    }

    /// SHA-256 of the canonical settings that affect outputs, followed by
    /// `extra` (e.g. the bytes of an input data file), as lowercase hex.
    pub fn hash(&self, extra: &[u8]) -> String {
        let mut h = Sha256::new();
        for line in self.canonical().lines() {
            let key = line.split('=').next().unwrap_or("");
            if !UNHASHED.contains(&key) {
                h.update(line.as_bytes());
                h.update(b"\n");
            }
        }
        h.update(extra);
        hex::encode(h.finalize())
    }

    pub fn require_bench(&self) -> Result<&Benchmark> {
        self.bench.as_ref().ok_or_else(|| config_err("bench.name is required for this command"))
    }

    pub fn chain_config(&self, settings: ChainSettings) -> ChainConfig {
        let mut c = ChainConfig::new(self.class, settings);
        c.beta_prior = self.beta_prior;
        c.alpha_sigma = self.alpha_sigma;
        c.q_sigma = self.q_sigma;
        c.exec = self.exec;
        c
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        let spec = RunSpec {
            bench: self.require_bench()?.clone(),
            bas: BasConfig {
                chain: self.chain_config(self.chain),
                generator: self.generator,
                heuristic: self.heuristic,
                n_candidates: self.n_candidates,
                seed: self.seed,
                common_streams: self.common_streams,
            },
            cluster: self.cluster,
            n_initial: self.n_initial,
            initial: self.initial,
            budget: self.budget,
            trial_rmse: self.trial_rmse,
            final_settings: self.final_chain,
        };
        spec.validate()?;
        Ok(spec)
    }
}
