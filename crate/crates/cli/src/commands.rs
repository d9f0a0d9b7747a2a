//! The `fit`, `run`, `bench` and `rmse` commands. Each writes its files
//! under an output directory; every file starts with a
//! `# config_hash=<hex> seed=<seed>` line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bas::bench::Benchmark;
use bas::bounds::Bounds;
use bas::design::lhs;
use bas::experiment::{design_csv, experiment_runner, final_fit, initial_design, results_csv, run_adaptive};
use bas::posterior::run_chain;
use bas::rng::{derive_seed, substream};
use bas::{Error, Result};

use crate::config::RunConfig;

/// Writes `body` to `dir/name` behind the header line.
fn write_output(dir: &Path, name: &str, header: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, format!("{header}\n{body}"))?;
    Ok(path)
}

fn header(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}")
}

/// Reads `i,x0..,z0..`-style CSV: `x*` columns are inputs, `z*` columns
/// responses, anything else is ignored. Lines starting with `#` are skipped.
pub fn read_design(text: &str) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let head = lines.next().ok_or(Error::EmptyData)?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    let xi: Vec<usize> = (0..cols.len()).filter(|&i| cols[i].starts_with('x')).collect();
    let zi: Vec<usize> = (0..cols.len()).filter(|&i| cols[i].starts_with('z')).collect();
    if xi.is_empty() || zi.is_empty() {
        return Err(Error::Config(format!("data header {head:?} needs x and z columns")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("data row {}: {e}", n + 1)))?;
        if vals.len() != cols.len() {
            return Err(Error::Config(format!("data row {} has {} fields, expected {}", n + 1, vals.len(), cols.len())));
        }
        out.push((xi.iter().map(|&i| vals[i]).collect(), zi.iter().map(|&i| vals[i]).collect()));
    }
    if out.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(out)
}

fn data_bounds(design: &[(Vec<f64>, Vec<f64>)]) -> Result<Bounds> {
    let dim = design[0].0.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for (x, _) in design {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    Bounds::new(lo, hi)
}

/// 200 points on a line, a 41 x 41 grid, or a 1000-point Latin hypercube.
fn prediction_grid(bench: Option<&Benchmark>, bounds: &Bounds, seed: u64) -> Vec<Vec<f64>> {
    if let Some(b) = bench {
        return b.truth_grid(derive_seed(seed, "truth-grid", 0));
    }
    let axis = |j: usize, n: usize| -> Vec<f64> {
        let (lo, hi) = (bounds.low()[j], bounds.high()[j]);
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    match bounds.dim() {
        1 => axis(0, 200).into_iter().map(|v| vec![v]).collect(),
        2 => {
            let (a, b) = (axis(0, 41), axis(1, 41));
            b.iter().flat_map(|&y| a.iter().map(move |&x| vec![x, y])).collect()
        }
        _ => lhs(1000, bounds, &mut substream(seed, "truth-grid", 0)),
    }
}

/// Fixed design of `cfg.fit_n` noisy benchmark evaluations.
fn benchmark_design(cfg: &RunConfig, bench: &Benchmark) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let xs = initial_design(bench, cfg.fit_n, cfg.initial, cfg.seed)?;
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let z = bench.evaluate(&x, &mut substream(cfg.seed, "initial-noise", i as u64))?;
            Ok((x, z))
        })
        .collect()
}

/// The fit design and the bytes that identify it beyond the config.
fn load_design(cfg: &RunConfig, path: Option<&PathBuf>) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, Vec<u8>)> {
    match path {
        Some(p) => {
            let bytes = fs::read(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok((read_design(&text)?, bytes))
        }
        None => Ok((benchmark_design(cfg, cfg.require_bench()?)?, Vec::new())),
    }
}

/// Fits the configured model; writes `fit_grid.csv` (`x0..,mean,q05,q95`)
/// and `map_tree.txt`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (design, extra) = load_design(cfg, cfg.fit_data.as_ref())?;
    let hash = cfg.hash(&extra);
    let head = header(&hash, cfg.seed);
    let r = cfg.fit_response;
    if design.iter().any(|(_, z)| z.len() <= r) {
        return Err(Error::Config(format!("fit.response {r} is not a column of the data")));
    }
    let bounds = match &cfg.bench {
        Some(b) => b.bounds.clone(),
        None => data_bounds(&design)?,
    };
    let x: Vec<Vec<f64>> = design.iter().map(|(x, _)| x.clone()).collect();
    let z: Vec<f64> = design.iter().map(|(_, z)| z[r]).collect();
    let mut rng = substream(derive_seed(cfg.seed, "chain", r as u64), "fit", 0);
    let set = run_chain(x, z, bounds.clone(), cfg.chain_config(cfg.chain), &mut rng)?;
    let grid = prediction_grid(cfg.bench.as_ref(), &bounds, cfg.seed);
    let summary = set.predict_aggregate(&grid, derive_seed(cfg.seed, "predictive", 0))?;

    let mut csv = String::new();
    for j in 0..bounds.dim() {
        let _ = write!(csv, "x{j},");
    }
    csv.push_str("mean,q05,q95\n");
    for (p, s) in grid.iter().zip(&summary) {
        for v in p {
            let _ = write!(csv, "{v},");
        }
        let _ = writeln!(csv, "{},{},{}", s.mean, s.q05, s.q95);
    }
    let tree = set.map().map(|s| s.tree.to_text()).unwrap_or_default();
    Ok(vec![
        write_output(out, "fit_grid.csv", &head, &csv)?,
        write_output(out, "map_tree.txt", &head, &tree)?,
    ])
}

/// One adaptive run; writes the event log, per-trial queues, the design,
/// the per-trial summary and the final MAP tree.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.run_spec()?;
    let head = header(&cfg.hash(b""), cfg.seed);
    let res = run_adaptive(&spec)?;
    let mut files = vec![
        write_output(out, "events.jsonl", &head, &res.log.events_jsonl())?,
        write_output(out, "design.csv", &head, &res.design_csv())?,
        write_output(out, "summary.csv", &head, &res.log.summary_csv())?,
        write_output(out, "map_tree.txt", &head, &res.map_tree_text().unwrap_or_default())?,
        write_output(out, "final_rmse.csv", &head, &format!("rmse\n{}\n", res.final_rmse))?,
    ];
    for t in &res.history {
        files.push(write_output(out, &format!("queues/trial_{:04}.csv", t.trial), &head, &t.queue_csv())?);
    }
    Ok(files)
}

/// The combo grid; writes `results.csv`.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.run_spec()?;
    let head = header(&cfg.hash(b""), cfg.seed);
    let res = experiment_runner(&spec, &cfg.combos, cfg.repeats, cfg.exec)?;
    Ok(vec![write_output(out, "results.csv", &head, &results_csv(&res, cfg.seed, cfg.budget))?])
}

/// Refits a design with the treed GP LLM and scores it against the
/// benchmark truth; writes `rmse.csv` (`n,rmse`) and returns the RMSE.
pub fn cmd_rmse(cfg: &RunConfig, out: &Path) -> Result<(f64, Vec<PathBuf>)> {
    let bench = cfg.require_bench()?;
    let (design, extra) = load_design(cfg, cfg.rmse_design.as_ref())?;
    if design.iter().any(|(x, z)| x.len() != bench.dim() || z.len() != bench.n_outputs()) {
        return Err(Error::Config(format!("design does not match benchmark {}", bench.name)));
    }
    let head = header(&cfg.hash(&extra), cfg.seed);
    let (_, e) = final_fit(bench, &design, &cfg.chain_config(cfg.final_chain), cfg.seed)?;
    let path = write_output(out, "rmse.csv", &head, &format!("n,rmse\n{},{e}\n", design.len()))?;
    Ok((e, vec![path]))
}

/// Writes a design in the format [`read_design`] accepts.
pub fn write_design(path: &Path, design: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    fs::write(path, design_csv(design))?;
    Ok(())
}
