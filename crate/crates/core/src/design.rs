//! Candidate generation and ranking.
//!
//! The sequential maximum-entropy search works on the Schur complement
//! `S = K(C,C) - K(C,X) K(X,X)^{-1} K(X,C)` of the candidates `C` given the
//! existing design `X`: `det K([X; C]) = det K(X) det S`, and `K(X)` does not
//! change during the search.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::kernel::{CorrelationParams, FactoredMatrix, Kernel};
use crate::par::{self, Exec};
use crate::rng::substream;
use crate::tree::Tree;

/// How a candidate set was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    /// Latin hypercube.
    Lh,
    /// Sequential maximum entropy over the whole space.
    Me,
    /// Sequential maximum entropy per leaf of the MAP tree.
    Tme,
}

impl Generator {
    pub const ALL: [Generator; 3] = [Generator::Lh, Generator::Me, Generator::Tme];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Lh => "lh",
            Generator::Me => "me",
            Generator::Tme => "tme",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown candidate generator {s:?}")))
    }
}

/// Candidate inputs with their provenance and the MAP leaf each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<Vec<f64>>,
    pub leaf: Vec<usize>,
    pub tag: Generator,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Range `0.2 width^2` per dimension and nugget 0.01.
pub fn design_params(bounds: &Bounds) -> CorrelationParams {
    let range = bounds.widths().iter().map(|w| 0.2 * w * w).collect();
    CorrelationParams { range, nugget: 0.01 }
}

/// Latin hypercube of `n` points: every margin has one point in each of `n`
/// equal strata, uniformly placed within its stratum.
pub fn lhs<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut pts = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..dim {
        perm.shuffle(rng);
        let (lo, w) = (bounds.low()[j], bounds.width(j));
        for (i, p) in pts.iter_mut().enumerate() {
            let u = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            p[j] = (lo + w * u).min(bounds.high()[j]);
        }
    }
    pts
}

/// Bookkeeping from one swap search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwapTrace {
    /// `ln det K([X; C])` of the initial subset and after every accepted swap.
    pub log_dets: Vec<f64>,
    pub proposals: usize,
    pub accepted: usize,
}

/// Conditional covariance of pool points given the existing design.
struct Conditional<'a> {
    pool: &'a [Vec<f64>],
    kernel: Kernel,
    /// `L_X^{-1} k_X(p)` per pool point (empty when there is no design).
    u: Vec<DVector<f64>>,
    log_det_x: f64,
}

impl<'a> Conditional<'a> {
    fn new(pool: &'a [Vec<f64>], existing: &[Vec<f64>], params: &CorrelationParams) -> Result<Self> {
        let kernel = Kernel::new(params, None);
        if existing.is_empty() {
            return Ok(Self { pool, kernel, u: Vec::new(), log_det_x: 0.0 });
        }
        let fx = FactoredMatrix::new(kernel.matrix(existing))?;
        let u = pool.iter().map(|p| fx.solve_lower(&kernel.cross(p, existing))).collect();
        Ok(Self { pool, kernel, u, log_det_x: fx.log_det() })
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        // Pool points are distinct, so the nugget enters only when i == j.
        let mut c = self.kernel.eval_smooth(&self.pool[i], &self.pool[j]);
        if i == j {
            c += self.kernel.nugget();
        }
        if !self.u.is_empty() {
            c -= self.u[i].dot(&self.u[j]);
        }
        c
    }

    fn schur(&self, subset: &[usize]) -> DMatrix<f64> {
        let n = subset.len();
        DMatrix::from_fn(n, n, |a, b| self.cov(subset[a], subset[b]))
    }
}

/// Sequential maximum-entropy selection of `n_target` points from `pool`
/// given the `existing` design. Starts from a random subset and proposes
/// swapping one selected point for one unselected pool point, accepting
/// only if `det K([existing; selected])` strictly increases. Stops after
/// `10 n_target` consecutive rejections or `100 n_target` proposals.
///
/// Returns the selected pool indices (in subset order) and the trace.
pub fn max_entropy_swap<R: Rng + ?Sized>(
    pool: &[Vec<f64>],
    existing: &[Vec<f64>],
    n_target: usize,
    params: &CorrelationParams,
    rng: &mut R,
) -> Result<(Vec<usize>, SwapTrace)> {
    if pool.len() < n_target {
        return Err(Error::Config(format!("pool of {} cannot supply {n_target} candidates", pool.len())));
    }
    let mut trace = SwapTrace::default();
    if n_target == 0 {
        return Ok((Vec::new(), trace));
    }
    let cond = Conditional::new(pool, existing, params)?;
    let mut chosen = index::sample(rng, pool.len(), n_target).into_vec();
    let mut in_set = vec![false; pool.len()];
    for &i in &chosen {
        in_set[i] = true;
    }
    let fs = FactoredMatrix::new(cond.schur(&chosen))?;
    let mut s_inv = fs.inverse();
    trace.log_dets.push(cond.log_det_x + fs.log_det());
    if pool.len() == n_target {
        return Ok((chosen, trace));
    }

    let (max_reject, max_prop) = (10 * n_target, 100 * n_target);
    let mut rejects = 0;
    while rejects < max_reject && trace.proposals < max_prop {
        trace.proposals += 1;
        let slot = rng.random_range(0..n_target);
        let q = loop {
            let q = rng.random_range(0..pool.len());
            if !in_set[q] {
                break q;
            }
        };
        // det S' / det S = (S^{-1})_ii (s_qq - c^T S_{-i}^{-1} c), where
        // S_{-i}^{-1} = A - a a^T / (S^{-1})_ii with A, a the blocks of S^{-1}.
        let sii = s_inv[(slot, slot)];
        let c = DVector::from_fn(n_target, |a, _| if a == slot { 0.0 } else { cond.cov(chosen[a], q) });
        let a_col = s_inv.column(slot);
        let quad = c.dot(&(&s_inv * &c)) - c.dot(&a_col).powi(2) / sii;
        let ratio = sii * (cond.cov(q, q) - quad);
        let mut accepted = false;
        if ratio > 1.0 {
            let mut cand = chosen.clone();
            cand[slot] = q;
            if let Ok(f) = FactoredMatrix::new(cond.schur(&cand)) {
                let ld = cond.log_det_x + f.log_det();
                if ld > *trace.log_dets.last().expect("initial entry") {
                    in_set[chosen[slot]] = false;
                    in_set[q] = true;
                    chosen = cand;
                    s_inv = f.inverse();
                    trace.log_dets.push(ld);
                    trace.accepted += 1;
                    accepted = true;
                }
            }
        }
        rejects = if accepted { 0 } else { rejects + 1 };
    }
    Ok((chosen, trace))
}

/// Pool of `10 n` Latin hypercube points, dropping any that coincide with an
/// existing design point.
fn pool_for<R: Rng + ?Sized>(n: usize, bounds: &Bounds, existing: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    let mut pool = lhs(10 * n, bounds, rng);
    pool.retain(|p| !existing.contains(p));
    pool
}

/// Maximum-entropy candidates over the whole box.
pub fn me_candidates<R: Rng + ?Sized>(
    bounds: &Bounds,
    n_target: usize,
    existing: &[Vec<f64>],
    rng: &mut R,
) -> Result<CandidateSet> {
    let pool = pool_for(n_target, bounds, existing, rng);
    let (idx, _) = max_entropy_swap(&pool, existing, n_target.min(pool.len()), &design_params(bounds), rng)?;
    Ok(CandidateSet { points: idx.into_iter().map(|i| pool[i].clone()).collect(), leaf: vec![0; n_target], tag: Generator::Me })
}

/// Splits `n` among parts proportionally to `weights` by the largest
/// remainder rule, giving every part at least one. When there are more parts
/// than `n`, every part gets exactly one.
pub fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quota: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quota.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let rem = |i: usize, a: &[usize]| quota[i] - a[i] as f64;
    loop {
        let sum: usize = alloc.iter().sum();
        if sum == n {
            break;
        }
        if sum < n {
            order.sort_by(|&i, &j| rem(j, &alloc).total_cmp(&rem(i, &alloc)).then(i.cmp(&j)));
            alloc[order[0]] += 1;
        } else {
            order.sort_by(|&i, &j| rem(i, &alloc).total_cmp(&rem(j, &alloc)).then(i.cmp(&j)));
            match order.iter().find(|&&i| alloc[i] > 1) {
                Some(&i) => alloc[i] -= 1,
                None => break,
            }
        }
    }
    alloc
}

/// Maximum-entropy candidates searched separately in each leaf of `tree`,
/// with counts allocated by leaf volume. Leaf `v` uses the substream
/// `(seed, "design-leaf", v)`, so leaves can be searched in parallel.
pub fn treed_me_candidates<L: Sync>(
    tree: &Tree<L>,
    bounds: &Bounds,
    n_target: usize,
    existing: &[Vec<f64>],
    seed: u64,
    exec: Exec,
) -> Result<CandidateSet> {
    let boxes = tree.leaf_bounds(bounds);
    let alloc = allocate(n_target, &boxes.iter().map(Bounds::volume).collect::<Vec<_>>());
    let mut members: Vec<Vec<Vec<f64>>> = vec![Vec::new(); boxes.len()];
    for x in existing {
        members[tree.assign_region(x)].push(x.clone());
    }
    let per_leaf = par::map_range(exec, boxes.len(), |v| -> Result<Vec<Vec<f64>>> {
        let mut rng = substream(seed, "design-leaf", v as u64);
        let pool = pool_for(alloc[v], &boxes[v], &members[v], &mut rng);
        let n = alloc[v].min(pool.len());
        let (idx, _) = max_entropy_swap(&pool, &members[v], n, &design_params(&boxes[v]), &mut rng)?;
        Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
    });
    let mut out = CandidateSet { points: Vec::new(), leaf: Vec::new(), tag: Generator::Tme };
    for (v, pts) in per_leaf.into_iter().enumerate() {
        for p in pts? {
            out.points.push(p);
            out.leaf.push(v);
        }
    }
    Ok(out)
}

/// Candidates from `generator`. `Tme` needs the MAP tree; without one it
/// behaves like `Me`.
pub fn generate<L: Sync>(
    generator: Generator,
    tree: Option<&Tree<L>>,
    bounds: &Bounds,
    n_target: usize,
    existing: &[Vec<f64>],
    seed: u64,
    exec: Exec,
) -> Result<CandidateSet> {
    let mut rng = substream(seed, "design", 0);
    match (generator, tree) {
        (Generator::Lh, _) => {
            let mut pts = lhs(n_target, bounds, &mut rng);
            pts.retain(|p| !existing.contains(p));
            Ok(CandidateSet { leaf: vec![0; pts.len()], points: pts, tag: Generator::Lh })
        }
        (Generator::Tme, Some(t)) => treed_me_candidates(t, bounds, n_target, existing, seed, exec),
        (Generator::Tme, None) => {
            let root: Tree<()> = Tree::new(());
            treed_me_candidates(&root, bounds, n_target, existing, seed, exec)
        }
        (Generator::Me, _) => me_candidates(bounds, n_target, existing, &mut rng),
    }
}

/// Divides each response's scores by their maximum (rows whose maximum is at
/// most `1e-12` become zero) and averages across responses.
pub fn pool_multiresponse(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = scores.first() else {
        return Err(Error::EmptyData);
    };
    let n = first.len();
    let mut out = vec![0.0; n];
    for row in scores {
        if row.len() != n {
            return Err(Error::LengthMismatch(n, row.len()));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > 1e-12 {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v / max;
            }
        }
    }
    let m = scores.len() as f64;
    Ok(out.into_iter().map(|v| v / m).collect())
}

/// Candidate indices by descending score, ties by ascending index.
pub fn rank_queue(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite candidate score {v}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    Ok(order)
}

/// CSV rows `rank,score,x0..,tag,leaf` for a ranked queue.
pub fn queue_csv(cands: &CandidateSet, scores: &[f64], order: &[usize]) -> String {
    let dim = cands.points.first().map_or(0, Vec::len);
    let mut out = String::from("rank,score");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push_str(",tag,leaf\n");
    for (rank, &i) in order.iter().enumerate() {
        let _ = write!(out, "{rank},{}", scores[i]);
        for v in &cands.points[i] {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", cands.tag, cands.leaf[i]);
    }
    out
}
