use rand::Rng;

use super::{split_candidates, Node, Split, Tree, TreePrior};
use crate::bounds::Bounds;

/// What the tree moves need from the per-leaf models.
pub trait LeafModel {
    type Leaf: Clone;

    fn inputs(&self) -> &[Vec<f64>];

    /// Smallest admissible number of points in a leaf.
    fn n_min(&self) -> usize;

    /// Log marginal likelihood of rows `rows` (ascending) under the leaf's
    /// parameters, or `None` when it cannot be evaluated (e.g. a singular
    /// correlation matrix). Implementations may refresh caches in `leaf`.
    fn log_lik(&self, leaf: &mut Self::Leaf, rows: &[usize]) -> Option<f64>;

    /// Fresh leaf parameters drawn from their prior.
    fn draw_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Leaf;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

/// Log prior plus log likelihood of the subtree at `path`, or `None` if the
/// subtree is not a valid partition (split outside its admissible set, a leaf
/// below `n_min`) or a leaf cannot be evaluated.
fn score_subtree<M: LeafModel>(
    tree: &mut Tree<M::Leaf>,
    path: &[bool],
    model: &M,
    prior: &TreePrior,
    bounds: &Bounds,
) -> Option<f64> {
    let x = model.inputs();
    let rows = tree.rows_at(path, x);
    let b = tree.bounds_at(path, bounds);
    let node = tree.node_mut(path)?;
    score_node(node, path.len(), rows, b, model, prior)
}

fn score_node<M: LeafModel>(
    n: &mut Node<M::Leaf>,
    depth: usize,
    rows: Vec<usize>,
    b: Bounds,
    model: &M,
    prior: &TreePrior,
) -> Option<f64> {
    let x = model.inputs();
    let p = prior.p_split(depth);
    match n {
        Node::Leaf(leaf) => {
            if rows.len() < model.n_min() {
                return None;
            }
            let ll = model.log_lik(leaf, &rows)?;
            Some((1.0 - p).ln() + ll)
        }
        Node::Split(s) => {
            let cands = split_candidates(x, &rows, s.dim, &b);
            if cands.binary_search_by(|c| c.total_cmp(&s.value)).is_err() {
                return None;
            }
            let (lb, rb) = b.split(s.dim, s.value);
            let (lr, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.dim] < s.value);
            let rule = p.ln() - (b.dim() as f64).ln() - (cands.len() as f64).ln();
            let l = score_node(&mut s.left, depth + 1, lr, lb, model, prior)?;
            let r = score_node(&mut s.right, depth + 1, rr, rb, model, prior)?;
            Some(rule + l + r)
        }
    }
}

fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    !log_alpha.is_nan() && (log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha)
}

/// One reversible-jump Metropolis-Hastings tree move. Returns whether the
/// proposal was accepted; inapplicable moves are rejected without touching
/// the tree.
///
/// Grow splits a uniformly chosen leaf at a uniformly chosen dimension and
/// admissible data location; the left child keeps the parent's parameters and
/// the right child gets a prior draw. Prune merges a uniformly chosen node
/// with two leaf children, keeping the left child's parameters. Change moves
/// an internal node's split location within its admissible set. Swap
/// exchanges the rules of a node and its parent (and of the sibling too when
/// it carries the same rule).
pub fn propose_move<M: LeafModel, R: Rng + ?Sized>(
    tree: &mut Tree<M::Leaf>,
    kind: MoveKind,
    model: &M,
    prior: &TreePrior,
    bounds: &Bounds,
    rng: &mut R,
) -> bool {
    let x = model.inputs();
    let m = bounds.dim();
    match kind {
        MoveKind::Grow => {
            let leaves = tree.leaf_paths();
            let r = leaves.len();
            let path = leaves[rng.random_range(0..r)].clone();
            let dim = rng.random_range(0..m);
            let rows = tree.rows_at(&path, x);
            let b = tree.bounds_at(&path, bounds);
            let cands = split_candidates(x, &rows, dim, &b);
            if cands.is_empty() {
                return false;
            }
            let value = cands[rng.random_range(0..cands.len())];
            let n_left = rows.iter().filter(|&&i| x[i][dim] < value).count();
            if n_left < model.n_min() || rows.len() - n_left < model.n_min() {
                return false;
            }
            let Some(Node::Leaf(parent)) = tree.node(&path) else {
                return false;
            };
            let left = parent.clone();
            let right = model.draw_leaf(rng);
            let mut cand = tree.clone();
            cand.replace(&path, Node::Split(Box::new(Split { dim, value, left: Node::Leaf(left), right: Node::Leaf(right) })));
            let Some(new) = score_subtree(&mut cand, &path, model, prior, bounds) else {
                return false;
            };
            let old = score_subtree(tree, &path, model, prior, bounds).unwrap_or(f64::NEG_INFINITY);
            let prunable = cand.prunable_paths().len() as f64;
            let log_alpha =
                new - old + (r as f64).ln() - prunable.ln() + (m as f64).ln() + (cands.len() as f64).ln();
            if accept(log_alpha, rng) {
                *tree = cand;
                return true;
            }
            false
        }
        MoveKind::Prune => {
            let prunable = tree.prunable_paths();
            if prunable.is_empty() {
                return false;
            }
            let p = prunable.len();
            let path = prunable[rng.random_range(0..p)].clone();
            let Some(s) = tree.node(&path).and_then(Node::as_split) else {
                return false;
            };
            let dim = s.dim;
            let Node::Leaf(left) = &s.left else {
                return false;
            };
            let left = left.clone();
            let mut cand = tree.clone();
            cand.replace(&path, Node::Leaf(left));
            let Some(new) = score_subtree(&mut cand, &path, model, prior, bounds) else {
                return false;
            };
            let old = score_subtree(tree, &path, model, prior, bounds).unwrap_or(f64::NEG_INFINITY);
            let rows = cand.rows_at(&path, x);
            let b = cand.bounds_at(&path, bounds);
            let n_cands = split_candidates(x, &rows, dim, &b).len() as f64;
            let leaves = cand.n_leaves() as f64;
            let log_alpha = new - old + (p as f64).ln() - leaves.ln() - (m as f64).ln() - n_cands.ln();
            if accept(log_alpha, rng) {
                *tree = cand;
                return true;
            }
            false
        }
        MoveKind::Change => {
            let internal = tree.internal_paths();
            if internal.is_empty() {
                return false;
            }
            let path = internal[rng.random_range(0..internal.len())].clone();
            let Some(s) = tree.node(&path).and_then(Node::as_split) else {
                return false;
            };
            let (dim, current) = (s.dim, s.value);
            let rows = tree.rows_at(&path, x);
            let b = tree.bounds_at(&path, bounds);
            let cands = split_candidates(x, &rows, dim, &b);
            if cands.is_empty() {
                return false;
            }
            let value = cands[rng.random_range(0..cands.len())];
            if value == current {
                return false;
            }
            let n_left = rows.iter().filter(|&&i| x[i][dim] < value).count();
            if n_left < model.n_min() || rows.len() - n_left < model.n_min() {
                return false;
            }
            let mut cand = tree.clone();
            if let Some(Node::Split(s)) = cand.node_mut(&path) {
                s.value = value;
            }
            let Some(new) = score_subtree(&mut cand, &path, model, prior, bounds) else {
                return false;
            };
            let old = score_subtree(tree, &path, model, prior, bounds).unwrap_or(f64::NEG_INFINITY);
            if accept(new - old, rng) {
                *tree = cand;
                return true;
            }
            false
        }
        MoveKind::Swap => {
            let children: Vec<_> = tree.internal_paths().into_iter().filter(|p| !p.is_empty()).collect();
            if children.is_empty() {
                return false;
            }
            let child = children[rng.random_range(0..children.len())].clone();
            let parent = child[..child.len() - 1].to_vec();
            let mut cand = tree.clone();
            {
                let Some(Node::Split(ps)) = cand.node_mut(&parent) else {
                    return false;
                };
                let prule = (ps.dim, ps.value);
                let is_right = *child.last().expect("non-empty");
                let (c, sib) = if is_right { (&mut ps.right, &mut ps.left) } else { (&mut ps.left, &mut ps.right) };
                let Node::Split(cs) = c else {
                    return false;
                };
                let crule = (cs.dim, cs.value);
                cs.dim = prule.0;
                cs.value = prule.1;
                if let Node::Split(ss) = sib {
                    if (ss.dim, ss.value) == crule {
                        ss.dim = prule.0;
                        ss.value = prule.1;
                    }
                }
                ps.dim = crule.0;
                ps.value = crule.1;
            }
            let Some(new) = score_subtree(&mut cand, &parent, model, prior, bounds) else {
                return false;
            };
            let old = score_subtree(tree, &parent, model, prior, bounds).unwrap_or(f64::NEG_INFINITY);
            if accept(new - old, rng) {
                *tree = cand;
                return true;
            }
            false
        }
    }
}
