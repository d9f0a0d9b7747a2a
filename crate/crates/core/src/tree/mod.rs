//! Binary partition trees over the input box.
//!
//! A node either holds a leaf payload or a split rule `x[dim] < value` (left)
//! versus `x[dim] >= value` (right). Nodes are addressed by their path from
//! the root (`false` = left, `true` = right); leaves are numbered in
//! depth-first, left-to-right order.

mod moves;

pub use moves::{propose_move, LeafModel, MoveKind};

use std::fmt::Write as _;

use rand::Rng;

use crate::bounds::Bounds;
use crate::error::{Error, Result};

pub type Path = Vec<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct Split<L> {
    pub dim: usize,
    pub value: f64,
    pub left: Node<L>,
    pub right: Node<L>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<L> {
    Leaf(L),
    Split(Box<Split<L>>),
}

impl<L> Node<L> {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }

    pub fn as_split(&self) -> Option<&Split<L>> {
        match self {
            Node::Split(s) => Some(s),
            Node::Leaf(_) => None,
        }
    }

    fn as_split_mut(&mut self) -> Option<&mut Split<L>> {
        match self {
            Node::Split(s) => Some(s),
            Node::Leaf(_) => None,
        }
    }
}

/// Process prior `p_split(q) = a (1 + q)^(-b)` on the tree shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreePrior {
    pub a_split: f64,
    pub b_depth: f64,
}

impl Default for TreePrior {
    fn default() -> Self {
        Self { a_split: 0.5, b_depth: 2.0 }
    }
}

impl TreePrior {
    pub fn p_split(&self, depth: usize) -> f64 {
        self.a_split * (1.0 + depth as f64).powf(-self.b_depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<L> {
    root: Node<L>,
}

impl<L> Tree<L> {
    pub fn new(leaf: L) -> Self {
        Self { root: Node::Leaf(leaf) }
    }

    pub fn root(&self) -> &Node<L> {
        &self.root
    }

    pub fn node(&self, path: &[bool]) -> Option<&Node<L>> {
        let mut n = &self.root;
        for &right in path {
            let s = n.as_split()?;
            n = if right { &s.right } else { &s.left };
        }
        Some(n)
    }

    pub fn node_mut(&mut self, path: &[bool]) -> Option<&mut Node<L>> {
        let mut n = &mut self.root;
        for &right in path {
            let s = n.as_split_mut()?;
            n = if right { &mut s.right } else { &mut s.left };
        }
        Some(n)
    }

    /// All node paths in preorder, with a leaf flag.
    pub fn paths(&self) -> Vec<(Path, bool)> {
        fn walk<L>(n: &Node<L>, path: &mut Path, out: &mut Vec<(Path, bool)>) {
            out.push((path.clone(), n.is_leaf()));
            if let Node::Split(s) = n {
                path.push(false);
                walk(&s.left, path, out);
                path.pop();
                path.push(true);
                walk(&s.right, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn leaf_paths(&self) -> Vec<Path> {
        self.paths().into_iter().filter(|(_, leaf)| *leaf).map(|(p, _)| p).collect()
    }

    pub fn internal_paths(&self) -> Vec<Path> {
        self.paths().into_iter().filter(|(_, leaf)| !*leaf).map(|(p, _)| p).collect()
    }

    /// Internal nodes whose children are both leaves.
    pub fn prunable_paths(&self) -> Vec<Path> {
        self.internal_paths()
            .into_iter()
            .filter(|p| {
                let s = self.node(p).and_then(Node::as_split).expect("internal path");
                s.left.is_leaf() && s.right.is_leaf()
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> usize {
        self.leaf_paths().iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> Vec<&L> {
        fn walk<'a, L>(n: &'a Node<L>, out: &mut Vec<&'a L>) {
            match n {
                Node::Leaf(l) => out.push(l),
                Node::Split(s) => {
                    walk(&s.left, out);
                    walk(&s.right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut L> {
        fn walk<'a, L>(n: &'a mut Node<L>, out: &mut Vec<&'a mut L>) {
            match n {
                Node::Leaf(l) => out.push(l),
                Node::Split(s) => {
                    walk(&mut s.left, out);
                    walk(&mut s.right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&mut self.root, &mut out);
        out
    }

    /// Index of the leaf containing `x`.
    pub fn assign_region(&self, x: &[f64]) -> usize {
        fn count<L>(n: &Node<L>) -> usize {
            match n {
                Node::Leaf(_) => 1,
                Node::Split(s) => count(&s.left) + count(&s.right),
            }
        }
        let mut n = &self.root;
        let mut offset = 0;
        while let Node::Split(s) = n {
            if x[s.dim] < s.value {
                n = &s.left;
            } else {
                offset += count(&s.left);
                n = &s.right;
            }
        }
        offset
    }

    /// Row indices of `x` falling in each leaf.
    pub fn leaf_members(&self, x: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_leaves()];
        for (i, row) in x.iter().enumerate() {
            out[self.assign_region(row)].push(i);
        }
        out
    }

    /// Rows of `x` reaching the node at `path`.
    pub fn rows_at(&self, path: &[bool], x: &[Vec<f64>]) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..x.len()).collect();
        let mut n = &self.root;
        for &right in path {
            let s = n.as_split().expect("path leads through splits");
            rows.retain(|&i| (x[i][s.dim] >= s.value) == right);
            n = if right { &s.right } else { &s.left };
        }
        rows
    }

    /// The box governed by the node at `path`.
    pub fn bounds_at(&self, path: &[bool], bounds: &Bounds) -> Bounds {
        let mut b = bounds.clone();
        let mut n = &self.root;
        for &right in path {
            let s = n.as_split().expect("path leads through splits");
            let (l, r) = b.split(s.dim, s.value);
            b = if right { r } else { l };
            n = if right { &s.right } else { &s.left };
        }
        b
    }

    /// Leaf boxes in leaf order.
    pub fn leaf_bounds(&self, bounds: &Bounds) -> Vec<Bounds> {
        self.leaf_paths().iter().map(|p| self.bounds_at(p, bounds)).collect()
    }

    pub fn map_leaves<M, F: FnMut(&L) -> M>(&self, mut f: F) -> Tree<M> {
        fn walk<L, M, F: FnMut(&L) -> M>(n: &Node<L>, f: &mut F) -> Node<M> {
            match n {
                Node::Leaf(l) => Node::Leaf(f(l)),
                Node::Split(s) => Node::Split(Box::new(Split {
                    dim: s.dim,
                    value: s.value,
                    left: walk(&s.left, f),
                    right: walk(&s.right, f),
                })),
            }
        }
        Tree { root: walk(&self.root, &mut f) }
    }

    /// Same split structure (ignoring leaf payloads).
    pub fn same_shape<M>(&self, other: &Tree<M>) -> bool {
        fn eq<L, M>(a: &Node<L>, b: &Node<M>) -> bool {
            match (a, b) {
                (Node::Leaf(_), Node::Leaf(_)) => true,
                (Node::Split(s), Node::Split(t)) => {
                    s.dim == t.dim && s.value == t.value && eq(&s.left, &t.left) && eq(&s.right, &t.right)
                }
                _ => false,
            }
        }
        eq(&self.root, &other.root)
    }
}

/// Distinct values of coordinate `dim` among `rows` that lie strictly inside
/// the box, in ascending order. These are the admissible split locations.
pub fn split_candidates(x: &[Vec<f64>], rows: &[usize], dim: usize, bounds: &Bounds) -> Vec<f64> {
    let (lo, hi) = (bounds.low()[dim], bounds.high()[dim]);
    let mut v: Vec<f64> = rows.iter().map(|&i| x[i][dim]).filter(|&c| c > lo && c < hi).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn subtree_logprior<L>(
    n: &Node<L>,
    depth: usize,
    rows: &[usize],
    bounds: &Bounds,
    x: &[Vec<f64>],
    prior: &TreePrior,
) -> f64 {
    let p = prior.p_split(depth);
    match n {
        Node::Leaf(_) => (1.0 - p).ln(),
        Node::Split(s) => {
            let cands = split_candidates(x, rows, s.dim, bounds).len().max(1);
            let (lb, rb) = bounds.split(s.dim, s.value);
            let (lr, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.dim] < s.value);
            p.ln() - (bounds.dim() as f64).ln() - (cands as f64).ln()
                + subtree_logprior(&s.left, depth + 1, &lr, &lb, x, prior)
                + subtree_logprior(&s.right, depth + 1, &rr, &rb, x, prior)
        }
    }
}

/// Log prior of the tree: split/no-split terms by depth plus a uniform
/// split-rule term over dimensions and admissible data locations.
pub fn tree_logprior<L>(tree: &Tree<L>, prior: &TreePrior, x: &[Vec<f64>], bounds: &Bounds) -> f64 {
    let rows: Vec<usize> = (0..x.len()).collect();
    subtree_logprior(&tree.root, 0, &rows, bounds, x, prior)
}

/// Collapses internal nodes bottom-up: a node whose children are both leaves
/// (after its subtrees were processed) is pruned with probability `p`,
/// keeping the left child's payload. The root is never removed.
pub fn random_prune_restart<L, R: Rng + ?Sized>(tree: Tree<L>, p: f64, rng: &mut R) -> Tree<L> {
    fn walk<L, R: Rng + ?Sized>(n: Node<L>, p: f64, rng: &mut R) -> Node<L> {
        match n {
            Node::Leaf(l) => Node::Leaf(l),
            Node::Split(s) => {
                let Split { dim, value, left, right } = *s;
                let left = walk(left, p, rng);
                let right = walk(right, p, rng);
                if left.is_leaf() && right.is_leaf() && rng.random::<f64>() < p {
                    left
                } else {
                    Node::Split(Box::new(Split { dim, value, left, right }))
                }
            }
        }
    }
    Tree { root: walk(tree.root, p, rng) }
}

impl<L> Tree<L> {
    /// Puts `node` at `path` and returns what was there.
    pub fn replace(&mut self, path: &[bool], node: Node<L>) -> Node<L> {
        let slot = self.node_mut(path).expect("valid path");
        std::mem::replace(slot, node)
    }
}

impl<L> Tree<L> {
    /// One node per line in preorder: `id parent dim value` for splits and
    /// `id parent leaf [extra]` for leaves, with parent `-1` for the root.
    pub fn to_text_with<F: Fn(&L) -> String>(&self, extra: F) -> String {
        fn walk<L, F: Fn(&L) -> String>(n: &Node<L>, parent: i64, next: &mut i64, out: &mut String, f: &F) {
            let id = *next;
            *next += 1;
            match n {
                Node::Leaf(l) => {
                    let e = f(l);
                    if e.is_empty() {
                        let _ = writeln!(out, "{id} {parent} leaf");
                    } else {
                        let _ = writeln!(out, "{id} {parent} leaf {e}");
                    }
                }
                Node::Split(s) => {
                    let _ = writeln!(out, "{id} {parent} {} {}", s.dim, s.value);
                    walk(&s.left, id, next, out, f);
                    walk(&s.right, id, next, out, f);
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, -1, &mut 0, &mut out, &extra);
        out
    }

    pub fn to_text(&self) -> String {
        self.to_text_with(|_| String::new())
    }
}

impl Tree<()> {
    /// Parses the output of [`Tree::to_text`]; anything after `leaf` is
    /// ignored. Lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str, line: &str| Error::Config(format!("tree text: {msg}: {line:?}"));
        let lines: Vec<&str> =
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
        fn build<'a>(
            lines: &[&'a str],
            pos: &mut usize,
            parent: i64,
            bad: &dyn Fn(&str, &str) -> Error,
        ) -> Result<Node<()>> {
            let line = *lines.get(*pos).ok_or_else(|| bad("unexpected end", ""))?;
            *pos += 1;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 3 {
                return Err(bad("too few fields", line));
            }
            let id: i64 = tok[0].parse().map_err(|_| bad("bad id", line))?;
            let par: i64 = tok[1].parse().map_err(|_| bad("bad parent", line))?;
            if par != parent {
                return Err(bad("parent does not match preorder", line));
            }
            if tok[2] == "leaf" {
                return Ok(Node::Leaf(()));
            }
            if tok.len() < 4 {
                return Err(bad("split needs dim and value", line));
            }
            let dim: usize = tok[2].parse().map_err(|_| bad("bad dim", line))?;
            let value: f64 = tok[3].parse().map_err(|_| bad("bad value", line))?;
            let left = build(lines, pos, id, bad)?;
            let right = build(lines, pos, id, bad)?;
            Ok(Node::Split(Box::new(Split { dim, value, left, right })))
        }
        let mut pos = 0;
        let root = build(&lines, &mut pos, -1, &bad)?;
        if pos != lines.len() {
            return Err(bad("trailing lines", lines[pos]));
        }
        Ok(Tree { root })
    }
}

/// Keeps the highest-scoring tree seen so far; ties keep the incumbent.
#[derive(Debug, Clone)]
pub struct MapTracker<T> {
    best: Option<(f64, T)>,
}

impl<T> Default for MapTracker<T> {
    fn default() -> Self {
        Self { best: None }
    }
}

impl<T: Clone> MapTracker<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offers a candidate; returns whether it became the incumbent.
    pub fn update(&mut self, log_posterior: f64, candidate: &T) -> bool {
        if !log_posterior.is_finite() {
            return false;
        }
        match &self.best {
            Some((s, _)) if log_posterior <= *s => false,
            _ => {
                self.best = Some((log_posterior, candidate.clone()));
                true
            }
        }
    }

    pub fn best(&self) -> Option<&T> {
        self.best.as_ref().map(|(_, t)| t)
    }

    pub fn score(&self) -> Option<f64> {
        self.best.as_ref().map(|(s, _)| *s)
    }

    pub fn reset(&mut self) {
        self.best = None;
    }
}
