//! Reconstructed trees: topology plus node times before the present.
//!
//! Node times are the source of truth and edge lengths are derived as
//! `parent_time - child_time`. Leaves always sit at time zero.

mod full;
mod newick;

pub use full::{FullNode, FullTree, TipState};
pub use newick::{from_newick, to_newick, NewickError};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TreeError {
    #[error("tree has {0} leaves, at least 2 are required")]
    TooFewLeaves(usize),
    #[error("node {node} has {count} children, a binary tree needs 0 or 2")]
    NotBinary { node: usize, count: usize },
    #[error("expected exactly one root, found {0}")]
    RootCount(usize),
    #[error("node {0} is not reachable from the root")]
    Disconnected(usize),
    #[error("edge above node {child} has non-positive length {length}")]
    NonPositiveLength { child: usize, length: f64 },
    #[error("leaf {node} has time {time}, leaves must be at the present")]
    LeafNotAtPresent { node: usize, time: f64 },
    #[error("node {node} has invalid time {time}")]
    BadTime { node: usize, time: f64 },
    #[error("node {0} already has a parent")]
    AlreadyAttached(usize),
    #[error("node index {0} out of range")]
    NoSuchNode(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub time: f64,
    pub label: Option<String>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Incremental construction of a [`ReconTree`]. Nodes can be added and
/// attached in any order; [`TreeBuilder::build`] checks all invariants.
#[derive(Debug, Clone, Default)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
    pending: Vec<Vec<usize>>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n_leaves: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(2 * n_leaves),
            pending: Vec::with_capacity(2 * n_leaves),
        }
    }

    pub fn add_leaf(&mut self, label: Option<String>) -> usize {
        self.push(0.0, label)
    }

    pub fn add_internal(&mut self, time: f64) -> usize {
        self.push(time, None)
    }

    pub fn add_internal_labelled(&mut self, time: f64, label: Option<String>) -> usize {
        self.push(time, label)
    }

    fn push(&mut self, time: f64, label: Option<String>) -> usize {
        self.nodes.push(Node {
            parent: None,
            children: None,
            time,
            label,
        });
        self.pending.push(Vec::new());
        self.nodes.len() - 1
    }

    /// Joins two existing nodes under a new internal node at `time`.
    pub fn join(&mut self, a: usize, b: usize, time: f64) -> Result<usize, TreeError> {
        let v = self.add_internal(time);
        self.attach(v, a)?;
        self.attach(v, b)?;
        Ok(v)
    }

    pub fn attach(&mut self, parent: usize, child: usize) -> Result<(), TreeError> {
        let len = self.nodes.len();
        for idx in [parent, child] {
            if idx >= len {
                return Err(TreeError::NoSuchNode(idx));
            }
        }
        if self.nodes[child].parent.is_some() {
            return Err(TreeError::AlreadyAttached(child));
        }
        self.nodes[child].parent = Some(parent);
        self.pending[parent].push(child);
        Ok(())
    }

    pub fn set_time(&mut self, node: usize, time: f64) -> Result<(), TreeError> {
        self.nodes
            .get_mut(node)
            .ok_or(TreeError::NoSuchNode(node))?
            .time = time;
        Ok(())
    }

    pub fn build(mut self) -> Result<ReconTree, TreeError> {
        for (i, kids) in self.pending.iter().enumerate() {
            match kids.as_slice() {
                [] => {}
                [a, b] => self.nodes[i].children = Some([*a, *b]),
                other => {
                    return Err(TreeError::NotBinary {
                        node: i,
                        count: other.len(),
                    })
                }
            }
        }
        ReconTree::from_nodes(self.nodes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconTree {
    nodes: Vec<Node>,
    root: usize,
    n_leaves: usize,
}

impl ReconTree {
    /// Validates a node arena. Parent and child links must agree.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, TreeError> {
        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(TreeError::RootCount(roots.len()));
        }
        let root = roots[0];
        let mut n_leaves = 0;
        for (i, node) in nodes.iter().enumerate() {
            if !node.time.is_finite() || node.time < 0.0 {
                return Err(TreeError::BadTime { node: i, time: node.time });
            }
            match node.children {
                None => {
                    n_leaves += 1;
                    if node.time != 0.0 {
                        return Err(TreeError::LeafNotAtPresent { node: i, time: node.time });
                    }
                }
                Some(kids) => {
                    for c in kids {
                        if c >= nodes.len() {
                            return Err(TreeError::NoSuchNode(c));
                        }
                        if nodes[c].parent != Some(i) {
                            return Err(TreeError::Disconnected(c));
                        }
                        let length = node.time - nodes[c].time;
                        if !(length > 0.0) {
                            return Err(TreeError::NonPositiveLength { child: c, length });
                        }
                    }
                }
            }
        }
        if nodes[root].is_leaf() {
            return Err(TreeError::TooFewLeaves(1));
        }
        // every node must be reachable from the root
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut count = 0;
        while let Some(v) = stack.pop() {
            if seen[v] {
                return Err(TreeError::Disconnected(v));
            }
            seen[v] = true;
            count += 1;
            if let Some([a, b]) = nodes[v].children {
                stack.push(a);
                stack.push(b);
            }
        }
        if count != nodes.len() {
            let missing = seen.iter().position(|&s| !s).unwrap_or(0);
            return Err(TreeError::Disconnected(missing));
        }
        Ok(Self { nodes, root, n_leaves })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Root age `x1`.
    pub fn age(&self) -> f64 {
        self.nodes[self.root].time
    }

    /// Length of the edge above `child`; `None` for the root.
    pub fn edge_length(&self, child: usize) -> Option<f64> {
        let parent = self.nodes[child].parent?;
        Some(self.nodes[parent].time - self.nodes[child].time)
    }

    /// Nodes in an order where every node precedes its children.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            if let Some([a, b]) = self.nodes[v].children {
                stack.push(b);
                stack.push(a);
            }
        }
        order
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    /// Edges as `(child, length)`, one per non-root node.
    pub fn edges(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.nodes.len()).filter_map(|i| self.edge_length(i).map(|l| (i, l)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Pendant,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RootMark {
    RootShort,
    RootLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEdge {
    pub child: usize,
    pub length: f64,
    pub kind: EdgeKind,
    pub root_mark: Option<RootMark>,
}

/// Classifies every edge. The two root edges are additionally marked short
/// and long; equal lengths are split by a fair coin from `rng`.
pub fn classify_edges<R: Rng + ?Sized>(tree: &ReconTree, rng: &mut R) -> Vec<ClassifiedEdge> {
    let [a, b] = tree.nodes[tree.root]
        .children
        .expect("a validated tree has an internal root");
    let (la, lb) = (tree.edge_length(a).unwrap(), tree.edge_length(b).unwrap());
    let a_short = if la == lb { rng.random_bool(0.5) } else { la < lb };
    let (short, long) = if a_short { (a, b) } else { (b, a) };
    tree.edges()
        .map(|(child, length)| ClassifiedEdge {
            child,
            length,
            kind: if tree.nodes[child].is_leaf() {
                EdgeKind::Pendant
            } else {
                EdgeKind::Interior
            },
            root_mark: if child == short {
                Some(RootMark::RootShort)
            } else if child == long {
                Some(RootMark::RootLong)
            } else {
                None
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub n: usize,
    pub diversity: f64,
    pub mrca_age: f64,
    /// Times of all `n - 1` speciation events, root first.
    pub speciation_times: Vec<f64>,
    pub pendant_lengths: Vec<f64>,
    pub interior_lengths: Vec<f64>,
    /// `[shorter, longer]`.
    pub root_edge_lengths: [f64; 2],
}

pub fn tree_stats(tree: &ReconTree) -> TreeStats {
    let mut pendant = Vec::with_capacity(tree.n_leaves);
    let mut interior = Vec::with_capacity(tree.n_leaves.saturating_sub(2));
    for (child, length) in tree.edges() {
        if tree.nodes[child].is_leaf() {
            pendant.push(length);
        } else {
            interior.push(length);
        }
    }
    let mut times: Vec<f64> = tree
        .nodes
        .iter()
        .filter(|v| !v.is_leaf())
        .map(|v| v.time)
        .collect();
    times.sort_by(|x, y| y.total_cmp(x));
    let [a, b] = tree.nodes[tree.root].children.unwrap();
    let (la, lb) = (tree.edge_length(a).unwrap(), tree.edge_length(b).unwrap());
    TreeStats {
        n: tree.n_leaves,
        diversity: pendant.iter().chain(&interior).sum(),
        mrca_age: tree.age(),
        speciation_times: times,
        pendant_lengths: pendant,
        interior_lengths: interior,
        root_edge_lengths: [la.min(lb), la.max(lb)],
    }
}

/// One line of an NDJSON tree stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub id: u64,
    pub newick: String,
    pub n: usize,
    pub x1: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl TreeRecord {
    pub fn new(id: u64, tree: &ReconTree, seed: u64, stream_id: u64) -> Self {
        Self {
            id,
            newick: to_newick(tree),
            n: tree.n_leaves(),
            x1: tree.age(),
            seed,
            stream_id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cherry(x1: f64) -> ReconTree {
        let mut b = TreeBuilder::new();
        let l = b.add_leaf(Some("A".into()));
        let r = b.add_leaf(Some("B".into()));
        b.join(l, r, x1).unwrap();
        b.build().unwrap()
    }

    fn three_leaf() -> ReconTree {
        from_newick("((A:0.5,B:0.5):0.3,C:0.8);").unwrap()
    }

    #[test]
    fn two_leaves() {
        let t = cherry(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut short_first = 0;
        for _ in 0..200 {
            let edges = classify_edges(&t, &mut rng);
            assert_eq!(edges.len(), 2);
            assert!(edges.iter().all(|e| e.kind == EdgeKind::Pendant));
            let marks: Vec<_> = edges.iter().map(|e| e.root_mark.unwrap()).collect();
            assert!(marks.contains(&RootMark::RootShort) && marks.contains(&RootMark::RootLong));
            if edges.iter().find(|e| e.root_mark == Some(RootMark::RootShort)).unwrap().child == 0 {
                short_first += 1;
            }
        }
        // the tie is split by a coin, so both outcomes occur
        assert!(short_first > 50 && short_first < 150);
        assert_relative_eq!(tree_stats(&t).diversity, 3.0);
    }

    #[test]
    fn three_leaves() {
        let t = three_leaf();
        let edges = classify_edges(&t, &mut ChaCha8Rng::seed_from_u64(0));
        let pendant = edges.iter().filter(|e| e.kind == EdgeKind::Pendant).count();
        let interior: Vec<_> = edges.iter().filter(|e| e.kind == EdgeKind::Interior).collect();
        assert_eq!(pendant, 3);
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].root_mark, Some(RootMark::RootShort));
        let s = tree_stats(&t);
        assert_relative_eq!(s.diversity, 2.1, epsilon = 1e-15);
        assert_eq!(s.mrca_age, 0.8);
        assert_eq!(s.speciation_times, vec![0.8, 0.5]);
        assert_relative_eq!(s.root_edge_lengths[0], 0.3, epsilon = 1e-15);
        assert_eq!(s.root_edge_lengths[1], 0.8);
    }

    #[test]
    fn builder_rejects_bad_shapes() {
        let mut b = TreeBuilder::new();
        let l = b.add_leaf(None);
        let v = b.add_internal(1.0);
        b.attach(v, l).unwrap();
        assert_eq!(b.build().unwrap_err(), TreeError::NotBinary { node: v, count: 1 });

        let mut b = TreeBuilder::new();
        let l = b.add_leaf(None);
        let r = b.add_leaf(None);
        b.join(l, r, 0.0).unwrap();
        assert!(matches!(b.build(), Err(TreeError::NonPositiveLength { .. })));

        let mut b = TreeBuilder::new();
        let l = b.add_leaf(None);
        let r = b.add_leaf(None);
        let v = b.join(l, r, 1.0).unwrap();
        assert_eq!(b.attach(v, l), Err(TreeError::AlreadyAttached(l)));
        b.add_leaf(None);
        assert_eq!(b.build().unwrap_err(), TreeError::RootCount(2));

        let mut b = TreeBuilder::new();
        b.add_leaf(None);
        assert_eq!(b.build().unwrap_err(), TreeError::TooFewLeaves(1));
    }

    #[test]
    fn record_serialises() {
        let t = three_leaf();
        let rec = TreeRecord::new(4, &t, 42, 1);
        let line = serde_json::to_string(&rec).unwrap();
        let back: TreeRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.n, 3);
        assert!(line.contains("\"stream_id\":1"));
    }
}
