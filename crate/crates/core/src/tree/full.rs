//! Complete simulated trees, including extinct and unsampled lineages.

use serde::{Deserialize, Serialize};

use super::{ReconTree, TreeBuilder, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TipState {
    Extant { sampled: bool },
    Extinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Time before the present.
    pub time: f64,
    /// `None` for speciation nodes and for the origin.
    pub tip: Option<TipState>,
}

/// A forward-simulated tree. The root is either the origin of a single stem
/// lineage (one child) or a speciation event (two children).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTree {
    pub nodes: Vec<FullNode>,
    pub root: usize,
}

impl FullTree {
    pub fn validate(&self) -> Result<(), TreeError> {
        for (i, v) in self.nodes.iter().enumerate() {
            if !v.time.is_finite() || v.time < 0.0 {
                return Err(TreeError::BadTime { node: i, time: v.time });
            }
            let expected_ok = match (v.tip, v.children.len()) {
                (Some(_), 0) => true,
                (None, 2) => true,
                (None, 1) => i == self.root,
                _ => false,
            };
            if !expected_ok {
                return Err(TreeError::NotBinary {
                    node: i,
                    count: v.children.len(),
                });
            }
            match v.tip {
                Some(TipState::Extinct) if v.time <= 0.0 => {
                    return Err(TreeError::BadTime { node: i, time: v.time })
                }
                Some(TipState::Extant { .. }) if v.time != 0.0 => {
                    return Err(TreeError::LeafNotAtPresent { node: i, time: v.time })
                }
                _ => {}
            }
            for &c in &v.children {
                if self.nodes[c].parent != Some(i) {
                    return Err(TreeError::Disconnected(c));
                }
                if self.nodes[c].time > v.time {
                    return Err(TreeError::NonPositiveLength {
                        child: c,
                        length: v.time - self.nodes[c].time,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_extant(&self) -> usize {
        self.count(|t| matches!(t, TipState::Extant { .. }))
    }

    pub fn n_sampled(&self) -> usize {
        self.count(|t| t == TipState::Extant { sampled: true })
    }

    pub fn n_extinct(&self) -> usize {
        self.count(|t| t == TipState::Extinct)
    }

    fn count(&self, pred: impl Fn(TipState) -> bool) -> usize {
        self.nodes.iter().filter(|v| v.tip.is_some_and(&pred)).count()
    }

    /// Nodes in an order where every node precedes its children.
    fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        order
    }

    /// Prunes extinct and unsampled lineages, suppresses the resulting
    /// degree-two nodes and drops the stem above the most recent common
    /// ancestor. Returns `None` when fewer than two sampled tips remain.
    ///
    /// Leaves are labelled `t1, t2, ...` in preorder.
    pub fn reconstruct(&self) -> Option<ReconTree> {
        let order = self.preorder();
        let mut keeps = vec![false; self.nodes.len()];
        for &v in order.iter().rev() {
            let node = &self.nodes[v];
            keeps[v] = match node.tip {
                Some(t) => t == TipState::Extant { sampled: true },
                None => node.children.iter().any(|&c| keeps[c]),
            };
        }
        // descend from the root to the first node with two kept subtrees
        let mut top = self.root;
        loop {
            let kept: Vec<usize> = self.nodes[top].children.iter().copied().filter(|&c| keeps[c]).collect();
            match kept.as_slice() {
                [] => return None,
                [only] => top = *only,
                _ => break,
            }
        }
        let mut b = TreeBuilder::new();
        let mut next_label = 1;
        // (full node, reconstructed parent)
        let mut stack: Vec<(usize, Option<usize>)> = vec![(top, None)];
        while let Some((mut v, parent)) = stack.pop() {
            // skip through chains where only one side survives
            let kids = loop {
                let kids: Vec<usize> = self.nodes[v].children.iter().copied().filter(|&c| keeps[c]).collect();
                if kids.len() == 1 {
                    v = kids[0];
                } else {
                    break kids;
                }
            };
            let id = if kids.is_empty() {
                let id = b.add_leaf(Some(format!("t{next_label}")));
                next_label += 1;
                id
            } else {
                b.add_internal(self.nodes[v].time)
            };
            if let Some(p) = parent {
                b.attach(p, id).expect("fresh nodes attach once");
            }
            for &c in kids.iter().rev() {
                stack.push((c, Some(id)));
            }
        }
        Some(b.build().expect("pruned full tree is a valid reconstructed tree"))
    }
}
