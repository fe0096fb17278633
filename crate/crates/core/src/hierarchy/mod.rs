//! Label tree, class counts, multi-hot labels and the correlation-matrix
//! pipeline that feeds the GCN head.

mod matrices;
mod tree;

pub use matrices::{
    binarize, build_hkcm, build_scm, build_transition, reweight, InvariantCheck, MatrixPipeline,
    PipelineParams, DEFAULT_ETA, DEFAULT_SMOOTHING, DEFAULT_TAU,
};
pub use tree::{bearing_tree, cavitation_tree, LabelTree, Node, NodeId, NodeSpec};

use crate::error::{HkgError, Result};

/// Per-node sample counts. Internal nodes hold the sum over their leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    counts: Vec<u64>,
}

impl ClassCounts {
    pub fn get(&self, id: NodeId) -> u64 {
        self.counts[id.0]
    }

    pub fn is_degenerate(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Count leaf occurrences and propagate them to every ancestor.
pub fn count_classes(tree: &LabelTree, train_labels: &[NodeId]) -> Result<ClassCounts> {
    let mut counts = vec![0u64; tree.num_classes() + 1];
    for &label in train_labels {
        if label.0 >= counts.len() || !tree.is_leaf(label) {
            return Err(HkgError::Label(format!(
                "label {label:?} is not a leaf of the tree"
            )));
        }
        for n in tree.lineage(label) {
            counts[n.0] += 1;
        }
    }
    Ok(ClassCounts { counts })
}

/// Counts from explicit per-leaf totals, e.g. dataset statistics.
pub fn counts_from_leaf_totals(tree: &LabelTree, totals: &[(NodeId, u64)]) -> Result<ClassCounts> {
    let mut counts = vec![0u64; tree.num_classes() + 1];
    for &(leaf, n) in totals {
        if leaf.0 >= counts.len() || !tree.is_leaf(leaf) {
            return Err(HkgError::Label(format!(
                "label {leaf:?} is not a leaf of the tree"
            )));
        }
        for node in tree.lineage(leaf) {
            counts[node.0] += n;
        }
    }
    Ok(ClassCounts { counts })
}

/// Multi-hot vector over the classes: 1 at the leaf and each non-root ancestor.
pub fn label_vector(tree: &LabelTree, leaf: NodeId) -> Result<Vec<f64>> {
    if !tree.is_leaf(leaf) {
        return Err(HkgError::Label(format!(
            "{:?} is not a leaf",
            tree.name(leaf)
        )));
    }
    let mut v = vec![0.0; tree.num_classes()];
    for n in tree.lineage(leaf) {
        v[tree
            .class_index(n)
            .expect("non-root node has a class index")] = 1.0;
    }
    Ok(v)
}
