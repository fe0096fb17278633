use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};

/// Index of a node inside its [`LabelTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// One entry of a tree description: a node and its parent's name (`None` for the root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub parent: Option<String>,
}

impl NodeSpec {
    pub fn new(name: &str, parent: Option<&str>) -> Self {
        NodeSpec {
            name: name.to_string(),
            parent: parent.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: usize,
}

/// A validated rooted class hierarchy.
///
/// The classes of the model are every node except the root, enumerated
/// breadth-first (children in declaration order). All class-indexed vectors
/// and matrices use this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTree {
    nodes: Vec<Node>,
    root: NodeId,
    order: Vec<NodeId>,
    class_index: Vec<Option<usize>>,
    height: usize,
}

impl LabelTree {
    pub fn build(spec: &[NodeSpec]) -> Result<Self> {
        if spec.is_empty() {
            return Err(HkgError::Structure("tree has no nodes".into()));
        }
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        for (i, n) in spec.iter().enumerate() {
            if n.name.trim().is_empty() {
                return Err(HkgError::Structure(format!("node {i} has an empty name")));
            }
            if by_name.insert(n.name.as_str(), i).is_some() {
                return Err(HkgError::Structure(format!(
                    "duplicate node name {:?}",
                    n.name
                )));
            }
        }
        let mut roots = Vec::new();
        let mut parents = vec![None; spec.len()];
        for (i, n) in spec.iter().enumerate() {
            match &n.parent {
                None => roots.push(i),
                Some(p) => {
                    let pi = *by_name.get(p.as_str()).ok_or_else(|| {
                        HkgError::Structure(format!("node {:?} has unknown parent {p:?}", n.name))
                    })?;
                    if pi == i {
                        return Err(HkgError::Structure(format!(
                            "node {:?} is its own parent",
                            n.name
                        )));
                    }
                    parents[i] = Some(pi);
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(HkgError::Structure("no root node (cycle?)".into())),
            many => {
                let names: Vec<_> = many.iter().map(|&i| spec[i].name.as_str()).collect();
                return Err(HkgError::Structure(format!("multiple roots: {names:?}")));
            }
        };
        let mut children = vec![Vec::new(); spec.len()];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(NodeId(i));
            }
        }

        // Breadth-first from the root; any node not reached sits on a cycle.
        let mut depth = vec![usize::MAX; spec.len()];
        let mut bfs = Vec::with_capacity(spec.len());
        let mut queue = VecDeque::from([root]);
        depth[root] = 0;
        while let Some(u) = queue.pop_front() {
            bfs.push(NodeId(u));
            for c in &children[u] {
                depth[c.0] = depth[u] + 1;
                queue.push_back(c.0);
            }
        }
        if bfs.len() != spec.len() {
            let stuck: Vec<_> = (0..spec.len())
                .filter(|&i| depth[i] == usize::MAX)
                .map(|i| spec[i].name.as_str())
                .collect();
            return Err(HkgError::Structure(format!("cycle among nodes {stuck:?}")));
        }

        let nodes: Vec<Node> = spec
            .iter()
            .enumerate()
            .map(|(i, n)| Node {
                id: NodeId(i),
                name: n.name.clone(),
                parent: parents[i].map(NodeId),
                children: children[i].clone(),
                depth: depth[i],
            })
            .collect();
        let order: Vec<NodeId> = bfs.into_iter().filter(|n| n.0 != root).collect();
        let mut class_index = vec![None; nodes.len()];
        for (k, n) in order.iter().enumerate() {
            class_index[n.0] = Some(k);
        }
        let leaves = nodes
            .iter()
            .filter(|n| n.children.is_empty() && n.id.0 != root)
            .count();
        if leaves < 2 {
            return Err(HkgError::Structure(format!(
                "tree needs at least 2 leaves, has {leaves}"
            )));
        }
        let height = depth.iter().max().copied().unwrap_or(0) + 1;
        Ok(LabelTree {
            nodes,
            root: NodeId(root),
            order,
            class_index,
            height,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Vec<NodeSpec> = serde_json::from_str(s)?;
        Self::build(&spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HkgError::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn to_spec(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                name: n.name.clone(),
                parent: n.parent.map(|p| self.nodes[p.0].name.clone()),
            })
            .collect()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    /// Non-root nodes in class order.
    pub fn classes(&self) -> &[NodeId] {
        &self.order
    }

    pub fn class_names(&self) -> Vec<String> {
        self.order
            .iter()
            .map(|&n| self.name(n).to_string())
            .collect()
    }

    /// Number of classes `C` (non-root nodes).
    pub fn num_classes(&self) -> usize {
        self.order.len()
    }

    /// Number of levels including the root.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_index(&self, id: NodeId) -> Option<usize> {
        self.class_index.get(id.0).copied().flatten()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        id != self.root && self.nodes[id.0].children.is_empty()
    }

    /// Leaves in class order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.order
            .iter()
            .copied()
            .filter(|&n| self.is_leaf(n))
            .collect()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn are_siblings(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.parent(a).is_some() && self.parent(a) == self.parent(b)
    }

    /// The node itself followed by its ancestors, excluding the root.
    pub fn lineage(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            if n == self.root {
                break;
            }
            out.push(n);
            cur = self.parent(n);
        }
        out
    }

    pub fn leaf_by_name(&self, name: &str) -> Result<NodeId> {
        let id = self
            .find(name)
            .ok_or_else(|| HkgError::Label(format!("unknown class {name:?}")))?;
        if !self.is_leaf(id) {
            return Err(HkgError::Label(format!("class {name:?} is not a leaf")));
        }
        Ok(id)
    }
}

/// Root with `cavitation -> {incipient, constant, choked flow}` and `non-cavitation`.
pub fn cavitation_tree() -> LabelTree {
    LabelTree::build(&[
        NodeSpec::new("root", None),
        NodeSpec::new("cavitation", Some("root")),
        NodeSpec::new("non-cavitation", Some("root")),
        NodeSpec::new("incipient cavitation", Some("cavitation")),
        NodeSpec::new("constant cavitation", Some("cavitation")),
        NodeSpec::new("choked flow cavitation", Some("cavitation")),
    ])
    .expect("static tree is valid")
}

/// Bearing tree: healthy, inner-ring damage (3 grades), outer-ring damage (2 grades).
pub fn bearing_tree() -> LabelTree {
    LabelTree::build(&[
        NodeSpec::new("root", None),
        NodeSpec::new("healthy", Some("root")),
        NodeSpec::new("IR damage", Some("root")),
        NodeSpec::new("OR damage", Some("root")),
        NodeSpec::new("IR-1", Some("IR damage")),
        NodeSpec::new("IR-2", Some("IR damage")),
        NodeSpec::new("IR-3", Some("IR damage")),
        NodeSpec::new("OR-1", Some("OR damage")),
        NodeSpec::new("OR-2", Some("OR damage")),
    ])
    .expect("static tree is valid")
}
