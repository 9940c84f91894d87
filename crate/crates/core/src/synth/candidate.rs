use std::cmp::Reverse;

use crate::dataflow::{graph_cost, DfGraph, NodeId, NodeKind};

pub const DEFAULT_MAX_CONE_NODES: usize = 20;

/// An LHS: the cone of `root` in a region graph, extracted as a standalone
/// fragment whose `Arg(i)` is `input_vars[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub graph: DfGraph,
    pub root: NodeId,
    pub input_vars: Vec<(NodeId, u32)>,
    pub lhs_cost: usize,
    /// Non-leaf cone members in the region graph, sorted.
    pub computed: Vec<NodeId>,
}

impl Candidate {
    /// Build the candidate rooted at `root`, or `None` if the node is not
    /// eligible.
    pub fn new(g: &DfGraph, root: NodeId, max_cone_nodes: usize) -> Option<Candidate> {
        let node = g.node(root);
        if !matches!(node.kind, NodeKind::Binop(_) | NodeKind::Unop(_) | NodeKind::Select) {
            return None;
        }
        let cone = g.cone(root);
        if cone.len() < 2 || cone.len() > max_cone_nodes {
            return None;
        }
        let inputs = g.cone_inputs(root);
        let graph = g.extract(root, &inputs);
        Some(Candidate {
            lhs_cost: graph_cost(&graph),
            graph,
            root,
            input_vars: inputs.iter().map(|&i| (i, g.node(i).width)).collect(),
            computed: cone.into_iter().filter(|&n| !g.node(n).is_leaf()).collect(),
        })
    }

    pub fn width(&self) -> u32 {
        self.graph.node(self.graph.root().expect("fragment root")).width
    }

    /// Two candidates overlap when they share a computed node; sharing
    /// leaves is harmless.
    pub fn overlaps(&self, other: &Candidate) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.computed.len() && j < other.computed.len() {
            match self.computed[i].cmp(&other.computed[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Every eligible LHS in `g`, largest first (by lowered cost, then id).
/// Candidates may overlap.
pub fn harvest_candidates(g: &DfGraph, max_cone_nodes: usize) -> Vec<Candidate> {
    let live = g.live();
    let mut out: Vec<Candidate> =
        g.ids().filter(|id| live[id.index()]).filter_map(|id| Candidate::new(g, id, max_cone_nodes)).collect();
    out.sort_by_key(|c| (Reverse(c.lhs_cost), c.root));
    out
}
