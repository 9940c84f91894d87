//! Dataflow (SSA-style) view of straight-line integer code.

pub mod graph;
pub mod lift;
pub mod lower;

use std::collections::HashMap;

pub use graph::{DfGraph, DfNode, NodeId, NodeKind, Origin, Sink, Source};
pub use lift::{lift_function, lift_region, FuncContext, LiftError, LiftedFunction, Segment};
pub use lower::{graph_cost, lower_graph, lower_graph_with, LowerError, ScratchLocals};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubstituteError {
    #[error("node {0} is not in the graph")]
    InputNotFound(NodeId),
    #[error("node {0} is an input and cannot be replaced")]
    RootIsInput(NodeId),
    #[error("replacement fragment must have exactly one stack output")]
    MalformedFragment,
}

/// One replacement: `root` is redirected to the output of `rhs`, whose
/// `Arg(i)` inputs are bound to `args[i]`.
#[derive(Debug, Clone, Copy)]
pub struct Rewrite<'a> {
    pub root: NodeId,
    pub rhs: &'a DfGraph,
    pub args: &'a [NodeId],
}

/// Redirect every use of `root` to `rhs` and drop what becomes dead.
/// Trapping producers are always kept.
pub fn substitute(g: &DfGraph, root: NodeId, rhs: &DfGraph, args: &[NodeId]) -> Result<DfGraph, SubstituteError> {
    substitute_all(g, &[Rewrite { root, rhs, args }])
}

/// Apply several rewrites at once. Their roots must not lie inside each
/// other's cones.
pub fn substitute_all(g: &DfGraph, rewrites: &[Rewrite<'_>]) -> Result<DfGraph, SubstituteError> {
    let mut redirect = HashMap::new();
    for rw in rewrites {
        if rw.root.index() >= g.len() {
            return Err(SubstituteError::InputNotFound(rw.root));
        }
        if g.node(rw.root).is_input() {
            return Err(SubstituteError::RootIsInput(rw.root));
        }
        if let Some(&bad) = rw.args.iter().find(|a| a.index() >= g.len()) {
            return Err(SubstituteError::InputNotFound(bad));
        }
        if rw.rhs.root().is_none() {
            return Err(SubstituteError::MalformedFragment);
        }
        for n in rw.rhs.nodes() {
            if let NodeKind::Var(Source::Arg(i)) = n.kind {
                if i as usize >= rw.args.len() {
                    return Err(SubstituteError::MalformedFragment);
                }
            }
        }
        redirect.insert(rw.root, (rw.rhs, rw.args));
    }
    Ok(g.rebuild(&redirect))
}
