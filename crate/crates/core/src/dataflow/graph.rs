use std::collections::HashMap;
use std::fmt;

use crate::wasm::{BinOp, UnOp, ValType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Where an input value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    /// A function local read before the region assigns it.
    Local(u32),
    /// An operand-stack slot live on region entry; 0 is the top of stack.
    Stack(u32),
    /// Positional argument of a standalone fragment (candidate LHS/RHS).
    Arg(u32),
}

/// Where a value live at region exit goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sink {
    Local(u32),
    /// Operand-stack slot left at region exit; 0 is the deepest pushed value.
    Stack(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Var(Source),
    Const(u64),
    Unop(UnOp),
    Binop(BinOp),
    /// Operands: value if nonzero, value if zero, condition.
    Select,
    /// Result of a trapping operation. Its operands are emitted when lowering
    /// but synthesis treats the node as a leaf.
    Opaque(BinOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Local(u32),
    Instr(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DfNode {
    pub kind: NodeKind,
    /// Result width in bits.
    pub width: u32,
    pub operands: Vec<NodeId>,
    pub origin: Option<Origin>,
}

impl DfNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Var(_) | NodeKind::Const(_) | NodeKind::Opaque(_))
    }

    pub fn is_input(&self) -> bool {
        matches!(self.kind, NodeKind::Var(_) | NodeKind::Opaque(_))
    }

    pub fn const_value(&self) -> Option<u64> {
        match self.kind {
            NodeKind::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn val_type(&self) -> Option<ValType> {
        match self.width {
            32 => Some(ValType::I32),
            64 => Some(ValType::I64),
            _ => None,
        }
    }

    /// Short operation tag used for tie-breaking and dumps.
    pub fn tag(&self) -> String {
        match self.kind {
            NodeKind::Var(_) => "var".into(),
            NodeKind::Const(_) => "const".into(),
            NodeKind::Unop(op) => op.name().into(),
            NodeKind::Binop(op) => op.name().into(),
            NodeKind::Select => "select".into(),
            NodeKind::Opaque(op) => format!("opaque.{}", op.name()),
        }
    }
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Pure dataflow DAG for one straight-line region, or a standalone fragment.
///
/// Node ids are topological: every operand id is smaller than its user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DfGraph {
    pub(crate) nodes: Vec<DfNode>,
    pub(crate) outputs: Vec<(Sink, NodeId)>,
    /// Trapping producers in original program order.
    pub(crate) pinned: Vec<NodeId>,
    /// Widths of entry stack slots popped by the region, top first.
    pub(crate) stack_inputs: Vec<u32>,
    /// First local index free for lowering scratch values.
    pub(crate) scratch_base: u32,
}

impl DfGraph {
    pub fn new(scratch_base: u32) -> Self {
        DfGraph { nodes: Vec::new(), outputs: Vec::new(), pinned: Vec::new(), stack_inputs: Vec::new(), scratch_base }
    }

    pub fn nodes(&self) -> &[DfNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DfNode {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn outputs(&self) -> &[(Sink, NodeId)] {
        &self.outputs
    }

    pub fn pinned(&self) -> &[NodeId] {
        &self.pinned
    }

    pub fn stack_inputs(&self) -> &[u32] {
        &self.stack_inputs
    }

    pub fn scratch_base(&self) -> u32 {
        self.scratch_base
    }

    /// Input leaves (Var and Opaque) in id order.
    pub fn inputs(&self) -> Vec<NodeId> {
        self.ids().filter(|&id| self.node(id).is_input()).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn push(&mut self, node: DfNode) -> NodeId {
        debug_assert!(node.operands.iter().all(|o| o.index() < self.nodes.len()));
        self.nodes.push(node);
        NodeId(self.nodes.len() as u32 - 1)
    }

    pub fn var(&mut self, source: Source, width: u32) -> NodeId {
        self.push(DfNode { kind: NodeKind::Var(source), width, operands: vec![], origin: None })
    }

    pub fn constant(&mut self, value: u64, width: u32) -> NodeId {
        self.push(DfNode { kind: NodeKind::Const(value & mask(width)), width, operands: vec![], origin: None })
    }

    pub fn binop(&mut self, op: BinOp, a: NodeId, b: NodeId) -> NodeId {
        let w = self.node(a).width;
        let width = if op.is_comparison() { 32 } else { w };
        let kind = if op.can_trap() { NodeKind::Opaque(op) } else { NodeKind::Binop(op) };
        let id = self.push(DfNode { kind, width, operands: vec![a, b], origin: None });
        if op.can_trap() {
            self.pinned.push(id);
        }
        id
    }

    pub fn unop(&mut self, op: UnOp, a: NodeId) -> NodeId {
        let width = match op {
            UnOp::Eqz | UnOp::Wrap => 32,
            UnOp::ExtendS | UnOp::ExtendU => 64,
        };
        self.push(DfNode { kind: NodeKind::Unop(op), width, operands: vec![a], origin: None })
    }

    pub fn select(&mut self, a: NodeId, b: NodeId, cond: NodeId) -> NodeId {
        let width = self.node(a).width;
        self.push(DfNode { kind: NodeKind::Select, width, operands: vec![a, b, cond], origin: None })
    }

    pub fn add_output(&mut self, sink: Sink, node: NodeId) {
        self.outputs.push((sink, node));
    }

    /// Single stack output, the usual shape of a standalone fragment.
    pub fn root(&self) -> Option<NodeId> {
        match self.outputs.as_slice() {
            [(Sink::Stack(0), id)] => Some(*id),
            _ => None,
        }
    }

    /// Nodes reachable from outputs or pinned producers.
    pub fn live(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        let mut work: Vec<NodeId> = self.outputs.iter().map(|&(_, n)| n).chain(self.pinned.iter().copied()).collect();
        while let Some(n) = work.pop() {
            if !live[n.index()] {
                live[n.index()] = true;
                work.extend(self.node(n).operands.iter().copied());
            }
        }
        live
    }

    /// Use counts over live nodes: operand references plus output references.
    pub fn use_counts(&self) -> Vec<u32> {
        let live = self.live();
        let mut uses = vec![0u32; self.nodes.len()];
        for id in self.ids() {
            if live[id.index()] {
                for o in &self.node(id).operands {
                    uses[o.index()] += 1;
                }
            }
        }
        for &(_, n) in &self.outputs {
            uses[n.index()] += 1;
        }
        uses
    }

    /// Nodes of the cone rooted at `root`, stopping at leaves (Var, Const,
    /// Opaque). Sorted by id.
    pub fn cone(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut work = vec![root];
        let mut out = Vec::new();
        while let Some(n) = work.pop() {
            if seen[n.index()] {
                continue;
            }
            seen[n.index()] = true;
            out.push(n);
            let node = self.node(n);
            if !node.is_leaf() {
                work.extend(node.operands.iter().copied());
            }
        }
        out.sort();
        out
    }

    /// Input leaves of a cone ordered by first use in a left-to-right
    /// depth-first walk from the root.
    pub fn cone_inputs(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        self.walk_inputs(root, &mut seen, &mut out);
        out
    }

    fn walk_inputs(&self, n: NodeId, seen: &mut [bool], out: &mut Vec<NodeId>) {
        if seen[n.index()] {
            return;
        }
        seen[n.index()] = true;
        let node = self.node(n);
        if node.is_input() {
            out.push(n);
        } else if !node.is_leaf() {
            for &o in &node.operands {
                self.walk_inputs(o, seen, out);
            }
        }
    }

    /// Copy the cone at `root` into a standalone fragment whose inputs are
    /// `Arg(i)` in the order of `inputs`.
    pub fn extract(&self, root: NodeId, inputs: &[NodeId]) -> DfGraph {
        let mut g = DfGraph::new(inputs.len() as u32);
        let mut map: HashMap<NodeId, NodeId> = HashMap::new();
        for (i, &input) in inputs.iter().enumerate() {
            let id = g.var(Source::Arg(i as u32), self.node(input).width);
            map.insert(input, id);
        }
        for n in self.cone(root) {
            if map.contains_key(&n) {
                continue;
            }
            let node = self.node(n);
            let mut copy = node.clone();
            copy.operands = node.operands.iter().map(|o| map[o]).collect();
            copy.origin = None;
            map.insert(n, g.push(copy));
        }
        g.add_output(Sink::Stack(0), map[&root]);
        g
    }

    /// Rebuild keeping only live nodes, renumbered topologically. Pinned
    /// producers keep their relative order. `redirect` maps a node to a
    /// fragment (over `Arg` inputs bound to existing nodes) that replaces it.
    pub(crate) fn rebuild(&self, redirect: &HashMap<NodeId, (&DfGraph, &[NodeId])>) -> DfGraph {
        let mut out = DfGraph::new(self.scratch_base);
        out.stack_inputs = self.stack_inputs.clone();
        let mut map: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        let pinned_set: std::collections::HashSet<NodeId> = self.pinned.iter().copied().collect();
        let roots: Vec<NodeId> = self.pinned.iter().copied().chain(self.outputs.iter().map(|&(_, n)| n)).collect();
        for root in roots {
            self.copy_into(root, redirect, &mut map, &mut out);
        }
        for &p in &self.pinned {
            if let Some(id) = map[p.index()] {
                debug_assert!(pinned_set.contains(&p));
                out.pinned.push(id);
            }
        }
        for &(sink, n) in &self.outputs {
            let id = map[n.index()].expect("output copied");
            if let (Sink::Local(l), NodeKind::Var(Source::Local(src))) = (sink, out.node(id).kind) {
                if l == src {
                    continue;
                }
            }
            out.outputs.push((sink, id));
        }
        out
    }

    fn copy_into(
        &self,
        n: NodeId,
        redirect: &HashMap<NodeId, (&DfGraph, &[NodeId])>,
        map: &mut Vec<Option<NodeId>>,
        out: &mut DfGraph,
    ) -> NodeId {
        if let Some(id) = map[n.index()] {
            return id;
        }
        let id = if let Some((rhs, args)) = redirect.get(&n) {
            let mut local: Vec<NodeId> = Vec::with_capacity(rhs.nodes.len());
            for node in &rhs.nodes {
                let id = match node.kind {
                    NodeKind::Var(Source::Arg(i)) => self.copy_into(args[i as usize], redirect, map, out),
                    _ => {
                        let mut copy = node.clone();
                        copy.operands = node.operands.iter().map(|o| local[o.index()]).collect();
                        out.push(copy)
                    }
                };
                local.push(id);
            }
            let root = rhs.root().expect("replacement fragment has one stack output");
            local[root.index()]
        } else {
            let node = self.node(n);
            let operands: Vec<NodeId> = node.operands.iter().map(|&o| self.copy_into(o, redirect, map, out)).collect();
            let mut copy = node.clone();
            copy.operands = operands;
            out.push(copy)
        };
        map[n.index()] = Some(id);
        id
    }

    /// Dead-code elimination with renumbering.
    pub fn compact(&self) -> DfGraph {
        self.rebuild(&HashMap::new())
    }

    /// Souper-like text, one node per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for id in self.ids() {
            let n = self.node(id);
            let args: Vec<String> = n
                .operands
                .iter()
                .map(|&o| match self.node(o).kind {
                    NodeKind::Const(v) => signed_text(v, self.node(o).width),
                    _ => o.to_string(),
                })
                .collect();
            let rhs = match n.kind {
                NodeKind::Var(Source::Local(l)) => format!("var ; local {l}"),
                NodeKind::Var(Source::Stack(k)) => format!("var ; stack {k}"),
                NodeKind::Var(Source::Arg(a)) => format!("var ; arg {a}"),
                NodeKind::Const(v) => signed_text(v, n.width),
                _ => format!("{} {}", n.tag(), args.join(", ")),
            };
            s.push_str(&format!("{id}:i{} = {rhs}\n", n.width));
        }
        for &(sink, n) in &self.outputs {
            match sink {
                Sink::Local(l) => s.push_str(&format!("out local {l} <- {n}\n")),
                Sink::Stack(k) => s.push_str(&format!("out stack {k} <- {n}\n")),
            }
        }
        s
    }
}

fn signed_text(v: u64, width: u32) -> String {
    let shift = 64 - width.min(64);
    let signed = ((v << shift) as i64) >> shift;
    signed.to_string()
}
