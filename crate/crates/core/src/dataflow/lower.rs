//! Dataflow graph to stack code.
//!
//! Operands are emitted left to right. A value with more than one use is
//! computed once and parked in a local with `local.tee`, preferring the local
//! it is finally assigned to when no pending read of that local's old value
//! remains. Writes to output locals that would clobber a still-needed input
//! are deferred until all values are on the stack.

use std::collections::HashMap;

use super::graph::{DfGraph, NodeId, NodeKind, Sink, Source};
use crate::wasm::{Instr, ValType};

pub const MAX_LOCALS: u32 = 50_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowerError {
    #[error("lowering needs more than {MAX_LOCALS} locals")]
    LocalOverflow,
    #[error("node of width {width} has no WebAssembly type")]
    UnsupportedWidth { width: u32 },
}

/// Scratch locals appended after a function's own locals. Regions reuse the
/// same pool; each lowering call claims slots afresh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScratchLocals {
    base: u32,
    types: Vec<ValType>,
}

impl ScratchLocals {
    pub fn new(base: u32) -> Self {
        ScratchLocals { base, types: Vec::new() }
    }

    pub fn types(&self) -> &[ValType] {
        &self.types
    }

    fn claim(&mut self, ty: ValType, used: &mut Vec<bool>) -> Result<u32, LowerError> {
        for (i, &t) in self.types.iter().enumerate() {
            if t == ty && !used.get(i).copied().unwrap_or(false) {
                used.resize(self.types.len(), false);
                used[i] = true;
                return Ok(self.base + i as u32);
            }
        }
        if self.base as u64 + self.types.len() as u64 + 1 > MAX_LOCALS as u64 {
            return Err(LowerError::LocalOverflow);
        }
        self.types.push(ty);
        used.resize(self.types.len(), false);
        used[self.types.len() - 1] = true;
        Ok(self.base + self.types.len() as u32 - 1)
    }
}

fn val_type(width: u32) -> ValType {
    if width > 32 {
        ValType::I64
    } else {
        ValType::I32
    }
}

struct Emitter<'g, 's> {
    g: &'g DfGraph,
    scratch: &'s mut ScratchLocals,
    used_scratch: Vec<bool>,
    out: Vec<Instr>,
    uses: Vec<u32>,
    /// Local holding a computed value.
    parked: Vec<Option<u32>>,
    emitted: Vec<bool>,
    pinned_pos: HashMap<NodeId, usize>,
    next_pinned: usize,
    /// Outstanding reads of each input local's entry value.
    pending_reads: HashMap<u32, u32>,
    sink_of: HashMap<NodeId, Vec<u32>>,
    sink_done: HashMap<u32, bool>,
    stack_slots: HashMap<u32, u32>,
}

impl<'g, 's> Emitter<'g, 's> {
    fn new(g: &'g DfGraph, scratch: &'s mut ScratchLocals) -> Self {
        let uses = g.use_counts();
        let mut pending_reads = HashMap::new();
        for id in g.ids() {
            if let NodeKind::Var(Source::Local(l)) = g.node(id).kind {
                *pending_reads.entry(l).or_insert(0) += uses[id.index()];
            }
        }
        let mut sink_of: HashMap<NodeId, Vec<u32>> = HashMap::new();
        let mut sink_done = HashMap::new();
        for &(sink, n) in g.outputs() {
            if let Sink::Local(l) = sink {
                sink_of.entry(n).or_default().push(l);
                sink_done.insert(l, false);
            }
        }
        Emitter {
            g,
            scratch,
            used_scratch: Vec::new(),
            out: Vec::new(),
            uses,
            parked: vec![None; g.len()],
            emitted: vec![false; g.len()],
            pinned_pos: g.pinned().iter().enumerate().map(|(i, &p)| (p, i)).collect(),
            next_pinned: 0,
            pending_reads,
            sink_of,
            sink_done,
            stack_slots: HashMap::new(),
        }
    }

    fn leaf(&mut self, n: NodeId) -> bool {
        let node = self.g.node(n);
        match node.kind {
            NodeKind::Var(Source::Local(l)) => {
                self.out.push(Instr::LocalGet(l));
                if let Some(p) = self.pending_reads.get_mut(&l) {
                    *p -= 1;
                }
                true
            }
            NodeKind::Var(Source::Arg(a)) => {
                self.out.push(Instr::LocalGet(a));
                true
            }
            NodeKind::Var(Source::Stack(s)) => {
                self.out.push(Instr::LocalGet(self.stack_slots[&s]));
                true
            }
            NodeKind::Const(v) => {
                self.out.push(if node.width > 32 {
                    Instr::I64Const(v as i64)
                } else {
                    Instr::I32Const(v as u32 as i32)
                });
                true
            }
            _ => false,
        }
    }

    /// Push the value of `n` for one of its uses.
    fn value(&mut self, n: NodeId) -> Result<(), LowerError> {
        if let Some(l) = self.parked[n.index()] {
            self.out.push(Instr::LocalGet(l));
            return Ok(());
        }
        if self.leaf(n) {
            return Ok(());
        }
        self.compute(n)?;
        if self.uses[n.index()] > 1 {
            let target = self.park_target(n)?;
            self.out.push(Instr::LocalTee(target));
            self.parked[n.index()] = Some(target);
        }
        Ok(())
    }

    fn compute(&mut self, n: NodeId) -> Result<(), LowerError> {
        if let Some(&pos) = self.pinned_pos.get(&n) {
            while self.next_pinned < pos {
                let p = self.g.pinned()[self.next_pinned];
                self.next_pinned += 1;
                if !self.emitted[p.index()] {
                    self.standalone(p)?;
                }
            }
            self.next_pinned = self.next_pinned.max(pos + 1);
        }
        let node = self.g.node(n);
        for &o in &node.operands {
            self.value(o)?;
        }
        let operand_ty = node.operands.first().map(|o| val_type(self.g.node(*o).width));
        let instr = match node.kind {
            NodeKind::Binop(op) | NodeKind::Opaque(op) => Instr::Binary(operand_ty.unwrap(), op),
            NodeKind::Unop(op) => Instr::Unary(operand_ty.unwrap(), op),
            NodeKind::Select => Instr::Select,
            NodeKind::Var(_) | NodeKind::Const(_) => unreachable!("leaves are not computed"),
        };
        self.out.push(instr);
        self.emitted[n.index()] = true;
        Ok(())
    }

    /// Emit a pinned producer out of line, parking its value if it is used.
    fn standalone(&mut self, p: NodeId) -> Result<(), LowerError> {
        self.compute(p)?;
        if self.uses[p.index()] == 0 {
            self.out.push(Instr::Drop);
        } else {
            let target = self.park_target(p)?;
            self.out.push(Instr::LocalSet(target));
            self.parked[p.index()] = Some(target);
        }
        Ok(())
    }

    fn safe_sink(&self, n: NodeId) -> Option<u32> {
        self.sink_of
            .get(&n)?
            .iter()
            .copied()
            .find(|l| !self.sink_done[l] && self.pending_reads.get(l).copied().unwrap_or(0) == 0)
    }

    fn park_target(&mut self, n: NodeId) -> Result<u32, LowerError> {
        if let Some(l) = self.safe_sink(n) {
            self.sink_done.insert(l, true);
            return Ok(l);
        }
        self.scratch.claim(val_type(self.g.node(n).width), &mut self.used_scratch)
    }

    fn run(mut self) -> Result<Vec<Instr>, LowerError> {
        let g = self.g;
        let live = g.live();
        // Entry stack slots, top first.
        for s in 0..g.stack_inputs().len() as u32 {
            let node = g.ids().find(|&id| g.node(id).kind == NodeKind::Var(Source::Stack(s)));
            match node {
                Some(id) if live[id.index()] => {
                    let local = self.scratch.claim(val_type(g.node(id).width), &mut self.used_scratch)?;
                    self.out.push(Instr::LocalSet(local));
                    self.stack_slots.insert(s, local);
                }
                _ => self.out.push(Instr::Drop),
            }
        }
        let mut stack_outputs: Vec<(u32, NodeId)> = g
            .outputs()
            .iter()
            .filter_map(|&(sink, n)| match sink {
                Sink::Stack(k) => Some((k, n)),
                Sink::Local(_) => None,
            })
            .collect();
        stack_outputs.sort();
        for (_, n) in stack_outputs {
            self.value(n)?;
        }
        let mut local_outputs: Vec<(u32, NodeId)> = g
            .outputs()
            .iter()
            .filter_map(|&(sink, n)| match sink {
                Sink::Local(l) => Some((l, n)),
                Sink::Stack(_) => None,
            })
            .collect();
        local_outputs.sort();
        let mut deferred = Vec::new();
        for (l, n) in local_outputs {
            if self.sink_done[&l] {
                continue;
            }
            let safe = self.pending_reads.get(&l).copied().unwrap_or(0) == 0;
            let fresh_op = self.parked[n.index()].is_none() && !g.node(n).is_leaf();
            if safe && fresh_op && self.uses[n.index()] > 1 {
                self.compute(n)?;
                self.out.push(Instr::LocalSet(l));
                self.parked[n.index()] = Some(l);
                self.sink_done.insert(l, true);
            } else {
                self.value(n)?;
                if self.sink_done[&l] {
                    // value() parked n in l with a tee.
                    let last = self.out.len() - 1;
                    self.out[last] = Instr::LocalSet(l);
                } else if self.pending_reads.get(&l).copied().unwrap_or(0) == 0 {
                    self.out.push(Instr::LocalSet(l));
                    self.sink_done.insert(l, true);
                } else {
                    deferred.push(l);
                }
            }
        }
        while self.next_pinned < g.pinned().len() {
            let p = g.pinned()[self.next_pinned];
            self.next_pinned += 1;
            if !self.emitted[p.index()] {
                self.standalone(p)?;
            }
        }
        for l in deferred.into_iter().rev() {
            self.out.push(Instr::LocalSet(l));
        }
        let base = self.scratch.base;
        Ok(peephole(self.out, base))
    }
}

/// Remove `local.set s; local.get s` pairs on scratch locals read only once.
fn peephole(mut code: Vec<Instr>, scratch_base: u32) -> Vec<Instr> {
    loop {
        let mut reads: HashMap<u32, usize> = HashMap::new();
        let mut writes: HashMap<u32, usize> = HashMap::new();
        for i in &code {
            match i {
                Instr::LocalGet(l) => *reads.entry(*l).or_default() += 1,
                Instr::LocalSet(l) | Instr::LocalTee(l) => *writes.entry(*l).or_default() += 1,
                _ => {}
            }
        }
        let pos = code.windows(2).position(|w| match (&w[0], &w[1]) {
            (Instr::LocalSet(a), Instr::LocalGet(b)) => a == b && *a >= scratch_base && reads[a] == 1 && writes[a] == 1,
            _ => false,
        });
        match pos {
            Some(p) => {
                code.drain(p..p + 2);
            }
            None => return code,
        }
    }
}

/// Lower using (and growing) a shared scratch pool.
pub fn lower_graph_with(g: &DfGraph, scratch: &mut ScratchLocals) -> Result<Vec<Instr>, LowerError> {
    for n in g.nodes() {
        if n.width != 32 && n.width != 64 {
            return Err(LowerError::UnsupportedWidth { width: n.width });
        }
    }
    Emitter::new(g, scratch).run()
}

/// Lower with scratch locals numbered from the graph's scratch base. The
/// second element lists the scratch local types that were needed.
pub fn lower_graph(g: &DfGraph) -> Result<(Vec<Instr>, Vec<ValType>), LowerError> {
    let mut scratch = ScratchLocals::new(g.scratch_base());
    let code = lower_graph_with(g, &mut scratch)?;
    Ok((code, scratch.types))
}

/// Lowered instruction count. Works for any width, so fragments used in
/// narrow-width experiments get the same cost they would have at 32 bits.
pub fn graph_cost(g: &DfGraph) -> usize {
    let mut scratch = ScratchLocals::new(g.scratch_base());
    Emitter::new(g, &mut scratch).run().map(|c| c.len()).unwrap_or(usize::MAX)
}
