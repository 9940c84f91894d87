//! Stack code to dataflow lifting for straight-line integer regions.
//!
//! The lifter walks a whole body with an abstract typed operand stack so that
//! it knows the types of values flowing across region boundaries. Control
//! flow, calls and anything outside the integer subset end the current
//! region and are kept verbatim.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use super::graph::{DfGraph, NodeId, Origin, Sink, Source};
use crate::wasm::instr::OtherEffect;
use crate::wasm::{BlockType, FunctionBody, Instr, ModuleInfo, ValType};

/// Regions are split once they reach this many nodes, keeping graph walks
/// shallow.
pub const MAX_REGION_NODES: usize = 1500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiftError {
    #[error("operand stack underflow at instruction {at}")]
    StackUnderflow { at: usize },
    #[error("operand type mismatch at instruction {at}")]
    TypeMismatch { at: usize },
    #[error("local {local} out of range at instruction {at}")]
    BadLocal { at: usize, local: u32 },
    #[error("unknown function, type or global referenced at instruction {at}")]
    UnknownIndex { at: usize },
    #[error("instruction {at} has no known stack effect")]
    UnknownEffect { at: usize },
    #[error("body contains undecodable bytes")]
    OpaqueBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Verbatim(Range<usize>),
    Region { range: Range<usize>, graph: DfGraph },
}

impl Segment {
    pub fn range(&self) -> &Range<usize> {
        match self {
            Segment::Verbatim(r) => r,
            Segment::Region { range, .. } => range,
        }
    }
}

/// A body split into verbatim stretches and lifted regions that together
/// cover every instruction in order.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedFunction {
    pub segments: Vec<Segment>,
}

impl LiftedFunction {
    pub fn graphs(&self) -> impl Iterator<Item = &DfGraph> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Region { graph, .. } => Some(graph),
            _ => None,
        })
    }
}

/// Typing context of one function.
#[derive(Debug, Clone, Copy)]
pub struct FuncContext<'a> {
    /// Parameters followed by declared locals.
    pub locals: &'a [ValType],
    pub info: &'a ModuleInfo,
}

#[derive(Debug)]
struct Frame {
    height: usize,
    params: Vec<ValType>,
    results: Vec<ValType>,
    unreachable: bool,
    /// Opened inside unreachable code.
    dead: bool,
}

struct RegionBuilder {
    start: usize,
    graph: DfGraph,
    vstack: Vec<NodeId>,
    locals: BTreeMap<u32, NodeId>,
    vars: HashMap<u32, NodeId>,
}

struct Lifter<'a> {
    ctx: FuncContext<'a>,
    stack: Vec<ValType>,
    frames: Vec<Frame>,
    region: Option<RegionBuilder>,
    segments: Vec<Segment>,
    verbatim_from: Option<usize>,
}

/// Lift every region of a body. Fails on malformed bodies; the caller keeps
/// such functions unchanged.
pub fn lift_function(body: &FunctionBody, ctx: FuncContext<'_>) -> Result<LiftedFunction, LiftError> {
    if body.is_opaque() {
        return Err(LiftError::OpaqueBody);
    }
    let mut l = Lifter {
        ctx,
        stack: Vec::new(),
        frames: vec![Frame { height: 0, params: vec![], results: vec![], unreachable: false, dead: false }],
        region: None,
        segments: Vec::new(),
        verbatim_from: None,
    };
    for (at, instr) in body.instrs().iter().enumerate() {
        l.step(at, instr)?;
    }
    l.close_region(body.instrs().len());
    l.flush_verbatim(body.instrs().len());
    Ok(LiftedFunction { segments: l.segments })
}

/// Graphs of every maximal straight-line region of `instrs`, which must be a
/// complete body. Signatures of callees are taken from `info`.
pub fn lift_region(instrs: &[Instr], local_types: &[ValType], info: &ModuleInfo) -> Result<Vec<DfGraph>, LiftError> {
    let body = FunctionBody::new(vec![], instrs.to_vec());
    let lifted = lift_function(&body, FuncContext { locals: local_types, info })?;
    Ok(lifted.graphs().cloned().collect())
}

fn width_of(t: ValType) -> u32 {
    t.bits().expect("integer type")
}

fn type_of(width: u32) -> ValType {
    if width == 64 {
        ValType::I64
    } else {
        ValType::I32
    }
}

impl<'a> Lifter<'a> {
    fn frame(&self) -> &Frame {
        self.frames.last().expect("function frame")
    }

    fn local_type(&self, at: usize, l: u32) -> Result<ValType, LiftError> {
        self.ctx.locals.get(l as usize).copied().ok_or(LiftError::BadLocal { at, local: l })
    }

    fn pop_typed(&mut self, at: usize, expect: Option<ValType>) -> Result<ValType, LiftError> {
        if self.stack.len() <= self.frame().height {
            return Err(LiftError::StackUnderflow { at });
        }
        let t = self.stack.pop().unwrap();
        match expect {
            Some(e) if e != t => Err(LiftError::TypeMismatch { at }),
            _ => Ok(t),
        }
    }

    fn block_sig(&self, at: usize, bt: BlockType) -> Result<(Vec<ValType>, Vec<ValType>), LiftError> {
        Ok(match bt {
            BlockType::Empty => (vec![], vec![]),
            BlockType::Value(t) => (vec![], vec![t]),
            BlockType::TypeIndex(i) => {
                let ft = self.ctx.info.types.get(i as usize).ok_or(LiftError::UnknownIndex { at })?;
                (ft.params.clone(), ft.results.clone())
            }
        })
    }

    fn region_eligible(&self, at: usize, instr: &Instr) -> Result<bool, LiftError> {
        Ok(match instr {
            Instr::I32Const(_) | Instr::I64Const(_) | Instr::Binary(..) | Instr::Unary(..) | Instr::Nop => true,
            Instr::LocalGet(l) | Instr::LocalSet(l) | Instr::LocalTee(l) => self.local_type(at, *l)?.is_int(),
            Instr::Drop => self.stack.len() > self.frame().height && self.stack.last().unwrap().is_int(),
            Instr::Select => {
                let n = self.stack.len();
                n >= self.frame().height + 3 && self.stack[n - 2].is_int()
            }
            _ => false,
        })
    }

    fn step(&mut self, at: usize, instr: &Instr) -> Result<(), LiftError> {
        if self.frame().unreachable {
            self.close_region(at);
            self.verbatim(at);
            return self.step_dead(at, instr);
        }
        if self.region_eligible(at, instr)? {
            if self.region.as_ref().is_some_and(|r| r.graph.len() >= MAX_REGION_NODES) {
                self.close_region(at);
            }
            if self.region.is_none() {
                self.flush_verbatim(at);
                self.region = Some(RegionBuilder {
                    start: at,
                    graph: DfGraph::new(self.ctx.locals.len() as u32),
                    vstack: Vec::new(),
                    locals: BTreeMap::new(),
                    vars: HashMap::new(),
                });
            }
            return self.step_region(at, instr);
        }
        self.close_region(at);
        self.verbatim(at);
        self.step_boundary(at, instr)
    }

    fn verbatim(&mut self, at: usize) {
        if self.verbatim_from.is_none() {
            self.verbatim_from = Some(at);
        }
    }

    fn flush_verbatim(&mut self, at: usize) {
        if let Some(from) = self.verbatim_from.take() {
            if from < at {
                self.segments.push(Segment::Verbatim(from..at));
            }
        }
    }

    fn close_region(&mut self, at: usize) {
        let Some(mut r) = self.region.take() else { return };
        for (i, &n) in r.vstack.iter().enumerate() {
            r.graph.add_output(Sink::Stack(i as u32), n);
        }
        for (&l, &n) in &r.locals {
            if r.vars.get(&l) != Some(&n) {
                r.graph.add_output(Sink::Local(l), n);
            }
        }
        let graph = r.graph.compact();
        self.segments.push(Segment::Region { range: r.start..at, graph });
    }

    /// Pop a region value, materializing entry-stack inputs on demand.
    fn pop_value(&mut self, at: usize, expect: Option<ValType>) -> Result<NodeId, LiftError> {
        let t = self.pop_typed(at, expect)?;
        let r = self.region.as_mut().expect("open region");
        if let Some(n) = r.vstack.pop() {
            return Ok(n);
        }
        let slot = r.graph.stack_inputs.len() as u32;
        r.graph.stack_inputs.push(width_of(t));
        Ok(r.graph.var(Source::Stack(slot), width_of(t)))
    }

    fn push_value(&mut self, n: NodeId) {
        let r = self.region.as_mut().expect("open region");
        let t = type_of(r.graph.node(n).width);
        r.vstack.push(n);
        self.stack.push(t);
    }

    fn step_region(&mut self, at: usize, instr: &Instr) -> Result<(), LiftError> {
        match instr {
            Instr::I32Const(v) => {
                let r = self.region.as_mut().unwrap();
                let n = r.graph.constant(*v as u32 as u64, 32);
                self.push_value(n);
            }
            Instr::I64Const(v) => {
                let r = self.region.as_mut().unwrap();
                let n = r.graph.constant(*v as u64, 64);
                self.push_value(n);
            }
            Instr::Binary(t, op) => {
                let b = self.pop_value(at, Some(*t))?;
                let a = self.pop_value(at, Some(*t))?;
                let r = self.region.as_mut().unwrap();
                let n = r.graph.binop(*op, a, b);
                r.graph.nodes[n.index()].origin = Some(Origin::Instr(at));
                self.push_value(n);
            }
            Instr::Unary(t, op) => {
                let a = self.pop_value(at, Some(*t))?;
                let r = self.region.as_mut().unwrap();
                let n = r.graph.unop(*op, a);
                r.graph.nodes[n.index()].origin = Some(Origin::Instr(at));
                self.push_value(n);
            }
            Instr::Select => {
                let c = self.pop_value(at, Some(ValType::I32))?;
                let b = self.pop_value(at, None)?;
                let bt = self.region.as_ref().unwrap().graph.node(b).width;
                let a = self.pop_value(at, Some(type_of(bt)))?;
                let r = self.region.as_mut().unwrap();
                let n = r.graph.select(a, b, c);
                r.graph.nodes[n.index()].origin = Some(Origin::Instr(at));
                self.push_value(n);
            }
            Instr::Drop => {
                self.pop_value(at, None)?;
            }
            Instr::Nop => {}
            Instr::LocalGet(l) => {
                let t = self.local_type(at, *l)?;
                let r = self.region.as_mut().unwrap();
                let n = match r.locals.get(l) {
                    Some(&n) => n,
                    None => *r.vars.entry(*l).or_insert_with(|| {
                        let id = r.graph.var(Source::Local(*l), width_of(t));
                        r.graph.nodes[id.index()].origin = Some(Origin::Local(*l));
                        id
                    }),
                };
                self.push_value(n);
            }
            Instr::LocalSet(l) | Instr::LocalTee(l) => {
                let t = self.local_type(at, *l)?;
                let v = self.pop_value(at, Some(t))?;
                let r = self.region.as_mut().unwrap();
                r.locals.insert(*l, v);
                if matches!(instr, Instr::LocalTee(_)) {
                    self.push_value(v);
                }
            }
            _ => unreachable!("not a region instruction"),
        }
        Ok(())
    }

    fn enter_block(&mut self, at: usize, bt: BlockType) -> Result<(), LiftError> {
        let (params, results) = self.block_sig(at, bt)?;
        for &p in params.iter().rev() {
            self.pop_typed(at, Some(p))?;
        }
        let height = self.stack.len();
        self.stack.extend(params.iter().copied());
        self.frames.push(Frame { height, params, results, unreachable: false, dead: false });
        Ok(())
    }

    fn make_unreachable(&mut self) {
        let h = self.frame().height;
        self.stack.truncate(h);
        self.frames.last_mut().unwrap().unreachable = true;
    }

    fn call_effect(&mut self, at: usize, params: Vec<ValType>, results: Vec<ValType>) -> Result<(), LiftError> {
        for &p in params.iter().rev() {
            self.pop_typed(at, Some(p))?;
        }
        self.stack.extend(results);
        Ok(())
    }

    fn step_boundary(&mut self, at: usize, instr: &Instr) -> Result<(), LiftError> {
        match instr {
            Instr::Block(bt) | Instr::Loop(bt) => self.enter_block(at, *bt)?,
            Instr::If(bt) => {
                self.pop_typed(at, Some(ValType::I32))?;
                self.enter_block(at, *bt)?;
            }
            Instr::Else => {
                let f = self.frames.last_mut().unwrap();
                f.unreachable = false;
                let (h, params) = (f.height, f.params.clone());
                self.stack.truncate(h);
                self.stack.extend(params);
            }
            Instr::End => self.end_frame(),
            Instr::Br(_) | Instr::Return => self.make_unreachable(),
            Instr::BrIf(_) => {
                self.pop_typed(at, Some(ValType::I32))?;
            }
            Instr::Call(f) => {
                let ft = self.ctx.info.func_type(*f).ok_or(LiftError::UnknownIndex { at })?.clone();
                self.call_effect(at, ft.params, ft.results)?;
            }
            // Integer instructions that were not eligible, i.e. touching
            // non-integer locals or operands.
            Instr::LocalGet(l) => {
                let t = self.local_type(at, *l)?;
                self.stack.push(t);
            }
            Instr::LocalSet(l) => {
                let t = self.local_type(at, *l)?;
                self.pop_typed(at, Some(t))?;
            }
            Instr::LocalTee(l) => {
                let t = self.local_type(at, *l)?;
                self.pop_typed(at, Some(t))?;
                self.stack.push(t);
            }
            Instr::Drop => {
                self.pop_typed(at, None)?;
            }
            Instr::Select => {
                self.pop_typed(at, Some(ValType::I32))?;
                let t = self.pop_typed(at, None)?;
                self.pop_typed(at, Some(t))?;
                self.stack.push(t);
            }
            Instr::Unsupported(u) => match &u.effect {
                OtherEffect::Fixed { pops, pushes } => self.call_effect(at, pops.clone(), pushes.clone())?,
                OtherEffect::GlobalGet(g) => {
                    let t = *self.ctx.info.globals.get(*g as usize).ok_or(LiftError::UnknownIndex { at })?;
                    self.stack.push(t);
                }
                OtherEffect::GlobalSet(g) => {
                    let t = *self.ctx.info.globals.get(*g as usize).ok_or(LiftError::UnknownIndex { at })?;
                    self.pop_typed(at, Some(t))?;
                }
                OtherEffect::CallIndirect(ty) => {
                    let ft = self.ctx.info.types.get(*ty as usize).ok_or(LiftError::UnknownIndex { at })?.clone();
                    self.pop_typed(at, Some(ValType::I32))?;
                    self.call_effect(at, ft.params, ft.results)?;
                }
                OtherEffect::TypedSelect(t) => {
                    self.pop_typed(at, Some(ValType::I32))?;
                    self.pop_typed(at, Some(*t))?;
                    self.pop_typed(at, Some(*t))?;
                    self.stack.push(*t);
                }
                OtherEffect::Diverge { pops } => {
                    for &p in pops.iter().rev() {
                        self.pop_typed(at, Some(p))?;
                    }
                    self.make_unreachable();
                }
                OtherEffect::Unknown => return Err(LiftError::UnknownEffect { at }),
            },
            Instr::I32Const(_) | Instr::I64Const(_) | Instr::Binary(..) | Instr::Unary(..) | Instr::Nop => {
                unreachable!("always region-eligible")
            }
        }
        Ok(())
    }

    fn end_frame(&mut self) {
        if self.frames.len() == 1 {
            return;
        }
        let f = self.frames.pop().unwrap();
        if !f.dead {
            self.stack.truncate(f.height);
            self.stack.extend(f.results);
        }
    }

    /// Unreachable code: only block structure is tracked.
    fn step_dead(&mut self, at: usize, instr: &Instr) -> Result<(), LiftError> {
        match instr {
            Instr::Block(bt) | Instr::Loop(bt) | Instr::If(bt) => {
                let (params, results) = self.block_sig(at, *bt)?;
                let height = self.stack.len();
                self.frames.push(Frame { height, params, results, unreachable: true, dead: true });
            }
            Instr::Else => {
                let f = self.frames.last_mut().unwrap();
                if !f.dead {
                    f.unreachable = false;
                    let (h, params) = (f.height, f.params.clone());
                    self.stack.truncate(h);
                    self.stack.extend(params);
                }
            }
            Instr::End => self.end_frame(),
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::graph::NodeKind;
    use crate::wasm::{BinOp, UnOp};

    fn info() -> ModuleInfo {
        ModuleInfo::default()
    }

    fn lift(instrs: Vec<Instr>, locals: &[ValType]) -> LiftedFunction {
        let info = info();
        let body = FunctionBody::new(vec![], instrs);
        lift_function(&body, FuncContext { locals, info: &info }).unwrap()
    }

    const I32: ValType = ValType::I32;

    #[test]
    fn xor_of_same_local() {
        let f = lift(vec![Instr::LocalGet(0), Instr::LocalGet(0), Instr::Binary(I32, BinOp::Xor), Instr::End], &[I32]);
        assert_eq!(f.segments.len(), 2);
        let g = f.graphs().next().unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.node(NodeId(0)).kind, NodeKind::Var(Source::Local(0)));
        assert_eq!(g.node(NodeId(1)).kind, NodeKind::Binop(BinOp::Xor));
        assert_eq!(g.node(NodeId(1)).operands, vec![NodeId(0), NodeId(0)]);
        assert_eq!(g.outputs(), &[(Sink::Stack(0), NodeId(1))]);
    }

    #[test]
    fn constants_add() {
        let f = lift(vec![Instr::I32Const(2), Instr::I32Const(3), Instr::Binary(I32, BinOp::Add), Instr::End], &[]);
        let g = f.graphs().next().unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.node(NodeId(0)).const_value(), Some(2));
        assert_eq!(g.node(NodeId(1)).const_value(), Some(3));
        assert_eq!(g.outputs().len(), 1);
    }

    #[test]
    fn division_is_opaque_and_pinned() {
        let f = lift(
            vec![
                Instr::LocalGet(0),
                Instr::LocalGet(1),
                Instr::Binary(I32, BinOp::DivU),
                Instr::I32Const(1),
                Instr::Binary(I32, BinOp::Add),
                Instr::End,
            ],
            &[I32, I32],
        );
        let g = f.graphs().next().unwrap();
        assert_eq!(g.pinned().len(), 1);
        let d = g.pinned()[0];
        assert_eq!(g.node(d).kind, NodeKind::Opaque(BinOp::DivU));
        let (_, root) = g.outputs()[0];
        assert_eq!(g.cone_inputs(root), vec![d]);
    }

    #[test]
    fn dropped_division_stays_pinned() {
        let f = lift(
            vec![Instr::LocalGet(0), Instr::LocalGet(1), Instr::Binary(I32, BinOp::RemS), Instr::Drop, Instr::End],
            &[I32, I32],
        );
        let g = f.graphs().next().unwrap();
        assert!(g.outputs().is_empty());
        assert_eq!(g.pinned().len(), 1);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn locals_become_outputs() {
        let f = lift(
            vec![
                Instr::LocalGet(0),
                Instr::I32Const(1),
                Instr::Binary(I32, BinOp::Add),
                Instr::LocalSet(1),
                Instr::LocalGet(1),
                Instr::LocalSet(0),
                Instr::LocalGet(1),
                Instr::LocalSet(1),
                Instr::End,
            ],
            &[I32, I32],
        );
        let g = f.graphs().next().unwrap();
        let sinks: Vec<Sink> = g.outputs().iter().map(|o| o.0).collect();
        assert_eq!(sinks, vec![Sink::Local(0), Sink::Local(1)]);
        assert_eq!(g.outputs()[0].1, g.outputs()[1].1);
    }

    #[test]
    fn control_flow_splits_regions() {
        let f = lift(
            vec![
                Instr::LocalGet(0),
                Instr::If(BlockType::Value(I32)),
                Instr::I32Const(1),
                Instr::Else,
                Instr::I32Const(2),
                Instr::End,
                Instr::I32Const(3),
                Instr::Binary(I32, BinOp::Add),
                Instr::End,
            ],
            &[I32],
        );
        let regions = f.graphs().count();
        assert_eq!(regions, 4);
        // The last region consumes the if result from the entry stack.
        let last = f.graphs().last().unwrap();
        assert_eq!(last.stack_inputs(), &[32]);
        let covered: usize = f.segments.iter().map(|s| s.range().len()).sum();
        assert_eq!(covered, 9);
    }

    #[test]
    fn dead_code_after_return_is_verbatim() {
        let f = lift(
            vec![Instr::I32Const(1), Instr::Return, Instr::I32Const(2), Instr::Binary(I32, BinOp::Add), Instr::End],
            &[],
        );
        assert_eq!(f.graphs().count(), 1);
    }

    #[test]
    fn extend_and_wrap_widths() {
        let f = lift(
            vec![
                Instr::LocalGet(0),
                Instr::Unary(I32, UnOp::ExtendU),
                Instr::I64Const(3),
                Instr::Binary(ValType::I64, BinOp::Mul),
                Instr::Unary(ValType::I64, UnOp::Wrap),
                Instr::End,
            ],
            &[I32],
        );
        let g = f.graphs().next().unwrap();
        let widths: Vec<u32> = g.nodes().iter().map(|n| n.width).collect();
        assert_eq!(widths, vec![32, 64, 64, 64, 32]);
    }

    #[test]
    fn malformed_bodies_are_rejected() {
        let info = info();
        let body = FunctionBody::new(vec![], vec![Instr::Binary(I32, BinOp::Add), Instr::End]);
        assert_eq!(
            lift_function(&body, FuncContext { locals: &[], info: &info }),
            Err(LiftError::StackUnderflow { at: 0 })
        );
        let body = FunctionBody::new(
            vec![],
            vec![Instr::I64Const(1), Instr::I32Const(1), Instr::Binary(I32, BinOp::Add), Instr::End],
        );
        assert_eq!(
            lift_function(&body, FuncContext { locals: &[], info: &info }),
            Err(LiftError::TypeMismatch { at: 2 })
        );
    }
}
