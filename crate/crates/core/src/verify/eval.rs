//! Concrete bit-vector semantics of dataflow nodes.

use crate::dataflow::graph::{mask, DfGraph, NodeId, NodeKind, Source};
use crate::wasm::{BinOp, UnOp};

/// Values for the inputs of a graph. For a standalone fragment, `values[i]`
/// binds `Arg(i)`; for a region graph it binds the `i`-th `Var` node in id
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, serde::Serialize)]
pub struct TestVector {
    pub values: Vec<u64>,
}

impl TestVector {
    pub fn new(values: Vec<u64>) -> Self {
        TestVector { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("input {0} has no value in the test vector")]
    UncoveredInput(NodeId),
    #[error("integer division by zero")]
    DivZero,
    #[error("integer overflow")]
    Overflow,
}

fn sext(v: u64, width: u32) -> i64 {
    if width >= 64 {
        v as i64
    } else {
        let shift = 64 - width;
        ((v << shift) as i64) >> shift
    }
}

/// Apply a non-trapping binary operator. `w` is the operand width; the
/// result of a comparison is 0 or 1.
pub fn apply_binop(op: BinOp, w: u32, a: u64, b: u64) -> u64 {
    let m = mask(w);
    let (a, b) = (a & m, b & m);
    let sh = |c: u64| (c % w as u64) as u32;
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a << sh(b),
        BinOp::ShrU => a >> sh(b),
        BinOp::ShrS => (sext(a, w) >> sh(b)) as u64,
        BinOp::Rotl => {
            let k = sh(b);
            if k == 0 {
                a
            } else {
                (a << k) | (a >> (w - k))
            }
        }
        BinOp::Rotr => {
            let k = sh(b);
            if k == 0 {
                a
            } else {
                (a >> k) | (a << (w - k))
            }
        }
        BinOp::Eq => (a == b) as u64,
        BinOp::Ne => (a != b) as u64,
        BinOp::LtS => (sext(a, w) < sext(b, w)) as u64,
        BinOp::LtU => (a < b) as u64,
        BinOp::GtS => (sext(a, w) > sext(b, w)) as u64,
        BinOp::GtU => (a > b) as u64,
        BinOp::LeS => (sext(a, w) <= sext(b, w)) as u64,
        BinOp::LeU => (a <= b) as u64,
        BinOp::GeS => (sext(a, w) >= sext(b, w)) as u64,
        BinOp::GeU => (a >= b) as u64,
        BinOp::DivS | BinOp::DivU | BinOp::RemS | BinOp::RemU => return apply_trapping(op, w, a, b).unwrap_or(0),
    };
    r & m
}

/// div/rem with WASM trap rules.
pub fn apply_trapping(op: BinOp, w: u32, a: u64, b: u64) -> Result<u64, EvalError> {
    let m = mask(w);
    let (a, b) = (a & m, b & m);
    if b == 0 {
        return Err(EvalError::DivZero);
    }
    let (sa, sb) = (sext(a, w), sext(b, w));
    let min = sext(1u64 << (w - 1), w);
    let r = match op {
        BinOp::DivU => a / b,
        BinOp::RemU => a % b,
        BinOp::DivS => {
            if sa == min && sb == -1 {
                return Err(EvalError::Overflow);
            }
            sa.wrapping_div(sb) as u64
        }
        BinOp::RemS => sa.wrapping_rem(sb) as u64,
        _ => apply_binop(op, w, a, b),
    };
    Ok(r & m)
}

pub fn apply_unop(op: UnOp, in_w: u32, out_w: u32, a: u64) -> u64 {
    let a = a & mask(in_w);
    match op {
        UnOp::Eqz => (a == 0) as u64,
        UnOp::ExtendS => sext(a, in_w) as u64 & mask(out_w),
        UnOp::ExtendU => a,
        UnOp::Wrap => a & mask(out_w),
    }
}

/// Evaluate every node of `g`. Opaque nodes are computed from their operands
/// and report traps.
pub fn eval_all(g: &DfGraph, tv: &TestVector) -> Result<Vec<u64>, EvalError> {
    let mut vals = vec![0u64; g.len()];
    let mut var_rank = 0usize;
    for id in g.ids() {
        let n = g.node(id);
        let o = |k: usize| vals[n.operands[k].index()];
        let ow = |k: usize| g.node(n.operands[k]).width;
        let v = match n.kind {
            NodeKind::Var(src) => {
                let slot = match src {
                    Source::Arg(i) => i as usize,
                    _ => {
                        var_rank += 1;
                        var_rank - 1
                    }
                };
                *tv.values.get(slot).ok_or(EvalError::UncoveredInput(id))? & mask(n.width)
            }
            NodeKind::Const(c) => c & mask(n.width),
            NodeKind::Binop(op) => apply_binop(op, ow(0), o(0), o(1)),
            NodeKind::Opaque(op) => apply_trapping(op, ow(0), o(0), o(1))?,
            NodeKind::Unop(op) => apply_unop(op, ow(0), n.width, o(0)),
            NodeKind::Select => {
                if o(2) != 0 {
                    o(0)
                } else {
                    o(1)
                }
            }
        };
        vals[id.index()] = v;
    }
    Ok(vals)
}

/// Value of `root` under `tv`.
pub fn eval_node(g: &DfGraph, root: NodeId, tv: &TestVector) -> Result<u64, EvalError> {
    // Only the cone matters, but evaluating every node keeps Var ranks
    // stable and graphs are small.
    eval_all(g, tv).map(|v| v[root.index()])
}
