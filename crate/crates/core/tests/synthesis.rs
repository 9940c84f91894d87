//! End-to-end checks of the rewriting engines on small fragments, with
//! expectations established by exhaustive search over width-8 inputs.

mod common;

use common::*;
use wasm_superopt::dataflow::{substitute, DfGraph, NodeKind, Sink, Source};
use wasm_superopt::synth::{best_replacement, Mode, SynthConfig};
use wasm_superopt::verify::{Verdict, Verifier};
use wasm_superopt::wasm::BinOp;

fn solver() -> Option<Verifier> {
    z3_available().then(|| Verifier::Smt(z3()))
}

#[test]
fn substituting_an_inner_node_preserves_semantics() {
    let mut g = DfGraph::new(2);
    let v0 = g.var(Source::Local(0), 8);
    let v1 = g.var(Source::Local(1), 8);
    let x = g.binop(BinOp::Xor, v0, v0);
    let a = g.binop(BinOp::Add, x, v1);
    g.add_output(Sink::Stack(0), a);
    let mut zero = DfGraph::new(0);
    let z = zero.constant(0, 8);
    zero.add_output(Sink::Stack(0), z);
    let h = substitute(&g, x, &zero, &[]).unwrap();

    let root = h.root().unwrap();
    let n = h.node(root);
    assert_eq!(n.kind, NodeKind::Binop(BinOp::Add));
    assert_eq!(h.node(n.operands[0]).kind, NodeKind::Const(0));
    // Both graphs read locals 0 and 1; compare them as fragments.
    let as_fragment = |g: &DfGraph| {
        let r = g.root().unwrap();
        g.extract(r, &g.cone_inputs(r))
    };
    let (before, after) = (as_fragment(&g), as_fragment(&h));
    for a in all_inputs8(2) {
        let args = if after.inputs().len() == 1 { vec![a[1]] } else { a.clone() };
        assert_eq!(ref_eval(&before, &a), ref_eval(&after, &args), "inputs {a:?}");
    }
}

#[test]
fn absorbing_mask_becomes_a_constant() {
    let c = pattern("(and (or x -1) 1)", 8);
    assert!(all_inputs8(1).iter().all(|a| ref_eval(&c.graph, a) == 1));
    let Some(v) = solver() else { return };
    let r = best_replacement(&c, &SynthConfig::new(Mode::Constants), &v).unwrap().unwrap();
    assert_eq!(r.rhs_cost, 1);
    assert_eq!(r.rhs.node(r.rhs.root().unwrap()).kind, NodeKind::Const(1));
    assert_eq!(r.verdict, Verdict::Proven);
}

#[test]
fn bounded2_finds_nothing_for_three_x() {
    // x * 3 has no equivalent of three or fewer nodes over this pool.
    let c = pattern("(add (shl x 1) x)", 8);
    assert_eq!(naive_min_cost(&c), None);
    let Some(v) = solver() else { return };
    assert!(best_replacement(&c, &SynthConfig::new(Mode::Bounded2), &v).unwrap().is_none());
}

#[test]
fn cegis_deduplicates_masked_or() {
    let c = pattern("(or (and x 255) (and x 255))", 32);
    let Some(v) = solver() else { return };
    let r = best_replacement(&c, &SynthConfig::new(Mode::Cegis), &v).unwrap().unwrap();
    assert_eq!(r.rhs_cost, 3);
    assert_eq!(r.verdict, Verdict::Proven);
    for x in [0u64, 1, 0xff, 0x100, 0xdead_beef, 0xffff_ffff, 0x8000_0000] {
        assert_eq!(ref_eval(&r.rhs, &[x]), x & 0xff);
    }
}

#[test]
fn testing_oracle_agrees_with_exhaustive_check() {
    // The probabilistic verifier must accept only what exhaustive checking
    // confirms, at width 8 where exhaustion is cheap.
    let v = Verifier::testing(3);
    for src in PATTERNS {
        let c = pattern(src, 8);
        let Ok(Some(r)) = best_replacement(&c, &SynthConfig::new(Mode::Enumerative), &v) else { continue };
        assert!(matches!(r.verdict, Verdict::PassedTests(_)), "{src}: {:?}", r.verdict);
        let bad = all_inputs8(c.input_vars.len()).into_iter().find(|a| ref_eval(&c.graph, a) != ref_eval(&r.rhs, a));
        assert_eq!(bad, None, "{src}");
    }
}
