//! Helpers shared by the integration tests: corpus access, a small pattern
//! language for building fragments, and reference semantics written against
//! Rust's native fixed-width integers.
#![allow(dead_code)]

use std::path::PathBuf;

use wasm_superopt::dataflow::{DfGraph, NodeId, NodeKind, Sink, Source};
use wasm_superopt::driver::corpus::{load_corpus, CorpusEntry};
use wasm_superopt::synth::{constant_pool, Candidate};
use wasm_superopt::verify::SolverConfig;
use wasm_superopt::wasm::{BinOp, UnOp};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus() -> Vec<CorpusEntry> {
    let (entries, errors) = load_corpus(&corpus_dir());
    assert!(errors.is_empty(), "corpus errors: {errors:?}");
    entries
}

pub fn z3_available() -> bool {
    std::process::Command::new("z3").arg("-version").output().map(|o| o.status.success()).unwrap_or(false)
}

pub fn z3() -> SolverConfig {
    SolverConfig::z3()
}

/// Build a candidate from an s-expression over `x` and `y`, e.g.
/// `(add (xor x x) y)`. Integer literals take the fragment width.
pub fn pattern(src: &str, width: u32) -> Candidate {
    let tokens: Vec<String> =
        src.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect();
    let mut g = DfGraph::new(2);
    // Inputs first so that x is Arg(0) and y is Arg(1).
    let x = g.var(Source::Local(0), width);
    let y = tokens.iter().any(|t| t == "y").then(|| g.var(Source::Local(1), width));
    let mut pos = 0;
    let root = parse(&tokens, &mut pos, &mut g, width, x, y);
    assert_eq!(pos, tokens.len(), "trailing tokens in {src}");
    g.add_output(Sink::Stack(0), root);
    Candidate::new(&g, root, 64).unwrap_or_else(|| panic!("not a candidate: {src}"))
}

fn parse(t: &[String], pos: &mut usize, g: &mut DfGraph, w: u32, x: NodeId, y: Option<NodeId>) -> NodeId {
    let tok = t[*pos].clone();
    *pos += 1;
    match tok.as_str() {
        "x" => x,
        "y" => y.unwrap(),
        "(" => {
            let op = t[*pos].clone();
            *pos += 1;
            let mut args = vec![];
            while t[*pos] != ")" {
                args.push(parse(t, pos, g, w, x, y));
            }
            *pos += 1;
            match (op.as_str(), args.as_slice()) {
                ("select", &[a, b, c]) => g.select(a, b, c),
                ("eqz", &[a]) => g.unop(UnOp::Eqz, a),
                (name, &[a, b]) => {
                    let op = BinOp::ALL.into_iter().find(|o| o.name() == name).unwrap_or_else(|| panic!("op {name}"));
                    g.binop(op, a, b)
                }
                _ => panic!("bad form {op}"),
            }
        }
        lit => {
            let v: i64 = lit.parse().unwrap_or_else(|_| panic!("token {lit}"));
            g.constant(v as u64 & mask(w), w)
        }
    }
}

pub fn mask(w: u32) -> u64 {
    if w == 64 {
        u64::MAX
    } else {
        (1 << w) - 1
    }
}

/// Binary operator semantics on native integers of width 8, 32 or 64.
pub fn ref_binop(op: BinOp, w: u32, a: u64, b: u64) -> u64 {
    macro_rules! at {
        ($u:ty, $i:ty) => {{
            let (x, y) = (a as $u, b as $u);
            let s = y as u32 % <$u>::BITS;
            match op {
                BinOp::Add => x.wrapping_add(y) as u64,
                BinOp::Sub => x.wrapping_sub(y) as u64,
                BinOp::Mul => x.wrapping_mul(y) as u64,
                BinOp::And => (x & y) as u64,
                BinOp::Or => (x | y) as u64,
                BinOp::Xor => (x ^ y) as u64,
                BinOp::Shl => (x << s) as u64,
                BinOp::ShrU => (x >> s) as u64,
                BinOp::ShrS => ((x as $i) >> s) as $u as u64,
                BinOp::Rotl => x.rotate_left(s) as u64,
                BinOp::Rotr => x.rotate_right(s) as u64,
                BinOp::Eq => (x == y) as u64,
                BinOp::Ne => (x != y) as u64,
                BinOp::LtU => (x < y) as u64,
                BinOp::GtU => (x > y) as u64,
                BinOp::LeU => (x <= y) as u64,
                BinOp::GeU => (x >= y) as u64,
                BinOp::LtS => ((x as $i) < (y as $i)) as u64,
                BinOp::GtS => ((x as $i) > (y as $i)) as u64,
                BinOp::LeS => ((x as $i) <= (y as $i)) as u64,
                BinOp::GeS => ((x as $i) >= (y as $i)) as u64,
                other => panic!("{other:?} is not part of the RHS grammar"),
            }
        }};
    }
    match w {
        8 => at!(u8, i8),
        32 => at!(u32, i32),
        64 => at!(u64, i64),
        _ => panic!("width {w}"),
    }
}

pub fn ref_unop(op: UnOp, w: u32, a: u64) -> u64 {
    match op {
        UnOp::Eqz => (a & mask(w) == 0) as u64,
        UnOp::ExtendS => a as u32 as i32 as i64 as u64,
        UnOp::ExtendU => a as u32 as u64,
        UnOp::Wrap => a as u32 as u64,
    }
}

/// Value of the fragment root for positional arguments `args`.
pub fn ref_eval(g: &DfGraph, args: &[u64]) -> u64 {
    let mut vals = vec![0u64; g.len()];
    for id in g.ids() {
        let n = g.node(id);
        let v = |k: usize| vals[n.operands[k].index()];
        vals[id.index()] = match n.kind {
            NodeKind::Var(Source::Arg(i)) => args[i as usize] & mask(n.width),
            NodeKind::Const(c) => c & mask(n.width),
            NodeKind::Unop(op) => ref_unop(op, g.node(n.operands[0]).width, v(0)),
            NodeKind::Binop(op) => ref_binop(op, g.node(n.operands[0]).width, v(0), v(1)),
            NodeKind::Select => {
                if v(2) != 0 {
                    v(0)
                } else {
                    v(1)
                }
            }
            ref k => panic!("unexpected node {k:?} in a fragment"),
        };
    }
    vals[g.root().expect("fragment root").index()]
}

/// Every input assignment for a fragment with `n` inputs of width 8.
pub fn all_inputs8(n: usize) -> Vec<Vec<u64>> {
    match n {
        0 => vec![vec![]],
        1 => (0..256).map(|x| vec![x]).collect(),
        2 => (0..65536u64).map(|v| vec![v & 255, v >> 8]).collect(),
        _ => panic!("at most two inputs"),
    }
}

/// Smallest tree size (node count) of an expression equivalent to `c` on
/// every width-8 input, searching all trees of at most three nodes built
/// from the inputs, the constant pool, every unary operator and every
/// non-trapping binary operator. `None` if nothing that small exists.
pub fn naive_min_cost(c: &Candidate) -> Option<usize> {
    let inputs = all_inputs8(c.input_vars.len());
    let target: Vec<u64> = inputs.iter().map(|a| ref_eval(&c.graph, a)).collect();
    let want_w = c.width();

    // Size-one trees with their full value tables.
    let mut leaves: Vec<(u32, Vec<u64>)> = vec![];
    for (i, &(_, w)) in c.input_vars.iter().enumerate() {
        leaves.push((w, inputs.iter().map(|a| a[i] & mask(w)).collect()));
    }
    for (w, v) in constant_pool(c) {
        leaves.push((w, vec![v & mask(w); inputs.len()]));
    }
    let unops = |w: u32| -> Vec<(UnOp, u32)> {
        let mut u = vec![(UnOp::Eqz, 32)];
        if w == 32 {
            u.extend([(UnOp::ExtendS, 64), (UnOp::ExtendU, 64)]);
        }
        if w == 64 {
            u.push((UnOp::Wrap, 32));
        }
        u
    };
    let matches = |w: u32, f: &dyn Fn(usize) -> u64| w == want_w && (0..target.len()).all(|k| f(k) == target[k]);

    if leaves.iter().any(|(w, t)| matches(*w, &|k| t[k])) {
        return Some(1);
    }
    // Size two: unop(leaf).
    let mut size2: Vec<(u32, Vec<u64>)> = vec![];
    for (w, t) in &leaves {
        for (op, ow) in unops(*w) {
            size2.push((ow, t.iter().map(|&a| ref_unop(op, *w, a)).collect()));
        }
    }
    if size2.iter().any(|(w, t)| matches(*w, &|k| t[k])) {
        return Some(2);
    }
    // Size three: unop(unop(leaf)) and binop(leaf, leaf).
    for (w, t) in &size2 {
        for (op, ow) in unops(*w) {
            if matches(ow, &|k| ref_unop(op, *w, t[k])) {
                return Some(3);
            }
        }
    }
    for op in BinOp::ALL.into_iter().filter(|o| !o.can_trap()) {
        for (wa, ta) in &leaves {
            for (wb, tb) in &leaves {
                if wa != wb {
                    continue;
                }
                let ow = if op.is_comparison() { 32 } else { *wa };
                if matches(ow, &|k| ref_binop(op, *wa, ta[k], tb[k])) {
                    return Some(3);
                }
            }
        }
    }
    None
}

/// Fragments over at most two inputs, each with a strictly cheaper
/// equivalent.
pub const PATTERNS: &[&str] = &[
    "(add (xor x x) y)",
    "(sub (add x y) y)",
    "(xor (xor x y) y)",
    "(and (or x 0) y)",
    "(or (and x y) x)",
    "(and (or x y) x)",
    "(sub x (sub x y))",
    "(sub 0 (sub 0 x))",
    "(mul (add x 0) 1)",
    "(add (mul x 1) (mul y 0))",
    "(xor (and x 0) y)",
    "(or (xor x x) (and y -1))",
    "(shl (shr_u x 0) 0)",
    "(add (add x x) (sub y y))",
    "(eq (add x y) (add y x))",
    "(ne x x)",
    "(select x y (eq x x))",
    "(select x x (ne y 0))",
    "(sub (add x 5) 5)",
    "(and (and x y) x)",
    "(or (or x y) y)",
    "(xor (xor x y) x)",
    "(add (sub x y) y)",
    "(mul (sub x x) y)",
    "(rotl (rotr x y) y)",
    "(and x (xor x -1))",
    "(or x (xor x -1))",
    "(eqz (eqz (eqz x)))",
    "(lt_u x 0)",
    "(ge_u x 0)",
    "(sub (mul x 3) x)",
    "(xor (add x y) (add x y))",
    "(le_s y y)",
];
