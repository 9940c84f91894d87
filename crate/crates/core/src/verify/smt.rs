//! SMT-LIB2 (QF_BV) encoding of equivalence queries and an external solver
//! bridge.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::eval::{eval_all, TestVector};
use super::testing::arg_widths;
use super::Verdict;
use crate::dataflow::graph::{DfGraph, NodeId, NodeKind, Source};
use crate::wasm::{BinOp, UnOp};

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(2);

/// How to run the external solver. `command` is passed to `sh -c` after
/// substituting `{timeout_ms}` (or `{timeout}` in whole seconds); the query
/// is written to its standard input.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SolverConfig {
    pub command: String,
    pub timeout: Duration,
}

impl SolverConfig {
    pub fn new(command: impl Into<String>) -> Self {
        SolverConfig { command: command.into(), timeout: DEFAULT_QUERY_TIMEOUT }
    }

    /// z3 reading from stdin with a per-query soft timeout.
    pub fn z3() -> Self {
        Self::new("z3 -in -t:{timeout_ms}")
    }

    pub fn has_placeholder(&self) -> bool {
        self.command.contains("{timeout_ms}") || self.command.contains("{timeout}")
    }

    fn render(&self) -> String {
        let ms = self.timeout.as_millis().max(1);
        self.command
            .replace("{timeout_ms}", &ms.to_string())
            .replace("{timeout}", &self.timeout.as_secs().max(1).to_string())
    }

    /// First word of the command, used in reports.
    pub fn identity(&self) -> String {
        self.command.split_whitespace().next().unwrap_or("").to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmtError {
    #[error("node {0} cannot appear in a replacement")]
    UnsupportedNode(NodeId),
    #[error("fragment without a single result")]
    NoRoot,
}

fn literal(v: u64, width: u32) -> String {
    if width.is_multiple_of(4) {
        format!("#x{:0>1$x}", v, (width / 4) as usize)
    } else {
        format!("#b{:0>1$b}", v, width as usize)
    }
}

struct Encoder<'a> {
    lets: Vec<(String, String)>,
    prefix: &'a str,
    decls: &'a mut Vec<(String, u32)>,
}

impl Encoder<'_> {
    fn encode(&mut self, g: &DfGraph, allow_opaque: bool) -> Result<Vec<String>, SmtError> {
        let mut names: Vec<String> = Vec::with_capacity(g.len());
        for id in g.ids() {
            let n = g.node(id);
            let opnd = |k: usize| names[n.operands[k].index()].clone();
            let ow = |k: usize| g.node(n.operands[k]).width;
            let expr = match n.kind {
                NodeKind::Var(Source::Arg(i)) => {
                    names.push(format!("in{i}"));
                    continue;
                }
                NodeKind::Var(_) => {
                    let name = format!("{}v{}", self.prefix, id.0);
                    self.decls.push((name.clone(), n.width));
                    names.push(name);
                    continue;
                }
                NodeKind::Opaque(_) => {
                    if !allow_opaque {
                        return Err(SmtError::UnsupportedNode(id));
                    }
                    let name = format!("{}op{}", self.prefix, id.0);
                    self.decls.push((name.clone(), n.width));
                    names.push(name);
                    continue;
                }
                NodeKind::Const(c) => {
                    names.push(literal(c, n.width));
                    continue;
                }
                NodeKind::Binop(op) => binop(op, ow(0), &opnd(0), &opnd(1)),
                NodeKind::Unop(op) => match op {
                    UnOp::Eqz => {
                        format!("(ite (= {} {}) {} {})", opnd(0), literal(0, ow(0)), literal(1, 32), literal(0, 32))
                    }
                    UnOp::ExtendS => format!("((_ sign_extend {}) {})", n.width - ow(0), opnd(0)),
                    UnOp::ExtendU => format!("((_ zero_extend {}) {})", n.width - ow(0), opnd(0)),
                    UnOp::Wrap => format!("((_ extract {} 0) {})", n.width - 1, opnd(0)),
                },
                NodeKind::Select => {
                    format!("(ite (distinct {} {}) {} {})", opnd(2), literal(0, ow(2)), opnd(0), opnd(1))
                }
            };
            let name = format!("{}{}", self.prefix, id.0);
            self.lets.push((name.clone(), expr));
            names.push(name);
        }
        Ok(names)
    }
}

/// Shift count reduced modulo the width by keeping its low bits.
fn masked_count(c: &str, w: u32) -> String {
    if w.is_power_of_two() && w > 1 {
        let bits = w.trailing_zeros();
        format!("((_ zero_extend {}) ((_ extract {} 0) {c}))", w - bits, bits - 1)
    } else {
        format!("(bvurem {c} {})", literal(w as u64, w))
    }
}

fn binop(op: BinOp, w: u32, a: &str, b: &str) -> String {
    let cmp = |p: &str| format!("(ite ({p} {a} {b}) {} {})", literal(1, 32), literal(0, 32));
    match op {
        BinOp::Add => format!("(bvadd {a} {b})"),
        BinOp::Sub => format!("(bvsub {a} {b})"),
        BinOp::Mul => format!("(bvmul {a} {b})"),
        BinOp::And => format!("(bvand {a} {b})"),
        BinOp::Or => format!("(bvor {a} {b})"),
        BinOp::Xor => format!("(bvxor {a} {b})"),
        BinOp::Shl => format!("(bvshl {a} {})", masked_count(b, w)),
        BinOp::ShrU => format!("(bvlshr {a} {})", masked_count(b, w)),
        BinOp::ShrS => format!("(bvashr {a} {})", masked_count(b, w)),
        BinOp::Rotl | BinOp::Rotr => {
            let k = masked_count(b, w);
            let back = format!("(bvsub {} {k})", literal(w as u64, w));
            let (first, second) = if op == BinOp::Rotl { ("bvshl", "bvlshr") } else { ("bvlshr", "bvshl") };
            format!("(bvor ({first} {a} {k}) ({second} {a} {back}))")
        }
        BinOp::Eq => cmp("="),
        BinOp::Ne => cmp("distinct"),
        BinOp::LtS => cmp("bvslt"),
        BinOp::LtU => cmp("bvult"),
        BinOp::GtS => cmp("bvsgt"),
        BinOp::GtU => cmp("bvugt"),
        BinOp::LeS => cmp("bvsle"),
        BinOp::LeU => cmp("bvule"),
        BinOp::GeS => cmp("bvsge"),
        BinOp::GeU => cmp("bvuge"),
        BinOp::DivS => format!("(bvsdiv {a} {b})"),
        BinOp::DivU => format!("(bvudiv {a} {b})"),
        BinOp::RemS => format!("(bvsrem {a} {b})"),
        BinOp::RemU => format!("(bvurem {a} {b})"),
    }
}

/// SMT-LIB2 script asserting that `lhs` and `rhs` differ somewhere. unsat
/// means they are equivalent.
pub fn emit_smt(lhs: &DfGraph, rhs: &DfGraph) -> Result<String, SmtError> {
    let (lr, rr) = (lhs.root().ok_or(SmtError::NoRoot)?, rhs.root().ok_or(SmtError::NoRoot)?);
    let mut decls = Vec::new();
    let mut l = Encoder { lets: vec![], prefix: "l", decls: &mut decls };
    let lnames = l.encode(lhs, true)?;
    let llets = l.lets;
    let mut r = Encoder { lets: vec![], prefix: "r", decls: &mut decls };
    let rnames = r.encode(rhs, false)?;
    let rlets = r.lets;

    let mut s = String::from("(set-logic QF_BV)\n");
    for (i, w) in arg_widths(lhs, rhs).iter().enumerate() {
        let _ = writeln!(s, "(declare-const in{i} (_ BitVec {w}))");
    }
    for (name, w) in &decls {
        let _ = writeln!(s, "(declare-const {name} (_ BitVec {w}))");
    }
    let mut body = format!("(distinct {} {})", lnames[lr.index()], rnames[rr.index()]);
    for (name, expr) in llets.iter().chain(rlets.iter()).rev() {
        body = format!("(let (({name} {expr})) {body})");
    }
    let _ = writeln!(s, "(assert {body})");
    s.push_str("(check-sat)\n");
    Ok(s)
}

/// Parse `(define-fun inN () (_ BitVec w) #x..)` entries of a model.
fn parse_model(text: &str, arity: usize) -> Result<TestVector, String> {
    let mut values = vec![0u64; arity];
    let tokens: Vec<String> =
        text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "define-fun" {
            let name = tokens.get(i + 1).ok_or("truncated model")?;
            // Skip to the value after the sort: first literal token.
            let mut j = i + 2;
            while j < tokens.len() && !tokens[j].starts_with('#') && tokens[j] != "define-fun" {
                j += 1;
            }
            let lit = tokens.get(j).filter(|t| t.starts_with('#')).ok_or("missing value")?;
            let v = parse_literal(lit).ok_or_else(|| format!("bad literal {lit}"))?;
            if let Some(idx) = name.strip_prefix("in").and_then(|n| n.parse::<usize>().ok()) {
                if idx < arity {
                    values[idx] = v;
                }
            }
            i = j;
        }
        i += 1;
    }
    Ok(TestVector::new(values))
}

fn parse_literal(t: &str) -> Option<u64> {
    if let Some(h) = t.strip_prefix("#x") {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = t.strip_prefix("#b") {
        u64::from_str_radix(b, 2).ok()
    } else {
        None
    }
}

fn run_solver(sc: &SolverConfig, script: &str) -> Result<String, String> {
    let cmd = sc.render();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("failed to spawn solver: {e}"))?;
    {
        let mut stdin = child.stdin.take().ok_or("no solver stdin")?;
        stdin.write_all(script.as_bytes()).map_err(|e| format!("write to solver: {e}"))?;
    }
    let deadline = Instant::now() + sc.timeout + Duration::from_secs(1);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err("timeout".into());
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(1)),
            Err(e) => return Err(format!("solver wait failed: {e}")),
        }
    }
    let mut out = String::new();
    child
        .stdout
        .take()
        .ok_or("no solver stdout")?
        .read_to_string(&mut out)
        .map_err(|e| format!("read solver output: {e}"))?;
    Ok(out)
}

/// Decide equivalence with the external solver. Never panics: spawn and
/// protocol failures become `Unknown`.
pub fn verify_smt(lhs: &DfGraph, rhs: &DfGraph, sc: &SolverConfig) -> Verdict {
    if sc.timeout.is_zero() {
        return Verdict::Unknown("timeout".into());
    }
    let script = match emit_smt(lhs, rhs) {
        Ok(s) => s + "(get-model)\n",
        Err(e) => return Verdict::Unknown(e.to_string()),
    };
    log::debug!("smt query:\n{script}");
    let out = match run_solver(sc, &script) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("solver failure: {e}");
            return Verdict::Unknown(e);
        }
    };
    log::debug!("smt answer:\n{out}");
    let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some("unsat") => Verdict::Proven,
        Some("sat") => {
            let arity = arg_widths(lhs, rhs).len();
            let rest: String = lines.collect::<Vec<_>>().join(" ");
            let tv = match parse_model(&rest, arity) {
                Ok(tv) => tv,
                Err(e) => return Verdict::Unknown(format!("protocol error: {e}")),
            };
            let a = eval_all(lhs, &tv).map(|v| v[lhs.root().unwrap().index()]);
            let b = eval_all(rhs, &tv).map(|v| v[rhs.root().unwrap().index()]);
            if a != b {
                Verdict::Refuted(tv)
            } else if lhs
                .nodes()
                .iter()
                .any(|n| matches!(n.kind, NodeKind::Opaque(_) | NodeKind::Var(Source::Local(_) | Source::Stack(_))))
            {
                // The model may hinge on free opaque values that the vector
                // cannot express; still not equivalent.
                Verdict::Unknown("counterexample depends on opaque values".into())
            } else {
                Verdict::Unknown("solver model does not reproduce".into())
            }
        }
        Some("unknown") | Some("timeout") => Verdict::Unknown("timeout".into()),
        Some(other) => Verdict::Unknown(format!("protocol error: unexpected `{other}`")),
        None => Verdict::Unknown("protocol error: empty solver output".into()),
    }
}
