//! Candidate harvesting and RHS synthesis.

pub mod candidate;
pub mod enumerate;

use std::time::{Duration, Instant};

pub use candidate::{harvest_candidates, Candidate, DEFAULT_MAX_CONE_NODES};
use enumerate::{enumerate, Budget, Round, Search};

use crate::dataflow::graph::{mask, DfGraph, NodeKind, Sink, Source};
use crate::dataflow::graph_cost;
use crate::verify::{corner_vectors, eval_all, random_vectors, TestVector, Verdict, Verifier};

/// Deterministic search effort granted per second of candidate timeout,
/// in enumerated programs. The wall-clock timeout is only a backstop, so
/// results do not depend on machine speed.
pub const WORK_PER_SECOND: u64 = 40_000;

/// Cached screening vectors for the enumerative engines.
pub const SCREEN_VECTORS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Replace an LHS by a single constant.
    Constants,
    /// Enumerate RHS programs of at most two instructions.
    #[serde(rename = "max2")]
    Bounded2,
    /// Counterexample-guided synthesis from corner cases.
    Cegis,
    /// Enumerate RHS programs of any size below the LHS cost.
    Enumerative,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Constants, Mode::Bounded2, Mode::Cegis, Mode::Enumerative];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Constants => "constants",
            Mode::Bounded2 => "max2",
            Mode::Cegis => "cegis",
            Mode::Enumerative => "enumerative",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub mode: Mode,
    pub per_candidate_timeout: Duration,
    pub max_rhs_instructions: Option<usize>,
    pub rng_seed: u64,
}

impl SynthConfig {
    pub fn new(mode: Mode) -> Self {
        SynthConfig {
            mode,
            per_candidate_timeout: Duration::from_secs(5),
            max_rhs_instructions: if mode == Mode::Bounded2 { Some(2) } else { None },
            rng_seed: 0,
        }
    }

    pub fn with_timeout(mut self, t: Duration) -> Self {
        self.per_candidate_timeout = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    fn budget(&self) -> Budget {
        let work = (self.per_candidate_timeout.as_secs_f64() * WORK_PER_SECOND as f64) as u64;
        Budget::new(work, Instant::now() + self.per_candidate_timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("search budget exhausted")]
    Timeout,
    #[error("verifier unavailable: {0}")]
    VerifierUnavailable(String),
}

/// A verified, strictly cheaper RHS for a candidate.
#[derive(Debug, Clone)]
pub struct Replacement {
    pub candidate: Candidate,
    pub rhs: DfGraph,
    pub rhs_cost: usize,
    pub verdict: Verdict,
    pub engine: Mode,
    pub elapsed: Duration,
}

impl Replacement {
    pub fn savings(&self) -> usize {
        self.candidate.lhs_cost - self.rhs_cost
    }
}

fn lhs_values(c: &Candidate, vectors: &[TestVector]) -> Vec<u64> {
    let root = c.graph.root().expect("fragment root");
    vectors.iter().map(|tv| eval_all(&c.graph, tv).map(|v| v[root.index()]).unwrap_or(0)).collect()
}

fn arg_widths(c: &Candidate) -> Vec<u32> {
    c.input_vars.iter().map(|&(_, w)| w).collect()
}

/// Finite constant pool: 0, ±1, small powers of two, signed extremes, and
/// the constants appearing in the LHS.
pub fn constant_pool(c: &Candidate) -> Vec<(u32, u64)> {
    let mut widths: Vec<u32> = arg_widths(c);
    widths.push(c.width());
    widths.sort();
    widths.dedup();
    let mut out = vec![];
    for &w in &widths {
        let m = mask(w);
        let min = 1u64 << (w - 1);
        for v in [0, 1, m, min, min - 1] {
            out.push((w, v));
        }
        for k in 1..8.min(w) {
            out.push((w, 1u64 << k));
        }
    }
    for n in c.graph.nodes() {
        if let NodeKind::Const(v) = n.kind {
            out.push((n.width, v));
        }
    }
    out.sort();
    out.dedup();
    out
}

fn unavailable(v: &Verdict) -> Option<String> {
    match v {
        Verdict::Unknown(r) if r.starts_with("failed to spawn") => Some(r.clone()),
        _ => None,
    }
}

fn const_fragment(c: &Candidate, k: u64) -> DfGraph {
    let mut g = DfGraph::new(c.input_vars.len() as u32);
    for (i, &(_, w)) in c.input_vars.iter().enumerate() {
        g.var(Source::Arg(i as u32), w);
    }
    let k = g.constant(k, c.width());
    g.add_output(Sink::Stack(0), k);
    g
}

fn finish(c: &Candidate, rhs: DfGraph, verdict: Verdict, mode: Mode, start: Instant) -> Option<Replacement> {
    let rhs_cost = graph_cost(&rhs);
    (rhs_cost < c.lhs_cost).then(|| Replacement {
        candidate: c.clone(),
        rhs,
        rhs_cost,
        verdict,
        engine: mode,
        elapsed: start.elapsed(),
    })
}

/// Try to prove the LHS constant: two probes must agree before the
/// verifier is asked.
pub fn synth_constant(c: &Candidate, v: &Verifier, cfg: &SynthConfig) -> Result<Option<Replacement>, SynthError> {
    let start = Instant::now();
    if c.lhs_cost <= 1 {
        return Ok(None);
    }
    let probes = random_vectors(&arg_widths(c), 2, cfg.rng_seed);
    let vals = lhs_values(c, &probes);
    if vals[0] != vals[1] {
        return Ok(None);
    }
    let rhs = const_fragment(c, vals[0]);
    let verdict = v.verify(&c.graph, &rhs);
    if let Some(r) = unavailable(&verdict) {
        return Err(SynthError::VerifierUnavailable(r));
    }
    if verdict.accepts(!v.is_sound()) {
        return Ok(finish(c, rhs, verdict, Mode::Constants, start));
    }
    Ok(None)
}

/// Enumerate-screen-verify loop shared by the enumerative engines and
/// CEGIS. Refuted programs contribute their counterexample and the search
/// restarts with the larger vector set.
fn search_loop(
    c: &Candidate,
    v: &Verifier,
    cfg: &SynthConfig,
    mode: Mode,
    mut vectors: Vec<TestVector>,
    solve_lone_constant: bool,
) -> Result<Option<Replacement>, SynthError> {
    let start = Instant::now();
    let mut budget = cfg.budget();
    if budget.exhausted() {
        return Err(SynthError::Timeout);
    }
    let widths = arg_widths(c);
    let pool = constant_pool(c);
    let mut max_cost = c.lhs_cost.saturating_sub(1) as u32;
    let cap = match (mode, cfg.max_rhs_instructions) {
        (Mode::Bounded2, m) => Some(m.unwrap_or(2).min(2)),
        (_, m) => m,
    };
    if let Some(m) = cap {
        max_cost = max_cost.min(m as u32);
    }
    let mut min_cost = 1;
    loop {
        let target = lhs_values(c, &vectors);
        let mut constants = pool.clone();
        if solve_lone_constant && target.windows(2).all(|w| w[0] == w[1]) {
            // The LHS is constant on every known example: propose exactly
            // that constant.
            if let Some(&k) = target.first() {
                constants.push((c.width(), k));
            }
        }
        let search = Search {
            arg_widths: &widths,
            constants: &constants,
            vectors: &vectors,
            target: &target,
            target_width: c.width(),
            min_cost,
            max_cost,
        };
        let (bank, ids) = match enumerate(&search, &mut budget) {
            Round::Matches(bank, ids) => (bank, ids),
            Round::NotFound => return Ok(None),
            Round::Exhausted => return Err(SynthError::Timeout),
        };
        let mut refuted = false;
        for &id in &ids {
            let rhs = bank.to_graph(id, &widths);
            let verdict = v.verify(&c.graph, &rhs);
            if let Some(r) = unavailable(&verdict) {
                return Err(SynthError::VerifierUnavailable(r));
            }
            if verdict.accepts(!v.is_sound()) {
                return Ok(finish(c, rhs, verdict, mode, start));
            }
            if let Verdict::Refuted(x) = verdict {
                if !vectors.contains(&x) {
                    vectors.push(x);
                    refuted = true;
                    break;
                }
            }
        }
        if !refuted {
            // Every match at this level was inconclusive: look past it.
            min_cost = bank.progs[ids[0] as usize].cost + 1;
            if min_cost > max_cost {
                return Ok(None);
            }
        }
        if budget.exhausted() {
            return Err(SynthError::Timeout);
        }
    }
}

fn screen_vectors(c: &Candidate, seed: u64) -> Vec<TestVector> {
    let widths = arg_widths(c);
    let corners = corner_vectors(&widths);
    let take = corners.len().min(SCREEN_VECTORS / 2);
    let mut out: Vec<TestVector> = (0..take).map(|k| corners[k * corners.len() / take.max(1)].clone()).collect();
    out.extend(random_vectors(&widths, SCREEN_VECTORS - out.len(), seed));
    out
}

/// Cost-ordered enumeration; `Bounded2` caps the RHS at two instructions.
pub fn synth_enumerative(c: &Candidate, v: &Verifier, cfg: &SynthConfig) -> Result<Option<Replacement>, SynthError> {
    let mode = if cfg.mode == Mode::Bounded2 { Mode::Bounded2 } else { Mode::Enumerative };
    search_loop(c, v, cfg, mode, screen_vectors(c, cfg.rng_seed), false)
}

/// CEGIS: start from corner cases only, grow the example set with
/// counterexamples, and solve lone-constant templates from the examples.
pub fn synth_cegis(c: &Candidate, v: &Verifier, cfg: &SynthConfig) -> Result<Option<Replacement>, SynthError> {
    let corners = corner_vectors(&arg_widths(c));
    let take = corners.len().min(16);
    let initial: Vec<TestVector> = (0..take).map(|k| corners[k * corners.len() / take].clone()).collect();
    search_loop(c, v, cfg, Mode::Cegis, initial, true)
}

/// Run the engine selected by `cfg.mode`.
pub fn best_replacement(c: &Candidate, cfg: &SynthConfig, v: &Verifier) -> Result<Option<Replacement>, SynthError> {
    if cfg.per_candidate_timeout.is_zero() {
        return Err(SynthError::Timeout);
    }
    match cfg.mode {
        Mode::Constants => synth_constant(c, v, cfg),
        Mode::Bounded2 | Mode::Enumerative => synth_enumerative(c, v, cfg),
        Mode::Cegis => synth_cegis(c, v, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::graph::{NodeId, Source};
    use crate::verify::{eval_node, SolverConfig};
    use crate::wasm::BinOp;

    /// Fragment over `n` inputs of `width` bits; the closure returns the root.
    fn cand(n: u32, width: u32, build: impl FnOnce(&mut DfGraph, &[NodeId]) -> NodeId) -> Candidate {
        let mut g = DfGraph::new(n);
        let vars: Vec<NodeId> = (0..n).map(|i| g.var(Source::Local(i), width)).collect();
        let r = build(&mut g, &vars);
        g.add_output(Sink::Stack(0), r);
        Candidate::new(&g, r, DEFAULT_MAX_CONE_NODES).expect("eligible root")
    }

    fn testing() -> Verifier {
        Verifier::testing(1)
    }

    fn cfg(mode: Mode) -> SynthConfig {
        SynthConfig::new(mode).with_timeout(Duration::from_secs(2))
    }

    /// Exhaustive equivalence at width 8 for up to two inputs.
    fn exhaustive_equal(lhs: &DfGraph, rhs: &DfGraph, inputs: usize) -> bool {
        let n = 1u32 << (8 * inputs as u32);
        (0..n).all(|k| {
            let tv = TestVector::new((0..inputs).map(|i| ((k >> (8 * i)) & 0xFF) as u64).collect());
            eval_node(lhs, lhs.root().unwrap(), &tv) == eval_node(rhs, rhs.root().unwrap(), &tv)
        })
    }

    fn smt() -> Option<Verifier> {
        std::process::Command::new("z3").arg("-version").output().ok().map(|_| Verifier::Smt(SolverConfig::z3()))
    }

    #[test]
    fn harvest_counts_cones() {
        let mut g = DfGraph::new(2);
        let v0 = g.var(Source::Local(0), 32);
        let v1 = g.var(Source::Local(1), 32);
        let x = g.binop(BinOp::Xor, v0, v0);
        let a = g.binop(BinOp::Add, x, v1);
        g.add_output(Sink::Stack(0), a);
        let cs = harvest_candidates(&g, DEFAULT_MAX_CONE_NODES);
        assert_eq!(cs.iter().map(|c| c.root).collect::<Vec<_>>(), vec![a, x]);
        assert!(cs[0].overlaps(&cs[1]));
        assert_eq!(cs[0].input_vars, vec![(v0, 32), (v1, 32)]);

        let mut g = DfGraph::new(1);
        let v0 = g.var(Source::Local(0), 32);
        g.add_output(Sink::Stack(0), v0);
        assert!(harvest_candidates(&g, DEFAULT_MAX_CONE_NODES).is_empty());
    }

    #[test]
    fn constants_engine() {
        // and(or(v0, -1), 1) == 1, checked exhaustively at width 8.
        let c = cand(1, 8, |g, v| {
            let m1 = g.constant(0xFF, 8);
            let one = g.constant(1, 8);
            let o = g.binop(BinOp::Or, v[0], m1);
            g.binop(BinOp::And, o, one)
        });
        let r = synth_constant(&c, &testing(), &cfg(Mode::Constants)).unwrap().unwrap();
        assert_eq!(r.rhs.node(r.rhs.root().unwrap()).const_value(), Some(1));
        assert_eq!(r.rhs_cost, 1);
        assert!(exhaustive_equal(&c.graph, &r.rhs, 1));

        let c = cand(1, 32, |g, v| g.binop(BinOp::Xor, v[0], v[0]));
        let r = synth_constant(&c, &testing(), &cfg(Mode::Constants)).unwrap().unwrap();
        assert_eq!(r.rhs.node(r.rhs.root().unwrap()).const_value(), Some(0));

        let c = cand(1, 32, |g, v| {
            let one = g.constant(1, 32);
            g.binop(BinOp::Add, v[0], one)
        });
        assert!(synth_constant(&c, &testing(), &cfg(Mode::Constants)).unwrap().is_none());
    }

    #[test]
    fn enumerative_identities() {
        let c = cand(1, 32, |g, v| {
            let one = g.constant(1, 32);
            g.binop(BinOp::Mul, v[0], one)
        });
        assert_eq!(c.lhs_cost, 3);
        for mode in [Mode::Bounded2, Mode::Enumerative] {
            let r = best_replacement(&c, &cfg(mode), &testing()).unwrap().unwrap();
            assert_eq!(r.rhs_cost, 1);
            assert!(matches!(r.rhs.node(r.rhs.root().unwrap()).kind, NodeKind::Var(Source::Arg(0))));
        }

        let c = cand(1, 32, |g, v| g.binop(BinOp::Sub, v[0], v[0]));
        let r = best_replacement(&c, &cfg(Mode::Enumerative), &testing()).unwrap().unwrap();
        assert_eq!(r.rhs.node(r.rhs.root().unwrap()).const_value(), Some(0));
    }

    #[test]
    fn bounded2_finds_nothing_for_times_three() {
        let c = cand(1, 8, |g, v| {
            let one = g.constant(1, 8);
            let s = g.binop(BinOp::Shl, v[0], one);
            g.binop(BinOp::Add, s, v[0])
        });
        assert_eq!(c.lhs_cost, 5);
        assert!(best_replacement(&c, &cfg(Mode::Bounded2), &testing()).unwrap().is_none());
    }

    #[test]
    fn zero_timeout_is_a_timeout() {
        let c = cand(1, 32, |g, v| g.binop(BinOp::Sub, v[0], v[0]));
        let cfg = SynthConfig::new(Mode::Enumerative).with_timeout(Duration::ZERO);
        assert_eq!(best_replacement(&c, &cfg, &testing()).unwrap_err(), SynthError::Timeout);
    }

    #[test]
    fn cegis_examples() {
        let verifiers: Vec<Verifier> = std::iter::once(testing()).chain(smt()).collect();
        for v in &verifiers {
            // select(a, b, eq(a, a)) -> a
            let c = cand(2, 32, |g, x| {
                let e = g.binop(BinOp::Eq, x[0], x[0]);
                g.select(x[0], x[1], e)
            });
            let r = best_replacement(&c, &cfg(Mode::Cegis), v).unwrap().unwrap();
            assert!(matches!(r.rhs.node(r.rhs.root().unwrap()).kind, NodeKind::Var(Source::Arg(0))));

            let c = cand(1, 32, |g, x| {
                let z = g.constant(0, 32);
                g.binop(BinOp::And, x[0], z)
            });
            let r = best_replacement(&c, &cfg(Mode::Cegis), v).unwrap().unwrap();
            assert_eq!(r.rhs.node(r.rhs.root().unwrap()).const_value(), Some(0));

            let c = cand(1, 8, |g, x| {
                let k1 = g.constant(0xFF, 8);
                let k2 = g.constant(0xFF, 8);
                let a = g.binop(BinOp::And, x[0], k1);
                let b = g.binop(BinOp::And, x[0], k2);
                g.binop(BinOp::Or, a, b)
            });
            let r = best_replacement(&c, &cfg(Mode::Cegis), v).unwrap().unwrap();
            assert!(exhaustive_equal(&c.graph, &r.rhs, 1));
            assert!(r.rhs_cost < c.lhs_cost);
        }
    }

    #[test]
    fn cegis_solves_constants_outside_the_pool() {
        // ((v0 | 0xFFFF) ^ 0xF0) & 0xFF == 0x0F; 0x0F is neither in the
        // pool nor in the LHS, so only the lone-constant template finds it.
        let c = cand(1, 32, |g, x| {
            let k1 = g.constant(0xFFFF, 32);
            let k2 = g.constant(0xF0, 32);
            let k3 = g.constant(0xFF, 32);
            let o = g.binop(BinOp::Or, x[0], k1);
            let e = g.binop(BinOp::Xor, o, k2);
            g.binop(BinOp::And, e, k3)
        });
        let r = best_replacement(&c, &cfg(Mode::Cegis), &testing()).unwrap().unwrap();
        assert_eq!(r.rhs.node(r.rhs.root().unwrap()).const_value(), Some(0x0F));
        let e = best_replacement(&c, &cfg(Mode::Enumerative), &testing());
        assert!(!matches!(e, Ok(Some(ref r)) if r.rhs_cost == 1));
    }

    #[test]
    fn rhs_never_traps_and_is_deterministic() {
        let c = cand(2, 32, |g, x| {
            let a = g.binop(BinOp::Sub, x[0], x[1]);
            let b = g.binop(BinOp::Add, a, x[1]);
            let z = g.constant(0, 32);
            g.binop(BinOp::Or, b, z)
        });
        let a = best_replacement(&c, &cfg(Mode::Enumerative), &testing()).unwrap().unwrap();
        let b = best_replacement(&c, &cfg(Mode::Enumerative), &testing()).unwrap().unwrap();
        assert_eq!(a.rhs, b.rhs);
        assert_eq!(a.rhs_cost, 1);
        assert!(a.rhs.nodes().iter().all(|n| !matches!(n.kind, NodeKind::Opaque(_))));
    }
}
