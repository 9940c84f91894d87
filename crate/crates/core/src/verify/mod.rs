//! Equivalence checking of dataflow fragments.

pub mod eval;
pub mod smt;
pub mod testing;

pub use eval::{apply_binop, apply_trapping, apply_unop, eval_all, eval_node, EvalError, TestVector};
pub use smt::{emit_smt, verify_smt, SmtError, SolverConfig};
pub use testing::{corner_values, corner_vectors, random_vectors, verify_testing};

use crate::dataflow::DfGraph;

/// Random vectors used by the testing verifier on top of the corner set.
pub const DEFAULT_RANDOM_VECTORS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Proven,
    Refuted(TestVector),
    PassedTests(usize),
    Unknown(String),
}

impl Verdict {
    /// Whether a replacement with this verdict may be applied. Test-only
    /// verdicts count only in probabilistic mode.
    pub fn accepts(&self, probabilistic: bool) -> bool {
        match self {
            Verdict::Proven => true,
            Verdict::PassedTests(_) => probabilistic,
            _ => false,
        }
    }
}

/// Which oracle decides equivalence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verifier {
    Smt(SolverConfig),
    Testing { n_random: usize, seed: u64 },
}

impl Verifier {
    pub fn testing(seed: u64) -> Self {
        Verifier::Testing { n_random: DEFAULT_RANDOM_VECTORS, seed }
    }

    pub fn verify(&self, lhs: &DfGraph, rhs: &DfGraph) -> Verdict {
        match self {
            Verifier::Smt(sc) => verify_smt(lhs, rhs, sc),
            Verifier::Testing { n_random, seed } => verify_testing(lhs, rhs, *n_random, *seed),
        }
    }

    pub fn is_sound(&self) -> bool {
        matches!(self, Verifier::Smt(_))
    }
}
