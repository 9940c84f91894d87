//! JSON-serializable run reports.

use std::time::Duration;

use serde::Serialize;

use super::PipelineConfig;
use crate::synth::{Mode, Replacement};
use crate::verify::Verdict;
use crate::wasm::WasmModule;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionReport {
    pub function: u32,
    pub name: Option<String>,
    pub instructions_before: usize,
    pub instructions_after: usize,
    pub candidates_found: usize,
    pub replacements_proven: usize,
    pub replacements_applied: usize,
    pub replacements_discarded: usize,
    pub timeouts: usize,
    pub folded: bool,
    /// Why the function was left untouched without being analysed.
    pub skipped: Option<String>,
    pub elapsed_ms: u64,
}

impl FunctionReport {
    pub fn new(function: u32, name: Option<String>, before: usize) -> Self {
        FunctionReport {
            function,
            name,
            instructions_before: before,
            instructions_after: before,
            candidates_found: 0,
            replacements_proven: 0,
            replacements_applied: 0,
            replacements_discarded: 0,
            timeouts: 0,
            folded: false,
            skipped: None,
            elapsed_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplacementRecord {
    pub function: u32,
    pub root: u32,
    pub engine: Mode,
    pub lhs_cost: usize,
    pub rhs_cost: usize,
    pub verdict: String,
    pub lhs: String,
    pub rhs: String,
    pub applied: bool,
}

impl ReplacementRecord {
    pub fn new(function: u32, r: &Replacement, applied: bool) -> Self {
        ReplacementRecord {
            function,
            root: r.candidate.root.0,
            engine: r.engine,
            lhs_cost: r.candidate.lhs_cost,
            rhs_cost: r.rhs_cost,
            verdict: match &r.verdict {
                Verdict::Proven => "proven".into(),
                Verdict::PassedTests(n) => format!("passed_tests({n})"),
                Verdict::Refuted(_) => "refuted".into(),
                Verdict::Unknown(why) => format!("unknown({why})"),
            },
            lhs: r.candidate.graph.dump(),
            rhs: r.rhs.dump(),
            applied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleReport {
    pub config: Mode,
    pub seed: u64,
    pub solver: Option<String>,
    pub probabilistic: bool,
    pub instructions_before: usize,
    pub instructions_after: usize,
    pub relative_size: f64,
    pub code_section_bytes_before: usize,
    pub code_section_bytes_after: usize,
    pub functions: Vec<FunctionReport>,
    pub replacements: Vec<ReplacementRecord>,
    pub elapsed_ms: u64,
}

impl ModuleReport {
    pub fn new(
        before: &WasmModule,
        after: &WasmModule,
        mode: Mode,
        cfg: &PipelineConfig,
        functions: Vec<FunctionReport>,
        replacements: Vec<ReplacementRecord>,
        elapsed: Duration,
    ) -> Self {
        let ib = before.count_instructions();
        let ia = after.count_instructions();
        ModuleReport {
            config: mode,
            seed: cfg.seed,
            solver: cfg.solver.as_ref().map(|s| s.identity()),
            probabilistic: cfg.probabilistic,
            instructions_before: ib,
            instructions_after: ia,
            relative_size: if ib == 0 { 1.0 } else { ia as f64 / ib as f64 },
            code_section_bytes_before: before.code_section_size(),
            code_section_bytes_after: after.code_section_size(),
            functions,
            replacements,
            elapsed_ms: elapsed.as_millis() as u64,
        }
    }

    pub fn replacements_applied(&self) -> usize {
        self.functions.iter().map(|f| f.replacements_applied).sum()
    }

    pub fn replacements_proven(&self) -> usize {
        self.functions.iter().map(|f| f.replacements_proven).sum()
    }

    pub fn replacements_discarded(&self) -> usize {
        self.functions.iter().map(|f| f.replacements_discarded).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A report as JSON with every `elapsed_ms` field removed, for comparing
/// runs.
pub fn without_timings<T: Serialize>(report: &T) -> serde_json::Value {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("elapsed_ms");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(report).expect("report serializes");
    strip(&mut v);
    v
}
