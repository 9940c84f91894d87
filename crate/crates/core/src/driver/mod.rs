//! The end-to-end pipeline: fold, lift, harvest, synthesize, apply, lower,
//! and the regression guard.

pub mod corpus;
pub mod report;

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub use corpus::{differential_check, load_corpus, run_corpus, CorpusEntry, CorpusReport, TestCase, TestStatus};
pub use report::{FunctionReport, ModuleReport, ReplacementRecord};

use crate::dataflow::{
    lift_function, lower_graph_with, substitute_all, DfGraph, FuncContext, LiftedFunction, Rewrite, ScratchLocals,
    Segment,
};
use crate::interp::{constfold_pure_function, DEFAULT_FOLD_FUEL};
use crate::synth::{
    best_replacement, harvest_candidates, Mode, Replacement, SynthConfig, SynthError, DEFAULT_MAX_CONE_NODES,
};
use crate::verify::{SolverConfig, Verifier};
use crate::wasm::{count_instructions, FunctionBody, Instr, ModuleInfo, ValType, WasmModule};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("no SMT solver configured; pass --solver (or set WASM_SUPEROPT_SOLVER) or run with --probabilistic")]
    SolverRequired,
    #[error("no synthesis mode selected")]
    NoModes,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub modes: Vec<Mode>,
    pub per_candidate_timeout: Duration,
    pub solver: Option<SolverConfig>,
    pub fold_fuel: u64,
    pub probabilistic: bool,
    pub report_path: Option<PathBuf>,
    pub seed: u64,
    pub max_cone_nodes: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            modes: vec![Mode::Enumerative],
            per_candidate_timeout: Duration::from_secs(5),
            solver: None,
            fold_fuel: DEFAULT_FOLD_FUEL,
            probabilistic: false,
            report_path: None,
            seed: 0,
            max_cone_nodes: DEFAULT_MAX_CONE_NODES,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modes.is_empty() {
            return Err(ConfigError::NoModes);
        }
        if !self.probabilistic && self.solver.is_none() {
            return Err(ConfigError::SolverRequired);
        }
        Ok(())
    }

    /// The solver when one is configured, otherwise the testing oracle.
    pub fn verifier(&self) -> Verifier {
        match &self.solver {
            Some(sc) => Verifier::Smt(sc.clone()),
            None => Verifier::testing(self.seed),
        }
    }

    pub fn synth_config(&self, mode: Mode) -> SynthConfig {
        SynthConfig::new(mode).with_timeout(self.per_candidate_timeout).with_seed(self.seed)
    }
}

/// Synthesis results keyed by (mode, LHS fragment); identical fragments are
/// common across regions and functions.
#[derive(Default)]
pub struct SynthCache {
    entries: HashMap<(Mode, DfGraph), Outcome>,
}

#[derive(Clone)]
enum Outcome {
    Found(Box<Replacement>),
    None,
    Timeout,
}

impl SynthCache {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Per-function working state.
struct FunctionRun<'a> {
    cfg: &'a PipelineConfig,
    mode: Mode,
    verifier: &'a Verifier,
    cache: &'a mut SynthCache,
    report: FunctionReport,
    records: Vec<ReplacementRecord>,
}

impl FunctionRun<'_> {
    fn synthesize(&mut self, g: &DfGraph) -> Vec<Replacement> {
        let mut found = vec![];
        let scfg = self.cfg.synth_config(self.mode);
        for c in harvest_candidates(g, self.cfg.max_cone_nodes) {
            self.report.candidates_found += 1;
            let key = (self.mode, c.graph.clone());
            let outcome = match self.cache.entries.get(&key) {
                Some(o) => o.clone(),
                None => {
                    let o = match best_replacement(&c, &scfg, self.verifier) {
                        Ok(Some(r)) => Outcome::Found(Box::new(r)),
                        Ok(None) => Outcome::None,
                        Err(SynthError::Timeout) => Outcome::Timeout,
                        Err(SynthError::VerifierUnavailable(e)) => {
                            log::warn!("verifier unavailable: {e}");
                            Outcome::None
                        }
                    };
                    self.cache.entries.insert(key, o.clone());
                    o
                }
            };
            match outcome {
                Outcome::Found(r) if r.verdict.accepts(self.cfg.probabilistic) => {
                    // Cached results carry the candidate they were found for;
                    // rebind to this one.
                    let mut r = *r;
                    r.candidate = c;
                    self.report.replacements_proven += 1;
                    found.push(r);
                }
                Outcome::Timeout => self.report.timeouts += 1,
                _ => {}
            }
        }
        found
    }

    /// Rewrite one region. Returns the new code only if it is strictly
    /// shorter than the original slice.
    fn region(
        &mut self,
        func: u32,
        graph: &DfGraph,
        original: &[Instr],
        scratch: &mut ScratchLocals,
    ) -> Option<Vec<Instr>> {
        let mut found = self.synthesize(graph);
        if found.is_empty() {
            return None;
        }
        found.sort_by_key(|r| (std::cmp::Reverse(r.savings()), r.candidate.root));
        let mut chosen: Vec<&Replacement> = vec![];
        for r in &found {
            if chosen.iter().all(|c| !c.candidate.overlaps(&r.candidate)) {
                chosen.push(r);
            }
        }
        let args: Vec<Vec<_>> =
            chosen.iter().map(|r| r.candidate.input_vars.iter().map(|&(n, _)| n).collect()).collect();
        let rewrites: Vec<Rewrite<'_>> =
            chosen.iter().zip(&args).map(|(r, a)| Rewrite { root: r.candidate.root, rhs: &r.rhs, args: a }).collect();
        let mut trial = scratch.clone();
        let code = substitute_all(graph, &rewrites).ok().and_then(|g| lower_graph_with(&g, &mut trial).ok());
        let accepted = matches!(&code, Some(c) if c.len() < original.len());
        for r in &chosen {
            self.records.push(ReplacementRecord::new(func, r, accepted));
        }
        if accepted {
            *scratch = trial;
            self.report.replacements_applied += chosen.len();
            code
        } else {
            self.report.replacements_discarded += chosen.len();
            None
        }
    }
}

/// Reassemble a body from lifted segments, using `rewritten[i]` in place of
/// region `i` when present.
pub fn assemble(
    body: &FunctionBody,
    lifted: &LiftedFunction,
    rewritten: &HashMap<usize, Vec<Instr>>,
    scratch: &[ValType],
) -> FunctionBody {
    let mut instrs = Vec::with_capacity(body.instrs().len());
    for (i, seg) in lifted.segments.iter().enumerate() {
        match rewritten.get(&i) {
            Some(code) => instrs.extend_from_slice(code),
            None => instrs.extend_from_slice(&body.instrs()[seg.range().clone()]),
        }
    }
    let mut locals = body.locals().to_vec();
    for &t in scratch {
        match locals.last_mut() {
            Some((n, last)) if *last == t => *n += 1,
            _ => locals.push((1, t)),
        }
    }
    FunctionBody::new(locals, instrs)
}

/// Lower every region of a function without substituting anything.
pub fn relower_function(m: &WasmModule, info: &ModuleInfo, body_index: usize) -> Option<FunctionBody> {
    let body = &m.bodies()[body_index];
    let locals = info.all_locals(m, body_index)?;
    let lifted = lift_function(body, FuncContext { locals: &locals, info }).ok()?;
    let mut scratch = ScratchLocals::new(locals.len() as u32);
    let mut rewritten = HashMap::new();
    for (i, seg) in lifted.segments.iter().enumerate() {
        if let Segment::Region { graph, .. } = seg {
            rewritten.insert(i, lower_graph_with(graph, &mut scratch).ok()?);
        }
    }
    Some(assemble(body, &lifted, &rewritten, scratch.types()))
}

/// Superoptimize every function of `m` with a single synthesis mode.
pub fn superoptimize_with(
    m: &WasmModule,
    mode: Mode,
    cfg: &PipelineConfig,
    cache: &mut SynthCache,
) -> Result<(WasmModule, ModuleReport), crate::wasm::DecodeError> {
    let started = Instant::now();
    let info = ModuleInfo::parse(m)?;
    let verifier = cfg.verifier();
    let mut out = m.clone();
    let mut functions = vec![];
    let mut records = vec![];

    for bi in 0..m.bodies().len() {
        let t0 = Instant::now();
        let func = info.imported_funcs + bi as u32;
        let body = &m.bodies()[bi];
        let before = count_instructions(body);
        let mut run = FunctionRun {
            cfg,
            mode,
            verifier: &verifier,
            cache,
            report: FunctionReport::new(func, info.export_name(func), before),
            records: vec![],
        };

        let mut new_body = None;
        if let Some(folded) = constfold_pure_function(m, func, cfg.fold_fuel) {
            if count_instructions(&folded) < before {
                run.report.folded = true;
                new_body = Some(folded);
            }
        }
        if new_body.is_none() {
            match info.all_locals(m, bi).ok_or("unknown function type".to_string()).and_then(|locals| {
                lift_function(body, FuncContext { locals: &locals, info: &info })
                    .map(|l| (l, locals.len()))
                    .map_err(|e| e.to_string())
            }) {
                Ok((lifted, nlocals)) => {
                    let mut scratch = ScratchLocals::new(nlocals as u32);
                    let mut rewritten = HashMap::new();
                    for (i, seg) in lifted.segments.iter().enumerate() {
                        if let Segment::Region { range, graph } = seg {
                            if let Some(code) = run.region(func, graph, &body.instrs()[range.clone()], &mut scratch) {
                                rewritten.insert(i, code);
                            }
                        }
                    }
                    if !rewritten.is_empty() {
                        new_body = Some(assemble(body, &lifted, &rewritten, scratch.types()));
                    }
                }
                Err(e) => run.report.skipped = Some(e),
            }
        }

        if let Some(nb) = new_body {
            let after = count_instructions(&nb);
            if after < before {
                run.report.instructions_after = after;
                out.code_mut().expect("module has bodies").replace_body(bi, nb);
            } else {
                // The function-level guard: never ship a longer body.
                let applied = std::mem::take(&mut run.report.replacements_applied);
                run.report.replacements_discarded += applied;
                run.report.folded = false;
                for r in &mut run.records {
                    r.applied = false;
                }
            }
        }
        run.report.elapsed_ms = t0.elapsed().as_millis() as u64;
        records.extend(run.records);
        functions.push(run.report);
    }

    let report = ModuleReport::new(m, &out, mode, cfg, functions, records, started.elapsed());
    Ok((out, report))
}

/// Run every configured mode and keep the best result (smallest relative
/// size; ties go to fewer applied replacements, then mode order).
pub fn superoptimize_module(
    m: &WasmModule,
    cfg: &PipelineConfig,
) -> Result<(WasmModule, ModuleReport), crate::wasm::DecodeError> {
    let mut cache = SynthCache::new();
    let mut best: Option<(WasmModule, ModuleReport)> = None;
    for &mode in &cfg.modes {
        let (om, rep) = superoptimize_with(m, mode, cfg, &mut cache)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                (rep.instructions_after, rep.replacements_applied()) < (b.instructions_after, b.replacements_applied())
            }
        };
        if better {
            best = Some((om, rep));
        }
    }
    Ok(best.expect("at least one mode"))
}
