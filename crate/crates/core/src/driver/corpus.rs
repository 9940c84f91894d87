//! Benchmark corpus: loading, running every configuration, and
//! differential checking of optimized modules.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::ModuleReport;
use super::{superoptimize_with, PipelineConfig, SynthCache};
use crate::interp::{Interpreter, Outcome, Trap, Value};
use crate::synth::Mode;
use crate::wasm::WasmModule;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Returned(Vec<Value>),
    Trapped(Trap),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub export: String,
    pub args: Vec<Value>,
    /// Absent for tests that cannot run here (e.g. they need memory).
    #[serde(default)]
    pub expect: Option<Expected>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TestFile {
    pub tests: Vec<TestCase>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub wasm: Vec<u8>,
    pub tests: Vec<TestCase>,
}

/// Entries `<name>.wasm` with tests in `<name>.json`, sorted by name.
/// Unreadable entries are reported and skipped.
pub fn load_corpus(dir: &Path) -> (Vec<CorpusEntry>, Vec<String>) {
    let mut entries = vec![];
    let mut errors = vec![];
    let mut paths: Vec<_> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(e) => return (entries, vec![format!("{}: {e}", dir.display())]),
    };
    paths.sort();
    for p in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "wasm")) {
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let wasm = match std::fs::read(&p) {
            Ok(b) => b,
            Err(e) => {
                errors.push(format!("{name}: {e}"));
                continue;
            }
        };
        let tests = match std::fs::read_to_string(p.with_extension("json")) {
            Ok(text) => match serde_json::from_str::<TestFile>(&text) {
                Ok(t) => t.tests,
                Err(e) => {
                    errors.push(format!("{name}: bad test file: {e}"));
                    continue;
                }
            },
            Err(_) => vec![],
        };
        entries.push(CorpusEntry { name, wasm, tests });
    }
    (entries, errors)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestResult {
    pub export: String,
    pub args: Vec<Value>,
    pub status: TestStatus,
}

fn run_one(interp: &Interpreter<'_>, t: &TestCase, fuel: u64) -> Result<Outcome, String> {
    let f = interp.info().exported_func(&t.export).ok_or_else(|| format!("no export `{}`", t.export))?;
    Ok(interp.exec(f, &t.args, fuel))
}

fn matches_expected(o: &Outcome, e: &Expected) -> bool {
    match (o, e) {
        (Outcome::Returned(a), Expected::Returned(b)) => a == b,
        (Outcome::Trapped(a), Expected::Trapped(b)) => a == b,
        _ => false,
    }
}

/// Run each test on both modules. A test passes when both outcomes are
/// identical (traps included) and match the expectation if one is given.
/// Anything the interpreter cannot execute is skipped.
pub fn differential_check(
    original: &WasmModule,
    optimized: &WasmModule,
    tests: &[TestCase],
    fuel: u64,
) -> Vec<TestResult> {
    let pair = Interpreter::new(original).and_then(|a| Interpreter::new(optimized).map(|b| (a, b)));
    tests
        .iter()
        .map(|t| {
            let status = match &pair {
                Err(e) => TestStatus::Fail(e.to_string()),
                Ok((a, b)) => match (run_one(a, t, fuel), run_one(b, t, fuel)) {
                    (Err(e), _) | (_, Err(e)) => TestStatus::Fail(e),
                    (Ok(Outcome::Unsupported(why)), _) | (_, Ok(Outcome::Unsupported(why))) => TestStatus::Skipped(why),
                    (Ok(x), Ok(y)) if x != y => TestStatus::Fail(format!("original {x:?}, optimized {y:?}")),
                    (Ok(x), Ok(_)) => match &t.expect {
                        Some(e) if !matches_expected(&x, e) => {
                            TestStatus::Fail(format!("expected {e:?}, both gave {x:?}"))
                        }
                        _ => TestStatus::Pass,
                    },
                },
            };
            TestResult { export: t.export.clone(), args: t.args.clone(), status }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigRun {
    pub report: ModuleReport,
    pub tests_passed: usize,
    pub tests_failed: usize,
    pub tests_skipped: usize,
    pub failures: Vec<TestResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusRow {
    pub name: String,
    pub best_config: Mode,
    pub instructions_before: usize,
    pub instructions_after: usize,
    pub relative_size: f64,
    pub replacements_applied: usize,
    pub runs: Vec<ConfigRun>,
}

impl CorpusRow {
    pub fn improved(&self) -> bool {
        self.instructions_after < self.instructions_before
    }

    pub fn best(&self) -> &ConfigRun {
        self.runs.iter().find(|r| r.report.config == self.best_config).expect("best run present")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub rows: Vec<CorpusRow>,
    pub improved: usize,
    pub unchanged: usize,
    pub regressed: usize,
    pub median_reduction: f64,
    pub errors: Vec<String>,
}

impl CorpusReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-entry relative sizes as an aligned text table.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let mut s = format!("{:<width$}  {:>7}  {:>7}  {:>8}  {}\n", "entry", "before", "after", "relative", "best");
        for r in &self.rows {
            s += &format!(
                "{:<width$}  {:>7}  {:>7}  {:>8.4}  {}\n",
                r.name, r.instructions_before, r.instructions_after, r.relative_size, r.best_config
            );
        }
        s += &format!(
            "improved {} / unchanged {} / regressed {}; median reduction {:.2}%\n",
            self.improved,
            self.unchanged,
            self.regressed,
            self.median_reduction * 100.0
        );
        s
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Run every configured mode on one entry.
pub fn run_entry(entry: &CorpusEntry, cfg: &PipelineConfig, cache: &mut SynthCache) -> Result<CorpusRow, String> {
    let m = WasmModule::decode(&entry.wasm).map_err(|e| format!("{}: {e}", entry.name))?;
    let mut runs = vec![];
    for &mode in &cfg.modes {
        let (out, report) = superoptimize_with(&m, mode, cfg, cache).map_err(|e| format!("{}: {e}", entry.name))?;
        let results = differential_check(&m, &out, &entry.tests, cfg.fold_fuel);
        let count = |f: fn(&TestStatus) -> bool| results.iter().filter(|r| f(&r.status)).count();
        runs.push(ConfigRun {
            report,
            tests_passed: count(|s| matches!(s, TestStatus::Pass)),
            tests_failed: count(|s| matches!(s, TestStatus::Fail(_))),
            tests_skipped: count(|s| matches!(s, TestStatus::Skipped(_))),
            failures: results.into_iter().filter(|r| matches!(r.status, TestStatus::Fail(_))).collect(),
        });
    }
    let best = runs
        .iter()
        .min_by(|a, b| {
            a.report
                .relative_size
                .total_cmp(&b.report.relative_size)
                .then(a.report.replacements_applied().cmp(&b.report.replacements_applied()))
        })
        .expect("at least one mode");
    Ok(CorpusRow {
        name: entry.name.clone(),
        best_config: best.report.config,
        instructions_before: best.report.instructions_before,
        instructions_after: best.report.instructions_after,
        relative_size: best.report.relative_size,
        replacements_applied: best.report.replacements_applied(),
        runs,
    })
}

/// Run every configuration on every entry of `dir` and keep the best per
/// entry.
pub fn run_corpus(dir: &Path, cfg: &PipelineConfig) -> CorpusReport {
    let (entries, mut errors) = load_corpus(dir);
    let mut cache = SynthCache::new();
    let mut rows = vec![];
    for e in &entries {
        match run_entry(e, cfg, &mut cache) {
            Ok(row) => rows.push(row),
            Err(err) => errors.push(err),
        }
    }
    let improved = rows.iter().filter(|r| r.instructions_after < r.instructions_before).count();
    let regressed = rows.iter().filter(|r| r.instructions_after > r.instructions_before).count();
    CorpusReport {
        improved,
        regressed,
        unchanged: rows.len() - improved - regressed,
        median_reduction: median(rows.iter().map(|r| 1.0 - r.relative_size).collect()),
        rows,
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_rows() {
        assert_eq!(median(vec![]), 0.0);
        assert_eq!(median(vec![0.25]), 0.25);
        assert_eq!(median(vec![0.3, 0.1, 0.2]), 0.2);
        assert_eq!(median(vec![0.4, 0.1, 0.2, 0.3]), 0.25);
    }

    #[test]
    fn test_file_format() {
        let t: TestFile = serde_json::from_str(
            r#"{"tests":[{"export":"f","args":[{"i32":1},{"i64":-2}],"expect":{"returned":[{"i32":3}]}},
                         {"export":"g","args":[],"expect":{"trapped":"div_zero"}},
                         {"export":"h","args":[]}]}"#,
        )
        .unwrap();
        assert_eq!(t.tests[0].args, vec![Value::I32(1), Value::I64(-2)]);
        assert_eq!(t.tests[1].expect, Some(Expected::Trapped(Trap::DivZero)));
        assert_eq!(t.tests[2].expect, None);
    }

    #[test]
    fn empty_directory_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_corpus(dir.path(), &PipelineConfig { probabilistic: true, ..Default::default() });
        assert!(r.rows.is_empty() && r.errors.is_empty());
        assert_eq!(r.median_reduction, 0.0);
    }
}
