use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wasm_superopt::dataflow::{lift_function, FuncContext, Segment};
use wasm_superopt::driver::corpus::TestFile;
use wasm_superopt::driver::{differential_check, run_corpus, superoptimize_module, PipelineConfig, TestStatus};
use wasm_superopt::interp::DEFAULT_FOLD_FUEL;
use wasm_superopt::synth::Mode;
use wasm_superopt::verify::SolverConfig;
use wasm_superopt::wasm::{ModuleInfo, WasmModule};

#[derive(Parser)]
#[command(name = "wasm-superopt", version, about = "Superoptimizer for integer WebAssembly code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Superoptimize one module.
    Opt {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run every entry of a corpus directory and report the best configuration per entry.
    Bench {
        dir: PathBuf,
        /// Shorthand for `--mode all`.
        #[arg(long)]
        all_modes: bool,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Compare two modules on a JSON test file.
    Diff {
        original: PathBuf,
        optimized: PathBuf,
        tests: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FOLD_FUEL)]
        fuel: u64,
    },
    /// Print the dataflow graphs of every straight-line region.
    DumpIr { input: PathBuf },
}

#[derive(Args)]
struct PipelineArgs {
    /// constants, max2, cegis, enumerative or all
    #[arg(long, default_value = "enumerative")]
    mode: String,
    /// Per-candidate synthesis timeout in seconds.
    #[arg(long, default_value_t = 5.0)]
    timeout: f64,
    /// SMT solver command; `{timeout_ms}` and `{timeout}` are substituted.
    #[arg(long, env = "WASM_SUPEROPT_SOLVER")]
    solver: Option<String>,
    /// Accept replacements that pass random and corner-case testing only.
    #[arg(long)]
    probabilistic: bool,
    #[arg(long, default_value_t = DEFAULT_FOLD_FUEL)]
    fuel: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the lifted graphs to stderr before optimizing.
    #[arg(long)]
    dump_ir: bool,
}

impl PipelineArgs {
    fn config(&self, all_modes: bool) -> Result<PipelineConfig> {
        let modes = if all_modes || self.mode == "all" {
            Mode::ALL.to_vec()
        } else {
            match Mode::parse(&self.mode) {
                Some(m) => vec![m],
                None => bail!("unknown mode `{}` (expected constants, max2, cegis, enumerative or all)", self.mode),
            }
        };
        if !(self.timeout >= 0.0 && self.timeout.is_finite()) {
            bail!("--timeout must be a non-negative number of seconds");
        }
        let cfg = PipelineConfig {
            modes,
            per_candidate_timeout: Duration::from_secs_f64(self.timeout),
            solver: self.solver.as_ref().map(|s| SolverConfig::new(s.clone())),
            fold_fuel: self.fuel,
            probabilistic: self.probabilistic,
            report_path: self.report.clone(),
            seed: self.seed,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_module(path: &Path) -> Result<WasmModule> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    WasmModule::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn dump_ir(m: &WasmModule) -> Result<String> {
    let info = ModuleInfo::parse(m)?;
    let mut out = String::new();
    for (i, body) in m.bodies().iter().enumerate() {
        let func = info.imported_funcs + i as u32;
        let name = info.export_name(func).map(|n| format!(" ({n})")).unwrap_or_default();
        out += &format!("func {func}{name}\n");
        let Some(locals) = info.all_locals(m, i) else { continue };
        match lift_function(body, FuncContext { locals: &locals, info: &info }) {
            Ok(lifted) => {
                for seg in &lifted.segments {
                    if let Segment::Region { range, graph } = seg {
                        out += &format!("  region {}..{}\n", range.start, range.end);
                        for line in graph.dump().lines() {
                            out += &format!("    {line}\n");
                        }
                    }
                }
            }
            Err(e) => out += &format!("  not lifted: {e}\n"),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Opt { input, output, pipeline } => {
            let cfg = pipeline.config(false)?;
            let m = read_module(&input)?;
            if pipeline.dump_ir {
                eprint!("{}", dump_ir(&m)?);
            }
            let (out, report) = superoptimize_module(&m, &cfg)?;
            if let Some(path) = &output {
                std::fs::write(path, out.encode()?).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = &cfg.report_path {
                std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "{}: {} -> {} instructions ({:.1}% smaller), {} replacements applied [{}]",
                input.display(),
                report.instructions_before,
                report.instructions_after,
                100.0 * (1.0 - report.relative_size),
                report.replacements_applied(),
                report.config,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { dir, all_modes, pipeline } => {
            let cfg = pipeline.config(all_modes)?;
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let report = run_corpus(&dir, &cfg);
            if let Some(path) = &cfg.report_path {
                std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", report.table());
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            let failed = report.rows.iter().flat_map(|r| &r.runs).any(|run| run.tests_failed > 0);
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Diff { original, optimized, tests, fuel } => {
            let a = read_module(&original)?;
            let b = read_module(&optimized)?;
            let text = std::fs::read_to_string(&tests).with_context(|| format!("reading {}", tests.display()))?;
            let file: TestFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", tests.display()))?;
            let results = differential_check(&a, &b, &file.tests, fuel);
            let mut failed = false;
            for r in &results {
                let status = match &r.status {
                    TestStatus::Pass => "pass".to_string(),
                    TestStatus::Skipped(why) => format!("skipped ({why})"),
                    TestStatus::Fail(why) => {
                        failed = true;
                        format!("FAIL ({why})")
                    }
                };
                println!("{}: {status}", r.export);
            }
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::DumpIr { input } => {
            print!("{}", dump_ir(&read_module(&input)?)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
