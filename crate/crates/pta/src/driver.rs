//! Command-line driver: argument parsing, pipeline wiring, exit codes.
//!
//! Verbs:
//!
//! * `analyze` — parse, validate, solve the selected analysis, answer a
//!   query script, and write a canonical dump. An existing dump whose
//!   provenance header matches the module and configuration is reused
//!   untouched.
//! * `gen` — emit a seeded random module to stdout.
//! * `interpret` — concretely execute a deterministic module and print
//!   its trace facts.
//! * `diff` — compare two dumps for equality or per-variable subset.
//! * `bench` — time solver configurations over a corpus directory and
//!   emit CSV with the naive strategy as the baseline.
//!
//! Exit codes: 0 success, 1 diagnostics (bad input, bad flags, unclean
//! diff), 2 resource cap hit (propagation, clone, or interpreter budget),
//! 3 internal invariant violation.

use crate::andersen::{
    solve, CycleMode, OfflineMode, SolveError, SolverConfig, Strategy, WorklistKind,
};
use crate::constraints::generate;
use crate::dump;
use crate::generate::{generate_program, GenConfig};
use crate::interp::{run as interpret_module, Boundary, InterpConfig, RunEnd};
use crate::ir::{parse_module, validate, Diagnostic, InstrKind, PointerModule, Severity,
    ValidationConfig, MAX_FIELD};
use crate::ptset::SetBackendKind;
use crate::query::{run_script, AnalysisKind, AnalysisResult};
use crate::sensitivity::flow;
use crate::sensitivity::fscs::solve_fscs;
use crate::sensitivity::kcfa::{solve_kcfa, KcfaConfig, KcfaError};
use crate::steensgaard::solve_steensgaard;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Largest supported context depth per analysis.
pub const MAX_K_KCFA: usize = 3;
pub const MAX_K_FSCS: usize = 2;

#[derive(Parser)]
#[command(name = "pta", version, about = "Pointer analyses over a miniature pointer IR")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Solve an analysis, answer queries, and write a canonical dump.
    Analyze(AnalyzeArgs),
    /// Emit a seeded random module to stdout.
    Gen(GenArgs),
    /// Concretely execute a deterministic module and print trace facts.
    Interpret(InterpretArgs),
    /// Compare two dumps.
    Diff(DiffArgs),
    /// Benchmark solver configurations over a corpus directory.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisFlag {
    Fici,
    Steens,
    Kcfa,
    Fs,
    Fscs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SolverFlag {
    Naive,
    Wave,
    Deep,
    Diff,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum WorklistFlag {
    Fifo,
    Lifo,
    Lrf,
    #[value(name = "2lrf")]
    TwoLrf,
    Topo,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OfflineFlag {
    None,
    Hvn,
    Hu,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CyclesFlag {
    None,
    Lcd,
    Hcd,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PtsFlag {
    Bitvec,
    Sorted,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Module source file.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub analysis: AnalysisFlag,
    /// Context depth; required by kcfa (at most 3) and fscs (at most 2).
    #[arg(long)]
    pub k: Option<usize>,
    /// Propagation strategy (inclusion analyses only).
    #[arg(long, value_enum)]
    pub solver: Option<SolverFlag>,
    /// Worklist order (inclusion analyses only).
    #[arg(long, value_enum)]
    pub worklist: Option<WorklistFlag>,
    /// Offline variable substitution (inclusion analyses only).
    #[arg(long, value_enum)]
    pub offline: Option<OfflineFlag>,
    /// Online cycle elimination (inclusion analyses only).
    #[arg(long, value_enum)]
    pub cycles: Option<CyclesFlag>,
    /// Points-to set backend (inclusion analyses only).
    #[arg(long, value_enum)]
    pub pts: Option<PtsFlag>,
    /// Query script; answers go to stdout, one line per query.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Dump file; reused untouched when its provenance header matches.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Propagation budget (inclusion analyses only).
    #[arg(long)]
    pub max_props: Option<u64>,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Module-level globals.
    #[arg(long, default_value_t = 2)]
    pub globals: usize,
    /// Total functions including main.
    #[arg(long, default_value_t = 3)]
    pub funcs: usize,
    /// Local variable pool per function.
    #[arg(long, default_value_t = 8)]
    pub vars: usize,
    /// Blocks per function.
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    /// Maximum non-terminator instructions per block.
    #[arg(long, default_value_t = 6)]
    pub instrs: usize,
    /// Field offsets are drawn from 0..=max-field.
    #[arg(long, default_value_t = 2)]
    pub max_field: u32,
    /// Single-target branches only, so execution is deterministic.
    #[arg(long)]
    pub deterministic: bool,
    /// Allow call cycles.
    #[arg(long)]
    pub recursion: bool,
}

#[derive(Args)]
pub struct InterpretArgs {
    /// Deterministic module source file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step budget before giving up.
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeFlag {
    Equal,
    Subset,
}

#[derive(Args)]
pub struct DiffArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "equal")]
    pub mode: ModeFlag,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Directory of .pir modules.
    pub corpus: PathBuf,
    /// Comma-separated strategies to time.
    #[arg(long, default_value = "naive,wave,deep,diff")]
    pub configs: String,
    /// Timed repetitions per (program, config); the median is reported.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
}

pub fn run(cli: Cli) -> i32 {
    match cli.cmd {
        Cmd::Analyze(a) => cmd_analyze(&a),
        Cmd::Gen(g) => cmd_gen(&g),
        Cmd::Interpret(i) => cmd_interpret(&i),
        Cmd::Diff(d) => cmd_diff(&d),
        Cmd::Bench(b) => cmd_bench(&b),
    }
}

fn print_diags(path: &Path, diags: &[Diagnostic]) -> bool {
    let mut fatal = false;
    for d in diags {
        let sev = match d.severity {
            Severity::Error => {
                fatal = true;
                "error"
            }
            Severity::Warning => "warning",
        };
        eprintln!("{}:{}:{}: {sev}: {}", path.display(), d.line, d.col, d.message);
    }
    fatal
}

fn load_module(path: &Path) -> Result<(String, PointerModule), i32> {
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Err(EXIT_DIAGNOSTICS);
        }
    };
    let m = match parse_module(&src) {
        Ok(m) => m,
        Err(diags) => {
            print_diags(path, &diags);
            return Err(EXIT_DIAGNOSTICS);
        }
    };
    if print_diags(path, &validate(&m, &ValidationConfig::default())) {
        return Err(EXIT_DIAGNOSTICS);
    }
    Ok((src, m))
}

/// Resolve the solver flags into a `SolverConfig`.
fn solver_config(a: &AnalyzeArgs) -> SolverConfig {
    SolverConfig {
        offline: match a.offline.unwrap_or(OfflineFlag::None) {
            OfflineFlag::None => OfflineMode::None,
            OfflineFlag::Hvn => OfflineMode::Hvn,
            OfflineFlag::Hu => OfflineMode::Hu,
        },
        cycles: match a.cycles.unwrap_or(CyclesFlag::None) {
            CyclesFlag::None => CycleMode::None,
            CyclesFlag::Lcd => CycleMode::Lcd,
            CyclesFlag::Hcd => CycleMode::Hcd,
            CyclesFlag::Both => CycleMode::Both,
        },
        strategy: match a.solver.unwrap_or(SolverFlag::Naive) {
            SolverFlag::Naive => Strategy::Naive,
            SolverFlag::Wave => Strategy::Wave,
            SolverFlag::Deep => Strategy::Deep,
            SolverFlag::Diff => Strategy::Diff,
        },
        worklist: match a.worklist.unwrap_or(WorklistFlag::Fifo) {
            WorklistFlag::Fifo => WorklistKind::Fifo,
            WorklistFlag::Lifo => WorklistKind::Lifo,
            WorklistFlag::Lrf => WorklistKind::Lrf,
            WorklistFlag::TwoLrf => WorklistKind::TwoLrf,
            WorklistFlag::Topo => WorklistKind::Topo,
        },
        backend: match a.pts.unwrap_or(PtsFlag::Sorted) {
            PtsFlag::Bitvec => SetBackendKind::SparseBitVector,
            PtsFlag::Sorted => SetBackendKind::SortedVector,
        },
        max_propagations: a.max_props.unwrap_or(SolverConfig::default().max_propagations),
        ..SolverConfig::default()
    }
}

/// Check flag combinations and name the analysis, or say what is wrong.
fn plan_analysis(a: &AnalyzeArgs) -> Result<AnalysisKind, String> {
    let kind = match a.analysis {
        AnalysisFlag::Fici => AnalysisKind::Fici,
        AnalysisFlag::Steens => AnalysisKind::Steens,
        AnalysisFlag::Kcfa => {
            let k = a.k.ok_or("--analysis kcfa requires --k")?;
            if k > MAX_K_KCFA {
                return Err(format!("--k {k} exceeds the kcfa cap of {MAX_K_KCFA}"));
            }
            AnalysisKind::Kcfa { k }
        }
        AnalysisFlag::Fs => AnalysisKind::Fs,
        AnalysisFlag::Fscs => {
            let k = a.k.ok_or("--analysis fscs requires --k")?;
            if k > MAX_K_FSCS {
                return Err(format!("--k {k} exceeds the fscs cap of {MAX_K_FSCS}"));
            }
            AnalysisKind::Fscs { k }
        }
    };
    if matches!(kind, AnalysisKind::Fici | AnalysisKind::Steens | AnalysisKind::Fs) && a.k.is_some()
    {
        return Err("--k applies only to kcfa and fscs".to_string());
    }
    let solver_flags = a.solver.is_some()
        || a.worklist.is_some()
        || a.offline.is_some()
        || a.cycles.is_some()
        || a.pts.is_some()
        || a.max_props.is_some();
    if solver_flags && !matches!(kind, AnalysisKind::Fici | AnalysisKind::Kcfa { .. }) {
        return Err(
            "--solver/--worklist/--offline/--cycles/--pts/--max-props apply only to the \
             inclusion analyses (fici, kcfa)"
                .to_string(),
        );
    }
    Ok(kind)
}

/// Canonical configuration line recorded in dump provenance.
fn config_line(kind: &AnalysisKind, scfg: &SolverConfig) -> String {
    match kind {
        AnalysisKind::Fici | AnalysisKind::Kcfa { .. } => {
            format!("{}; max_props={}", scfg.summary(), scfg.max_propagations)
        }
        AnalysisKind::Steens => "unification".to_string(),
        AnalysisKind::Fs | AnalysisKind::Fscs { .. } => "dense".to_string(),
    }
}

fn resource_exit(msg: impl std::fmt::Display) -> i32 {
    eprintln!("resource cap: {msg}");
    EXIT_RESOURCE
}

fn cmd_analyze(a: &AnalyzeArgs) -> i32 {
    let kind = match plan_analysis(a) {
        Ok(k) => k,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_DIAGNOSTICS;
        }
    };
    let (src, m) = match load_module(&a.input) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let scfg = solver_config(a);
    let config = config_line(&kind, &scfg);
    let meta = dump::meta_section(
        &kind.to_string(),
        &config,
        dump::granularity_of(&kind),
        &dump::module_sha256(&src),
    );

    // Provenance cache: an existing dump for this exact (module, config)
    // answers the run unless queries are requested.
    if let (Some(path), None) = (&a.dump, &a.queries) {
        if let Ok(existing) = std::fs::read_to_string(path) {
            if dump::cache_hit(&existing, &meta) {
                eprintln!("{}: reused (provenance match)", path.display());
                return EXIT_OK;
            }
        }
    }

    let sys = generate(&m, MAX_FIELD);
    let r = match kind {
        AnalysisKind::Fici => match solve(&sys, &scfg) {
            Ok(sol) => AnalysisResult::from_inclusion(&m, sol),
            Err(SolveError::PropagationLimit { limit, .. }) => {
                return resource_exit(format!("propagation limit {limit}"))
            }
        },
        AnalysisKind::Steens => AnalysisResult::from_unification(&m, solve_steensgaard(&sys)),
        AnalysisKind::Kcfa { k } => {
            let kcfg = KcfaConfig { k, solver: scfg.clone(), ..KcfaConfig::default() };
            match solve_kcfa(&m, &sys, &kcfg) {
                Ok(sol) => AnalysisResult::from_contextual(&m, sol),
                Err(e @ (KcfaError::CloneBudget { .. } | KcfaError::Solve(_))) => {
                    return resource_exit(e)
                }
            }
        }
        AnalysisKind::Fs | AnalysisKind::Fscs { .. } => {
            let cg = match solve(&sys, &SolverConfig::reference()) {
                Ok(sol) => sol.call_graph,
                Err(SolveError::PropagationLimit { limit, .. }) => {
                    return resource_exit(format!("propagation limit {limit}"))
                }
            };
            let k = match kind {
                AnalysisKind::Fscs { k } => k,
                _ => 0,
            };
            match solve_fscs(&m, &sys, &cg, k, flow::DEFAULT_CLONE_BUDGET) {
                Ok(sol) => AnalysisResult::from_flow(&m, sol),
                Err(e) => return resource_exit(e),
            }
        }
    };
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }

    if let Some(qpath) = &a.queries {
        let script = match std::fs::read_to_string(qpath) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{}: {e}", qpath.display());
                return EXIT_DIAGNOSTICS;
            }
        };
        match run_script(&r, &script) {
            Ok(lines) => {
                for l in lines {
                    println!("{l}");
                }
            }
            Err(e) => {
                eprintln!("query error: {e}");
                return EXIT_DIAGNOSTICS;
            }
        }
    }

    if let Some(path) = &a.dump {
        let text = dump::render(&m, &r, &src, &config);
        if dump::parse_dump(&text).is_err() {
            eprintln!("internal: rendered dump does not round-trip");
            return EXIT_INVARIANT;
        }
        match std::fs::read_to_string(path) {
            Ok(existing) if existing == text => {
                eprintln!("{}: reused (provenance match)", path.display());
            }
            _ => {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("{}: {e}", path.display());
                    return EXIT_DIAGNOSTICS;
                }
            }
        }
    }

    eprintln!("{kind}: {}", r.stats_line());
    EXIT_OK
}

fn cmd_gen(g: &GenArgs) -> i32 {
    let cfg = GenConfig {
        seed: g.seed,
        globals: g.globals,
        funcs: g.funcs,
        vars_per_func: g.vars,
        blocks_per_func: g.blocks,
        instrs_per_block: g.instrs,
        max_field: g.max_field,
        deterministic: g.deterministic,
        allow_recursion: g.recursion,
        ..GenConfig::default()
    };
    let text = generate_program(&cfg);
    // The generator promises well-formed output; a failure here is a bug
    // in this tool, not in the user's input.
    let m = match parse_module(&text) {
        Ok(m) => m,
        Err(_) => {
            eprintln!("internal: generated module does not parse");
            return EXIT_INVARIANT;
        }
    };
    let diags = validate(&m, &ValidationConfig { max_field: g.max_field });
    if diags.iter().any(|d| d.severity == Severity::Error) {
        eprintln!("internal: generated module does not validate");
        return EXIT_INVARIANT;
    }
    print!("{text}");
    EXIT_OK
}

fn cmd_interpret(i: &InterpretArgs) -> i32 {
    let (_, m) = match load_module(&i.input) {
        Ok(x) => x,
        Err(code) => return code,
    };
    for instr in m.instrs() {
        if let InstrKind::Br { targets } = &instr.kind {
            if targets.len() > 1 {
                eprintln!(
                    "{}: nondeterministic branch at {}; interpret requires \
                     single-target branches",
                    i.input.display(),
                    m.instr_name(instr.id)
                );
                return EXIT_DIAGNOSTICS;
            }
        }
    }
    let sys = generate(&m, MAX_FIELD);
    let cfg = InterpConfig {
        seed: i.seed,
        max_steps: i.max_steps.unwrap_or(InterpConfig::default().max_steps),
        ..InterpConfig::default()
    };
    let trace = interpret_module(&m, &sys.table, &cfg);
    let b = |at: Boundary| match at {
        Boundary::In => "in",
        Boundary::Out => "out",
    };
    println!("[var_facts]");
    for f in &trace.var_facts {
        let obj = &sys.table.object(trace.instances[f.inst as usize].object).display;
        println!(
            "{}.{} {} -> {obj}#{} (inst {})",
            f.instr,
            b(f.at),
            sys.table.display(f.var),
            f.field,
            f.inst
        );
    }
    println!("[mem_facts]");
    for f in &trace.mem_facts {
        let obj = &sys.table.object(trace.instances[f.inst as usize].object).display;
        println!(
            "{}.{} (inst {})#{} -> {obj}#{} (inst {})",
            f.instr,
            b(f.at),
            f.cell_inst,
            f.cell_field,
            f.field,
            f.inst
        );
    }
    println!("[end]");
    println!("{:?} after {} steps", trace.end, trace.steps);
    match trace.end {
        RunEnd::StepBudget | RunEnd::HeapBudget(_) => EXIT_RESOURCE,
        _ => EXIT_OK,
    }
}

fn cmd_diff(d: &DiffArgs) -> i32 {
    let parse = |p: &Path| -> Result<dump::ParsedDump, i32> {
        let text = std::fs::read_to_string(p).map_err(|e| {
            eprintln!("{}: {e}", p.display());
            EXIT_DIAGNOSTICS
        })?;
        dump::parse_dump(&text).map_err(|e| {
            eprintln!("{}: {e}", p.display());
            EXIT_DIAGNOSTICS
        })
    };
    let (da, db) = match (parse(&d.a), parse(&d.b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    let mode = match d.mode {
        ModeFlag::Equal => dump::DiffMode::Equal,
        ModeFlag::Subset => dump::DiffMode::Subset,
    };
    let rep = dump::diff_dumps(&da, &db, mode);
    for line in &rep.mismatches {
        println!("{line}");
    }
    if rep.clean() {
        println!("clean");
        EXIT_OK
    } else {
        println!("{} mismatch(es)", rep.mismatches.len());
        EXIT_DIAGNOSTICS
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn parse_bench_configs(list: &str) -> Result<Vec<(String, SolverConfig)>, String> {
    list.split(',')
        .map(|name| {
            let strategy = match name.trim() {
                "naive" => Strategy::Naive,
                "wave" => Strategy::Wave,
                "deep" => Strategy::Deep,
                "diff" => Strategy::Diff,
                other => return Err(format!("unknown config `{other}`")),
            };
            Ok((
                name.trim().to_string(),
                SolverConfig { strategy, ..SolverConfig::default() },
            ))
        })
        .collect()
}

fn cmd_bench(b: &BenchArgs) -> i32 {
    let configs = match parse_bench_configs(&b.configs) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_DIAGNOSTICS;
        }
    };
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&b.corpus) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pir"))
            .collect(),
        Err(e) => {
            eprintln!("{}: {e}", b.corpus.display());
            return EXIT_DIAGNOSTICS;
        }
    };
    paths.sort();
    if paths.is_empty() {
        eprintln!("{}: no .pir modules", b.corpus.display());
        return EXIT_DIAGNOSTICS;
    }

    println!("program,config,propagations,millis,speedup_vs_naive");
    for path in &paths {
        let (_, m) = match load_module(path) {
            Ok(x) => x,
            Err(code) => return code,
        };
        let sys = generate(&m, MAX_FIELD);
        let name = path.file_stem().unwrap_or_default().to_string_lossy().to_string();

        // The naive baseline is always measured, listed or not.
        let measure = |cfg: &SolverConfig| -> Result<(u64, f64), i32> {
            if let Err(SolveError::PropagationLimit { limit, .. }) = solve(&sys, cfg) {
                return Err(resource_exit(format!("propagation limit {limit} on {name}")));
            }
            let mut times = Vec::with_capacity(b.runs);
            let mut props = 0;
            for _ in 0..b.runs.max(1) {
                let t = Instant::now();
                match solve(&sys, cfg) {
                    Ok(sol) => props = sol.stats.propagations,
                    Err(SolveError::PropagationLimit { limit, .. }) => {
                        return Err(resource_exit(format!(
                            "propagation limit {limit} on {name}"
                        )))
                    }
                }
                times.push(t.elapsed().as_secs_f64() * 1e3);
            }
            Ok((props, median(times)))
        };
        let naive = SolverConfig::default();
        let (_, naive_ms) = match measure(&naive) {
            Ok(x) => x,
            Err(code) => return code,
        };
        for (cname, cfg) in &configs {
            let (props, ms) = match measure(cfg) {
                Ok(x) => x,
                Err(code) => return code,
            };
            let ratio = naive_ms / ms.max(1e-6);
            println!("{name},{cname},{props},{ms:.3},{ratio:.2}");
        }
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analyze_args(analysis: AnalysisFlag) -> AnalyzeArgs {
        AnalyzeArgs {
            input: PathBuf::from("x.pir"),
            analysis,
            k: None,
            solver: None,
            worklist: None,
            offline: None,
            cycles: None,
            pts: None,
            queries: None,
            dump: None,
            max_props: None,
        }
    }

    #[test]
    fn flag_combinations_are_validated() {
        assert_eq!(plan_analysis(&analyze_args(AnalysisFlag::Fici)), Ok(AnalysisKind::Fici));

        let mut a = analyze_args(AnalysisFlag::Kcfa);
        assert!(plan_analysis(&a).unwrap_err().contains("requires --k"));
        a.k = Some(2);
        assert_eq!(plan_analysis(&a), Ok(AnalysisKind::Kcfa { k: 2 }));
        a.k = Some(4);
        assert!(plan_analysis(&a).unwrap_err().contains("cap"));

        let mut a = analyze_args(AnalysisFlag::Fscs);
        a.k = Some(3);
        assert!(plan_analysis(&a).unwrap_err().contains("cap"));
        a.k = Some(2);
        assert_eq!(plan_analysis(&a), Ok(AnalysisKind::Fscs { k: 2 }));

        let mut a = analyze_args(AnalysisFlag::Fici);
        a.k = Some(1);
        assert!(plan_analysis(&a).unwrap_err().contains("--k"));

        let mut a = analyze_args(AnalysisFlag::Steens);
        a.solver = Some(SolverFlag::Wave);
        assert!(plan_analysis(&a).unwrap_err().contains("inclusion"));
        let mut a = analyze_args(AnalysisFlag::Fs);
        a.max_props = Some(10);
        assert!(plan_analysis(&a).unwrap_err().contains("inclusion"));
    }

    #[test]
    fn solver_flags_map_onto_the_config() {
        let mut a = analyze_args(AnalysisFlag::Fici);
        a.solver = Some(SolverFlag::Diff);
        a.worklist = Some(WorklistFlag::TwoLrf);
        a.offline = Some(OfflineFlag::Hvn);
        a.cycles = Some(CyclesFlag::Both);
        a.pts = Some(PtsFlag::Bitvec);
        a.max_props = Some(123);
        let cfg = solver_config(&a);
        assert_eq!(cfg.summary(), "hvn/both/diff/2lrf/bitvec");
        assert_eq!(cfg.max_propagations, 123);
        assert_eq!(solver_config(&analyze_args(AnalysisFlag::Fici)).summary(), "none/none/naive/fifo/sorted");
    }

    #[test]
    fn bench_config_lists_parse() {
        let cs = parse_bench_configs("naive, wave,diff").unwrap();
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[1].0, "wave");
        assert!(parse_bench_configs("naive,zippy").is_err());
    }

    #[test]
    fn medians_split_odd_and_even_runs() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(Vec::new()), 0.0);
    }
}
