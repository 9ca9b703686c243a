//! `tsro` command line: solve instances, generate benchmark families,
//! verify first-stage decisions, and run benchmark sweeps.
//!
//! Exit codes: 0 converged / verified feasible, 2 infeasible, 3 limit hit,
//! 4 inconclusive, 1 usage or I/O error.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tsro::adversary::{default_big_m, solve_tilde_z};
use tsro::backend::MipOptions;
use tsro::dbc::{dbc_solve, f2_oracle, F2Verdict, PartitionTree};
use tsro::driver::{ccg, ddbd, default_u0, CcgOracle, RunReport, Termination};
use tsro::generators::{capcover, loctran, lotsizing, LoctranParams};
use tsro::io::{load_instance, save_instance, save_report};
use tsro::reference::{candidate_count, exact_worst_case};
use tsro::{Error, Result, SolverOptions, TwoStageInstance};

#[derive(Parser)]
#[command(name = "tsro", version, about = "Two-stage adaptive robust linear optimization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance file with one of the algorithms.
    Solve(SolveArgs),
    /// Generate a benchmark instance and write it to a file.
    Generate(GenerateArgs),
    /// Check whether a first-stage decision is feasible for every scenario.
    Verify(VerifyArgs),
    /// Sweep seeds × algorithms over a family and emit a CSV summary.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    /// Column-and-constraint generation with the complementarity adversary.
    Ccg,
    /// CCG with the exact feasibility (ᾱ) oracle.
    CcgExact,
    /// Duality-driven Benders decomposition (F1 + F2).
    Ddbd,
    /// Standalone dual-basis-cut partition solver.
    Dbc,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Ccg => "ccg",
            Algorithm::CcgExact => "ccg-exact",
            Algorithm::Ddbd => "ddbd",
            Algorithm::Dbc => "dbc",
        }
    }
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Relative optimality gap target.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Wall-clock budget in seconds (0 disables the limit).
    #[arg(long)]
    time_limit: Option<f64>,
    /// Master-iteration cap.
    #[arg(long)]
    iter_limit: Option<usize>,
    /// Big-M multiplier for the adversary MIO.
    #[arg(long)]
    big_m_mult: Option<f64>,
    /// Seed for the starting-scenario draw.
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverFlags {
    fn options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(e) = self.epsilon {
            o.epsilon = e;
        }
        if let Some(t) = self.time_limit {
            o.time_limit = if t > 0.0 { Some(t) } else { None };
        }
        if let Some(k) = self.iter_limit {
            o.iter_limit = k;
        }
        if let Some(m) = self.big_m_mult {
            o.big_m_mult = m;
        }
        if let Some(s) = self.seed {
            o.seed = s;
        }
        o
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    #[command(flatten)]
    flags: SolverFlags,
    /// Write the full run report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the final partition tree listing (ddbd / dbc only).
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Loctran,
    Lotsizing,
    Capcover,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Facilities / sites N.
    #[arg(long)]
    size: usize,
    /// Customers L (loctran; defaults to N).
    #[arg(long)]
    customers: Option<usize>,
    /// Stock bound K (lotsizing).
    #[arg(long, default_value_t = 20.0)]
    cap: f64,
}

impl FamilyArgs {
    fn build(&self, seed: u64) -> Result<TwoStageInstance> {
        match self.family {
            Family::Loctran => loctran(
                self.size,
                self.customers.unwrap_or(self.size),
                seed,
                &LoctranParams::default(),
            ),
            Family::Lotsizing => lotsizing(self.size, seed, self.cap),
            Family::Capcover => capcover(self.size, seed),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// JSON file holding the first-stage vector, e.g. `[1.0, 0.0]`.
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Seed range `A..B` (half-open) or `A..=B`.
    #[arg(long)]
    seeds: String,
    /// Comma-separated list from {ccg, ccg-exact, ddbd, dbc}.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    algorithms: Vec<Algorithm>,
    #[command(flatten)]
    flags: SolverFlags,
    /// Concurrent instances (defaults to the rayon thread count).
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own help/version "errors" are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let run = match cli.cmd {
        Cmd::Solve(a) => solve_cmd(&a),
        Cmd::Generate(a) => generate_cmd(&a),
        Cmd::Verify(a) => verify_cmd(&a),
        Cmd::Benchmark(a) => benchmark_cmd(&a),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn exit_for(t: Termination) -> ExitCode {
    match t {
        Termination::Converged => ExitCode::from(0),
        Termination::InfeasibleProblem => ExitCode::from(2),
        Termination::TimeLimit | Termination::IterLimit => ExitCode::from(3),
        Termination::Inconclusive => ExitCode::from(4),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_algorithm(
    algorithm: Algorithm,
    inst: &TwoStageInstance,
    opts: &SolverOptions,
) -> Result<RunReport> {
    match algorithm {
        Algorithm::Ccg | Algorithm::CcgExact => {
            let u0 = default_u0(inst, opts.seed, opts)?;
            let oracle = if algorithm == Algorithm::Ccg {
                CcgOracle::TildeZ
            } else {
                CcgOracle::AlphaExact
            };
            ccg(inst, &u0, oracle, opts)
        }
        Algorithm::Ddbd => {
            let u0 = default_u0(inst, opts.seed, opts)?;
            ddbd(inst, &u0, opts)
        }
        Algorithm::Dbc => dbc_solve(inst, opts).map(|(_, _, report)| report),
    }
}

fn solve_cmd(args: &SolveArgs) -> Result<ExitCode> {
    let opts = args.flags.options();
    let inst = load_instance(&args.instance, &opts.tol)?;
    let report = run_algorithm(args.algorithm, &inst, &opts)?;

    println!("instance:    {}", inst.meta.name);
    println!("algorithm:   {}", report.algorithm);
    println!("termination: {:?}", report.termination);
    println!("value:       {}", report.value);
    println!("bounds:      lb {}  ub {}  gap {:.3e}", report.lb, report.ub, report.gap);
    println!(
        "iterations:  {} (F1 cuts {}, F2 calls {})",
        report.iterations, report.inner_iterations, report.outer_iterations
    );
    println!("time:        {:.3}s", report.seconds);
    if !report.x.is_empty() {
        println!("x:           {}", fmt_vec(&report.x));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.report {
        save_report(&report, path)?;
    }
    if let Some(path) = &args.dump_tree {
        match &report.tree_dump {
            Some(text) => std::fs::write(path, text)?,
            None => eprintln!("warning: {} builds no partition tree", report.algorithm),
        }
    }
    Ok(exit_for(report.termination))
}

fn generate_cmd(args: &GenerateArgs) -> Result<ExitCode> {
    let inst = args.family.build(args.seed)?;
    save_instance(&inst, &args.out)?;
    println!(
        "wrote {} ({}: n={}, m={}, r={}, l={})",
        args.out.display(),
        inst.meta.name,
        inst.n(),
        inst.m(),
        inst.r(),
        inst.l()
    );
    Ok(ExitCode::from(0))
}

/// Exact verdict when the vertex count fits the enumeration cap, otherwise
/// the F2 oracle. `Ok(None)` = inconclusive.
fn feasibility_verdict(
    inst: &TwoStageInstance,
    x: &[f64],
    opts: &SolverOptions,
) -> Result<Option<(bool, f64)>> {
    if x.len() != inst.n() {
        return Err(Error::InvalidInstance(vec![format!(
            "x has {} coordinates, instance has {}",
            x.len(),
            inst.n()
        )]));
    }
    if candidate_count(&inst.u_set) <= opts.vertex_candidate_limit as u128 {
        let (value, _) = exact_worst_case(inst, x, &opts.tol, opts.vertex_candidate_limit)?;
        return Ok(Some((value.is_finite(), value)));
    }
    let big_m = default_big_m(inst, opts.big_m_mult, &opts.tol)?;
    let mip = MipOptions { time_limit: opts.time_limit };
    let adv = solve_tilde_z(inst, x, big_m, &opts.tol, &mip)?;
    let mut tree = PartitionTree::new(inst, &opts.tol)?;
    let f2 = f2_oracle(inst, x, &adv.u_star, &mut tree, opts)?;
    Ok(match f2.verdict {
        F2Verdict::Feasible => Some((true, f2.value)),
        F2Verdict::Infeasible => Some((false, f64::INFINITY)),
        F2Verdict::Inconclusive => None,
    })
}

fn verify_cmd(args: &VerifyArgs) -> Result<ExitCode> {
    let opts = args.flags.options();
    let inst = load_instance(&args.instance, &opts.tol)?;
    let x: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&args.x)?)?;
    if !inst.x_set.contains(&x, &opts.tol) {
        eprintln!("warning: x is not in the first-stage set X");
    }
    match feasibility_verdict(&inst, &x, &opts)? {
        Some((true, value)) => {
            println!("feasible: worst-case value {value}");
            Ok(ExitCode::from(0))
        }
        Some((false, _)) => {
            println!("infeasible: some scenario leaves the second stage empty");
            Ok(ExitCode::from(2))
        }
        None => {
            println!("inconclusive");
            Ok(ExitCode::from(4))
        }
    }
}

struct BenchRow {
    instance: String,
    algorithm: &'static str,
    feasible: Option<bool>,
    terminated: bool,
    termination: String,
    wall_time: f64,
    gap: f64,
    inner: usize,
    outer: usize,
    error: String,
}

fn bench_one(inst: &TwoStageInstance, algorithm: Algorithm, opts: &SolverOptions) -> BenchRow {
    let mut row = BenchRow {
        instance: inst.meta.name.clone(),
        algorithm: algorithm.name(),
        feasible: None,
        terminated: false,
        termination: String::new(),
        wall_time: 0.0,
        gap: f64::INFINITY,
        inner: 0,
        outer: 0,
        error: String::new(),
    };
    match run_algorithm(algorithm, inst, opts) {
        Ok(report) => {
            row.terminated = matches!(
                report.termination,
                Termination::Converged | Termination::InfeasibleProblem
            );
            row.termination = format!("{:?}", report.termination);
            row.wall_time = report.seconds;
            row.gap = report.gap;
            row.inner = report.inner_iterations;
            row.outer = report.outer_iterations;
            if report.termination == Termination::InfeasibleProblem || report.x.is_empty() {
                row.feasible = Some(false);
            } else {
                match feasibility_verdict(inst, &report.x, opts) {
                    Ok(v) => row.feasible = v.map(|(ok, _)| ok),
                    Err(e) => row.error = format!("verify: {e}"),
                }
            }
        }
        Err(e) => {
            row.termination = "Error".into();
            row.error = e.to_string();
        }
    }
    row
}

fn parse_seed_range(text: &str) -> Result<std::ops::Range<u64>> {
    let bad = || {
        Error::InvalidInstance(vec![format!(
            "seed range {text:?} is not of the form A..B or A..=B"
        )])
    };
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    Ok(lo..if inclusive { hi + 1 } else { hi })
}

fn benchmark_cmd(args: &BenchmarkArgs) -> Result<ExitCode> {
    let opts = args.flags.options();
    let seeds = parse_seed_range(&args.seeds)?;
    let grid: Vec<(u64, Algorithm)> = seeds
        .flat_map(|s| args.algorithms.iter().map(move |&a| (s, a)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let rows: Vec<BenchRow> = pool.install(|| {
        grid.par_iter()
            .map(|&(seed, algorithm)| match args.family.build(seed) {
                Ok(inst) => bench_one(&inst, algorithm, &opts),
                Err(e) => BenchRow {
                    instance: format!("seed-{seed}"),
                    algorithm: algorithm.name(),
                    feasible: None,
                    terminated: false,
                    termination: "Error".into(),
                    wall_time: 0.0,
                    gap: f64::INFINITY,
                    inner: 0,
                    outer: 0,
                    error: format!("generate: {e}"),
                },
            })
            .collect()
    });

    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut csv = csv::Writer::from_writer(sink);
    csv.write_record([
        "instance",
        "algorithm",
        "feasible",
        "terminated",
        "termination",
        "wall_time",
        "gap",
        "inner_iterations",
        "outer_iterations",
        "error",
    ])
    .map_err(io_err)?;
    for row in &rows {
        csv.write_record([
            row.instance.as_str(),
            row.algorithm,
            match row.feasible {
                Some(true) => "true",
                Some(false) => "false",
                None => "unknown",
            },
            if row.terminated { "true" } else { "false" },
            row.termination.as_str(),
            &format!("{:.6}", row.wall_time),
            &if row.gap.is_finite() { format!("{:.6e}", row.gap) } else { "inf".into() },
            &row.inner.to_string(),
            &row.outer.to_string(),
            row.error.as_str(),
        ])
        .map_err(io_err)?;
    }
    csv.flush()?;
    drop(csv);
    std::io::stdout().flush()?;
    Ok(ExitCode::from(0))
}

fn io_err(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("0..5").unwrap(), 0..5);
        assert_eq!(parse_seed_range("3..=5").unwrap(), 3..6);
        assert_eq!(parse_seed_range("7..7").unwrap(), 7..7);
        assert!(parse_seed_range("x..2").is_err());
        assert!(parse_seed_range("5").is_err());
    }
}
