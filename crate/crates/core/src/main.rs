use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pdk_core::config::{ProblemConfig, PRESET_NAMES};
use pdk_core::sim::{sample_path, simulate_value, SimConfig};
use pdk_core::sweep::{self, SweepParam};
use pdk_core::verify::{default_grid, hjb_check};
use pdk_core::{b_star, BarrierSolution, PdkError, ScaleFunctions, ValueFunction};

#[derive(Parser)]
#[command(
    name = "pdk",
    version,
    about = "Optimal periodic dividend barriers for spectrally negative Lévy models"
)]
struct Cli {
    /// Worker threads for the simulator and sweeps (default: all cores).
    #[arg(long, global = true, env = "PDK_THREADS")]
    threads: Option<usize>,
    /// Print only the JSON payload.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute b*, b̄ and Φ, optionally tabulating the value function.
    Solve(SolveArgs),
    /// Verify optimality of the barrier through the HJB inequality.
    Check(CheckArgs),
    /// Monte Carlo estimate of the dividend value under a periodic barrier.
    Simulate(SimulateArgs),
    /// Sensitivity sweeps and the figure reproductions.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// JSON config file with sigma, c, jumps, q and r.
    config: Option<PathBuf>,
    /// Built-in problem instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Tabulate v_{b*} on lo:hi:n.
    #[arg(long, value_name = "LO:HI:N")]
    values: Option<String>,
    /// Where the value table goes.
    #[arg(long, default_value = "values.csv", requires = "values")]
    values_out: PathBuf,
    /// Include both scale-function bases in the output.
    #[arg(long)]
    dump_basis: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Verify this barrier instead of b*.
    #[arg(long)]
    force_b: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Barrier (default b*; `inf` never pays).
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x0: f64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximal substep of the diffusive part.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Truncation horizon (default ln(1e4)/q).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    antithetic: bool,
    /// Write the event logs of the first N paths as NDJSON.
    #[arg(long, value_name = "N")]
    dump_paths: Option<usize>,
    #[arg(long, default_value = "paths.ndjson")]
    dump_out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// c, kappa, lambda or r.
    #[arg(long, required_unless_present = "paper_figure")]
    param: Option<String>,
    /// Parameter values lo:hi:n (default: the published grid).
    #[arg(long, value_name = "LO:HI:N", conflicts_with = "paper_figure")]
    grid: Option<String>,
    /// Reproduce figure 1..6.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6), conflicts_with = "param")]
    paper_figure: Option<u8>,
    /// x grid of the value curves.
    #[arg(long, value_name = "LO:HI:N")]
    x_grid: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

type CmdResult = Result<(Value, ExitCode), PdkError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let log = Log { quiet: cli.quiet };
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a, &log),
        Command::Check(a) => check(a),
        Command::Simulate(a) => simulate(a, &log),
        Command::Sweep(a) => run_sweep(a, &log),
    };
    match outcome {
        Ok((payload, code)) => {
            let text = serde_json::to_string_pretty(&payload).expect("json values serialize");
            // a closed stdout (e.g. piped into head) is not an error of the run
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

impl ProblemArgs {
    fn has_source(&self) -> bool {
        self.config.is_some() || self.preset.is_some()
    }

    fn load(&self) -> Result<ProblemConfig, PdkError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ProblemConfig::from_file(path)?,
            (None, Some(name)) => ProblemConfig::preset(name)?,
            (None, None) => {
                return Err(PdkError::Config(format!(
                    "give a config file or --preset ({})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        self.apply_overrides(&mut cfg);
        Ok(cfg)
    }

    fn apply_overrides(&self, cfg: &mut ProblemConfig) {
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(v) = self.q {
            cfg.q = v;
        }
        if let Some(v) = self.r {
            cfg.r = v;
        }
    }
}

fn solve_config(cfg: &ProblemConfig) -> Result<(ScaleFunctions, BarrierSolution), PdkError> {
    let sf = ScaleFunctions::new(&cfg.to_spec()?)?;
    let sol = b_star(&sf)?;
    Ok((sf, sol))
}

fn solve(args: &SolveArgs, log: &Log) -> CmdResult {
    let (sf, sol) = solve_config(&args.problem.load()?)?;
    let mut out = json!({
        "b_star": sol.b_star,
        "b_bar": sol.b_bar,
        "phi_q": sol.phi_q,
        "phi_qr": sol.phi_qr,
        "positive_criterion": sol.positive_criterion,
        "smooth_fit_residual": sol.smooth_fit_residual,
    });
    if sol.b_bar_at_cap {
        out["b_bar_at_cap"] = json!(true);
    }
    if let Some(spec) = &args.values {
        let xs = sweep::parse_grid(spec)?;
        let v = ValueFunction::new(&sf, sol.b_star)?;
        sweep::write_value_csv(&args.values_out, &v, &xs)?;
        log.note(format!("wrote {} ({} rows)", args.values_out.display(), xs.len()));
        out["values_csv"] = json!(args.values_out.display().to_string());
    }
    if args.dump_basis {
        out["basis"] = json!({ "q": sf.q_basis, "q_plus_r": sf.qr_basis });
    }
    Ok((out, ExitCode::SUCCESS))
}

fn check(args: &CheckArgs) -> CmdResult {
    let (sf, mut sol) = solve_config(&args.problem.load()?)?;
    if let Some(b) = args.force_b {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(PdkError::Domain(format!("--force-b must be finite and >= 0, got {b}")));
        }
        sol.b_star = b;
    }
    let report = hjb_check(&sf, &sol, &default_grid(sol.b_bar))?;
    let mut out = report.to_json();
    out["b"] = json!(sol.b_star);
    out["forced"] = json!(args.force_b.is_some());
    let code = if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    };
    Ok((out, code))
}

fn simulate(args: &SimulateArgs, log: &Log) -> CmdResult {
    let spec = args.problem.load()?.to_spec()?;
    let sf = ScaleFunctions::new(&spec)?;
    let b = match args.b {
        Some(b) => b,
        None => b_star(&sf)?.b_star,
    };
    let mut cfg = SimConfig::new(&spec, args.paths, args.seed);
    cfg.dt = args.dt;
    cfg.antithetic = args.antithetic;
    if let Some(t) = args.horizon {
        cfg.horizon_t = t;
    }
    let est = simulate_value(&spec, b, args.x0, &cfg)?;
    let analytic = if args.x0 < 0.0 || b.is_infinite() {
        0.0
    } else {
        ValueFunction::new(&sf, b)?.value(args.x0)
    };
    let z = if est.std_error > 0.0 {
        Some((est.mean - analytic) / est.std_error)
    } else if est.mean == analytic {
        Some(0.0)
    } else {
        None
    };
    if let Some(n) = args.dump_paths {
        dump_paths(&spec, b, args.x0, &cfg, n.min(cfg.n_paths), &args.dump_out)?;
        log.note(format!(
            "wrote {} path logs to {}",
            n.min(cfg.n_paths),
            args.dump_out.display()
        ));
    }
    let out = json!({
        "b": b,
        "x0": args.x0,
        "n_paths": est.n_paths,
        "seed": args.seed,
        "dt": cfg.dt,
        "horizon_t": cfg.horizon_t,
        "antithetic": cfg.antithetic,
        "mean": est.mean,
        "std_error": est.std_error,
        "ruin_fraction": est.ruin_fraction,
        "truncation_bound": est.truncation_bound,
        "analytic": analytic,
        "z_score": z,
    });
    Ok((out, ExitCode::SUCCESS))
}

fn dump_paths(
    spec: &pdk_core::ProblemSpec,
    b: f64,
    x0: f64,
    cfg: &SimConfig,
    n: usize,
    path: &Path,
) -> Result<(), PdkError> {
    let io = |e: std::io::Error| PdkError::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for i in 0..n {
        let log = sample_path(spec, b, x0, cfg, i)?;
        let line = serde_json::to_string(&log).expect("path logs serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn run_sweep(args: &SweepArgs, log: &Log) -> CmdResult {
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| PdkError::Config(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let x_grid = match &args.x_grid {
        Some(s) => Some(sweep::parse_grid(s)?),
        None => None,
    };
    let mut files = Vec::new();
    let mut panels = Vec::new();
    match args.paper_figure {
        Some(1) => {
            for name in PRESET_NAMES {
                let (sf, sol) = solve_config(&ProblemConfig::preset(name)?)?;
                let rows = sweep::h_curve(&sf, &sol, &sweep::h_grid())?;
                let path = args.out_dir.join(format!("h_{name}.csv"));
                sweep::write_h_curve_csv(&path, &rows)?;
                files.push(path);
                panels.push(json!({ "case": name, "b_star": sol.b_star, "b_bar": sol.b_bar }));
            }
        }
        Some(2) => {
            for name in PRESET_NAMES {
                let (sf, sol) = solve_config(&ProblemConfig::preset(name)?)?;
                let xs = x_grid.clone().unwrap_or_else(|| sweep::figure2_x_grid(&sol));
                let rows = sweep::dominance_panel(&sf, sol.b_star, &sweep::figure2_barriers(&sol), &xs)?;
                let path = args.out_dir.join(format!("dominance_{name}.csv"));
                sweep::write_dominance_csv(&path, &rows)?;
                files.push(path);
                panels.push(json!({
                    "case": name,
                    "b_star": sol.b_star,
                    "dominance_gap": sweep::dominance_gap(&rows, sol.b_star),
                }));
            }
        }
        Some(n) => {
            let param = [SweepParam::C, SweepParam::Kappa, SweepParam::Lambda, SweepParam::R][usize::from(n) - 3];
            let bases: Vec<(String, ProblemConfig)> = if args.problem.has_source() {
                vec![("custom".to_string(), args.problem.load()?)]
            } else {
                ["case1", "case1p"]
                    .iter()
                    .map(|name| {
                        let mut cfg = ProblemConfig::preset(name)?;
                        args.problem.apply_overrides(&mut cfg);
                        Ok((name.to_string(), cfg))
                    })
                    .collect::<Result<_, PdkError>>()?
            };
            for (label, base) in bases {
                let stem = format!("figure{n}_{}_{label}", param.name());
                let values = param.published_grid();
                panels.push(sensitivity_panel(
                    args,
                    &base,
                    param,
                    &values,
                    x_grid.clone(),
                    &stem,
                    &mut files,
                )?);
            }
        }
        None => {
            let param: SweepParam = args.param.as_deref().unwrap_or_default().parse()?;
            let values = match &args.grid {
                Some(g) => sweep::parse_grid(g)?,
                None => param.published_grid(),
            };
            let base = args.problem.load()?;
            let stem = format!("sweep_{}", param.name());
            panels.push(sensitivity_panel(
                args,
                &base,
                param,
                &values,
                x_grid.clone(),
                &stem,
                &mut files,
            )?);
        }
    }
    for f in &files {
        log.note(format!("wrote {}", f.display()));
    }
    let out = json!({
        "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        "panels": panels,
    });
    Ok((out, ExitCode::SUCCESS))
}

fn sensitivity_panel(
    args: &SweepArgs,
    base: &ProblemConfig,
    param: SweepParam,
    values: &[f64],
    x_grid: Option<Vec<f64>>,
    stem: &str,
    files: &mut Vec<PathBuf>,
) -> Result<Value, PdkError> {
    let xs = x_grid.unwrap_or_else(sweep::sensitivity_x_grid);
    let table = sweep::sensitivity(base, param, values, &xs)?;
    let long = args.out_dir.join(format!("{stem}.csv"));
    let barriers = args.out_dir.join(format!("{stem}_barriers.csv"));
    table.write_csv(&long)?;
    table.write_barriers_csv(&barriers)?;
    files.push(long);
    files.push(barriers);
    let increasing = param != SweepParam::Kappa;
    Ok(json!({
        "param": param.name(),
        "stem": stem,
        "rows": table.rows.len(),
        "solved": table.solved().count(),
        "skipped": table.skipped().count(),
        "v_monotonicity_violation": table.v_monotonicity_violation(increasing),
    }))
}
