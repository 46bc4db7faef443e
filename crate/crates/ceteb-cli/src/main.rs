//! Command-line front end: solve the planner performance for a margin (or
//! the margin for a performance), sweep margins, and run adversarial
//! closed-loop simulations. Every command writes a resolved_config.json
//! from which `rerun` reproduces the numeric artifacts byte-for-byte.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ceteb::{
    io, monte_carlo_invariance, simulate, solve_alpha_for_theta, solve_theta_for_alpha, sweep,
    BarrierPiece, BnupPoint, CaptivitySet, ClosedBarrier, Error, IntegratorConfig, McConfig,
    ModelSpec, PlannerPolicy, RelativeSystem, SimConfig, SolveConfig, SolveReport, SurfaceSample,
    TrackingErrorBound,
};

/// Exit codes: 0 ok, 1 config/io, 2 infeasible, 3 solver failure,
/// 4 safety violation.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Domain(_)
        | Error::DimensionMismatch { .. }
        | Error::InputOutOfRange { .. }
        | Error::Precondition(_) => 1,
        Error::Infeasible(_) => 2,
        Error::SafetyViolation(_) => 4,
        _ => 3,
    }
}

#[derive(Parser)]
#[command(name = "ceteb", version, about = "Captivity-escape game solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the planner performance for a prescribed safety margin.
    SolveTheta(SolveThetaArgs),
    /// Solve the safety margin for a given planner performance.
    SolveAlpha(SolveAlphaArgs),
    /// Tabulate the optimal performance across a range of margins.
    Sweep(SweepArgs),
    /// Adversarial closed-loop runs against the safety controller.
    Simulate(SimulateArgs),
    /// Re-execute a command from an emitted resolved_config.json.
    Rerun(RerunArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Model description JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Residual tolerance, state units.
    #[arg(long)]
    tol: Option<f64>,
    /// Integrator base step, seconds.
    #[arg(long)]
    step: Option<f64>,
    /// Retrograde integration horizon, seconds.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args, Clone)]
struct SolveThetaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Safety margin (captivity radius), state units.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Clone)]
struct SolveAlphaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Planner performance; overrides the model file value.
    #[arg(long = "v-lf")]
    v_lf: Option<f64>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Margin range `start:stop:count`.
    #[arg(long = "beta-range")]
    beta_range: Option<String>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solve inline for this margin before simulating.
    #[arg(long)]
    alpha: Option<f64>,
    /// Planner performance; overrides the model file value.
    #[arg(long = "v-lf")]
    v_lf: Option<f64>,
    /// Reuse a previous solve (directory with report.json + surface CSVs).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Monte-Carlo run count.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Simulation step, seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Single-run start state `x1,x2`.
    #[arg(long)]
    x0: Option<String>,
    /// Planner policy: optimal-escape | random | constant:<v,..>.
    #[arg(long, default_value = "random")]
    policy: String,
    /// Record and export the first N run trajectories.
    #[arg(long = "emit-trajectories", default_value_t = 0)]
    emit_trajectories: usize,
}

#[derive(Args, Clone)]
struct RerunArgs {
    /// Path to a resolved_config.json.
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out-rerun")]
    out: PathBuf,
}

/// Fully resolved run description; a run is reproducible from this alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    command: String,
    model: ModelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_lf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_range: Option<(f64, f64, usize)>,
    tol: f64,
    step: f64,
    horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<SimSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    runs: usize,
    seed: u64,
    dt: f64,
    horizon: f64,
    policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
    emit_trajectories: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report_dir: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    objective: String,
    /// Model with the planner performance at its solved/given value.
    model: ModelSpec,
    /// Captivity radius of the reported bound.
    beta: f64,
    /// Barrier anchor states on the captivity boundary.
    bnup: Vec<Vec<f64>>,
    report: SolveReport,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CETEB_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own help/version go to stdout with success
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::SolveTheta(a) => cmd_solve_theta(&a),
        Command::SolveAlpha(a) => cmd_solve_alpha(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Rerun(a) => cmd_rerun(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_model(common: &CommonArgs) -> Result<ModelSpec, Error> {
    let path = common
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("missing required field `model`".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("model file {}: {e}", path.display())))?;
    ModelSpec::from_json(&text)
}

fn solve_config(cfg: &RunConfig) -> SolveConfig {
    SolveConfig {
        tol: cfg.tol,
        integrator: IntegratorConfig {
            step: cfg.step,
            horizon: cfg.horizon,
            ..IntegratorConfig::default()
        },
        ..SolveConfig::default()
    }
}

fn resolve_common(common: &CommonArgs, command: &str, model: ModelSpec) -> RunConfig {
    RunConfig {
        command: command.into(),
        model,
        alpha: None,
        v_lf: None,
        beta_range: None,
        tol: common.tol.unwrap_or(1e-6),
        step: common.step.unwrap_or(1e-4),
        horizon: common.horizon.unwrap_or(5.0),
        sim: None,
    }
}

fn write_solve_artifacts(
    out: &Path,
    cfg: &RunConfig,
    objective: &str,
    solved_model: ModelSpec,
    beta: f64,
    outcome: &ceteb::SolveOutcome,
) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("resolved_config.json"), cfg)?;
    let report = ReportFile {
        objective: objective.into(),
        model: solved_model,
        beta,
        bnup: outcome.teb.barrier().pieces.iter().map(|p| p.origin.state.clone()).collect(),
        report: outcome.report.clone(),
    };
    io::write_json(&out.join("report.json"), &report)?;
    io::write_teb_csv(&out.join("teb.csv"), &outcome.teb)?;
    let axes = outcome.teb.critical_axes();
    for piece in &outcome.teb.barrier().pieces {
        let name = if piece.origin.state[axes.0] >= 0.0 {
            "surface_right.csv"
        } else {
            "surface_left.csv"
        };
        io::write_surface_csv(&out.join(name), &piece.samples)?;
    }
    std::fs::write(out.join("teb.svg"), svg::render(&outcome.teb, &[]))?;
    Ok(())
}

fn run_solve_theta(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let alpha =
        cfg.alpha.ok_or_else(|| Error::Config("missing required field `alpha`".into()))?;
    let sys = cfg.model.build()?;
    let outcome = solve_theta_for_alpha(sys.as_ref(), alpha, None, &solve_config(cfg))?;
    let solved_model = cfg.model.with_v_lf(outcome.report.solved_value);
    write_solve_artifacts(out, cfg, "solve-theta", solved_model, alpha, &outcome)?;
    println!(
        "solved planner performance {:.9} for margin {alpha} (residual {:.3e})",
        outcome.report.solved_value, outcome.report.residual
    );
    Ok(())
}

fn cmd_solve_theta(args: &SolveThetaArgs) -> Result<(), Error> {
    let model = load_model(&args.common)?;
    let mut cfg = resolve_common(&args.common, "solve-theta", model);
    cfg.alpha = args.alpha;
    run_solve_theta(&cfg, &args.common.out)
}

fn run_solve_alpha(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let model = match cfg.v_lf {
        Some(v) => cfg.model.with_v_lf(v),
        None => cfg.model.clone(),
    };
    let theta = model
        .v_lf()
        .ok_or_else(|| Error::Config("missing required field `v_lf`".into()))?;
    let sys = model.build()?;
    let outcome = solve_alpha_for_theta(sys.as_ref(), theta, None, &solve_config(cfg))?;
    let beta = outcome.report.solved_value;
    write_solve_artifacts(out, cfg, "solve-alpha", model, beta, &outcome)?;
    println!(
        "solved margin {:.9} for planner performance {theta}{}",
        beta,
        if outcome.report.degenerate { " (degenerate)" } else { "" }
    );
    Ok(())
}

fn cmd_solve_alpha(args: &SolveAlphaArgs) -> Result<(), Error> {
    let model = load_model(&args.common)?;
    let mut cfg = resolve_common(&args.common, "solve-alpha", model);
    cfg.v_lf = args.v_lf;
    run_solve_alpha(&cfg, &args.common.out)
}

fn parse_range(text: &str) -> Result<(f64, f64, usize), Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("beta-range must be start:stop:count, got `{text}`")));
    }
    let start: f64 = parts[0].parse().map_err(|_| Error::Config("bad range start".into()))?;
    let stop: f64 = parts[1].parse().map_err(|_| Error::Config("bad range stop".into()))?;
    let count: usize = parts[2].parse().map_err(|_| Error::Config("bad range count".into()))?;
    if count == 0 || stop < start {
        return Err(Error::Config("beta-range is empty".into()));
    }
    Ok((start, stop, count))
}

fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let (start, stop, count) =
        cfg.beta_range.ok_or_else(|| Error::Config("missing required field `beta_range`".into()))?;
    let betas: Vec<f64> = (0..count)
        .map(|k| {
            if count == 1 {
                start
            } else {
                start + (stop - start) * k as f64 / (count - 1) as f64
            }
        })
        .collect();
    let sys = cfg.model.build()?;
    let rows = sweep(sys.as_ref(), &betas, &solve_config(cfg));
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("resolved_config.json"), cfg)?;
    io::write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    let ok = rows.iter().filter(|r| r.status == "ok").count();
    println!("sweep: {ok}/{} margins solved", rows.len());
    if ok == 0 {
        return Err(Error::NoRoot("no margin in the range admits a solution".into()));
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let model = load_model(&args.common)?;
    let mut cfg = resolve_common(&args.common, "sweep", model);
    let range_text = args
        .beta_range
        .as_ref()
        .ok_or_else(|| Error::Config("missing required field `beta-range`".into()))?;
    cfg.beta_range = Some(parse_range(range_text)?);
    run_sweep(&cfg, &args.common.out)
}

fn parse_policy(text: &str, seed: u64) -> Result<PlannerPolicy, Error> {
    if text == "optimal-escape" {
        Ok(PlannerPolicy::OptimalEscape)
    } else if text == "random" {
        Ok(PlannerPolicy::RandomPiecewise { seed, dwell: 0.5 })
    } else if let Some(rest) = text.strip_prefix("constant:") {
        let vals: Result<Vec<f64>, _> = rest.split(',').map(|v| v.trim().parse::<f64>()).collect();
        Ok(PlannerPolicy::Constant(
            vals.map_err(|_| Error::Config(format!("bad constant policy `{rest}`")))?,
        ))
    } else {
        Err(Error::Config(format!(
            "unknown policy `{text}` (optimal-escape | random | constant:<v,..>)"
        )))
    }
}

/// Rebuild the bound from a solve directory: the report carries the solved
/// model and radius, the surface CSVs carry the trimmed barrier pieces.
fn reload_teb(dir: &Path) -> Result<(Box<dyn RelativeSystem>, TrackingErrorBound), Error> {
    let report: ReportFile =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let sys = report.model.build()?;
    let cap = CaptivitySet::new(report.beta, sys.projection().clone())?;
    let mut pieces = Vec::new();
    for name in ["surface_left.csv", "surface_right.csv"] {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::Config(format!("missing {} in report dir", path.display())));
        }
        let samples = io::read_surface_csv(&path)?;
        pieces.push(piece_from_samples(sys.as_ref(), &cap, samples)?);
    }
    let junction = pieces[0].samples[0].state.clone();
    let barrier = ClosedBarrier { pieces, junction, trimmed: true };
    let teb = ceteb::build_teb(sys.as_ref(), &cap, barrier)?;
    Ok((sys, teb))
}

fn piece_from_samples(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    samples: Vec<SurfaceSample>,
) -> Result<BarrierPiece, Error> {
    let last = samples
        .last()
        .ok_or_else(|| Error::Config("empty surface csv".into()))?;
    let state = last.state.clone();
    let axes = sys.projection().active_axes();
    let angle = state[axes[1]].atan2(state[axes[0]]);
    let origin = BnupPoint {
        state: state.clone(),
        kappa: vec![],
        outward_normal: cap.outward_normal(&state)?,
        angle,
    };
    let mut switch_times = Vec::new();
    for w in samples.windows(2) {
        if w[0].u_hf != w[1].u_hf {
            switch_times.push(w[1].t);
        }
    }
    Ok(BarrierPiece { t_hat: samples[0].t, samples, origin, switch_times })
}

fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let sim = cfg.sim.as_ref().expect("simulate config has a sim section");
    let (sys, teb): (Box<dyn RelativeSystem>, TrackingErrorBound) = match &sim.report_dir {
        Some(dir) => reload_teb(Path::new(dir))?,
        None => {
            let alpha = cfg.alpha.ok_or_else(|| {
                Error::Config("missing required field `alpha` (or `report`)".into())
            })?;
            let base = cfg.model.build()?;
            let outcome = solve_theta_for_alpha(base.as_ref(), alpha, None, &solve_config(cfg))?;
            let solved = cfg.model.with_v_lf(outcome.report.solved_value).build()?;
            (solved, outcome.teb)
        }
    };
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("resolved_config.json"), cfg)?;

    let axes = teb.critical_axes();
    let mut trajectories: Vec<Vec<[f64; 2]>> = Vec::new();
    let summary = if let Some(x0) = &sim.x0 {
        let policy = parse_policy(&sim.policy, sim.seed)?;
        let mut sc = SimConfig::new(x0.clone(), policy);
        sc.horizon = sim.horizon;
        sc.dt = sim.dt;
        sc.record = sim.emit_trajectories > 0;
        let r = simulate(sys.as_ref(), &teb, &sc)?;
        if sc.record {
            io::write_sim_csv(&out.join("run_000.csv"), &r.trajectory)?;
            trajectories
                .push(r.trajectory.iter().map(|s| [s.state[axes.0], s.state[axes.1]]).collect());
        }
        ceteb::McSummary {
            runs: 1,
            escapes: r.escaped as usize,
            worst_max_norm: r.max_norm,
            seed: sim.seed,
        }
    } else {
        let mc = McConfig {
            horizon: sim.horizon,
            dt: sim.dt,
            dwell: 0.5,
            tolerance_band: 1e-6,
        };
        let summary =
            monte_carlo_invariance(sys.as_ref(), &teb, sim.runs, sim.seed, &mc)?;
        // deterministic per-run replay for the exported trajectories
        for idx in 0..sim.emit_trajectories.min(sim.runs) {
            let r = ceteb::sim::replay_run(sys.as_ref(), &teb, sim.seed, idx, &mc)?;
            io::write_sim_csv(&out.join(format!("run_{idx:03}.csv")), &r.trajectory)?;
            trajectories
                .push(r.trajectory.iter().map(|s| [s.state[axes.0], s.state[axes.1]]).collect());
        }
        summary
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    std::fs::write(out.join("overlay.svg"), svg::render(&teb, &trajectories))?;
    println!(
        "simulate: {} runs, {} escapes, worst projected norm {:.9}",
        summary.runs, summary.escapes, summary.worst_max_norm
    );
    if summary.escapes > 0 {
        return Err(Error::SafetyViolation(format!("{} run(s) escaped", summary.escapes)));
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let model = load_model(&args.common)?;
    let mut cfg = resolve_common(&args.common, "simulate", model);
    cfg.alpha = args.alpha;
    cfg.v_lf = args.v_lf;
    let x0 = match &args.x0 {
        Some(text) => {
            let vals: Result<Vec<f64>, _> =
                text.split(',').map(|v| v.trim().parse::<f64>()).collect();
            Some(vals.map_err(|_| Error::Config(format!("bad x0 `{text}`")))?)
        }
        None => None,
    };
    cfg.sim = Some(SimSection {
        runs: args.runs,
        seed: args.seed,
        dt: args.dt.unwrap_or(1e-3),
        horizon: args.common.horizon.unwrap_or(20.0),
        policy: args.policy.clone(),
        x0,
        emit_trajectories: args.emit_trajectories,
        report_dir: args.report.as_ref().map(|p| p.display().to_string()),
    });
    // the solve horizon stays at its own default when simulating inline
    cfg.horizon = 5.0;
    run_simulate(&cfg, &args.common.out)
}

fn cmd_rerun(args: &RerunArgs) -> Result<(), Error> {
    let cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    match cfg.command.as_str() {
        "solve-theta" => run_solve_theta(&cfg, &args.out),
        "solve-alpha" => run_solve_alpha(&cfg, &args.out),
        "sweep" => run_sweep(&cfg, &args.out),
        "simulate" => run_simulate(&cfg, &args.out),
        other => Err(Error::Config(format!("unknown command `{other}` in config"))),
    }
}
