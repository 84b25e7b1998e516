mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use shds_lab::analysis::{self, SweepMetric};
use shds_lab::export::{self, Header};
use shds_lab::foster::{FlowMode, JumpMode};
use shds_lab::scenarios::{self, Claim, Scenario, SystemFile, SystemSpec};
use shds_lab::simulate::SimConfig;
use shds_lab::Error;

#[derive(Parser)]
#[command(name = "shds-lab", version, about = "Simulate and certify singularly perturbed stochastic hybrid systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one sample path and write arc, jump-log and monitor CSVs.
    Simulate(Common),
    /// Check the certificate inequalities on the scenario grids.
    Verify(Common),
    /// Monte Carlo containment and attractivity fractions.
    McStability(Common),
    /// Monte Carlo hit-or-stop fraction for the recurrence set.
    McRecurrence(Common),
    /// Tabulate a metric over a list of ε values.
    Sweep(Common),
    /// List the packaged scenarios.
    List,
    /// Write the system JSON document of a scenario.
    Export(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Packaged scenario name.
    #[arg(long, conflicts_with = "system")]
    scenario: Option<String>,
    /// System JSON document.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Timer drift bound of the switching families.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long)]
    horizon_t: Option<f64>,
    #[arg(long)]
    horizon_j: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    /// Radius of the initial-condition ball.
    #[arg(long)]
    radius: Option<f64>,
    /// Containment ball radius around the target set.
    #[arg(long, default_value_t = 0.5)]
    eps_ball: f64,
    /// Attractivity threshold on `t + j`; half the horizon when absent.
    #[arg(long)]
    t_after: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, overrides_with = "no_plot")]
    plot: bool,
    #[arg(long = "no-plot")]
    no_plot: bool,
    /// Log scale for the `E_θ*` panel.
    #[arg(long)]
    log_scale: bool,
    /// Comma-separated ε values for `sweep`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long, value_enum)]
    metric: Option<Metric>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
}

impl Mode {
    fn modes(self) -> (FlowMode, JumpMode) {
        match self {
            Mode::Thm1 => (FlowMode::Strict, JumpMode::Thm1),
            Mode::Thm2 => (FlowMode::Nonstrict, JumpMode::Thm2Relaxed),
            Mode::Thm3 => (FlowMode::Recurrence, JumpMode::Thm3),
            Mode::Thm4 => (FlowMode::Recurrence, JumpMode::Thm4),
        }
    }
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum Metric {
    Containment,
    Recurrence,
    Monitor,
    FinalDistance,
}

enum Failure {
    /// Bad arguments or inputs: exit 2.
    Usage(String),
    /// A property or verification check failed: exit 1.
    Check(String),
    /// Error raised while running: exit 1.
    Run(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            _ => 1,
        }
    }

    fn record(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Check(m) => ("check_failed", m.clone()),
            Failure::Run(e) => ("runtime", e.to_string()),
        };
        json!({ "error": { "kind": kind, "message": message } })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownScenario(_) | Error::Config(_) | Error::Serde(_) | Error::Dimension(_) => Failure::Usage(e.to_string()),
            e => Failure::Run(e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io(e: std::io::Error, path: &Path) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        return report(f, None);
    }
    let out = match &cli.command {
        Command::List => None,
        Command::Simulate(c)
        | Command::Verify(c)
        | Command::McStability(c)
        | Command::McRecurrence(c)
        | Command::Sweep(c)
        | Command::Export(c) => Some(c.out.clone()),
    };
    let result = match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Verify(c) => verify(&c),
        Command::McStability(c) => mc_stability(&c),
        Command::McRecurrence(c) => mc_recurrence(&c),
        Command::Sweep(c) => sweep(&c),
        Command::List => list(),
        Command::Export(c) => export_system(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f, out.as_deref()),
    }
}

fn report(f: Failure, out: Option<&Path>) -> ExitCode {
    let record = f.record();
    eprintln!("{record}");
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let _ = fs::write(dir.join("error.json"), format!("{record:#}\n"));
    }
    ExitCode::from(f.code())
}

fn configure_threads() -> Outcome {
    let Ok(v) = std::env::var("SHDS_LAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SHDS_LAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))
}

/// Scenario with every override applied: flags over file over defaults.
struct Run {
    scenario: Scenario,
    spec: SystemSpec,
    sim: SimConfig,
}

fn load(c: &Common) -> Result<Run, Failure> {
    let (mut spec, file_sim) = match (&c.scenario, &c.system) {
        (Some(name), None) => (SystemSpec::named(name)?, None),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io(e, path))?;
            let doc = SystemFile::from_json(&text)?;
            (doc.system, doc.sim)
        }
        _ => return Err(Failure::Usage("exactly one of --scenario or --system is required".into())),
    };
    if let Some(eps) = c.epsilon {
        spec.set_epsilon(eps);
    }
    if let Some(eta) = c.eta {
        spec.set_eta(eta)?;
    }
    let scenario = spec.build()?;
    let mut sim = file_sim.unwrap_or_else(|| scenario.sim.clone());
    if let Some(h) = c.step {
        sim.step_h = h;
    }
    if let Some(t) = c.horizon_t {
        sim.horizon_t = t;
    }
    if let Some(j) = c.horizon_j {
        sim.horizon_j = j;
    }
    sim.validate()?;
    Ok(Run { scenario, spec, sim })
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&c.out).map_err(|e| io(e, &c.out))?;
    Ok(&c.out)
}

fn write(dir: &Path, name: &str, body: &str) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io(e, &path))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn header(run: &Run, seed: u64, command: &str, params: serde_json::Value) -> Result<Header, Failure> {
    let config = json!({ "command": command, "system": run.spec, "sim": run.sim, "run": params });
    Ok(Header::new(&run.scenario.name, seed, &config)?)
}

fn radius(c: &Common, run: &Run) -> f64 {
    c.radius.unwrap_or(run.scenario.init_radius)
}

fn trials(c: &Common, default: u64) -> usize {
    c.trials.unwrap_or(default) as usize
}

fn simulate(c: &Common) -> Outcome {
    let run = load(c)?;
    let dir = out_dir(c)?;
    let r = radius(c, &run);
    let (arc, trace) = analysis::monitor_trial(&run.scenario, c.seed, 0, r, &run.sim)?;
    let h = header(&run, c.seed, "simulate", json!({ "radius": r }))?;
    let name = &run.scenario.name;
    write(dir, &format!("{name}_arc.csv"), &export::arc_csv(&h, &arc)?)?;
    write(dir, &format!("{name}_jumps.csv"), &export::jump_log_csv(&h, &arc)?)?;
    write(dir, &format!("{name}_monitor.csv"), &export::monitor_csv(&h, &trace)?)?;
    if c.plot || !c.no_plot {
        let title = format!("{name}, epsilon = {}, seed = {}", run.scenario.epsilon(), c.seed);
        write(dir, &format!("{name}.svg"), &plot::render(&title, &arc, &trace, c.log_scale))?;
    }
    let (end, y) = arc.final_point();
    println!(
        "{name}: t = {}, jumps = {}, final x = {:?}, flagged flow increases = {}",
        end.t,
        end.j,
        y.x,
        trace.violations
    );
    Ok(())
}

fn verify(c: &Common) -> Outcome {
    let run = load(c)?;
    let dir = out_dir(c)?;
    let (flow_mode, jump_mode) = c.mode.map_or((run.scenario.flow_mode, run.scenario.jump_mode), Mode::modes);
    let check = run.scenario.verify(flow_mode, jump_mode)?;
    let name = &run.scenario.name;
    write(dir, &format!("{name}_verify.json"), &(check.to_json()? + "\n"))?;
    let h = header(&run, c.seed, "verify", json!({ "mode": c.mode }))?;
    let mut rows = String::from("check,mode,inequality,max_residual,pass\n");
    for r in [&check.sandwich, &check.flow, &check.jump] {
        for i in &r.inequalities {
            rows += &format!("{},{},{},{},{}\n", r.check, r.mode, i.name, i.max_residual, i.pass as u8);
        }
    }
    if let Some(l) = &check.lmi {
        for e in &l.entries {
            let mode = e.mode.map_or("fast".to_string(), |q| (q + 1).to_string());
            rows += &format!("lmi,{mode},{},{},{}\n", e.inequality, e.lambda_max, e.pass as u8);
        }
    }
    write(dir, &format!("{name}_verify.csv"), &(h.block() + &rows))?;
    if check.pass {
        println!("{name}: all inequalities hold (theta* = {}, epsilon = {})", check.theta, check.epsilon);
        Ok(())
    } else {
        Err(Failure::Check(format!("{name}: {}", check.failures().join("; "))))
    }
}

fn write_report(c: &Common, run: &Run, report: &analysis::TrialReport, command: &str, params: serde_json::Value) -> Outcome {
    let dir = out_dir(c)?;
    let h = header(run, c.seed, command, params)?;
    let name = &run.scenario.name;
    write(dir, &format!("{name}_{command}.json"), &report.to_json()?)?;
    write(dir, &format!("{name}_{command}.csv"), &export::trial_report_csv(&h, report)?)?;
    Ok(())
}

fn fraction_line(label: &str, f: &Option<analysis::Fraction>) {
    if let Some(f) = f {
        println!("{label}: {}/{} = {} (95% Wilson [{}, {}])", f.successes, f.trials, f.value, f.wilson_lo, f.wilson_hi);
    }
}

fn mc_stability(c: &Common) -> Outcome {
    let run = load(c)?;
    let r = radius(c, &run);
    let n = trials(c, 200);
    let t_after = c.t_after.unwrap_or(0.5 * run.sim.horizon_t);
    let report = analysis::estimate_containment(&run.scenario, r, c.eps_ball, t_after, n, c.seed, &run.sim)?;
    let params = json!({ "trials": n, "radius": r, "eps_ball": c.eps_ball, "t_after": t_after });
    write_report(c, &run, &report, "mc-stability", params)?;
    fraction_line("containment", &report.containment_fraction);
    fraction_line("attractivity", &report.attractivity_fraction);
    Ok(())
}

fn mc_recurrence(c: &Common) -> Outcome {
    let run = load(c)?;
    let r = radius(c, &run);
    let n = trials(c, 1000);
    let horizon = run.sim.horizon_t;
    let report = analysis::estimate_recurrence(&run.scenario, r, n, horizon, c.seed, &run.sim)?;
    let params = json!({ "trials": n, "radius": r, "horizon": horizon });
    write_report(c, &run, &report, "mc-recurrence", params)?;
    fraction_line("hit or stop", &report.success_fraction);
    if let Some(q) = &report.hitting_time_quantiles {
        println!("hitting time p50 = {}, p95 = {}, max = {}", q.p50, q.p95, q.max);
    }
    Ok(())
}

fn sweep(c: &Common) -> Outcome {
    if c.epsilons.is_empty() {
        return Err(Failure::Usage("sweep needs --epsilons".into()));
    }
    let run = load(c)?;
    let r = radius(c, &run);
    let n = trials(c, 20);
    let metric = match c.metric {
        Some(m) => m,
        None if run.scenario.claim == Claim::Recurrence => Metric::Recurrence,
        None => Metric::Monitor,
    };
    let metric = match metric {
        Metric::Containment => {
            SweepMetric::Containment { eps_ball: c.eps_ball, t_after: c.t_after.unwrap_or(0.5 * run.sim.horizon_t) }
        }
        Metric::Recurrence => SweepMetric::Recurrence { horizon: run.sim.horizon_t },
        Metric::Monitor => SweepMetric::MonitorViolations,
        Metric::FinalDistance => SweepMetric::FinalDistance,
    };
    let table = analysis::epsilon_sweep(&run.scenario, &c.epsilons, metric, n, c.seed, r, &run.sim)?;
    let dir = out_dir(c)?;
    let h = header(&run, c.seed, "sweep", json!({ "trials": n, "radius": r, "metric": metric, "epsilons": c.epsilons }))?;
    let name = &run.scenario.name;
    write(dir, &format!("{name}_sweep.csv"), &export::sweep_csv(&h, &table)?)?;
    write(dir, &format!("{name}_sweep.json"), &(serde_json::to_string_pretty(&table).map_err(Error::from)? + "\n"))?;
    for row in &table.rows {
        println!("epsilon = {}: {}", row.epsilon, row.value);
    }
    Ok(())
}

fn list() -> Outcome {
    for (name, description) in scenarios::list() {
        println!("{name:<16} {description}");
    }
    Ok(())
}

fn export_system(c: &Common) -> Outcome {
    let run = load(c)?;
    let dir = out_dir(c)?;
    let doc = SystemFile { system: run.spec.clone(), sim: Some(run.sim.clone()) };
    write(dir, &format!("{}.json", run.scenario.name), &doc.to_json()?)
}
