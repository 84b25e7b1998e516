//! Monte Carlo estimation of stability and recurrence, uniformity sweeps over
//! initial-condition radii and sweeps over `ε`.
//!
//! Distance to the target `Ã = {(x, z) | x ∈ A, z ∈ M(x)}` is measured by the
//! surrogate `max(|x|_A, |z|_{M(x)})`, which bounds the Euclidean set
//! distance from both sides for affine manifolds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foster::{monitor_along_arc, MonitorTrace};
use crate::hybrid::{HybridArc, StateVector, Termination};
use crate::scenarios::Scenario;
use crate::simulate::{simulate_arc, simulate_arc_until, SimConfig};
use crate::stochastic::RandomStream;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
/// Initial-condition draws tried per trial before giving up.
const MAX_INIT_ATTEMPTS: u64 = 1000;

/// Proportion with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub successes: usize,
    pub trials: usize,
    pub value: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl Fraction {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lo, hi) = wilson_interval(successes, trials);
        let value = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        Fraction { successes, trials, value, wilson_lo: lo, wilson_hi: hi }
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / den;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Empirical quantile with linear interpolation; `None` for an empty sample.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

fn quantiles(values: &[f64]) -> Option<Quantiles> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quantiles { p50: quantile(&v, 0.5)?, p95: quantile(&v, 0.95)?, max: *v.last()? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Never left the containment ball.
    Contained,
    /// Left the ball but stayed inside after the settling threshold.
    Settled,
    /// Outside the ball at some `t + j ≥ T_after`.
    Escaped,
    /// Entered `O_χ` within the horizon.
    Hit,
    /// Left `C ∪ D` within the horizon without hitting.
    Stopped,
    TimedOut,
    NonFinite,
}

/// One trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub outcome: Outcome,
    /// `t + j` at first entry into `O_χ`.
    pub hitting_time: Option<f64>,
    /// `t + j` after which the arc stays in the containment ball.
    pub settling_time: Option<f64>,
    /// Largest target distance along the arc; absent after a non-finite escape.
    pub max_distance: Option<f64>,
    /// Target distance at the last point.
    pub final_distance: Option<f64>,
    pub rejected_inits: u64,
}

/// Aggregate of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub estimand: String,
    pub scenario: String,
    pub epsilon: f64,
    pub master_seed: u64,
    pub trials: usize,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_ball: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_after: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Never left `Ã + eps_ball·B°`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub containment_fraction: Option<Fraction>,
    /// Inside `Ã + eps_ball·B°` for every `t + j ≥ T_after`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attractivity_fraction: Option<Fraction>,
    /// Entered `O_χ` within the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_fraction: Option<Fraction>,
    /// Hit or stopped within the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_fraction: Option<Fraction>,
    pub stopped_fraction: Fraction,
    pub nonfinite_fraction: Fraction,
    pub hitting_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hitting_time_quantiles: Option<Quantiles>,
    pub rejected_inits: u64,
    pub records: Vec<TrialRecord>,
    pub notes: Vec<String>,
}

impl TrialReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.records.iter().filter(|r| r.outcome == outcome).count()
    }
}

/// Initial state for trial `trial`, redrawn until it lies in `C ∪ D`.
pub fn draw_initial(scenario: &Scenario, stream: &RandomStream, radius: f64) -> Result<(StateVector<f64>, u64)> {
    for attempt in 0..MAX_INIT_ATTEMPTS {
        let y = scenario.sample_init_attempt(stream, radius, attempt);
        if scenario.system.in_flow_set(&y) || scenario.system.in_jump_set(&y) {
            return Ok((y, attempt));
        }
    }
    Err(Error::Config(format!("initial-condition sampler of {} produced no state in C ∪ D", scenario.name)))
}

fn run_trials<R: Send>(trials: usize, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    (0..trials as u64).into_par_iter().map(f).collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    Ok(())
}

fn hybrid_stamp(t: f64, j: usize) -> f64 {
    t + j as f64
}

/// Simulates trial `trial`; `None` marks a non-finite escape.
fn trial_arc(
    scenario: &Scenario,
    seed: u64,
    trial: u64,
    radius: f64,
    config: &SimConfig,
    stop: Option<crate::simulate::StopFn<'_, f64>>,
) -> Result<(Option<HybridArc<f64>>, StateVector<f64>, u64)> {
    let stream = RandomStream::new(seed, trial);
    let (y0, rejected) = draw_initial(scenario, &stream, radius)?;
    match simulate_arc_until(&scenario.system, &y0, &stream, config, stop) {
        Ok(arc) => Ok((Some(arc), y0, rejected)),
        Err(Error::NonFinite { .. }) => Ok((None, y0, rejected)),
        Err(e) => Err(e),
    }
}

fn nonfinite_record(trial: u64, rejected: u64) -> TrialRecord {
    TrialRecord {
        trial,
        outcome: Outcome::NonFinite,
        hitting_time: None,
        settling_time: None,
        max_distance: None,
        final_distance: None,
        rejected_inits: rejected,
    }
}

/// Stability estimands: fraction of arcs that never leave `Ã + eps_ball·B°`
/// and fraction inside it for every `t + j ≥ t_after`. Initial states come
/// from the scenario sampler at `radius`; trial `i` uses stream `(master_seed, i)`.
pub fn estimate_containment(
    scenario: &Scenario,
    radius: f64,
    eps_ball: f64,
    t_after: f64,
    trials: usize,
    master_seed: u64,
    config: &SimConfig,
) -> Result<TrialReport> {
    check_trials(trials)?;
    if !(eps_ball >= 0.0) || !(t_after >= 0.0) {
        return Err(Error::Config("eps_ball and t_after must be nonnegative".into()));
    }
    let records = run_trials(trials, |i| {
        let (arc, _, rejected) = trial_arc(scenario, master_seed, i, radius, config, None)?;
        let Some(arc) = arc else { return Ok(nonfinite_record(i, rejected)) };
        let mut max_distance: f64 = 0.0;
        let mut last_outside: Option<f64> = None;
        let mut escaped_late = false;
        let mut final_distance = 0.0;
        for (time, y) in arc.points() {
            let d = scenario.target_distance(y);
            let s = hybrid_stamp(time.t, time.j);
            max_distance = max_distance.max(d);
            final_distance = d;
            if !(d < eps_ball) {
                last_outside = Some(s);
                if s >= t_after {
                    escaped_late = true;
                }
            }
        }
        let outcome = match (last_outside, escaped_late) {
            (None, _) => Outcome::Contained,
            (Some(_), false) => Outcome::Settled,
            (Some(_), true) => Outcome::Escaped,
        };
        let settling_time = match outcome {
            Outcome::Escaped => None,
            _ => Some(last_outside.unwrap_or(0.0)),
        };
        Ok(TrialRecord {
            trial: i,
            outcome,
            hitting_time: None,
            settling_time,
            max_distance: Some(max_distance),
            final_distance: Some(final_distance),
            rejected_inits: rejected,
        })
    })?;
    let contained = records.iter().filter(|r| r.outcome == Outcome::Contained).count();
    let attracted = records.iter().filter(|r| matches!(r.outcome, Outcome::Contained | Outcome::Settled)).count();
    let mut notes = vec!["target distance is the surrogate max(|x|_A, |z|_M(x))".to_string()];
    if config.horizon_t < t_after {
        notes.push(format!("flow horizon {} is shorter than t_after {t_after}", config.horizon_t));
    }
    Ok(assemble(
        "containment",
        scenario,
        master_seed,
        radius,
        records,
        Some(eps_ball),
        Some(t_after),
        None,
        Some(Fraction::new(contained, trials)),
        Some(Fraction::new(attracted, trials)),
        None,
        notes,
    ))
}

/// Recurrence estimand: per arc, the first `t + j ≤ horizon` with
/// `y ∈ O_χ`, else a stop (leaving `C ∪ D`) within the horizon, else a
/// time-out. Success is hit or stop.
pub fn estimate_recurrence(
    scenario: &Scenario,
    radius: f64,
    trials: usize,
    horizon: f64,
    master_seed: u64,
    config: &SimConfig,
) -> Result<TrialReport> {
    check_trials(trials)?;
    if scenario.cert.recur_set.is_none() {
        return Err(Error::Config(format!("scenario {} has no recurrence set", scenario.name)));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Config("horizon must be nonnegative".into()));
    }
    let cfg = SimConfig { horizon_t: horizon.max(config.step_h), horizon_j: horizon.floor() as usize, ..config.clone() };
    let system = &scenario.system;
    let cert = &scenario.cert;
    let stop = |_t: f64, _j: usize, y: &StateVector<f64>| cert.in_o_chi(system, y);
    let records = run_trials(trials, |i| {
        let (arc, _, rejected) = trial_arc(scenario, master_seed, i, radius, &cfg, Some(&stop))?;
        let Some(arc) = arc else { return Ok(nonfinite_record(i, rejected)) };
        let (end, y_end) = arc.final_point();
        let s = hybrid_stamp(end.t, end.j);
        let within = s <= horizon;
        let max_distance = arc.points().map(|(_, y)| scenario.target_distance(y)).fold(0.0, f64::max);
        let (outcome, hitting_time) = match arc.termination {
            Termination::Stopped if within => (Outcome::Hit, Some(s)),
            Termination::LeftCAndD if within => (Outcome::Stopped, None),
            _ => (Outcome::TimedOut, None),
        };
        Ok(TrialRecord {
            trial: i,
            outcome,
            hitting_time,
            settling_time: None,
            max_distance: Some(max_distance),
            final_distance: Some(scenario.target_distance(y_end)),
            rejected_inits: rejected,
        })
    })?;
    let hits = records.iter().filter(|r| r.outcome == Outcome::Hit).count();
    let stops = records.iter().filter(|r| r.outcome == Outcome::Stopped).count();
    let notes = vec![
        "solutions that leave C ∪ D within the horizon count as successes".to_string(),
        "non-finite states are flagged when observed; absence of finite escape is not proven".to_string(),
    ];
    Ok(assemble(
        "recurrence",
        scenario,
        master_seed,
        radius,
        records,
        None,
        None,
        Some(horizon),
        None,
        None,
        Some((Fraction::new(hits, trials), Fraction::new(hits + stops, trials))),
        notes,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    estimand: &str,
    scenario: &Scenario,
    master_seed: u64,
    radius: f64,
    records: Vec<TrialRecord>,
    eps_ball: Option<f64>,
    t_after: Option<f64>,
    horizon: Option<f64>,
    containment: Option<Fraction>,
    attractivity: Option<Fraction>,
    recurrence: Option<(Fraction, Fraction)>,
    notes: Vec<String>,
) -> TrialReport {
    let trials = records.len();
    let hitting_times: Vec<f64> = records.iter().filter_map(|r| r.hitting_time).collect();
    let stopped = records.iter().filter(|r| r.outcome == Outcome::Stopped).count();
    let nonfinite = records.iter().filter(|r| r.outcome == Outcome::NonFinite).count();
    TrialReport {
        estimand: estimand.into(),
        scenario: scenario.name.clone(),
        epsilon: scenario.epsilon(),
        master_seed,
        trials,
        radius,
        eps_ball,
        t_after,
        horizon,
        containment_fraction: containment,
        attractivity_fraction: attractivity,
        hit_fraction: recurrence.map(|r| r.0),
        success_fraction: recurrence.map(|r| r.1),
        stopped_fraction: Fraction::new(stopped, trials),
        nonfinite_fraction: Fraction::new(nonfinite, trials),
        hitting_time_quantiles: quantiles(&hitting_times),
        hitting_times,
        rejected_inits: records.iter().map(|r| r.rejected_inits).sum(),
        records,
        notes,
    }
}

/// Estimator driven by [`uniformity_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UniformityEstimator {
    /// Hitting time of `O_χ`.
    Recurrence { horizon: f64 },
    /// Settling time into `Ã + eps_ball·B°`.
    Settling { eps_ball: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityRow {
    pub radius: f64,
    /// Empirical 95th percentile of the hitting or settling time; absent
    /// (infinite) when more than 5% of the trials never hit or settle.
    pub p95: Option<f64>,
    pub resolved: Fraction,
}

/// `R ↦ τ̂(R)` for increasing radii.
pub fn uniformity_sweep(
    scenario: &Scenario,
    estimator: UniformityEstimator,
    radii: &[f64],
    trials: usize,
    master_seed: u64,
    config: &SimConfig,
) -> Result<Vec<UniformityRow>> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    radii
        .iter()
        .map(|&radius| {
            let times: Vec<Option<f64>> = match estimator {
                UniformityEstimator::Recurrence { horizon } => {
                    let rep = estimate_recurrence(scenario, radius, trials, horizon, master_seed, config)?;
                    rep.records.iter().map(|r| r.hitting_time.or(if r.outcome == Outcome::Stopped { Some(0.0) } else { None })).collect()
                }
                UniformityEstimator::Settling { eps_ball } => {
                    let rep = estimate_containment(scenario, radius, eps_ball, config.horizon_t, trials, master_seed, config)?;
                    rep.records.iter().map(|r| if r.outcome == Outcome::Escaped { None } else { r.settling_time }).collect()
                }
            };
            let mut ok: Vec<f64> = times.iter().flatten().copied().collect();
            let resolved = Fraction::new(ok.len(), trials);
            let p95 = if (trials - ok.len()) as f64 > 0.05 * trials as f64 {
                None
            } else {
                let mut all = ok.clone();
                all.resize(trials, f64::INFINITY);
                all.sort_by(f64::total_cmp);
                ok.sort_by(f64::total_cmp);
                Some(quantile(&all, 0.95).filter(|v| v.is_finite()).unwrap_or_else(|| *ok.last().unwrap_or(&0.0)))
            };
            Ok(UniformityRow { radius, p95, resolved })
        })
        .collect()
}

/// Quantity tabulated by [`epsilon_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepMetric {
    /// Attractivity fraction.
    Containment { eps_ball: f64, t_after: f64 },
    /// Hit-or-stop fraction.
    Recurrence { horizon: f64 },
    /// Flagged flow increases of `E_θ*` outside `O_χ`, summed over trials.
    MonitorViolations,
    /// Mean target distance at the end of the horizon.
    FinalDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub step_h: f64,
    pub value: f64,
    /// `ε < ε*` for the printed threshold.
    pub below_threshold: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSweep {
    pub scenario: String,
    pub metric: SweepMetric,
    pub epsilon_star: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub radius: f64,
    pub rows: Vec<EpsilonRow>,
}

/// Arc and monitor trace of `E_θ*` for one trial.
pub fn monitor_trial(
    scenario: &Scenario,
    master_seed: u64,
    trial: u64,
    radius: f64,
    config: &SimConfig,
) -> Result<(HybridArc<f64>, MonitorTrace)> {
    let stream = RandomStream::new(master_seed, trial);
    let (y0, _) = draw_initial(scenario, &stream, radius)?;
    let arc = simulate_arc(&scenario.system, &y0, &stream, config)?;
    let theta = scenario.theta_star()?;
    let tol = crate::foster::MONITOR_REL_TOL * config.step_h;
    let trace = monitor_along_arc(&scenario.system, &scenario.cert, theta, &arc, tol);
    Ok((arc, trace))
}

/// Evaluates `metric` at each `ε` (positive, decreasing); the step size
/// follows `ε` and the remaining settings come from `config`.
pub fn epsilon_sweep(
    scenario: &Scenario,
    eps_values: &[f64],
    metric: SweepMetric,
    trials: usize,
    master_seed: u64,
    radius: f64,
    config: &SimConfig,
) -> Result<EpsilonSweep> {
    check_trials(trials)?;
    if eps_values.iter().any(|e| !(*e > 0.0)) || eps_values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("epsilon values must be positive and decreasing".into()));
    }
    let epsilon_star = scenario.epsilon_star().ok();
    let rows = eps_values
        .iter()
        .map(|&eps| {
            let s = scenario.with_epsilon(eps)?;
            let cfg = SimConfig { step_h: s.sim.step_h.min(config.step_h), ..config.clone() };
            let value = match metric {
                SweepMetric::Containment { eps_ball, t_after } => {
                    estimate_containment(&s, radius, eps_ball, t_after, trials, master_seed, &cfg)?
                        .attractivity_fraction
                        .map_or(0.0, |f| f.value)
                }
                SweepMetric::Recurrence { horizon } => estimate_recurrence(&s, radius, trials, horizon, master_seed, &cfg)?
                    .success_fraction
                    .map_or(0.0, |f| f.value),
                SweepMetric::MonitorViolations => run_trials(trials, |i| match monitor_trial(&s, master_seed, i, radius, &cfg) {
                    Ok((_, tr)) => Ok(tr.violations as f64),
                    Err(Error::NonFinite { .. }) => Ok(f64::INFINITY),
                    Err(e) => Err(e),
                })?
                .iter()
                .sum(),
                SweepMetric::FinalDistance => {
                    let rep = estimate_containment(&s, radius, 0.0, cfg.horizon_t, trials, master_seed, &cfg)?;
                    rep.records.iter().map(|r| r.final_distance.unwrap_or(f64::INFINITY)).sum::<f64>() / trials as f64
                }
            };
            Ok(EpsilonRow { epsilon: eps, step_h: cfg.step_h, value, below_threshold: epsilon_star.map(|e| eps < e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonSweep { scenario: scenario.name.clone(), metric, epsilon_star, trials, master_seed, radius, rows })
}
