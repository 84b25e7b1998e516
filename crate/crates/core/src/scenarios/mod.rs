//! Packaged systems: each bundles the system data, its certificate and
//! constants, default simulation settings, verification grids and an
//! initial-condition sampler.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foster::{
    self, epsilon_star, theta_star, verify_flow_decrease, verify_jump_decrease, verify_sandwich, CertificateData,
    ConstantsLedger, FlowMode, JumpMode, VerificationReport,
};
use crate::hybrid::{build_reduced, ReducedSystem, SpSystem, StateVector};
use crate::linalg::Matrix;
use crate::lmi::{check_switched_lmis, LmiReport, SwitchedLmiInstance};
use crate::simulate::SimConfig;
use crate::stochastic::{Expectation, JumpMeasure, RandomStream, LANE_INIT};

mod bounded_inputs;
mod example1;
mod heavy_ball;
mod switching;
mod switching_plant;
mod zero;

pub use bounded_inputs::{recurrence_radius, BoundedInputsParams};
pub use example1::{rho_tilde, Example1Params};
pub use heavy_ball::HeavyBallParams;
pub use switching::SwitchingParams;
pub use switching_plant::SwitchingPlantParams;
pub use zero::ZeroParams;

/// Row-major matrix as stored in system documents.
pub type Mat = Vec<Vec<f64>>;

/// Draws an initial state from a stream and a radius.
pub type InitFn = Arc<dyn Fn(&RandomStream, f64) -> StateVector<f64> + Send + Sync>;

/// Property the certificate establishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// Uniform global asymptotic stability in probability of the target set.
    Stability,
    /// Uniform global recurrence of `O_χ`.
    Recurrence,
}

/// Description of one scenario field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Note {
    pub field: String,
    pub text: String,
}

pub(crate) fn mk_note(field: &str, text: impl Into<String>) -> Note {
    Note { field: field.into(), text: text.into() }
}

/// Parameters of a packaged system, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum SystemSpec {
    Example1(Example1Params),
    Switching(SwitchingParams),
    HeavyBall(HeavyBallParams),
    SwitchingPlant(SwitchingPlantParams),
    BoundedInputs(BoundedInputsParams),
    ZeroDynamics(ZeroParams),
}

/// Names accepted by [`SystemSpec::named`], in listing order.
pub const NAMES: [&str; 6] = ["example1", "switching", "heavy_ball", "switching_plant", "bounded_inputs", "zero_dynamics"];

impl SystemSpec {
    /// Default parameters of a named scenario.
    pub fn named(name: &str) -> Result<Self> {
        Ok(match name {
            "example1" => SystemSpec::Example1(Default::default()),
            "switching" => SystemSpec::Switching(Default::default()),
            "heavy_ball" => SystemSpec::HeavyBall(Default::default()),
            "switching_plant" => SystemSpec::SwitchingPlant(Default::default()),
            "bounded_inputs" => SystemSpec::BoundedInputs(Default::default()),
            "zero_dynamics" => SystemSpec::ZeroDynamics(Default::default()),
            _ => return Err(Error::UnknownScenario(name.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Example1(_) => "example1",
            SystemSpec::Switching(_) => "switching",
            SystemSpec::HeavyBall(_) => "heavy_ball",
            SystemSpec::SwitchingPlant(_) => "switching_plant",
            SystemSpec::BoundedInputs(_) => "bounded_inputs",
            SystemSpec::ZeroDynamics(_) => "zero_dynamics",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            SystemSpec::Example1(p) => p.epsilon,
            SystemSpec::Switching(p) => p.epsilon,
            SystemSpec::HeavyBall(p) => p.epsilon,
            SystemSpec::SwitchingPlant(p) => p.epsilon,
            SystemSpec::BoundedInputs(p) => p.epsilon,
            SystemSpec::ZeroDynamics(p) => p.epsilon,
        }
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        match self {
            SystemSpec::Example1(p) => p.epsilon = epsilon,
            SystemSpec::Switching(p) => p.epsilon = epsilon,
            SystemSpec::HeavyBall(p) => p.epsilon = epsilon,
            SystemSpec::SwitchingPlant(p) => p.epsilon = epsilon,
            SystemSpec::BoundedInputs(p) => p.epsilon = epsilon,
            SystemSpec::ZeroDynamics(p) => p.epsilon = epsilon,
        }
    }

    /// Sets the timer drift bound `η` of the switching families.
    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        match self {
            SystemSpec::Switching(p) => p.eta = eta,
            SystemSpec::SwitchingPlant(p) => p.eta = eta,
            _ => return Err(Error::Config(format!("scenario {} has no timer drift parameter", self.name()))),
        }
        Ok(())
    }

    /// Builds the scenario without running its self-check.
    pub fn build(&self) -> Result<Scenario> {
        if !(self.epsilon() > 0.0 && self.epsilon().is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon())));
        }
        match self {
            SystemSpec::Example1(p) => example1::build(p),
            SystemSpec::Switching(p) => switching::build(p),
            SystemSpec::HeavyBall(p) => heavy_ball::build(p),
            SystemSpec::SwitchingPlant(p) => switching_plant::build(p),
            SystemSpec::BoundedInputs(p) => bounded_inputs::build(p),
            SystemSpec::ZeroDynamics(p) => zero::build(p),
        }
    }

    /// Builds the scenario and fails unless its self-check passes.
    pub fn load(&self) -> Result<Scenario> {
        let s = self.build()?;
        let check = s.self_check()?;
        if !check.pass {
            return Err(Error::SelfCheck(format!("{}: {}", s.name, check.failures().join("; "))));
        }
        Ok(s)
    }
}

/// System document: parameters plus optional simulation overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl SystemFile {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Pretty JSON in declaration key order; parsing it back and dumping
    /// again reproduces the same bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Name and one-line description of every packaged scenario.
pub fn list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("example1", "scalar recurrence system with integer jump set and a two-point jump law"),
        ("switching", "singularly perturbed switched linear system with random modes and dwell times"),
        ("heavy_ball", "heavy-ball feedback optimization of a fast linear plant with random momentum resets"),
        ("switching_plant", "gradient feedback optimization through a fast randomly switching plant"),
        ("bounded_inputs", "linear system with piecewise constant random inputs from a ball"),
        ("zero_dynamics", "frozen stub system with no dynamics and no jumps"),
    ]
}

/// Named scenario with default parameters, self-checked.
pub fn by_name(name: &str) -> Result<Scenario> {
    SystemSpec::named(name)?.load()
}

/// Integrator step for a given `ε`: at most `ε/20` and never above `1e-3`.
pub fn step_for(epsilon: f64) -> f64 {
    (epsilon / 20.0).min(1e-3)
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub spec: SystemSpec,
    pub system: SpSystem<f64>,
    pub reduced: ReducedSystem<f64>,
    pub cert: CertificateData<f64>,
    pub ledger: ConstantsLedger,
    pub notes: Vec<Note>,
    pub claim: Claim,
    pub flow_mode: FlowMode,
    pub jump_mode: JumpMode,
    pub expectation: Expectation,
    pub lmi: Option<SwitchedLmiInstance<f64>>,
    pub sim: SimConfig,
    pub flow_grid: Vec<StateVector<f64>>,
    pub jump_grid: Vec<StateVector<f64>>,
    /// Default radius of the initial-condition set.
    pub init_radius: f64,
    pub init: InitFn,
}

/// Outcome of the load-time verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub scenario: String,
    pub theta: f64,
    pub epsilon: f64,
    pub epsilon_star: Option<f64>,
    pub sandwich: VerificationReport,
    pub flow: VerificationReport,
    pub jump: VerificationReport,
    pub lmi: Option<LmiReport>,
    pub pass: bool,
}

impl SelfCheck {
    /// One line per failed check naming its worst inequality.
    pub fn failures(&self) -> Vec<String> {
        let mut out = vec![];
        if let Some(l) = &self.lmi {
            if let Some(e) = l.first_failure() {
                let mode = e.mode.map_or("fast pair".to_string(), |q| format!("mode {}", q + 1));
                out.push(format!("LMI ({}) fails for {mode}: lambda_max = {:.6e}", e.inequality, e.lambda_max));
            }
        }
        for r in [&self.sandwich, &self.flow, &self.jump] {
            if r.pass {
                continue;
            }
            let worst = r
                .inequalities
                .iter()
                .filter(|i| !i.pass)
                .max_by(|a, b| a.max_residual.total_cmp(&b.max_residual));
            match worst {
                Some(i) => out.push(format!("{} check: {} residual {:.6e} at {:?}", r.check, i.name, i.max_residual, i.worst_point)),
                None => out.push(format!("{} check failed: {}", r.check, r.notes.join("; "))),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Scenario {
    pub fn theta_star(&self) -> Result<f64> {
        theta_star(&self.ledger)
    }

    pub fn epsilon_star(&self) -> Result<f64> {
        epsilon_star(&self.ledger)
    }

    pub fn epsilon(&self) -> f64 {
        self.system.epsilon
    }

    /// Same scenario at another `ε`, with the step rescaled.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Scenario> {
        let mut spec = self.spec.clone();
        spec.set_epsilon(epsilon);
        let mut s = spec.build()?;
        let default_step = s.sim.step_h;
        s.sim = SimConfig { step_h: default_step, ..self.sim.clone() };
        Ok(s)
    }

    /// Initial state for trial `stream` from the set of the given radius.
    pub fn sample_init(&self, stream: &RandomStream, radius: f64) -> StateVector<f64> {
        self.sample_init_attempt(stream, radius, 0)
    }

    /// Draw number `attempt` for the trial, used when earlier draws were rejected.
    pub fn sample_init_attempt(&self, stream: &RandomStream, radius: f64, attempt: u64) -> StateVector<f64> {
        (self.init)(&stream.lane(LANE_INIT).at_counter(attempt << 32), radius)
    }

    /// `max(|x|_A, |z|_{M(x)})`.
    pub fn target_distance(&self, y: &StateVector<f64>) -> f64 {
        self.cert.target_distance(&y.x).max(self.system.manifold_distance(y))
    }

    /// Sandwich, flow, jump and LMI checks with the registered modes.
    pub fn self_check(&self) -> Result<SelfCheck> {
        self.verify(self.flow_mode, self.jump_mode)
    }

    /// Sandwich, flow, jump and LMI checks with the given modes.
    pub fn verify(&self, flow_mode: FlowMode, jump_mode: JumpMode) -> Result<SelfCheck> {
        let theta = self.theta_star()?;
        let mut sandwich_grid = self.flow_grid.clone();
        sandwich_grid.extend(self.jump_grid.iter().cloned());
        let sandwich = verify_sandwich(&self.system, &self.cert, &sandwich_grid);
        let flow = verify_flow_decrease(&self.system, &self.cert, &self.ledger, theta, &self.flow_grid, flow_mode)?;
        let jump =
            verify_jump_decrease(&self.system, &self.cert, &self.ledger, theta, &self.jump_grid, jump_mode, &self.expectation)?;
        let lmi = self.lmi.as_ref().map(check_switched_lmis).transpose()?;
        let pass = sandwich.pass && flow.pass && jump.pass && lmi.as_ref().is_none_or(|l| l.pass);
        Ok(SelfCheck {
            scenario: self.name.clone(),
            theta,
            epsilon: self.epsilon(),
            epsilon_star: self.epsilon_star().ok(),
            sandwich,
            flow,
            jump,
            lmi,
            pass,
        })
    }

    /// Flow tolerance used by the monotonicity monitor.
    pub fn monitor_tol(&self) -> f64 {
        foster::MONITOR_REL_TOL * self.sim.step_h
    }
}

pub(crate) fn matrix(m: &Mat, what: &str) -> Result<Matrix<f64>> {
    Matrix::from_rows(m).map_err(|e| Error::Config(format!("{what}: {e}")))
}

pub(crate) fn require_shape(m: &Matrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::Dimension(format!("{what} is {}x{}, expected {rows}x{cols}", m.rows(), m.cols())));
    }
    Ok(())
}

/// `n` evenly spaced points on `[lo, hi]`.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Every vector with components drawn from `axis`, in lexicographic order.
pub(crate) fn tensor(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        out = out
            .iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Draws from the uniform ball of `radius` in `dim` dimensions.
pub(crate) fn ball_draw(stream: &mut RandomStream, dim: usize, radius: f64) -> Vec<f64> {
    JumpMeasure::UniformBall { radius, dim }.sample(stream)
}

pub(crate) fn lambda_min_max(m: &Matrix<f64>) -> Result<(f64, f64)> {
    let e = m.sym_eigen()?;
    let lo = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `(σ τ / T + 1)⁻¹`.
pub(crate) fn timer_weight(sigma: f64, tau: f64, t_cap: f64) -> f64 {
    1.0 / (sigma * tau / t_cap + 1.0)
}

/// Mode index of a stored mode label `q ∈ {1, …, N}`.
pub(crate) fn mode_index(q: f64, n: usize) -> usize {
    (q.round().max(1.0) as usize - 1).min(n - 1)
}

pub(crate) fn finish(
    name: &str,
    spec: SystemSpec,
    parts: Parts,
) -> Result<Scenario> {
    let reduced = build_reduced(&parts.system, foster::HULL_SAMPLES)?;
    parts.ledger.validate()?;
    Ok(Scenario {
        name: name.into(),
        spec,
        system: parts.system,
        reduced,
        cert: parts.cert,
        ledger: parts.ledger,
        notes: parts.notes,
        claim: parts.claim,
        flow_mode: parts.flow_mode,
        jump_mode: parts.jump_mode,
        expectation: parts.expectation,
        lmi: parts.lmi,
        sim: parts.sim,
        flow_grid: parts.flow_grid,
        jump_grid: parts.jump_grid,
        init_radius: parts.init_radius,
        init: parts.init,
    })
}

/// Scenario pieces assembled by the family builders.
pub(crate) struct Parts {
    pub system: SpSystem<f64>,
    pub cert: CertificateData<f64>,
    pub ledger: ConstantsLedger,
    pub notes: Vec<Note>,
    pub claim: Claim,
    pub flow_mode: FlowMode,
    pub jump_mode: JumpMode,
    pub expectation: Expectation,
    pub lmi: Option<SwitchedLmiInstance<f64>>,
    pub sim: SimConfig,
    pub flow_grid: Vec<StateVector<f64>>,
    pub jump_grid: Vec<StateVector<f64>>,
    pub init_radius: f64,
    pub init: InitFn,
}
