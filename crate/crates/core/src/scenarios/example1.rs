use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ball_draw, finish, linspace, mk_note, step_for, Claim, Parts, Scenario, SystemSpec};
use crate::error::Result;
use crate::foster::{CertificateData, ConstantsLedger, FlowMode, JumpMode};
use crate::hybrid::{FlowMap, JumpMap, Manifold, ProductSet, SetPredicate, SpSystem, StateVector};
use crate::linalg::Matrix;
use crate::simulate::SimConfig;
use crate::stochastic::{Expectation, JumpMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub epsilon: f64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Example1Params { epsilon: 0.05 }
    }
}

/// Probability of the downward step of the jump law.
const P_DOWN: f64 = 17.0 / 20.0;

/// Exact jump decrease `E_θ(y) − E_μ E_θ(g(y, v))` at `θ = 1/2` on `D`.
pub fn rho_tilde(x: f64, z: f64) -> f64 {
    let p_up = 1.0 - P_DOWN;
    0.25 * (x * x + (z + x) * (z + x)) - 0.25 * p_up * (x + 1.0).max(0.0).powi(2) - 0.25 * P_DOWN * (x - 1.0).max(0.0).powi(2)
}

/// Distance to the nearest nonnegative integer.
fn nonneg_int_distance(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        (x - x.round()).abs()
    }
}

pub(super) fn build(p: &Example1Params) -> Result<Scenario> {
    let system = SpSystem {
        name: "example1".into(),
        n_x: 1,
        n_z: 1,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(SetPredicate::everything(), SetPredicate::everything()),
        jump_set: ProductSet::new(
            SetPredicate::new(|x: &[f64]| nonneg_int_distance(x[0])).with_crossing(|x: &[f64]| (PI * x[0]).sin()),
            SetPredicate::everything(),
        ),
        flow_x: FlowMap::single(|_x: &[f64], z: &[f64]| vec![z[0]]),
        flow_z: FlowMap::single(|x: &[f64], z: &[f64]| vec![-(z[0] + x[0])]),
        jump: JumpMap::single(|x: &[f64], _z: &[f64], v: &[f64]| {
            let m = (x[0] + v[0]).max(0.0);
            StateVector::new(vec![m], vec![-m])
        }),
        measure: JumpMeasure::Discrete { points: vec![-1.0, 1.0], weights: vec![P_DOWN, 1.0 - P_DOWN] },
        manifold: Manifold::affine(Matrix::from_f64(&[&[-1.0]]), vec![0.0]),
    };
    system.validate()?;

    let mut cert = CertificateData::new(|x: &[f64]| 0.5 * x[0] * x[0], |x: &[f64], z: &[f64]| 0.5 * (z[0] + x[0]).powi(2));
    cert.grad_v = Some(Arc::new(|x: &[f64]| vec![x[0]]));
    cert.grad_w = Some(Arc::new(|x: &[f64], z: &[f64]| (vec![z[0] + x[0]], vec![z[0] + x[0]])));
    cert.phi_x = Arc::new(|x: &[f64]| x[0].abs());
    cert.phi_z = Arc::new(|d| d);
    let half_sq: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|r| 0.5 * r * r);
    cert.alpha1 = half_sq.clone();
    cert.alpha2 = half_sq.clone();
    cert.alpha3 = half_sq.clone();
    cert.alpha4 = half_sq;
    cert.rho_hat = Arc::new(|_| 0.05);
    cert.recur_set = Some(SetPredicate::interval(0, -1.0, 1.0));
    cert.chi = 1.0;
    cert.nu = 0.1;

    let ledger = ConstantsLedger { k_x: 1.0, k_z: 1.0, k1: 1.0, k2: 1.0, k3: 1.0, ..Default::default() };

    let axis = linspace(-3.0, 3.0, 25);
    let flow_grid = axis.iter().flat_map(|&x| axis.iter().map(move |&z| StateVector::new(vec![x], vec![z]))).collect();
    let zs = linspace(-10.0, 10.0, 41);
    let jump_grid =
        (0..=40).flat_map(|x| zs.iter().map(move |&z| StateVector::new(vec![x as f64], vec![z]))).collect();

    let notes = vec![
        mk_note("x", "slow scalar state driven by the fast state"),
        mk_note("z", "fast scalar state relaxing towards -x"),
        mk_note("D", "x on the nonnegative integers; crossings located through sin(pi x)"),
        mk_note("G", "x moves one unit up or down, clipped at zero, and z is reset onto the manifold"),
        mk_note("mu", "v = -1 with probability 17/20 and v = +1 with probability 3/20"),
        mk_note("V, W", "V = x^2/2 and W = (z + x)^2/2"),
        mk_note("O_chi", "|x| < 1 and |z + x| < 1, with flow slack nu = 1/10 and jump decrease 1/20"),
    ];

    let sim = SimConfig { step_h: step_for(p.epsilon), horizon_t: 20.0, horizon_j: 200, ..Default::default() };
    finish(
        "example1",
        SystemSpec::Example1(p.clone()),
        Parts {
            system,
            cert,
            ledger,
            notes,
            claim: Claim::Recurrence,
            flow_mode: FlowMode::Recurrence,
            jump_mode: JumpMode::Thm3,
            expectation: Expectation::ExactDiscrete,
            lmi: None,
            sim,
            flow_grid,
            jump_grid,
            init_radius: 5.0,
            init: Arc::new(|s, r| {
                let mut s = s.clone();
                let p = ball_draw(&mut s, 2, r);
                StateVector::new(vec![p[0]], vec![p[1]])
            }),
        },
    )
}
