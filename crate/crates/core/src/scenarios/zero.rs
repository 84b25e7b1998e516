use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{finish, linspace, mk_note, step_for, Claim, Parts, Scenario, SystemSpec};
use crate::error::Result;
use crate::foster::{CertificateData, ConstantsLedger, FlowMode, JumpMode};
use crate::hybrid::{FlowMap, JumpMap, Manifold, ProductSet, SetPredicate, SpSystem, StateVector};
use crate::linalg::Matrix;
use crate::simulate::SimConfig;
use crate::stochastic::{Expectation, JumpMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroParams {
    pub epsilon: f64,
}

impl Default for ZeroParams {
    fn default() -> Self {
        ZeroParams { epsilon: 0.1 }
    }
}

pub(super) fn build(p: &ZeroParams) -> Result<Scenario> {
    let system = SpSystem {
        name: "zero_dynamics".into(),
        n_x: 1,
        n_z: 1,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(SetPredicate::everything(), SetPredicate::everything()),
        jump_set: ProductSet::new(SetPredicate::nothing(), SetPredicate::everything()),
        flow_x: FlowMap::zero(1),
        flow_z: FlowMap::zero(1),
        jump: JumpMap::single(|x: &[f64], z: &[f64], _v: &[f64]| StateVector::new(x.to_vec(), z.to_vec())),
        measure: JumpMeasure::Discrete { points: vec![0.0], weights: vec![1.0] },
        manifold: Manifold::affine(Matrix::from_f64(&[&[0.0]]), vec![0.0]),
    };
    system.validate()?;

    let mut cert = CertificateData::new(|x: &[f64]| 0.5 * x[0] * x[0], |_x: &[f64], z: &[f64]| 0.5 * z[0] * z[0]);
    cert.grad_v = Some(Arc::new(|x: &[f64]| vec![x[0]]));
    cert.grad_w = Some(Arc::new(|_x: &[f64], z: &[f64]| (vec![0.0], vec![z[0]])));
    let half_sq: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|r| 0.5 * r * r);
    cert.alpha1 = half_sq.clone();
    cert.alpha2 = half_sq.clone();
    cert.alpha3 = half_sq.clone();
    cert.alpha4 = half_sq;
    cert.recur_set = Some(SetPredicate::interval(0, -1.0, 1.0));

    let ledger = ConstantsLedger { k1: 1.0, k3: 1.0, ..Default::default() };
    let axis = linspace(-2.0, 2.0, 9);
    let flow_grid = axis.iter().flat_map(|&x| axis.iter().map(move |&z| StateVector::new(vec![x], vec![z]))).collect();

    let notes = vec![
        mk_note("x, z", "scalar states that never move"),
        mk_note("D", "empty, so arcs never jump"),
        mk_note("M", "z = 0"),
        mk_note("init", "every trial starts at the origin, which lies in the target set"),
    ];
    let sim = SimConfig { step_h: step_for(p.epsilon), horizon_t: 10.0, horizon_j: 10, ..Default::default() };
    finish(
        "zero_dynamics",
        SystemSpec::ZeroDynamics(p.clone()),
        Parts {
            system,
            cert,
            ledger,
            notes,
            claim: Claim::Stability,
            flow_mode: FlowMode::Nonstrict,
            jump_mode: JumpMode::Thm1,
            expectation: Expectation::ExactDiscrete,
            lmi: None,
            sim,
            flow_grid,
            jump_grid: vec![],
            init_radius: 0.0,
            init: Arc::new(|_, _| StateVector::new(vec![0.0], vec![0.0])),
        },
    )
}
