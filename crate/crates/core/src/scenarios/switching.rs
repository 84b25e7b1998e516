use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ball_draw, finish, lambda_min_max, matrix, mk_note, mode_index, require_shape, step_for, tensor,
    timer_weight, Claim, Mat, Parts, Scenario, SystemSpec,
};
use crate::error::{Error, Result};
use crate::foster::{CertificateData, ConstantsLedger, FlowMode, JumpMode};
use crate::hybrid::{FlowMap, JumpMap, Manifold, ParamBox, ProductSet, SetPredicate, SpSystem, StateVector};
use crate::linalg::Matrix;
use crate::lmi::{feasibility_search, log_ratio, SwitchedLmiInstance};
use crate::scalar::norm;
use crate::simulate::{FlowSelection, SimConfig};
use crate::stochastic::{Expectation, JumpMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingParams {
    pub epsilon: f64,
    /// Timer drift bound: `τ̇ ∈ [−η, 0]`.
    pub eta: f64,
    /// Dwell-time cap `T`.
    pub t_cap: f64,
    /// Mode probabilities.
    pub lambda: Vec<f64>,
    /// Open-loop slow matrices, one per mode.
    pub a_tilde: Vec<Mat>,
    pub b: Vec<Mat>,
    pub h: Mat,
    pub l: Mat,
    /// Slow certificates, one per mode.
    pub p: Vec<Mat>,
    /// Fast certificate.
    pub p_z: Mat,
    /// Timer weight slope; searched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for SwitchingParams {
    fn default() -> Self {
        SwitchingParams {
            epsilon: 0.1,
            eta: 0.03,
            t_cap: 2.0,
            lambda: vec![0.5, 0.5],
            a_tilde: vec![vec![vec![-2.0, 2.0], vec![-1.0, 0.0]], vec![vec![-2.0, -1.0], vec![-2.0, -2.0]]],
            b: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![-1.0, 0.0]]],
            h: vec![vec![1.0, -1.0], vec![1.0, 1.0]],
            l: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            p: vec![vec![vec![0.5, 0.75], vec![0.75, 2.75]], vec![vec![2.75, -0.75], vec![-0.75, 0.5]]],
            p_z: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
            sigma: None,
        }
    }
}

pub(super) fn build(p: &SwitchingParams) -> Result<Scenario> {
    let modes = p.a_tilde.len();
    if modes == 0 || p.b.len() != modes || p.p.len() != modes || p.lambda.len() != modes {
        return Err(Error::Dimension("a_tilde, b, p and lambda need one entry per mode".into()));
    }
    if !(p.t_cap > 0.0 && p.eta >= 0.0) {
        return Err(Error::Config(format!("need t_cap > 0 and eta >= 0, got {} and {}", p.t_cap, p.eta)));
    }
    let at: Vec<Matrix<f64>> = p.a_tilde.iter().map(|m| matrix(m, "a_tilde")).collect::<Result<_>>()?;
    let n = at[0].rows();
    let l = matrix(&p.l, "l")?;
    let m = l.rows();
    let h = matrix(&p.h, "h")?;
    let pz = matrix(&p.p_z, "p_z")?;
    require_shape(&l, m, m, "l")?;
    require_shape(&h, m, n, "h")?;
    require_shape(&pz, m, m, "p_z")?;
    let b: Vec<Matrix<f64>> = p.b.iter().map(|x| matrix(x, "b")).collect::<Result<_>>()?;
    let pq: Vec<Matrix<f64>> = p.p.iter().map(|x| matrix(x, "p")).collect::<Result<_>>()?;
    for q in 0..modes {
        require_shape(&at[q], n, n, "a_tilde")?;
        require_shape(&b[q], n, m, "b")?;
        require_shape(&pq[q], n, n, "p")?;
    }

    // Closed-loop slow matrices on the manifold z = -L⁻¹Hξ.
    let l_inv = l.inverse()?;
    let gain = (&l_inv * &h).scale(-1.0);
    let a: Vec<Matrix<f64>> = (0..modes).map(|q| &at[q] + &(&b[q] * &gain)).collect();
    let sigma = match p.sigma {
        Some(s) => s,
        None => feasibility_search(&a, &pq, &p.lambda, p.t_cap)?.0,
    };
    let lmi = SwitchedLmiInstance {
        a: a.clone(),
        p: pq.clone(),
        lambda: p.lambda.clone(),
        sigma,
        eta: p.eta,
        t_cap: p.t_cap,
        fast_pair: Some((l.clone(), pz.clone())),
    };
    lmi.validate()?;

    let mut q_max = f64::NEG_INFINITY;
    let mut p_min = f64::INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    let mut k1 = 0.0f64;
    let mut k2 = 0.0f64;
    let mut k3 = 0.0f64;
    let mut gap = f64::NEG_INFINITY;
    let pbar = lmi.mean_certificate();
    let g = log_ratio(sigma);
    // ∂_ξ W = 2 K e with K = (L⁻¹H)ᵀ P_z.
    let k_mat = &gain.transpose().scale(-1.0) * &pz;
    for q in 0..modes {
        let lyap = &(&a[q].transpose() * &pq[q]) + &(&pq[q] * &a[q]);
        let qq = &lyap + &pq[q].scale(sigma * p.eta / p.t_cap);
        q_max = q_max.max(qq.lambda_max_sym()?);
        let (lo, hi) = lambda_min_max(&pq[q])?;
        p_min = p_min.min(lo);
        p_max = p_max.max(hi);
        k1 = k1.max(2.0 * a[q].sigma_max() * k_mat.sigma_max());
        k2 = k2.max(2.0 * (&b[q].transpose() * &k_mat).sym().lambda_max_sym()?);
        k3 = k3.max(2.0 * pq[q].sigma_max() * b[q].sigma_max());
        gap = gap.max((&pbar.scale(g) - &pq[q]).lambda_max_sym()?);
    }
    let k_z = -(&(&l.transpose() * &pz) + &(&pz * &l)).lambda_max_sym()?;
    let ledger = ConstantsLedger {
        k_x: (-q_max / (sigma + 1.0)).max(0.0),
        k_z: k_z.max(0.0),
        c_x: (-gap).max(0.0),
        k1,
        k2: k2.max(0.0),
        k3,
        ..Default::default()
    };
    let (pz_min, pz_max) = lambda_min_max(&pz)?;

    let (iq, it) = (n, n + 1);
    let labels: Vec<f64> = (1..=modes).map(|q| q as f64).collect();
    let mut full_gain = Matrix::zeros(m, n + 2);
    for i in 0..m {
        for j in 0..n {
            full_gain[(i, j)] = gain[(i, j)];
        }
    }
    let t_cap = p.t_cap;
    let (at_f, b_f) = (at.clone(), b.clone());
    let (h_f, l_f) = (h.clone(), l.clone());
    let system = SpSystem {
        name: "switching".into(),
        n_x: n + 2,
        n_z: m,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(
            SetPredicate::interval(it, 0.0, t_cap).and(SetPredicate::finite_values(iq, labels.clone())),
            SetPredicate::everything(),
        ),
        jump_set: ProductSet::new(
            SetPredicate::level(it, 0.0)
                .with_crossing(move |x: &[f64]| x[it])
                .and(SetPredicate::finite_values(iq, labels.clone())),
            SetPredicate::everything(),
        ),
        flow_x: FlowMap::family(
            move |x: &[f64], z: &[f64], s: &[f64]| {
                let q = mode_index(x[iq], modes);
                let mut f: Vec<f64> =
                    at_f[q].mat_vec(&x[..n]).iter().zip(b_f[q].mat_vec(z)).map(|(u, w)| u + w).collect();
                f.push(0.0);
                f.push(s[0]);
                f
            },
            ParamBox::interval(-p.eta, 0.0),
        ),
        flow_z: FlowMap::single(move |x: &[f64], z: &[f64]| {
            h_f.mat_vec(&x[..n]).iter().zip(l_f.mat_vec(z)).map(|(u, w)| u + w).collect()
        }),
        jump: JumpMap::single(move |x: &[f64], z: &[f64], v: &[f64]| {
            let mut xp = x[..n].to_vec();
            xp.push(v[0]);
            xp.push(v[1]);
            StateVector::new(xp, z.to_vec())
        }),
        measure: JumpMeasure::Product {
            components: vec![
                JumpMeasure::Discrete { points: labels.clone(), weights: p.lambda.clone() },
                JumpMeasure::UniformInterval { a: 0.0, b: t_cap },
            ],
        },
        manifold: Manifold::affine(full_gain, vec![0.0; m]),
    };
    system.validate()?;

    let err = {
        let gain = gain.clone();
        move |x: &[f64], z: &[f64]| -> Vec<f64> { z.iter().zip(gain.mat_vec(&x[..n])).map(|(a, b)| a - b).collect() }
    };
    let (pv, pg) = (pq.clone(), pq.clone());
    let (pzw, pzg) = (pz.clone(), pz.clone());
    let (ew, eg) = (err.clone(), err);
    let mut cert = CertificateData::new(
        move |x: &[f64]| {
            let q = mode_index(x[iq], modes);
            timer_weight(sigma, x[it], t_cap) * pv[q].quad_form(&x[..n])
        },
        move |x: &[f64], z: &[f64]| pzw.quad_form(&ew(x, z)),
    );
    cert.grad_v = Some(Arc::new(move |x: &[f64]| {
        let q = mode_index(x[iq], modes);
        let c = timer_weight(sigma, x[it], t_cap);
        let mut gr: Vec<f64> = pg[q].mat_vec(&x[..n]).iter().map(|a| 2.0 * c * a).collect();
        gr.push(0.0);
        gr.push(-(sigma / t_cap) * c * c * pg[q].quad_form(&x[..n]));
        gr
    }));
    let gain_t = gain.transpose();
    cert.grad_w = Some(Arc::new(move |x: &[f64], z: &[f64]| {
        let e = eg(x, z);
        let gz: Vec<f64> = pzg.mat_vec(&e).iter().map(|a| 2.0 * a).collect();
        let mut gx: Vec<f64> = gain_t.mat_vec(&gz).iter().map(|a| -a).collect();
        gx.push(0.0);
        gx.push(0.0);
        (gx, gz)
    }));
    cert.phi_x = Arc::new(move |x: &[f64]| norm(&x[..n]));
    cert.phi_z = Arc::new(|d| d);
    cert.alpha1 = Arc::new(move |r| pz_min * r * r);
    cert.alpha2 = Arc::new(move |r| pz_max * r * r);
    cert.alpha3 = Arc::new(move |r| p_min / (sigma + 1.0) * r * r);
    cert.alpha4 = Arc::new(move |r| p_max * r * r);
    cert.rho_x = Arc::new(move |x: &[f64]| norm(&x[..n]).powi(2));
    cert.rho5 = cert.rho_x.clone();
    cert.target_set = SetPredicate::new(move |x: &[f64]| norm(&x[..n]));

    let xi_axis = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let taus = [0.0, 0.25, 0.5, 0.75, 1.0].map(|u| u * t_cap);
    let errs = tensor(&[-1.0, 0.0, 1.0], m);
    let gp = gain.clone();
    let lift = move |xi: &[f64], q: f64, tau: f64, e: &[f64]| {
        let mut x = xi.to_vec();
        x.push(q);
        x.push(tau);
        let z = gp.mat_vec(xi).iter().zip(e).map(|(a, b)| a + b).collect();
        StateVector::new(x, z)
    };
    let mut flow_grid = vec![];
    let mut jump_grid = vec![];
    for xi in tensor(&xi_axis, n) {
        for &q in &labels {
            for e in &errs {
                for &tau in &taus {
                    flow_grid.push(lift(&xi, q, tau, e));
                }
                jump_grid.push(lift(&xi, q, 0.0, e));
            }
        }
    }

    let notes = vec![
        mk_note("x", "slow state (xi, q, tau): plant state, active mode label and countdown timer"),
        mk_note("z", "fast actuator state"),
        mk_note("C", "tau in [0, T] and q a valid mode label"),
        mk_note("D", "tau = 0"),
        mk_note("F", format!("xi' = A~_q xi + B_q z, q' = 0, tau' in [-{}, 0]; z' = H xi + L z", p.eta)),
        mk_note("G", "xi and z keep their values, q and tau are redrawn"),
        mk_note("mu", "q from the mode probabilities and tau uniform on [0, T]"),
        mk_note("V", format!("(sigma tau / T + 1)^-1 xi' P_q xi with sigma = {sigma:.6}")),
        mk_note("W", "e' P_z e with e = z + L^-1 H xi"),
    ];

    let sim = SimConfig {
        step_h: step_for(p.epsilon),
        horizon_t: 50.0,
        horizon_j: 1000,
        flow_selection: FlowSelection::Lower,
        ..Default::default()
    };
    let gi = gain;
    let lam = p.lambda.clone();
    finish(
        "switching",
        SystemSpec::Switching(p.clone()),
        Parts {
            system,
            cert,
            ledger,
            notes,
            claim: Claim::Stability,
            flow_mode: FlowMode::Nonstrict,
            jump_mode: JumpMode::Thm2Relaxed,
            expectation: Expectation::Quadrature { nodes: 64 },
            lmi: Some(lmi),
            sim,
            flow_grid,
            jump_grid,
            init_radius: 5.0,
            init: Arc::new(move |s, r| {
                let mut s = s.clone();
                let w = ball_draw(&mut s, n + m, r);
                let q = pick_mode(&mut s, &lam);
                let tau = s.next_uniform() * t_cap;
                let mut x = w[..n].to_vec();
                x.push(q as f64 + 1.0);
                x.push(tau);
                let z = gi.mat_vec(&w[..n]).iter().zip(&w[n..]).map(|(a, b)| a + b).collect();
                StateVector::new(x, z)
            }),
        },
    )
}

/// Mode index drawn from the mode probabilities.
pub(super) fn pick_mode(s: &mut crate::stochastic::RandomStream, lambda: &[f64]) -> usize {
    let u = s.next_uniform();
    let mut acc = 0.0;
    for (q, w) in lambda.iter().enumerate() {
        acc += w;
        if u < acc {
            return q;
        }
    }
    lambda.len() - 1
}
