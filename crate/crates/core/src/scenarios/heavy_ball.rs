use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ball_draw, finish, lambda_min_max, matrix, mk_note, require_shape, step_for, tensor, Claim, Mat, Parts, Scenario, SystemSpec};
use crate::error::{Error, Result};
use crate::foster::{CertificateData, ConstantsLedger, FlowMode, JumpMode};
use crate::hybrid::{FlowMap, JumpMap, Manifold, ParamBox, ProductSet, SetPredicate, SpSystem, StateVector};
use crate::linalg::{solve_lyapunov, Matrix};
use crate::lmi::check_negative_definite;
use crate::scalar::norm;
use crate::simulate::{JumpSelection, SimConfig};
use crate::stochastic::{Expectation, JumpMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyBallParams {
    pub epsilon: f64,
    /// Momentum resets scale `p` by a factor in `[0, ρ]`.
    pub rho: f64,
    /// Damping.
    pub beta: f64,
    /// Timer length; the reset timer restarts from a truncated exponential on `[0, T]`.
    pub t_cap: f64,
    /// Plant `ż = Az + Bu`, output `y = Lz + d`.
    pub a: Mat,
    pub b: Mat,
    pub l: Mat,
    pub d: Vec<f64>,
    /// Steady-state input-output map; must equal `−LA⁻¹B`.
    pub h: Mat,
}

impl Default for HeavyBallParams {
    fn default() -> Self {
        HeavyBallParams {
            epsilon: 0.1,
            rho: 0.5,
            beta: 1.0,
            t_cap: 100.0,
            a: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            l: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            d: vec![1.0, -1.0],
            h: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(super) fn build(p: &HeavyBallParams) -> Result<Scenario> {
    if !(0.0..1.0).contains(&p.rho) || !(p.beta > 0.0) || !(p.t_cap > 0.0) {
        return Err(Error::Config(format!("need 0 <= rho < 1, beta > 0, T > 0; got {}, {}, {}", p.rho, p.beta, p.t_cap)));
    }
    let a = matrix(&p.a, "a")?;
    let m = a.rows();
    let b = matrix(&p.b, "b")?;
    let n = b.cols();
    let l = matrix(&p.l, "l")?;
    let r = l.rows();
    let h = matrix(&p.h, "h")?;
    require_shape(&a, m, m, "a")?;
    require_shape(&b, m, n, "b")?;
    require_shape(&l, r, m, "l")?;
    require_shape(&h, r, n, "h")?;
    if p.d.len() != r {
        return Err(Error::Dimension(format!("d has length {}, expected {r}", p.d.len())));
    }
    // Manifold z = Γu with Γ = −A⁻¹B.
    let gamma = (&a.inverse()? * &b).scale(-1.0);
    let h_check = &l * &gamma;
    if h_check.max_abs_diff(&h) > 1e-9 {
        return Err(Error::Config("h must equal -L A^-1 B".into()));
    }
    let pz = solve_lyapunov(&a, &Matrix::identity(m))?;
    let lyap = &(&a.transpose() * &pz) + &(&pz * &a);
    let (neg, lmax) = check_negative_definite(&lyap)?;
    if !neg {
        return Err(Error::Config(format!("plant matrix is not Hurwitz: lambda_max = {lmax}")));
    }

    // Cost φ(u) = |u|² + |Hu + d|², Hessian 2(I + HᵀH).
    let hess = (&Matrix::identity(n) + &(&h.transpose() * &h)).scale(2.0);
    let (m_phi, l_phi) = lambda_min_max(&hess)?;
    let ht = h.transpose();
    let u_star: Vec<f64> = hess.solve(&ht.mat_vec(&p.d).iter().map(|v| -2.0 * v).collect::<Vec<_>>())?;
    let d = p.d.clone();
    let (hc, dc) = (h.clone(), d.clone());
    let phi = move |u: &[f64]| -> f64 {
        let y = add(&hc.mat_vec(u), &dc);
        norm(u).powi(2) + norm(&y).powi(2)
    };
    let phi_star = phi(&u_star);
    let (hg, htg, dg) = (h.clone(), ht.clone(), d.clone());
    let grad_phi = move |u: &[f64]| -> Vec<f64> {
        let y = add(&hg.mat_vec(u), &dg);
        add(&u.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), &htg.mat_vec(&y).iter().map(|v| 2.0 * v).collect::<Vec<_>>())
    };

    let ledger = ConstantsLedger {
        k_x: p.beta,
        k_z: -lmax,
        c_x: 0.5 * (1.0 - p.rho * p.rho),
        k1: 2.0 * (&gamma.transpose() * &pz).sigma_max(),
        k2: 0.0,
        k3: 2.0 * h.sigma_max() * l.sigma_max(),
        ..Default::default()
    };

    let (iu, ip, it) = (0, n, 2 * n);
    let t_cap = p.t_cap;
    let beta = p.beta;
    let (a_f, b_f) = (a.clone(), b.clone());
    let (l_f, ht_f, d_f) = (l.clone(), ht.clone(), d.clone());
    let mut full_gain = Matrix::zeros(m, 2 * n + 1);
    for i in 0..m {
        for j in 0..n {
            full_gain[(i, j)] = gamma[(i, j)];
        }
    }
    let system = SpSystem {
        name: "heavy_ball".into(),
        n_x: 2 * n + 1,
        n_z: m,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(SetPredicate::interval(it, 0.0, t_cap), SetPredicate::everything()),
        jump_set: ProductSet::new(
            SetPredicate::level(it, t_cap).with_crossing(move |x: &[f64]| t_cap - x[it]),
            SetPredicate::everything(),
        ),
        flow_x: FlowMap::single(move |x: &[f64], z: &[f64]| {
            let u = &x[iu..iu + n];
            let mom = &x[ip..ip + n];
            let y = add(&l_f.mat_vec(z), &d_f);
            let mut f = mom.to_vec();
            let ky = ht_f.mat_vec(&y);
            f.extend((0..n).map(|i| -beta * mom[i] - 2.0 * u[i] - 2.0 * ky[i]));
            f.push(1.0);
            f
        }),
        flow_z: FlowMap::single(move |x: &[f64], z: &[f64]| add(&a_f.mat_vec(z), &b_f.mat_vec(&x[iu..iu + n]))),
        jump: JumpMap::family(
            move |x: &[f64], z: &[f64], v: &[f64], s: &[f64]| {
                let mut xp = x[iu..iu + n].to_vec();
                xp.extend(x[ip..ip + n].iter().map(|q| s[0] * q));
                xp.push(v[0]);
                StateVector::new(xp, z.to_vec())
            },
            ParamBox::interval(0.0, p.rho),
        ),
        measure: JumpMeasure::TruncatedExponential { t: t_cap },
        manifold: Manifold::affine(full_gain, vec![0.0; m]),
    };
    system.validate()?;

    let err = {
        let gamma = gamma.clone();
        move |x: &[f64], z: &[f64]| -> Vec<f64> { z.iter().zip(gamma.mat_vec(&x[iu..iu + n])).map(|(a, b)| a - b).collect() }
    };
    let (ew, eg) = (err.clone(), err);
    let (pzw, pzg) = (pz.clone(), pz.clone());
    let phi_v = phi.clone();
    let mut cert = CertificateData::new(
        move |x: &[f64]| 0.5 * norm(&x[ip..ip + n]).powi(2) + phi_v(&x[iu..iu + n]) - phi_star,
        move |x: &[f64], z: &[f64]| pzw.quad_form(&ew(x, z)),
    );
    cert.grad_v = Some(Arc::new(move |x: &[f64]| {
        let mut g = grad_phi(&x[iu..iu + n]);
        g.extend_from_slice(&x[ip..ip + n]);
        g.push(0.0);
        g
    }));
    let gamma_t = gamma.transpose();
    cert.grad_w = Some(Arc::new(move |x: &[f64], z: &[f64]| {
        let gz: Vec<f64> = pzg.mat_vec(&eg(x, z)).iter().map(|a| 2.0 * a).collect();
        let mut gx: Vec<f64> = gamma_t.mat_vec(&gz).iter().map(|a| -a).collect();
        gx.extend(std::iter::repeat_n(0.0, n + 1));
        (gx, gz)
    }));
    let (pz_min, pz_max) = lambda_min_max(&pz)?;
    cert.phi_x = Arc::new(move |x: &[f64]| norm(&x[ip..ip + n]));
    cert.phi_z = Arc::new(|d| d);
    cert.alpha1 = Arc::new(move |r| pz_min * r * r);
    cert.alpha2 = Arc::new(move |r| pz_max * r * r);
    let (a3, a4) = (0.5 * m_phi.min(1.0), 0.5 * l_phi.max(1.0));
    cert.alpha3 = Arc::new(move |r| a3 * r * r);
    cert.alpha4 = Arc::new(move |r| a4 * r * r);
    cert.rho_x = Arc::new(move |x: &[f64]| norm(&x[ip..ip + n]).powi(2));
    let us = u_star.clone();
    cert.target_set = SetPredicate::new(move |x: &[f64]| {
        let mut w: Vec<f64> = x[iu..iu + n].iter().zip(&us).map(|(a, b)| a - b).collect();
        w.extend_from_slice(&x[ip..ip + n]);
        norm(&w)
    });

    let u_axis = tensor(&[-2.0, 0.0, 2.0], n);
    let p_axis = tensor(&[-1.0, 0.0, 1.0], n);
    let e_axis = tensor(&[-1.0, 0.0, 1.0], m);
    let taus = [0.0, 0.5 * t_cap, t_cap];
    let gp = gamma.clone();
    let lift = move |u: &[f64], mom: &[f64], tau: f64, e: &[f64]| {
        let mut x = u.to_vec();
        x.extend_from_slice(mom);
        x.push(tau);
        StateVector::new(x, add(&gp.mat_vec(u), e))
    };
    let mut flow_grid = vec![];
    let mut jump_grid = vec![];
    for u in &u_axis {
        for mom in &p_axis {
            for e in &e_axis {
                for &tau in &taus {
                    flow_grid.push(lift(u, mom, tau, e));
                }
                jump_grid.push(lift(u, mom, t_cap, e));
            }
        }
    }

    let notes = vec![
        mk_note("x", "slow state (u, p, tau): input, momentum and reset timer"),
        mk_note("z", "fast plant state"),
        mk_note("C", "tau in [0, T]"),
        mk_note("D", "tau = T"),
        mk_note("F", "u' = p, p' = -beta p - grad of |u|^2 - 2 H' (L z + d), tau' = 1; z' = A z + B u"),
        mk_note("G", format!("u and z kept, p scaled by a factor in [0, {}], tau redrawn", p.rho)),
        mk_note("mu", "tau from the exponential law truncated to [0, T]"),
        mk_note("V", "|p|^2 / 2 plus the cost |u|^2 + |H u + d|^2 above its minimum"),
        mk_note("W", "e' P e with e = z + A^-1 B u and A'P + PA = -I"),
        mk_note("A", format!("u = u* = {:?} and p = 0", u_star)),
    ];

    let sim = SimConfig {
        step_h: step_for(p.epsilon),
        horizon_t: 50.0,
        horizon_j: 1000,
        jump_selection: JumpSelection::UniformPerJump,
        ..Default::default()
    };
    let gi = gamma;
    finish(
        "heavy_ball",
        SystemSpec::HeavyBall(p.clone()),
        Parts {
            system,
            cert,
            ledger,
            notes,
            claim: Claim::Stability,
            flow_mode: FlowMode::Nonstrict,
            jump_mode: JumpMode::Thm2Relaxed,
            expectation: Expectation::Quadrature { nodes: 16 },
            lmi: None,
            sim,
            flow_grid,
            jump_grid,
            init_radius: 3.0,
            init: Arc::new(move |s, r| {
                let mut s = s.clone();
                let w = ball_draw(&mut s, 2 * n, r);
                let tau = s.next_uniform() * t_cap;
                let mut x = w.clone();
                x.push(tau);
                StateVector::new(x, gi.mat_vec(&w[..n]))
            }),
        },
    )
}
