use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ball_draw, finish, lambda_min_max, linspace, matrix, mk_note, require_shape, step_for, tensor, Claim, Mat, Parts,
    Scenario, SystemSpec,
};
use crate::error::{Error, Result};
use crate::foster::{CertificateData, ConstantsLedger, FlowMode, JumpMode};
use crate::hybrid::{FlowMap, JumpMap, Manifold, ProductSet, SetPredicate, SpSystem, StateVector};
use crate::linalg::{solve_lyapunov, Matrix};
use crate::lmi::{check_negative_definite, SwitchedLmiInstance};
use crate::scalar::norm;
use crate::simulate::SimConfig;
use crate::stochastic::{Expectation, JumpMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedInputsParams {
    pub epsilon: f64,
    /// Share of the slow decrease kept for the quadratic term, in `(0, 1)`.
    pub chi1: f64,
    /// Offset in `φ_x = sqrt(|ξ|² + c̃²)`.
    pub c_tilde: f64,
    /// Fast radius of the recurrent set.
    pub chi: f64,
    /// Input hold time.
    pub t_cap: f64,
    /// Radius of the input ball.
    pub input_radius: f64,
    pub a: Mat,
    pub b: Mat,
    pub l: Mat,
    pub h: Mat,
}

impl Default for BoundedInputsParams {
    fn default() -> Self {
        BoundedInputsParams {
            epsilon: 0.1,
            chi1: 0.5,
            c_tilde: 1.0,
            chi: 1.0,
            t_cap: 1.0,
            input_radius: 1.0,
            a: vec![vec![-2.0, 2.0], vec![-1.0, 0.0]],
            b: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            l: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            h: vec![vec![1.0, -1.0], vec![1.0, 1.0]],
        }
    }
}

/// Radius `r` of the recurrent slow ball and the slack `ν = max_{[0, r]} κ`, where
/// `κ(s) = (1 − χ₁) λ s² + 2 s_u s − χ₁ λ c̃²`, `λ < 0` the decay rate and `s_u = sup |Pu|`.
pub fn recurrence_radius(lambda: f64, s_u: f64, chi1: f64, c_tilde: f64) -> (f64, f64) {
    let a = (1.0 - chi1) * lambda;
    let b = 2.0 * s_u;
    let c = -chi1 * lambda * c_tilde * c_tilde;
    let kappa = |s: f64| a * s * s + b * s + c;
    let r = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    let vertex = -b / (2.0 * a);
    let nu = if (0.0..=r).contains(&vertex) { kappa(vertex) } else { kappa(0.0) };
    (r, nu)
}

pub(super) fn build(p: &BoundedInputsParams) -> Result<Scenario> {
    if !(p.chi1 > 0.0 && p.chi1 < 1.0) || !(p.c_tilde > 0.0) || !(p.chi > 0.0) || !(p.t_cap > 0.0) || !(p.input_radius >= 0.0) {
        return Err(Error::Config("need 0 < chi1 < 1, c_tilde > 0, chi > 0, t_cap > 0, input_radius >= 0".into()));
    }
    let a = matrix(&p.a, "a")?;
    let n = a.rows();
    let b = matrix(&p.b, "b")?;
    let m = b.cols();
    let l = matrix(&p.l, "l")?;
    let h = matrix(&p.h, "h")?;
    require_shape(&a, n, n, "a")?;
    require_shape(&b, n, m, "b")?;
    require_shape(&l, m, m, "l")?;
    require_shape(&h, m, n, "h")?;

    // Manifold z = Γξ with Γ = −L⁻¹H; reduced matrix Ã = A + BΓ.
    let gamma = (&l.inverse()? * &h).scale(-1.0);
    let a_red = &a + &(&b * &gamma);
    let pm = solve_lyapunov(&a_red, &Matrix::identity(n))?;
    let qm = solve_lyapunov(&l, &Matrix::identity(m))?;
    let slow = &(&a_red.transpose() * &pm) + &(&pm * &a_red);
    let fast = &(&l.transpose() * &qm) + &(&qm * &l);
    let (ok_s, lam) = check_negative_definite(&slow)?;
    let (ok_f, lam_f) = check_negative_definite(&fast)?;
    if !(ok_s && ok_f) {
        return Err(Error::Config(format!("reduced or fast matrix not Hurwitz: {lam}, {lam_f}")));
    }
    let s_u = p.input_radius * pm.sigma_max();
    let (r, nu) = recurrence_radius(lam, s_u, p.chi1, p.c_tilde);

    let k_mat = &gamma.transpose().scale(-1.0) * &qm;
    let ks = k_mat.sigma_max();
    let ledger = ConstantsLedger {
        k_x: -p.chi1 * lam,
        k_z: -lam_f,
        k1: 2.0 * ks * a_red.sigma_max(),
        k2: (2.0 * (&b.transpose() * &k_mat).sym().lambda_max_sym()?).max(0.0),
        k3: 2.0 * pm.sigma_max() * b.sigma_max(),
        k4: 2.0 * ks * p.input_radius,
        ..Default::default()
    };

    let (iu, it) = (n, 2 * n);
    let t_cap = p.t_cap;
    let rad = p.input_radius;
    let u_idx: Vec<usize> = (iu..iu + n).collect();
    let (a_f, b_f, h_f, l_f) = (a.clone(), b.clone(), h.clone(), l.clone());
    let mut full_gain = Matrix::zeros(m, 2 * n + 1);
    for i in 0..m {
        for j in 0..n {
            full_gain[(i, j)] = gamma[(i, j)];
        }
    }
    let system = SpSystem {
        name: "bounded_inputs".into(),
        n_x: 2 * n + 1,
        n_z: m,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(
            SetPredicate::ball(u_idx.clone(), vec![0.0; n], rad).and(SetPredicate::interval(it, 0.0, t_cap)),
            SetPredicate::everything(),
        ),
        jump_set: ProductSet::new(
            SetPredicate::level(it, t_cap)
                .with_crossing(move |x: &[f64]| t_cap - x[it])
                .and(SetPredicate::ball(u_idx, vec![0.0; n], rad)),
            SetPredicate::everything(),
        ),
        flow_x: FlowMap::single(move |x: &[f64], z: &[f64]| {
            let ax = a_f.mat_vec(&x[..n]);
            let bz = b_f.mat_vec(z);
            let mut f: Vec<f64> = (0..n).map(|i| ax[i] + bz[i] + x[iu + i]).collect();
            f.extend(std::iter::repeat_n(0.0, n));
            f.push(1.0);
            f
        }),
        flow_z: FlowMap::single(move |x: &[f64], z: &[f64]| {
            h_f.mat_vec(&x[..n]).iter().zip(l_f.mat_vec(z)).map(|(a, b)| a + b).collect()
        }),
        jump: JumpMap::single(move |x: &[f64], z: &[f64], v: &[f64]| {
            let mut xp = x[..n].to_vec();
            xp.extend_from_slice(v);
            xp.push(0.0);
            StateVector::new(xp, z.to_vec())
        }),
        measure: JumpMeasure::UniformBall { radius: rad, dim: n },
        manifold: Manifold::affine(full_gain, vec![0.0; m]),
    };
    system.validate()?;

    let err = {
        let gamma = gamma.clone();
        move |x: &[f64], z: &[f64]| -> Vec<f64> { z.iter().zip(gamma.mat_vec(&x[..n])).map(|(a, b)| a - b).collect() }
    };
    let (ew, eg) = (err.clone(), err);
    let (pv, pg) = (pm.clone(), pm.clone());
    let (qw, qg) = (qm.clone(), qm.clone());
    let mut cert = CertificateData::new(move |x: &[f64]| pv.quad_form(&x[..n]), move |x: &[f64], z: &[f64]| qw.quad_form(&ew(x, z)));
    cert.grad_v = Some(Arc::new(move |x: &[f64]| {
        let mut g: Vec<f64> = pg.mat_vec(&x[..n]).iter().map(|a| 2.0 * a).collect();
        g.extend(std::iter::repeat_n(0.0, n + 1));
        g
    }));
    let gamma_t = gamma.transpose();
    cert.grad_w = Some(Arc::new(move |x: &[f64], z: &[f64]| {
        let gz: Vec<f64> = qg.mat_vec(&eg(x, z)).iter().map(|a| 2.0 * a).collect();
        let mut gx: Vec<f64> = gamma_t.mat_vec(&gz).iter().map(|a| -a).collect();
        gx.extend(std::iter::repeat_n(0.0, n + 1));
        (gx, gz)
    }));
    let c2 = p.c_tilde * p.c_tilde;
    cert.phi_x = Arc::new(move |x: &[f64]| (norm(&x[..n]).powi(2) + c2).sqrt());
    cert.phi_z = Arc::new(|d| d);
    let (q_min, q_max) = lambda_min_max(&qm)?;
    let (p_min, p_max) = lambda_min_max(&pm)?;
    cert.alpha1 = Arc::new(move |s| q_min * s * s);
    cert.alpha2 = Arc::new(move |s| q_max * s * s);
    cert.alpha3 = Arc::new(move |s| p_min * s * s);
    cert.alpha4 = Arc::new(move |s| p_max * s * s);
    cert.varpi_x = Some(Arc::new(move |x: &[f64]| norm(&x[..n])));
    cert.target_set = SetPredicate::new(move |x: &[f64]| norm(&x[..n]) - r);
    cert.recur_set = Some(SetPredicate::new(move |x: &[f64]| norm(&x[..n]) - r));
    cert.chi = p.chi;
    cert.nu = nu;

    let lmi = SwitchedLmiInstance {
        a: vec![a_red.clone()],
        p: vec![pm.clone()],
        lambda: vec![1.0],
        sigma: 1.0,
        eta: 0.0,
        t_cap,
        fast_pair: Some((l.clone(), qm.clone())),
    };
    lmi.validate()?;

    let xi_axis = linspace(-20.0, 20.0, 9);
    let mut u_pts = vec![vec![0.0; n]];
    for i in 0..n {
        for sgn in [-1.0, 1.0] {
            let mut u = vec![0.0; n];
            u[i] = sgn * rad;
            u_pts.push(u);
        }
    }
    let errs = tensor(&[-1.0, 0.0, 1.0], m);
    let gp = gamma.clone();
    let lift = move |xi: &[f64], u: &[f64], tau: f64, e: &[f64]| {
        let mut x = xi.to_vec();
        x.extend_from_slice(u);
        x.push(tau);
        let z = gp.mat_vec(xi).iter().zip(e).map(|(a, b)| a + b).collect();
        StateVector::new(x, z)
    };
    let mut flow_grid = vec![];
    let mut jump_grid = vec![];
    for xi in tensor(&xi_axis, n) {
        for u in &u_pts {
            for e in &errs {
                for tau in [0.0, 0.5 * t_cap, t_cap] {
                    flow_grid.push(lift(&xi, u, tau, e));
                }
            }
        }
        for e in &errs {
            jump_grid.push(lift(&xi, &u_pts[0], t_cap, e));
        }
    }

    let notes = vec![
        mk_note("x", "slow state (xi, u, tau): plant state, held input and hold timer"),
        mk_note("z", "fast actuator state"),
        mk_note("C", "u in the input ball and tau in [0, T]"),
        mk_note("D", "tau = T"),
        mk_note("F", "xi' = A xi + B z + u, u' = 0, tau' = 1; z' = H xi + L z"),
        mk_note("G", "xi and z kept, u redrawn, tau reset to zero"),
        mk_note("mu", "uniform on the input ball"),
        mk_note("V, W", "xi' P xi and e' Q e with e = z + L^-1 H xi, P and Q from unit Lyapunov equations"),
        mk_note("O_chi", format!("|xi| < {r:.6} and |e| < {}, with flow slack nu = {nu:.6}", p.chi)),
    ];

    let sim = SimConfig { step_h: step_for(p.epsilon), horizon_t: 100.0, horizon_j: 1000, ..Default::default() };
    let gi = gamma;
    finish(
        "bounded_inputs",
        SystemSpec::BoundedInputs(p.clone()),
        Parts {
            system,
            cert,
            ledger,
            notes,
            claim: Claim::Recurrence,
            flow_mode: FlowMode::Recurrence,
            jump_mode: JumpMode::Thm4,
            expectation: Expectation::MonteCarlo { samples: 4096, seed: 0 },
            lmi: Some(lmi),
            sim,
            flow_grid,
            jump_grid,
            init_radius: 10.0,
            init: Arc::new(move |s, r| {
                let mut s = s.clone();
                let w = ball_draw(&mut s, n + m, r);
                let u = ball_draw(&mut s, n, rad);
                let tau = s.next_uniform() * t_cap;
                let mut x = w[..n].to_vec();
                x.extend(u);
                x.push(tau);
                let z = gi.mat_vec(&w[..n]).iter().zip(&w[n..]).map(|(a, b)| a + b).collect();
                StateVector::new(x, z)
            }),
        },
    )
}
