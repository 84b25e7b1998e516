use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::switching::pick_mode;
use super::{
    ball_draw, finish, lambda_min_max, matrix, mk_note, mode_index, require_shape, step_for, tensor, timer_weight, Claim,
    Mat, Parts, Scenario, SystemSpec,
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
pub struct SwitchingPlantParams {
    pub epsilon: f64,
    /// Timer drift bound: `τ̇ ∈ [−η, 0]`.
    pub eta: f64,
    /// Dwell-time cap `T`.
    pub t_cap: f64,
    /// Mode probabilities.
    pub lambda: Vec<f64>,
    /// Plant matrices, one per mode: `ξ̇ = A_q(ξ − Bx)`.
    pub a: Vec<Mat>,
    /// Input matrix of the plant equilibrium `ξ = −Bx`.
    pub b: Mat,
    /// Output `y = Lξ + d`.
    pub l: Mat,
    pub d: Vec<f64>,
    /// Plant certificates, one per mode.
    pub p: Vec<Mat>,
    /// Timer weight slope; searched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for SwitchingPlantParams {
    fn default() -> Self {
        SwitchingPlantParams {
            epsilon: 0.01,
            eta: 0.03,
            t_cap: 2.0,
            lambda: vec![0.5, 0.5],
            a: vec![vec![vec![-1.0, 3.0], vec![0.0, -1.0]], vec![vec![-1.0, 0.0], vec![-3.0, -1.0]]],
            b: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            l: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            d: vec![1.0, -1.0],
            p: vec![vec![vec![0.5, 0.75], vec![0.75, 2.75]], vec![vec![2.75, -0.75], vec![-0.75, 0.5]]],
            sigma: None,
        }
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(super) fn build(p: &SwitchingPlantParams) -> Result<Scenario> {
    let modes = p.a.len();
    if modes == 0 || p.p.len() != modes || p.lambda.len() != modes {
        return Err(Error::Dimension("a, p and lambda need one entry per mode".into()));
    }
    if !(p.t_cap > 0.0 && p.eta >= 0.0) {
        return Err(Error::Config(format!("need t_cap > 0 and eta >= 0, got {} and {}", p.t_cap, p.eta)));
    }
    let b = matrix(&p.b, "b")?;
    let (nz, n) = (b.rows(), b.cols());
    let l = matrix(&p.l, "l")?;
    let r = l.rows();
    require_shape(&l, r, nz, "l")?;
    if p.d.len() != r {
        return Err(Error::Dimension(format!("d has length {}, expected {r}", p.d.len())));
    }
    let a: Vec<Matrix<f64>> = p.a.iter().map(|m| matrix(m, "a")).collect::<Result<_>>()?;
    let pq: Vec<Matrix<f64>> = p.p.iter().map(|m| matrix(m, "p")).collect::<Result<_>>()?;
    for q in 0..modes {
        require_shape(&a[q], nz, nz, "a")?;
        require_shape(&pq[q], nz, nz, "p")?;
    }
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
        fast_pair: None,
    };
    lmi.validate()?;

    // Steady-state output map y = Hx + d with H = −LB.
    let h = (&l * &b).scale(-1.0);
    let ht = h.transpose();
    // Cost φ(x) = |x|²/4 + |Hx + d|²/4, Hessian (I + HᵀH)/2.
    let hess = (&Matrix::identity(n) + &(&ht * &h)).scale(0.5);
    let (m_phi, l_phi) = lambda_min_max(&hess)?;
    let x_star = hess.solve(&ht.mat_vec(&p.d).iter().map(|v| -0.5 * v).collect::<Vec<_>>())?;
    let (hc, dc) = (h.clone(), p.d.clone());
    let phi = move |x: &[f64]| 0.25 * norm(x).powi(2) + 0.25 * norm(&add(&hc.mat_vec(x), &dc)).powi(2);
    let phi_star = phi(&x_star);
    let (hg, htg, dg) = (h.clone(), ht.clone(), p.d.clone());
    let grad_phi = move |x: &[f64]| -> Vec<f64> {
        let y = add(&hg.mat_vec(x), &dg);
        x.iter().zip(htg.mat_vec(&y)).map(|(a, b)| 0.5 * a + 0.5 * b).collect()
    };
    let l_phi_y = 0.5;

    let mut q_max = f64::NEG_INFINITY;
    let mut p_min = f64::INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    let mut gap = f64::NEG_INFINITY;
    let mut p_sig = 0.0f64;
    let pbar = lmi.mean_certificate();
    let g = log_ratio(sigma);
    for q in 0..modes {
        let lyap = &(&a[q].transpose() * &pq[q]) + &(&pq[q] * &a[q]);
        let qq = &lyap + &pq[q].scale(sigma * p.eta / p.t_cap);
        q_max = q_max.max(qq.lambda_max_sym()?);
        let (lo, hi) = lambda_min_max(&pq[q])?;
        p_min = p_min.min(lo);
        p_max = p_max.max(hi);
        p_sig = p_sig.max(pq[q].sigma_max());
        gap = gap.max((&pbar.scale(g) - &pq[q]).lambda_max_sym()?);
    }
    let (sb, sl, sh) = (b.sigma_max(), l.sigma_max(), h.sigma_max());
    let ledger = ConstantsLedger {
        k_x: m_phi * m_phi,
        k_z: (-q_max / (sigma + 1.0)).max(0.0),
        c_z: (-gap).max(0.0),
        k1: 2.0 * l_phi * sb * p_sig,
        k2: 2.0 * l_phi * l_phi_y * sb * sl * sh * p_sig,
        k3: sh * sl * l_phi_y * l_phi,
        ..Default::default()
    };

    let (iq, it) = (nz, nz + 1);
    let labels: Vec<f64> = (1..=modes).map(|q| q as f64).collect();
    let t_cap = p.t_cap;
    let (a_f, b_f) = (a.clone(), b.clone());
    let (l_f, ht_f, d_f) = (l.clone(), ht.clone(), p.d.clone());
    let gain = b.scale(-1.0);
    let system = SpSystem {
        name: "switching_plant".into(),
        n_x: n,
        n_z: nz + 2,
        epsilon: p.epsilon,
        flow_set: ProductSet::new(
            SetPredicate::everything(),
            SetPredicate::interval(it, 0.0, t_cap).and(SetPredicate::finite_values(iq, labels.clone())),
        ),
        jump_set: ProductSet::new(
            SetPredicate::everything(),
            SetPredicate::level(it, 0.0)
                .with_crossing(move |z: &[f64]| z[it])
                .and(SetPredicate::finite_values(iq, labels.clone())),
        ),
        flow_x: FlowMap::single(move |x: &[f64], z: &[f64]| {
            let y = add(&l_f.mat_vec(&z[..nz]), &d_f);
            x.iter().zip(ht_f.mat_vec(&y)).map(|(a, b)| -0.5 * a - 0.5 * b).collect()
        }),
        flow_z: FlowMap::family(
            move |x: &[f64], z: &[f64], s: &[f64]| {
                let q = mode_index(z[iq], modes);
                let e = add(&z[..nz], &b_f.mat_vec(x));
                let mut f = a_f[q].mat_vec(&e);
                f.push(0.0);
                f.push(s[0]);
                f
            },
            ParamBox::interval(-p.eta, 0.0),
        ),
        jump: JumpMap::single(move |x: &[f64], z: &[f64], v: &[f64]| {
            let mut zp = z[..nz].to_vec();
            zp.push(v[0]);
            zp.push(v[1]);
            StateVector::new(x.to_vec(), zp)
        }),
        measure: JumpMeasure::Product {
            components: vec![
                JumpMeasure::Discrete { points: labels.clone(), weights: p.lambda.clone() },
                JumpMeasure::UniformInterval { a: 0.0, b: t_cap },
            ],
        },
        manifold: Manifold::Affine {
            gain: gain.clone(),
            offset: vec![0.0; nz],
            constrained: (0..nz).collect(),
            free: vec![(iq, 1.0, modes as f64), (it, 0.0, t_cap)],
        },
    };
    system.validate()?;

    let err = {
        let b = b.clone();
        move |x: &[f64], z: &[f64]| add(&z[..nz], &b.mat_vec(x))
    };
    let (ew, eg) = (err.clone(), err);
    let (pw, pg) = (pq.clone(), pq.clone());
    let phi_v = phi.clone();
    let mut cert = CertificateData::new(
        move |x: &[f64]| phi_v(x) - phi_star,
        move |x: &[f64], z: &[f64]| {
            let q = mode_index(z[iq], modes);
            timer_weight(sigma, z[it], t_cap) * pw[q].quad_form(&ew(x, z))
        },
    );
    cert.grad_v = Some(Arc::new(grad_phi));
    let bt = b.transpose();
    cert.grad_w = Some(Arc::new(move |x: &[f64], z: &[f64]| {
        let q = mode_index(z[iq], modes);
        let c = timer_weight(sigma, z[it], t_cap);
        let e = eg(x, z);
        let pe: Vec<f64> = pg[q].mat_vec(&e).iter().map(|a| 2.0 * c * a).collect();
        let gx = bt.mat_vec(&pe);
        let mut gz = pe;
        gz.push(0.0);
        gz.push(-(sigma / t_cap) * c * c * pg[q].quad_form(&e));
        (gx, gz)
    }));
    let xs = x_star.clone();
    let dist = move |x: &[f64]| norm(&x.iter().zip(&xs).map(|(a, b)| a - b).collect::<Vec<_>>());
    cert.phi_x = Arc::new(dist.clone());
    cert.phi_z = Arc::new(|d| d);
    cert.alpha1 = Arc::new(move |r| p_min / (sigma + 1.0) * r * r);
    cert.alpha2 = Arc::new(move |r| p_max * r * r);
    cert.alpha3 = Arc::new(move |r| 0.5 * m_phi * r * r);
    cert.alpha4 = Arc::new(move |r| 0.5 * l_phi * r * r);
    cert.rho_z = Arc::new(|d| d * d);
    cert.rho6 = cert.rho_z.clone();
    cert.target_set = SetPredicate::new(dist);

    let x_axis = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let taus = [0.0, 0.25, 0.5, 0.75, 1.0].map(|u| u * t_cap);
    let errs = tensor(&[-1.0, 0.0, 1.0], nz);
    let gp = gain.clone();
    let lift = move |x: &[f64], e: &[f64], q: f64, tau: f64| {
        let mut z = add(&gp.mat_vec(x), e);
        z.push(q);
        z.push(tau);
        StateVector::new(x.to_vec(), z)
    };
    let mut flow_grid = vec![];
    let mut jump_grid = vec![];
    for x in tensor(&x_axis, n) {
        for e in &errs {
            for &q in &labels {
                for &tau in &taus {
                    flow_grid.push(lift(&x, e, q, tau));
                }
                jump_grid.push(lift(&x, e, q, 0.0));
            }
        }
    }

    let notes = vec![
        mk_note("x", "slow optimization variable"),
        mk_note("z", "fast state (xi, q, tau): plant state, active mode label and countdown timer"),
        mk_note("C", "tau in [0, T] and q a valid mode label"),
        mk_note("D", "tau = 0"),
        mk_note("F", "x' = -x/2 - H'(L xi + d)/2; xi' = A_q (xi + B x), q' = 0, tau' in [-eta, 0]"),
        mk_note("G", "x and xi keep their values, q and tau are redrawn"),
        mk_note("mu", "q from the mode probabilities and tau uniform on [0, T]"),
        mk_note("V", "cost |x|^2/4 + |H x + d|^2/4 above its minimum, with H = -L B"),
        mk_note("W", format!("(sigma tau / T + 1)^-1 e' P_q e with e = xi + B x and sigma = {sigma:.6}")),
        mk_note("A", format!("x = x* = {:?}", x_star)),
    ];

    let sim = SimConfig {
        step_h: step_for(p.epsilon),
        horizon_t: 50.0,
        horizon_j: 1000,
        flow_selection: FlowSelection::Lower,
        ..Default::default()
    };
    let lam = p.lambda.clone();
    finish(
        "switching_plant",
        SystemSpec::SwitchingPlant(p.clone()),
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
            init_radius: 3.0,
            init: Arc::new(move |s, r| {
                let mut s = s.clone();
                let w = ball_draw(&mut s, n + nz, r);
                let q = pick_mode(&mut s, &lam);
                let tau = s.next_uniform() * t_cap;
                let mut z = add(&gain.mat_vec(&w[..n]), &w[n..]);
                z.push(q as f64 + 1.0);
                z.push(tau);
                StateVector::new(w[..n].to_vec(), z)
            }),
        },
    )
}
