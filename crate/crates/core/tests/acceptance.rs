//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use shds_lab::analysis::{draw_initial, estimate_containment, estimate_recurrence, monitor_trial, wilson_interval};
use shds_lab::export::{arc_csv, trial_report_csv, Header};
use shds_lab::foster::{fd_gradient, flow_residuals, jump_expectation, verify_jump_decrease, JumpMode};
use shds_lab::hybrid::StateVector;
use shds_lab::linalg::{sym_eigen, Matrix};
use shds_lab::lmi::{check_switched_lmis, feasibility_search, SwitchedLmiInstance};
use shds_lab::scenarios::{rho_tilde, Scenario, SwitchingParams, SystemSpec, NAMES};
use shds_lab::simulate::{simulate_arc, SimConfig};
use shds_lab::{expectation, Expectation, JumpMeasure, RandomStream};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(name: &str, epsilon: f64) -> Scenario {
    let mut spec = SystemSpec::named(name).unwrap();
    spec.set_epsilon(epsilon);
    spec.build().unwrap()
}

fn m(rows: &[Vec<f64>]) -> Matrix<f64> {
    Matrix::from_rows(rows).unwrap()
}

/// Closed-loop slow matrices `A_q = Ã_q − B_q L⁻¹ H` of the switching example.
fn closed_loop(p: &SwitchingParams) -> Vec<Matrix<f64>> {
    let gain = &m(&p.l).inverse().unwrap() * &m(&p.h);
    p.a_tilde.iter().zip(&p.b).map(|(a, b)| &m(a) - &(&m(b) * &gain)).collect()
}

fn c1_switching_identities() -> Check {
    let p = SwitchingParams::default();
    let a = closed_loop(&p);
    let a1_err = a[0].max_abs_diff(&Matrix::from_f64(&[&[-1.0, 3.0], &[0.0, -1.0]]));
    let mut lyap_err: f64 = 0.0;
    for (aq, pq) in a.iter().zip(&p.p) {
        let pq = m(pq);
        let lhs = &(&aq.transpose() * &pq) + &(&pq * aq);
        lyap_err = lyap_err.max(lhs.max_abs_diff(&Matrix::identity(2).scale(-1.0)));
    }
    ensure(a1_err == 0.0 && lyap_err <= 1e-12, format!("A1 error {a1_err:e}, Lyapunov identity error {lyap_err:e}"))
}

fn c2_lmi_feasibility() -> Check {
    let p = SwitchingParams::default();
    let a = closed_loop(&p);
    let pq: Vec<Matrix<f64>> = p.p.iter().map(|x| m(x)).collect();
    let (sigma, eta_bar) = feasibility_search(&a, &pq, &p.lambda, p.t_cap).map_err(|e| e.to_string())?;
    let inst = |eta| SwitchedLmiInstance {
        a: a.clone(),
        p: pq.clone(),
        lambda: p.lambda.clone(),
        sigma,
        eta,
        t_cap: p.t_cap,
        fast_pair: Some((m(&p.l), m(&p.p_z))),
    };
    let good = check_switched_lmis(&inst(0.03)).unwrap();
    let bad = check_switched_lmis(&inst(1.0)).unwrap();
    let first = bad.first_failure().map(|e| e.inequality.clone()).unwrap_or_default();
    ensure(
        good.pass && !bad.pass && first == "i",
        format!("sigma = {sigma:.4}, eta_bar = {eta_bar:.4}; eta 0.03 pass = {}, eta 1 first failure = ({first})", good.pass),
    )
}

fn c3_example1_identities() -> Check {
    let sc = scenario("example1", 0.05);
    let axis: Vec<f64> = (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect();
    let mut boundary_max = f64::NEG_INFINITY;
    let mut boundary_nonzero = 0usize;
    let mut min_outside = f64::INFINITY;
    let mut min_all = f64::INFINITY;
    for &x in &axis {
        for &z in &axis {
            let y = StateVector::new(vec![x], vec![z]);
            let r = flow_residuals(&sc.system, &sc.cert, &sc.ledger, &y, sc.flow_mode).unwrap();
            boundary_max = boundary_max.max(r[0]);
            boundary_nonzero += (r[0] != 0.0) as usize;
            let rho = rho_tilde(x, z);
            min_all = min_all.min(rho);
            if !sc.cert.in_o_chi(&sc.system, &y) {
                min_outside = min_outside.min(rho);
            }
        }
    }
    ensure(
        boundary_nonzero == 0 && min_outside >= 0.1 - 1e-9 && min_all >= -3.0 / 68.0 - 1e-9,
        format!(
            "boundary-layer residual max {boundary_max:e} ({boundary_nonzero} nonzero), min rho outside O_chi {min_outside:.12}, min rho {min_all:.12}"
        ),
    )
}

fn c4_jump_expectation() -> Check {
    let sc = scenario("example1", 0.05);
    let theta = sc.theta_star().unwrap();
    let rule = sc.system.measure.rule::<f64>(&Expectation::ExactDiscrete).unwrap();
    let origin = StateVector::new(vec![0.0], vec![0.0]);
    let e0 = jump_expectation(&sc.system, &sc.cert, theta, &origin, &rule, false);
    // Enumeration: v = -1 maps to the origin, v = +1 to (1, -1) with E = 1/4.
    let oracle = 17.0 / 20.0 * 0.0 + 3.0 / 20.0 * 0.25;
    let zs: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64).collect();
    let grid: Vec<StateVector<f64>> =
        (0..=40).flat_map(|x| zs.iter().map(move |&z| StateVector::new(vec![x as f64], vec![z]))).collect();
    let margins_ok = sc.cert.nu == 0.1 && grid.iter().all(|y| (sc.cert.rho_hat)(y) == 0.05);
    let report =
        verify_jump_decrease(&sc.system, &sc.cert, &sc.ledger, theta, &grid, JumpMode::Thm3, &Expectation::ExactDiscrete).unwrap();
    let worst = report.inequalities.iter().map(|i| i.max_residual).fold(f64::NEG_INFINITY, f64::max);
    ensure(
        (e0 - 3.0 / 80.0).abs() <= 1e-14 && (oracle - 3.0f64 / 80.0).abs() <= 1e-15 && margins_ok && report.pass && report.skipped == 0,
        format!("E sup E_theta at origin = {e0}, |diff| = {:e}; jump check on {} points, worst residual {worst:e}", (e0 - 0.0375).abs(), grid.len()),
    )
}

fn c5_flow_monitor() -> Check {
    let mut lines = vec![];
    let mut ok = true;
    for name in ["switching", "heavy_ball", "switching_plant"] {
        let sc = scenario(name, 0.1);
        let cfg = SimConfig { horizon_t: 50.0, horizon_j: 100_000, ..sc.sim.clone() };
        let per_seed: Vec<(usize, f64)> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let (_, trace) = monitor_trial(&sc, seed, 0, sc.init_radius, &cfg).unwrap();
                (trace.violations, trace.max_flow_increment)
            })
            .collect();
        let flagged: usize = per_seed.iter().map(|p| p.0).sum();
        let worst = per_seed.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let seeds = per_seed.iter().filter(|p| p.0 > 0).count();
        ok &= flagged == 0;
        lines.push(format!("{name}: {flagged} flagged steps in {seeds}/20 seeds (max step increase {worst:e})"));
    }
    ensure(ok, lines.join("; "))
}

fn c6_heavy_ball() -> Check {
    let sc = scenario("heavy_ball", 0.1);
    let cfg = SimConfig { horizon_t: 50.0, ..sc.sim.clone() };
    let trials = 200u64;
    let results: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let stream = RandomStream::new(2024, i);
            let (y0, _) = draw_initial(&sc, &stream, 3.0).unwrap();
            let init_norm = y0.x[..4].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(init_norm <= 3.0 + 1e-12);
            let arc = simulate_arc(&sc.system, &y0, &stream, &cfg).unwrap();
            let (_, y) = arc.final_point();
            let err = ((y.x[0] + 0.5).powi(2) + (y.x[1] - 0.5).powi(2)).sqrt();
            (err < 0.05, err)
        })
        .collect();
    let hits = results.iter().filter(|r| r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let (lo, _) = wilson_interval(hits, trials as usize);
    ensure(lo >= 0.95, format!("{hits}/{trials} within 0.05 of u*, Wilson lower bound {lo:.4}, worst error {worst:e}"))
}

fn c7_recurrence() -> Check {
    let budget = Duration::from_secs(300);
    let start = Instant::now();
    let ex = scenario("example1", 0.05);
    let a = estimate_recurrence(&ex, 5.0, 1000, 200.0, 11, &ex.sim).unwrap();
    let fa = a.success_fraction.clone().unwrap();
    let ta = start.elapsed();
    let start = Instant::now();
    let bi = scenario("bounded_inputs", 0.1);
    let b = estimate_recurrence(&bi, 10.0, 500, 100.0, 12, &bi.sim).unwrap();
    let fb = b.success_fraction.clone().unwrap();
    let tb = start.elapsed();
    ensure(
        fa.value >= 0.99 && fb.successes == fb.trials && ta < budget && tb < budget,
        format!(
            "example1 {}/{} = {:.4} in {:.1}s; bounded_inputs {}/{} in {:.1}s",
            fa.successes,
            fa.trials,
            fa.value,
            ta.as_secs_f64(),
            fb.successes,
            fb.trials,
            tb.as_secs_f64()
        ),
    )
}

fn c8_two_time_scales() -> Check {
    let x0 = 0.5;
    let mut layer = vec![];
    let mut slow = vec![];
    for eps in [0.1, 0.01, 0.001] {
        let sc = scenario("example1", eps);
        let cfg = SimConfig { horizon_t: 5.0, ..sc.sim.clone() };
        let arc = simulate_arc(&sc.system, &StateVector::new(vec![x0], vec![-x0]), &RandomStream::new(0, 0), &cfg).unwrap();
        if !arc.jumps.is_empty() {
            return Err(format!("unexpected jump at epsilon {eps}"));
        }
        let mut sup_layer: f64 = 0.0;
        let mut sup_slow: f64 = 0.0;
        for (time, y) in arc.points() {
            if time.t >= 1.0 {
                sup_layer = sup_layer.max((y.z[0] + y.x[0]).abs());
            }
            sup_slow = sup_slow.max((y.x[0] - x0 * (-time.t).exp()).abs());
        }
        layer.push(sup_layer);
        slow.push(sup_slow);
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    ensure(
        decreasing(&layer) && decreasing(&slow),
        format!("sup |z + x| on [1, 5]: {}; sup |x - x_reduced|: {}", sci(&layer), sci(&slow)),
    )
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

/// Eigenvalues of a symmetric 3×3 matrix from the trigonometric root formula.
fn eig3(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| (a[i][j] - if i == j { q } else { 0.0 }) / p).collect()).collect();
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mut e = [e1, 3.0 * q - e1 - e3, e3];
    e.sort_by(f64::total_cmp);
    e
}

fn sorted_eigs(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut v = sym_eigen(&m(rows)).unwrap().values;
    v.sort_by(f64::total_cmp);
    v
}

fn c9_numerical_oracles() -> Check {
    let mut s = RandomStream::new(99, 0);
    let mut u = || 2.0 * s.next_uniform() - 1.0;
    let mut eig_err: f64 = 0.0;
    for _ in 0..500 {
        let (a, b, d) = (u(), u(), u());
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
        let got = sorted_eigs(&[vec![a, b], vec![b, d]]);
        eig_err = eig_err.max((got[0] - (mid - rad)).abs()).max((got[1] - (mid + rad)).abs());
    }
    for _ in 0..500 {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                a[i][j] = u();
                a[j][i] = a[i][j];
            }
        }
        let exact = eig3(&a);
        let got = sorted_eigs(&a.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        for k in 0..3 {
            eig_err = eig_err.max((got[k] - exact[k]).abs());
        }
    }

    let mut quad_err: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let measure = JumpMeasure::TruncatedExponential { t };
        let got = expectation::<f64>(&measure, |v| v[0], &Expectation::Quadrature { nodes: 32 }).unwrap();
        let exact = (t - 1.0 + (-t).exp()) / (1.0 - (-t).exp());
        quad_err = quad_err.max((got - exact).abs());
    }

    let mut grad_err: f64 = 0.0;
    for name in NAMES {
        let sc = scenario(name, SystemSpec::named(name).unwrap().epsilon());
        let radius = if sc.init_radius > 0.0 { sc.init_radius } else { 2.0 };
        for i in 0..100u64 {
            let y = sc.sample_init(&RandomStream::new(7, i), radius);
            let rel = |a: &[f64], b: &[f64]| {
                let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs() / scale))
            };
            let gv = sc.cert.grad_v(&y.x);
            let fv = fd_gradient(|x: &[f64]| sc.cert.v(x), &y.x);
            let (gwx, gwz) = sc.cert.grad_w(&y.x, &y.z);
            let n = y.x.len();
            let fw = fd_gradient(|p: &[f64]| sc.cert.w(&p[..n], &p[n..]), &y.concat());
            grad_err = grad_err.max(rel(&gv, &fv)).max(rel(&[gwx, gwz].concat(), &fw));
        }
    }
    ensure(
        eig_err <= 1e-10 && quad_err <= 1e-10 && grad_err <= 1e-5,
        format!("Jacobi max error {eig_err:e} over 1000 matrices; quadrature error {quad_err:e}; gradient relative error {grad_err:e}"),
    )
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn c10_determinism() -> Check {
    let sw = scenario("switching", 0.1);
    let header = Header::new("switching", 7, &serde_json::json!({"check": "determinism"})).unwrap();
    let arc_text = || {
        let stream = RandomStream::new(7, 0);
        let (y0, _) = draw_initial(&sw, &stream, sw.init_radius).unwrap();
        let cfg = SimConfig { horizon_t: 20.0, ..sw.sim.clone() };
        arc_csv(&header, &simulate_arc(&sw.system, &y0, &stream, &cfg).unwrap()).unwrap()
    };
    let arcs = [arc_text(), arc_text(), in_pool(1, arc_text), in_pool(4, arc_text)];

    let ex = scenario("example1", 0.05);
    let rec = || {
        let r = estimate_recurrence(&ex, 5.0, 300, 50.0, 5, &ex.sim).unwrap();
        r.to_json().unwrap() + &trial_report_csv(&header, &r).unwrap()
    };
    let recs = [rec(), rec(), in_pool(1, rec), in_pool(3, rec)];

    let hb = scenario("heavy_ball", 0.1);
    let cont = || {
        let cfg = SimConfig { horizon_t: 10.0, ..hb.sim.clone() };
        estimate_containment(&hb, 3.0, 0.5, 5.0, 40, 9, &cfg).unwrap().to_json().unwrap()
    };
    let conts = [cont(), in_pool(1, cont), in_pool(2, cont)];

    let same = |v: &[String]| v.iter().all(|s| s == &v[0]);
    ensure(
        same(&arcs) && same(&recs) && same(&conts),
        format!(
            "arc CSV {} bytes x{}, recurrence report {} bytes x{}, containment report {} bytes x{}",
            arcs[0].len(),
            arcs.len(),
            recs[0].len(),
            recs.len(),
            conts[0].len(),
            conts.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("switching example identities", 1, c1_switching_identities),
        ("LMI feasibility and failure of (i) at eta = 1", 1, c2_lmi_feasibility),
        ("example1 certificate identities on the grid", 10, c3_example1_identities),
        ("jump expectation oracle and recurrence jump inequality", 10, c4_jump_expectation),
        ("flow monotonicity monitor at epsilon = 0.1", 120, c5_flow_monitor),
        ("heavy-ball convergence to u*", 300, c6_heavy_ball),
        ("recurrence fractions", 600, c7_recurrence),
        ("two-time-scale consistency", 60, c8_two_time_scales),
        ("numerical oracles", 30, c9_numerical_oracles),
        ("determinism across runs and thread counts", 60, c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let (pass, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += (!pass) as usize;
        let verdict = if pass { "PASS" } else { "FAIL" };
        let timing = format!("{:.2}s of {budget}s{}", elapsed.as_secs_f64(), if in_time { "" } else { ", over budget" });
        println!("criterion {id:>2} {verdict}: {name}: {detail} [{timing}]");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
