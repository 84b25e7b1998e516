use proptest::prelude::*;

use shds_lab::foster::{theta_star, ConstantsLedger};
use shds_lab::hybrid::StateVector;
use shds_lab::linalg::Matrix;
use shds_lab::lmi::{check_negative_definite, check_switched_lmis, feasibility_search, SwitchedLmiInstance};
use shds_lab::quadrature::integrate;
use shds_lab::scenarios::{by_name, Scenario};
use shds_lab::simulate::{simulate_arc, SimConfig, EVENT_TOL};
use shds_lab::{expectation, Expectation, JumpMeasure, RandomStream};

fn example1() -> &'static Scenario {
    static CELL: std::sync::OnceLock<Scenario> = std::sync::OnceLock::new();
    CELL.get_or_init(|| by_name("example1").unwrap())
}

fn switching() -> &'static Scenario {
    static CELL: std::sync::OnceLock<Scenario> = std::sync::OnceLock::new();
    CELL.get_or_init(|| by_name("switching").unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn replay_is_bit_identical(seed in any::<u64>(), trial in any::<u64>(), lane in 0u64..4) {
        let mut a = RandomStream::new(seed, trial).lane(lane);
        let mut b = RandomStream::new(seed, trial).lane(lane);
        for _ in 0..16 {
            let (u, v) = (a.next_uniform(), b.next_uniform());
            prop_assert_eq!(u.to_bits(), v.to_bits());
            prop_assert!((0.0..1.0).contains(&u));
        }
        let k = a.draw_counter();
        prop_assert_eq!(RandomStream::new(seed, trial).lane(lane).at_counter(k).next_uniform().to_bits(), a.next_uniform().to_bits());
    }

    #[test]
    fn theta_star_is_interior_and_scale_free(k1 in 1e-6f64..1e6, k3 in 1e-6f64..1e6, c in 1e-3f64..1e3) {
        let l = ConstantsLedger { k1, k3, ..Default::default() };
        let t = theta_star(&l).unwrap();
        prop_assert!(t > 0.0 && t < 1.0);
        let c = 2f64.powi(c.log2().round() as i32);
        let scaled = ConstantsLedger { k1: c * k1, k3: c * k3, ..Default::default() };
        prop_assert_eq!(theta_star(&scaled).unwrap(), t);
    }

    #[test]
    fn symmetrization_does_not_change_definiteness(e in prop::collection::vec(-2.0f64..2.0, 9)) {
        let m = Matrix::from_rows(&[e[0..3].to_vec(), e[3..6].to_vec(), e[6..9].to_vec()]).unwrap();
        prop_assert_eq!(check_negative_definite(&m).unwrap(), check_negative_definite(&m.sym()).unwrap());
    }

    #[test]
    fn two_by_two_eigenvalues(a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
        let m = Matrix::from_rows(&[vec![a, b], vec![b, d]]).unwrap();
        let mut v = m.sym_eigen().unwrap().values;
        v.sort_by(f64::total_cmp);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
        prop_assert!((v[0] - (mid - rad)).abs() <= 1e-10);
        prop_assert!((v[1] - (mid + rad)).abs() <= 1e-10);
    }

    #[test]
    fn quadrature_converges_on_smooth_integrands(a in -2.0f64..2.0, w in 0.1f64..3.0, k in 0.1f64..2.0) {
        let b = a + w;
        let f = |x: f64| (k * x).sin() + (-k * x * x).exp();
        let coarse = integrate(f, a, b, 16);
        let fine = integrate(f, a, b, 32);
        prop_assert!((coarse - fine).abs() < 1e-10, "{coarse} vs {fine}");
    }

    #[test]
    fn discrete_expectation_is_the_weighted_sum(
        pts in prop::collection::vec(-10.0f64..10.0, 1..6),
        raw in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let n = pts.len();
        let total: f64 = raw[..n].iter().sum();
        let mut weights: Vec<f64> = raw[..n].iter().map(|w| w / total).collect();
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        let measure = JumpMeasure::Discrete { points: pts.clone(), weights: weights.clone() };
        let f = |v: &[f64]| v[0] * v[0] - 3.0 * v[0];
        let got = expectation::<f64>(&measure, f, &Expectation::ExactDiscrete).unwrap();
        let want: f64 = pts.iter().zip(&weights).map(|(p, w)| w * f(&[*p])).sum();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn feasibility_search_reverifies(scale in 0.2f64..5.0, l0 in 0.05f64..0.95, t_cap in 0.5f64..5.0) {
        let sc = switching();
        let lmi = sc.lmi.as_ref().unwrap();
        let p: Vec<Matrix<f64>> = lmi.p.iter().map(|m| m.scale(scale)).collect();
        let lambda = vec![l0, 1.0 - l0];
        let (sigma, eta_bar) = feasibility_search(&lmi.a, &p, &lambda, t_cap).unwrap();
        let inst = SwitchedLmiInstance { a: lmi.a.clone(), p, lambda, sigma, eta: 0.5 * eta_bar, t_cap, fast_pair: None };
        prop_assert!(check_switched_lmis(&inst).unwrap().pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn example1_arcs_are_well_formed(x in -4.0f64..4.0, z in -4.0f64..4.0, seed in any::<u64>()) {
        let sc = example1();
        let cfg = SimConfig { horizon_t: 4.0, ..sc.sim.clone() };
        let arc = simulate_arc(&sc.system, &StateVector::new(vec![x], vec![z]), &RandomStream::new(seed, 0), &cfg).unwrap();
        prop_assert!(arc.check_invariants(&sc.system).is_ok(), "{:?}", arc.check_invariants(&sc.system));
        let delta = sc.system.jump_set.tol();
        for (_, y) in arc.points() {
            prop_assert!(sc.system.flow_set.membership(y) <= delta);
        }
        for jr in &arc.jumps {
            let m = sc.system.jump_set.membership(&jr.pre);
            prop_assert!(m.abs() <= EVENT_TOL.max(delta), "pre-jump membership {m}");
        }
    }

    #[test]
    fn switching_takes_every_available_jump(seed in any::<u64>()) {
        let sc = switching();
        let cfg = SimConfig { horizon_t: 60.0, ..sc.sim.clone() };
        let stream = RandomStream::new(seed, 0);
        let y0 = sc.sample_init(&stream, sc.init_radius);
        let arc = simulate_arc(&sc.system, &y0, &stream, &cfg).unwrap();
        prop_assert!(arc.check_invariants(&sc.system).is_ok());
        // D lies inside C, so under jump priority no flow sample before a
        // segment's last one may sit in D.
        for seg in &arc.segments {
            let n = seg.samples.len();
            for (_, y) in &seg.samples[..n.saturating_sub(1)] {
                prop_assert!(!sc.system.in_jump_set(y));
            }
        }
        for jr in &arc.jumps {
            prop_assert!(sc.system.in_jump_set(&jr.pre));
        }
    }
}
