use shds_lab::analysis::{epsilon_sweep, uniformity_sweep, SweepMetric, UniformityEstimator};
use shds_lab::foster::{composite_threshold, epsilon_star, verify_sandwich, HULL_SAMPLES};
use shds_lab::hybrid::build_reduced;
use shds_lab::scenarios::{by_name, list, HeavyBallParams, SwitchingParams, SystemFile, SystemSpec, NAMES};
use shds_lab::Error;

#[test]
fn sandwich_bounds_hold_on_every_grid() {
    for name in NAMES {
        let sc = by_name(name).unwrap();
        let mut grid = sc.flow_grid.clone();
        grid.extend(sc.jump_grid.iter().cloned());
        let r = verify_sandwich(&sc.system, &sc.cert, &grid);
        assert!(r.pass, "{name}: {r:?}");
        for i in &r.inequalities {
            assert!(i.max_residual <= 1e-9, "{name} {}: {}", i.name, i.max_residual);
        }
    }
}

#[test]
fn every_scenario_carries_notes() {
    for name in NAMES {
        let sc = by_name(name).unwrap();
        assert!(!sc.notes.is_empty(), "{name}");
        assert!(sc.notes.iter().all(|n| !n.field.is_empty() && !n.text.trim().is_empty()), "{name}");
    }
    assert_eq!(list().len(), NAMES.len());
}

#[test]
fn example1_reduced_flow_is_minus_x() {
    let sc = by_name("example1").unwrap();
    let reduced = build_reduced(&sc.system, HULL_SAMPLES).unwrap();
    for k in 0..=60 {
        let x = -3.0 + 0.1 * k as f64;
        for f in reduced.flow_selections(&[x]).unwrap() {
            assert!((f[0] + x).abs() <= 1e-12, "x = {x}: {f:?}");
        }
    }
}

#[test]
fn inconsistent_parameters_fail_fast() {
    let mut hb = HeavyBallParams::default();
    hb.h[0][0] += 0.5;
    assert!(SystemSpec::HeavyBall(hb).load().is_err());

    let mut sw = SwitchingParams::default();
    sw.p[0] = vec![vec![1.0, 0.0], vec![0.0, -1.0]];
    assert!(matches!(SystemSpec::Switching(sw).load(), Err(Error::Infeasible { mode: 0, .. })));

    let mut spec = SystemSpec::named("example1").unwrap();
    spec.set_epsilon(-0.1);
    assert!(matches!(spec.build(), Err(Error::Config(_))));

    let mut spec = SystemSpec::named("heavy_ball").unwrap();
    assert!(spec.set_eta(0.1).is_err());
}

#[test]
fn large_eta_fails_the_self_check_at_lmi_one() {
    let mut spec = SystemSpec::named("switching").unwrap();
    spec.set_eta(1.0).unwrap();
    match spec.load() {
        Err(Error::SelfCheck(msg)) => assert!(msg.contains("LMI (i)"), "{msg}"),
        other => panic!("expected a self-check failure, got {:?}", other.map(|s| s.name)),
    }
}

#[test]
fn system_documents_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    for name in NAMES {
        let sc = by_name(name).unwrap();
        let doc = SystemFile { system: sc.spec.clone(), sim: Some(sc.sim.clone()) };
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, doc.to_json().unwrap()).unwrap();
        let back = SystemFile::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, doc);
        let rebuilt = back.system.load().unwrap();
        assert_eq!(rebuilt.ledger, sc.ledger);
    }
}

#[test]
fn printed_threshold_and_composite_threshold() {
    let ex = by_name("example1").unwrap();
    assert_eq!(epsilon_star(&ex.ledger).unwrap(), 0.25);
    assert_eq!(composite_threshold(&ex.ledger).unwrap(), 0.5);
    let hb = by_name("heavy_ball").unwrap();
    assert!((epsilon_star(&hb.ledger).unwrap() - 0.5).abs() < 1e-12);
    let sw = by_name("switching").unwrap();
    let printed = epsilon_star(&sw.ledger).unwrap();
    let composite = composite_threshold(&sw.ledger).unwrap();
    assert!(composite < 0.01 * printed, "{composite} vs {printed}");
}

#[test]
fn example1_monitor_is_clean_below_the_threshold() {
    let sc = by_name("example1").unwrap();
    let sweep = epsilon_sweep(&sc, &[0.1, 0.05], SweepMetric::MonitorViolations, 8, 3, sc.init_radius, &sc.sim).unwrap();
    assert_eq!(sweep.epsilon_star, Some(0.25));
    for row in &sweep.rows {
        assert_eq!(row.below_threshold, Some(true));
        assert_eq!(row.value, 0.0, "epsilon {}", row.epsilon);
    }
}

#[test]
fn recurrence_times_resolve_at_every_radius() {
    let sc = by_name("example1").unwrap();
    let rows = uniformity_sweep(&sc, UniformityEstimator::Recurrence { horizon: 100.0 }, &[1.0, 3.0, 5.0], 100, 4, &sc.sim).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r.p95.is_some(), "radius {}", r.radius);
        assert!(r.resolved.value >= 0.95);
    }
}
