use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shds-lab"));
    cmd.args(args).current_dir(dir).env_remove("SHDS_LAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn assert_header(csv: &str) {
    let lines: Vec<&str> = csv.lines().take(4).collect();
    assert!(lines[0].starts_with("# shds-lab version "), "{csv:.200}");
    assert!(lines[1].starts_with("# scenario "));
    assert!(lines[2].starts_with("# seed "));
    assert!(lines[3].starts_with("# config sha256:"));
}

#[test]
fn list_names_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["list"], &[]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    for name in shds_lab::scenarios::NAMES {
        assert!(out.contains(name), "{name} missing from {out}");
    }
}

#[test]
fn simulate_writes_three_csvs_and_a_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--scenario", "example1", "--horizon-t", "5", "--seed", "4", "--out", "res"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    for f in ["example1_arc.csv", "example1_jumps.csv", "example1_monitor.csv"] {
        let csv = read(res.join(f));
        assert_header(&csv);
        assert!(csv.lines().nth(4).is_some(), "{f} has no column row");
    }
    assert!(read(res.join("example1_arc.csv")).lines().nth(4).unwrap().starts_with("t,j,x0,z0,segment_id"));
    assert!(read(res.join("example1.svg")).starts_with("<svg"));
}

#[test]
fn no_plot_skips_the_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--scenario", "example1", "--horizon-t", "2", "--no-plot"], &[]);
    assert_eq!(code(&o), 0);
    assert!(!dir.path().join("out/example1.svg").exists());
    assert!(dir.path().join("out/example1_arc.csv").exists());
}

#[test]
fn verify_passes_for_a_packaged_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--scenario", "example1"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/example1_verify.json").exists());
    assert_header(&read(dir.path().join("out/example1_verify.csv")));
}

#[test]
fn verify_rejects_a_large_timer_drift() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--scenario", "switching", "--eta", "1"], &[]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("LMI (i)"), "{err}");
    assert!(dir.path().join("out/error.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["mc-recurrence", "--scenario", "example1", "--trials", "0"], &[])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate", "--scenario", "nope"], &[])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate", "--scenario", "example1", "--system", "x.json"], &[])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate", "--scenario", "example1", "--epsilon", "-1"], &[])), 2);
    assert_eq!(code(&run(dir.path(), &["simulate", "--scenario", "heavy_ball", "--eta", "0.1"], &[])), 2);
    let o = run(dir.path(), &["simulate", "--scenario", "example1", "--horizon-t", "1"], &[("SHDS_LAB_THREADS", "zero")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn recurrence_output_is_reproducible_across_pools() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["mc-recurrence", "--scenario", "example1", "--trials", "40", "--horizon-t", "40", "--seed", "9"];
    let mut outputs = vec![];
    for threads in ["1", "3", ""] {
        let out = format!("r{}", outputs.len());
        let mut a = args.to_vec();
        a.extend(["--out", &out]);
        let envs: Vec<(&str, &str)> = if threads.is_empty() { vec![] } else { vec![("SHDS_LAB_THREADS", threads)] };
        let o = run(dir.path(), &a, &envs);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let base = dir.path().join(&out);
        outputs.push((read(base.join("example1_mc-recurrence.csv")), read(base.join("example1_mc-recurrence.json"))));
    }
    assert_header(&outputs[0].0);
    assert!(outputs.iter().all(|o| *o == outputs[0]));
}

#[test]
fn sweep_tabulates_each_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["sweep", "--scenario", "example1", "--epsilons", "0.2,0.1", "--trials", "3", "--horizon-t", "5", "--metric", "final-distance"],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("out/example1_sweep.csv"));
    assert_header(&csv);
    assert_eq!(csv.lines().skip(4).count(), 3, "{csv}");
}

#[test]
fn exported_documents_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["export", "--scenario", "heavy_ball", "--epsilon", "0.05", "--out", "sys"], &[]);
    assert_eq!(code(&o), 0);
    let doc = dir.path().join("sys/heavy_ball.json");
    let o = run(dir.path(), &["simulate", "--system", doc.to_str().unwrap(), "--horizon-t", "2", "--no-plot"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path().join("out/heavy_ball_arc.csv")).contains("# scenario heavy_ball"));
}
