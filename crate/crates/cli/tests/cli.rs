use std::fs;
use std::process::{Command, Output};

fn regcons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regcons"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_a_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.trace");
    let b = dir.path().join("b.trace");
    for p in [&a, &b] {
        let o = regcons(&["run", "--n", "3", "--seed", "11", "--trace-out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let o = regcons(&["check", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 21);
    assert!(stdout(&o).lines().all(|l| !l.contains("VIOLATION")));
}

#[test]
fn check_exits_one_on_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    fs::write(
        &path,
        "#regcons n=2 proposals=01 model=regular adversary=uniform_random seed=0 max_events=100 \
         crash_budget=0 crash_rate=0 coin=fair end=capped\n\
         0 0 DECIDE 0 0 1 decide\n\
         1 1 DECIDE 1 1 1 decide\n",
    )
    .unwrap();
    let o = regcons(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("agreement VIOLATION witness=0,1"));
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(regcons(&["run", "--model", "quantum"]).status.code(), Some(2));
    assert_eq!(
        regcons(&["run", "--n", "3", "--proposals", "01"]).status.code(),
        Some(2)
    );
    assert_eq!(regcons(&["campaign", "--runs", "0"]).status.code(), Some(2));
    assert_eq!(
        regcons(&["campaign", "--forced-round", "1", "--runs", "5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        regcons(&["attack", "--model", "atomic", "--runs", "2"]).status.code(),
        Some(2)
    );
    assert_eq!(regcons(&["check", "/nonexistent/trace"]).status.code(), Some(2));
    assert_eq!(regcons(&["explore", "--goal", "nonsense"]).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sys.conf");
    fs::write(&cfg, "# campaign defaults\nn = 2\nadversary = stale_read\nseed = 5\n").unwrap();
    let out = dir.path().join("t.trace");
    let o = regcons(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "3",
        "--trace-out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let header = fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    assert!(header.contains("n=3 proposals=010"), "{header}");
    assert!(header.contains("adversary=stale_read seed=5"), "{header}");

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(
        regcons(&["run", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn campaign_prints_flat_report() {
    let o = regcons(&["campaign", "--n", "3", "--runs", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("runs=50\n"));
    assert!(s.contains("violating_runs=0\n"));
    assert!(s.contains("epsilon_bound=0.125000\n"));

    let o = regcons(&["campaign", "--n", "3", "--runs", "20", "--forced-round", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("matching_coins_block_opposition.pass=20\n"));
}

#[test]
fn explore_writes_witness_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = regcons(&[
        "explore",
        "--n",
        "2",
        "--max-events",
        "40",
        "--round-cap",
        "2",
        "--goal",
        "new_old_inversion",
        "--stop-at-first-witness",
        "--trace-out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("witnesses=1\n"));
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let path = files[0].as_ref().unwrap().path();
    assert!(path.to_str().unwrap().ends_with("witness-0-new_old_inversion.trace"));
    assert_eq!(regcons(&["check", path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn explore_reports_budget_overflow() {
    let o = regcons(&["explore", "--n", "2", "--node-budget", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bound too large"));
}

#[test]
fn attack_defaults_to_linearizable() {
    let o = regcons(&["attack", "--runs", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("model=linearizable\n"));
    assert!(s.contains("linearized_against_coin=20\n"));
    assert!(s.contains("completed_before_flip=20\n"));
}
