//! Acceptance suite. Prints one PASS/FAIL line per criterion (plus a few
//! supplementary lines) and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use regcons::explorer::{explore, ExplorationConfig, SearchGoal};
use regcons::harness::{attack_demo, forced_coin_experiment, run_campaign, run_once, RunStats};
use regcons::monitors::{run_named, Status, MONITORS};
use regcons::{AdversaryKind, Bit, RegisterModel, SystemConfig, Trace};

const EXPLORE_PROPOSALS: [Bit; 2] = [Bit::Zero, Bit::One];
const EXPLORE_ROUND_CAP: u32 = 4;
const EXPLORE_MAX_EVENTS: usize = 200;
const EXPLORE_CRASH_BUDGETS: [usize; 2] = [0, 1];
const SAFETY_MONITORS: [&str; 3] = ["validity", "agreement", "decided_round_unopposed"];

const CAMPAIGN_NS: [usize; 3] = [2, 3, 5];
const CAMPAIGN_RUNS: u64 = 10_000;
const CAMPAIGN_MAX_EVENTS: usize = 100_000;

const EPSILON_N: usize = 3;
const EPSILON_MIN_OBSERVATIONS: u64 = 5_000;
/// 2^-3, written out so the bound is not computed by the code under test.
const EPSILON_BOUND: f64 = 0.125;
const EPSILON_MAX_RUNS: u64 = 200_000;

const FORCED_N: usize = 3;
const FORCED_ROUNDS: [u32; 3] = [2, 3, 5];
const FORCED_RUNS: u64 = 1_000;

const ATTACK_N: usize = 2;
const ATTACK_RUNS: u64 = 1_000;

const DETERMINISM_SEEDS: [u64; 3] = [0, 17, 0xDEAD_BEEF];

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        pass,
        detail: detail.into(),
    }
}

fn campaign_config(n: usize, kind: AdversaryKind) -> SystemConfig {
    SystemConfig::alternating(n)
        .with_adversary(kind)
        .with_model(RegisterModel::Regular)
        .with_crash_budget(0)
        .with_max_events(CAMPAIGN_MAX_EVENTS)
}

fn explore_config(model: RegisterModel, crash_budget: usize) -> ExplorationConfig {
    let mut c = ExplorationConfig::new(EXPLORE_PROPOSALS.to_vec());
    c.model = model;
    c.round_cap = EXPLORE_ROUND_CAP;
    c.max_events = EXPLORE_MAX_EVENTS;
    c.crash_budget = crash_budget;
    c
}

fn exhaustive_safety() -> Line {
    let mut details = Vec::new();
    let mut pass = true;
    for cb in EXPLORE_CRASH_BUDGETS {
        let cfg = explore_config(RegisterModel::Regular, cb);
        let checked = cfg.leaf_monitors();
        match explore(&cfg) {
            Ok(r) => {
                pass &= r.violation_count == 0 && r.complete > 0;
                pass &= SAFETY_MONITORS.iter().all(|m| checked.contains(m));
                details.push(format!(
                    "crash_budget={cb}: {} executions ({} complete), {} violations, max_round {}",
                    r.executions_explored, r.complete, r.violation_count, r.max_round
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("crash_budget={cb}: {e}"));
            }
        }
    }
    line("1 exhaustive safety (n=2)", pass, details.join("; "))
}

fn campaigns() -> Vec<(usize, AdversaryKind, RunStats)> {
    let mut out = Vec::new();
    for n in CAMPAIGN_NS {
        for kind in AdversaryKind::ALL {
            let stats = run_campaign(&campaign_config(n, kind), CAMPAIGN_RUNS, 0).expect("campaign runs");
            out.push((n, kind, stats));
        }
    }
    out
}

fn monte_carlo_safety(all: &[(usize, AdversaryKind, RunStats)]) -> Line {
    let runs: u64 = all.iter().map(|(_, _, s)| s.runs).sum();
    let bad: Vec<String> = all
        .iter()
        .filter(|(_, _, s)| s.violating_runs > 0)
        .map(|(n, k, s)| format!("n={n} {k}: {:?} first seed {:?}", s.violations, s.first_violating_seed))
        .collect();
    let complete = all.iter().all(|(_, _, s)| s.runs == CAMPAIGN_RUNS);
    let detail = if bad.is_empty() {
        format!("{runs} runs, {} configurations, 0 violating runs", all.len())
    } else {
        bad.join("; ")
    };
    line("2 monte carlo monitor suite", bad.is_empty() && complete, detail)
}

fn termination(all: &[(usize, AdversaryKind, RunStats)]) -> Line {
    let capped: u64 = all.iter().map(|(_, _, s)| s.capped_runs).sum();
    let worst = all
        .iter()
        .map(|(n, k, s)| (s.events as f64 / s.runs as f64, *n, *k))
        .fold(
            (0.0, 0, AdversaryKind::RoundRobin),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    line(
        "3 termination in practice",
        capped == 0,
        format!(
            "capped_runs={capped} at max_events={CAMPAIGN_MAX_EVENTS}; longest mean run {:.0} events (n={} {})",
            worst.0, worst.1, worst.2
        ),
    )
}

fn epsilon_bound() -> Line {
    let cfg = campaign_config(EPSILON_N, AdversaryKind::UniformRandom);
    let mut stats = RunStats::empty(EPSILON_N);
    let mut next = 0;
    while stats.match_observations() < EPSILON_MIN_OBSERVATIONS && next < EPSILON_MAX_RUNS {
        stats = stats.merge(run_campaign(&cfg, CAMPAIGN_RUNS, next).expect("campaign runs"));
        next += CAMPAIGN_RUNS;
    }
    let lb = stats.match_lower_bound();
    let enough = stats.match_observations() >= EPSILON_MIN_OBSERVATIONS;
    line(
        "4 coin-match probability >= 2^-n (n=3)",
        enough && lb >= EPSILON_BOUND,
        format!(
            "{} of {} observations over {} runs, frequency {:.4}, 99% lower bound {:.4} vs {EPSILON_BOUND}",
            stats.match_successes(),
            stats.match_observations(),
            stats.runs,
            stats.match_frequency(),
            lb
        ),
    )
}

fn forced_config() -> SystemConfig {
    SystemConfig::alternating(FORCED_N)
        .with_adversary(AdversaryKind::DisagreementMaximizer)
        .with_crash_budget(0)
}

fn forced_coins() -> Line {
    let mut pass = true;
    let mut details = Vec::new();
    for r in FORCED_ROUNDS {
        match forced_coin_experiment(&forced_config(), r, FORCED_RUNS, false) {
            Ok(rep) => {
                pass &= rep.forced_runs == FORCED_RUNS && rep.pass == [FORCED_RUNS; 2];
                details.push(format!(
                    "r={r}: pass {:?}/{} (oracle consulted in {}, {} seeds skipped)",
                    rep.pass, rep.forced_runs, rep.consulted, rep.skipped
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("r={r}: {e}"));
            }
        }
    }
    line("5 forced matching coins", pass, details.join("; "))
}

fn inverted_coins() -> Line {
    let mut pass = true;
    let mut details = Vec::new();
    for r in FORCED_ROUNDS {
        match forced_coin_experiment(&forced_config(), r, FORCED_RUNS, true) {
            Ok(rep) => {
                pass &= rep.violations == [0, 0] && rep.consulted_vacuous == [rep.consulted; 2];
                details.push(format!(
                    "r={r}: {} consulted runs all vacuous, {:?} violations",
                    rep.consulted, rep.violations
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("r={r}: {e}"));
            }
        }
    }
    line("5+ inverted coins leave the premise unmet", pass, details.join("; "))
}

fn attack() -> Line {
    let cfg = SystemConfig::alternating(ATTACK_N)
        .with_model(RegisterModel::Linearizable)
        .with_crash_budget(0);
    match attack_demo(&cfg, ATTACK_RUNS) {
        Ok(rep) => line(
            "6 scripted attack",
            rep.linearized_against_coin == ATTACK_RUNS
                && rep.completed_before_flip == ATTACK_RUNS
                && rep.violating_runs == 0,
            format!(
                "{} runs: linearized-first against coin {}, completed-first before flip {}, coins {:?}, {} violating",
                rep.runs, rep.linearized_against_coin, rep.completed_before_flip, rep.coins, rep.violating_runs
            ),
        ),
        Err(e) => line("6 scripted attack", false, e.to_string()),
    }
}

fn inversions() -> Line {
    let mut regular = explore_config(RegisterModel::Regular, 0);
    regular.goal = Some(SearchGoal::NewOldInversion);
    regular.stop_at_first_witness = true;
    let mut atomic = explore_config(RegisterModel::Atomic, 0);
    atomic.goal = Some(SearchGoal::NewOldInversion);
    match (explore(&regular), explore(&atomic)) {
        (Ok(r), Ok(a)) => line(
            "7 new-old inversion witness",
            r.witness_count >= 1 && a.witness_count == 0 && a.complete > 0,
            format!(
                "regular: {} found; atomic: {} found in {} executions",
                r.witness_count, a.witness_count, a.executions_explored
            ),
        ),
        (r, a) => line(
            "7 new-old inversion witness",
            false,
            format!("{:?} / {:?}", r.err(), a.err()),
        ),
    }
}

const HEADER: &str =
    "#regcons model=regular adversary=uniform_random seed=0 max_events=100000 crash_budget=0 crash_rate=0.01 coin=fair";

/// Builds a trace from event lines without their sequence numbers.
fn hand_trace(proposals: &str, end: &str, body: &[&str]) -> Trace {
    let mut text = format!("{HEADER} n={} proposals={proposals} end={end}\n", proposals.len());
    for (i, l) in body.iter().enumerate() {
        text.push_str(&format!("{i} {l}\n"));
    }
    Trace::parse(&text).expect("hand-built trace parses")
}

/// `(monitor, counterexample)` for every monitor.
fn counterexamples() -> Vec<(&'static str, Trace)> {
    let w = |p: u32, v: &str, r: u32, site: &str| {
        [
            format!("{p} INVOKE_WRITE {p} {v} {r} {site}"),
            format!("{p} RESPOND_WRITE {p} {v} {r} {site}"),
        ]
    };
    let t = |proposals: &str, end: &str, ops: Vec<Vec<String>>| {
        let lines: Vec<String> = ops.into_iter().flatten().collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        hand_trace(proposals, end, &refs)
    };
    let one = |s: &str| vec![s.to_string()];
    vec![
        (
            "well_formed",
            t("01", "capped", vec![one("0 RESPOND_WRITE 0 0 1 init")]),
        ),
        (
            "protocol_conformance",
            t("01", "capped", vec![one("0 INVOKE_WRITE 0 1 1 init")]),
        ),
        (
            "write_values_in_domain",
            t("01", "capped", vec![one("0 INVOKE_WRITE 0 0 0 init")]),
        ),
        (
            "write_invoked_at_most_once",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(0, "0", 1, "adopt").into()],
            ),
        ),
        (
            "no_conflicting_writes_per_round",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(0, "1", 1, "adopt").into()],
            ),
        ),
        (
            "rounds_monotone",
            t(
                "01",
                "capped",
                vec![w(0, "0", 2, "init").into(), w(0, "0", 1, "adopt").into()],
            ),
        ),
        (
            "pause_after_preference_invoked",
            t("01", "capped", vec![w(0, "B", 1, "pause").into()]),
        ),
        (
            "pause_after_preference_completed",
            t(
                "01",
                "capped",
                vec![one("0 INVOKE_WRITE 0 0 1 init"), one("0 INVOKE_WRITE 0 B 1 pause")],
            ),
        ),
        (
            "round_progress",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(0, "0", 3, "adopt").into()],
            ),
        ),
        (
            "switch_has_earlier_witness",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(0, "1", 2, "adopt").into()],
            ),
        ),
        (
            "switch_has_earlier_witness_any_round",
            t(
                "01",
                "capped",
                vec![
                    w(0, "0", 1, "init").into(),
                    w(0, "B", 1, "pause").into(),
                    w(0, "1", 3, "adopt").into(),
                ],
            ),
        ),
        (
            "value_rounds_contiguous",
            t("01", "capped", vec![w(0, "0", 2, "adopt").into()]),
        ),
        (
            "pause_requires_opposing_write",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(0, "B", 1, "pause").into()],
            ),
        ),
        (
            "unopposed_value_persists",
            t(
                "01",
                "capped",
                vec![w(0, "0", 1, "init").into(), w(1, "1", 2, "coin").into()],
            ),
        ),
        ("validity", t("00", "capped", vec![one("0 DECIDE 0 1 1 decide")])),
        (
            "agreement",
            t(
                "01",
                "capped",
                vec![one("0 DECIDE 0 0 1 decide"), one("1 DECIDE 1 1 1 decide")],
            ),
        ),
        (
            "decided_round_unopposed",
            t(
                "01",
                "capped",
                vec![w(1, "1", 1, "init").into(), one("0 DECIDE 0 0 1 decide")],
            ),
        ),
        (
            // Round 1 never saw 1, yet p1 reaches round 2 and decides only at round 3.
            "unopposed_round_decides",
            t(
                "00",
                "complete",
                vec![
                    w(0, "0", 1, "init").into(),
                    w(1, "0", 1, "init").into(),
                    w(1, "0", 2, "adopt").into(),
                    w(1, "0", 3, "adopt").into(),
                    one("1 DECIDE 1 0 3 decide"),
                    one("0 CRASH 0 B 0 -"),
                ],
            ),
        ),
        (
            // The only coin at round 2 matches the first completed round-1 value 0, yet 1 is written at round 2.
            "matching_coins_block_opposition",
            t(
                "01",
                "complete",
                vec![
                    w(0, "0", 1, "init").into(),
                    w(1, "1", 1, "init").into(),
                    w(0, "B", 1, "pause").into(),
                    one("0 FLIP 0 0 2 coin"),
                    w(0, "0", 2, "coin").into(),
                    w(1, "1", 2, "adopt").into(),
                    one("0 CRASH 0 B 0 -"),
                    one("1 CRASH 1 B 0 -"),
                ],
            ),
        ),
        (
            // No coins at round 2, so the premise holds, but p1 decides at round 4.
            "matching_coins_terminate",
            t(
                "01",
                "complete",
                vec![
                    w(0, "0", 1, "init").into(),
                    w(1, "1", 1, "init").into(),
                    w(1, "0", 2, "adopt").into(),
                    w(1, "0", 3, "adopt").into(),
                    w(1, "0", 4, "adopt").into(),
                    one("1 DECIDE 1 0 4 decide"),
                    one("0 CRASH 0 B 0 -"),
                ],
            ),
        ),
        (
            "regular_reads",
            t(
                "01",
                "capped",
                vec![
                    w(1, "1", 1, "init").into(),
                    one("0 INVOKE_READ 1 B 0 read"),
                    one("0 RESPOND_READ 1 B 0 read"),
                ],
            ),
        ),
    ]
}

/// First simulated trace on which `monitor` returns PASS.
fn witness(monitor: &str) -> Option<u64> {
    let configs: Vec<SystemConfig> = AdversaryKind::ALL
        .iter()
        .map(|&k| SystemConfig::alternating(3).with_adversary(k))
        .chain([SystemConfig::new(vec![Bit::One; 3]), SystemConfig::alternating(2)])
        .collect();
    (0..200u64).find(|&seed| {
        configs.iter().any(|cfg| {
            let t = run_once(cfg, seed).expect("run");
            run_named(&t, monitor).is_some_and(|v| v.status == Status::Pass)
        })
    })
}

fn mutation_suite() -> Line {
    let cases = counterexamples();
    let mut failures = Vec::new();
    for (name, _) in MONITORS {
        let caught = cases
            .iter()
            .filter(|(m, _)| m == name)
            .any(|(_, t)| run_named(t, name).is_some_and(|v| v.status == Status::Violation));
        if !caught {
            failures.push(format!("{name} missed its counterexample"));
        }
        if witness(name).is_none() {
            failures.push(format!("{name} has no passing witness"));
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "{} monitors: each flags its counterexample and passes a simulated witness",
            MONITORS.len()
        )
    } else {
        failures.join("; ")
    };
    line("8 monitor mutation suite", failures.is_empty(), detail)
}

fn determinism() -> Line {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut configs: Vec<SystemConfig> = AdversaryKind::ALL
        .iter()
        .map(|&k| SystemConfig::alternating(3).with_adversary(k).with_crash_budget(2))
        .collect();
    configs.push(SystemConfig::alternating(2).with_model(RegisterModel::Linearizable));
    configs.push(SystemConfig::alternating(3).with_model(RegisterModel::Atomic));
    configs.push(SystemConfig::alternating(3).with_coin(regcons::CoinMode::Forced {
        round: 2,
        inverted: false,
    }));
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        for seed in DETERMINISM_SEEDS {
            let paths = [0, 1].map(|k| dir.path().join(format!("{i}-{seed}-{k}.trace")));
            for p in &paths {
                std::fs::write(p, run_once(cfg, seed).expect("run").to_text()).expect("write trace");
            }
            let [a, b] = paths.map(|p| std::fs::read(p).expect("read trace"));
            let reparsed = Trace::parse(std::str::from_utf8(&a).expect("utf8"))
                .expect("parse")
                .to_text();
            if a != b || reparsed.as_bytes() != a {
                mismatches.push(format!("config {i} seed {seed}"));
            }
            checked += 1;
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{checked} (config, seed) pairs replayed to identical trace files")
    } else {
        mismatches.join(", ")
    };
    line("9 deterministic replay", mismatches.is_empty(), detail)
}

fn crash_campaigns() -> Line {
    let mut bad = Vec::new();
    for n in CAMPAIGN_NS {
        for kind in AdversaryKind::ALL {
            let cfg = campaign_config(n, kind).with_crash_budget(n - 1).with_crash_rate(0.05);
            let s = run_campaign(&cfg, CAMPAIGN_RUNS / 10, 1_000_000).expect("campaign runs");
            if s.violating_runs > 0 || s.capped_runs > 0 {
                bad.push(format!("n={n} {kind}: {:?}", s.violations));
            }
        }
    }
    line(
        "2+ campaigns with up to n-1 crashes",
        bad.is_empty(),
        if bad.is_empty() {
            "no violations, no capped runs".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Line| {
        let start = Instant::now();
        let l = f();
        println!(
            "criterion {}: {} | {} [{:.1}s]",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.detail,
            start.elapsed().as_secs_f64()
        );
        lines.push(l.pass);
    };
    timed(&mut exhaustive_safety);
    let start = Instant::now();
    let all = campaigns();
    println!(
        "(criteria 2 and 3 campaigns took {:.1}s)",
        start.elapsed().as_secs_f64()
    );
    timed(&mut || monte_carlo_safety(&all));
    timed(&mut || termination(&all));
    timed(&mut crash_campaigns);
    timed(&mut epsilon_bound);
    timed(&mut forced_coins);
    timed(&mut inverted_coins);
    timed(&mut attack);
    timed(&mut inversions);
    timed(&mut mutation_suite);
    timed(&mut determinism);
    let failed = lines.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} lines passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
