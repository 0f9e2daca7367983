//! Seeded runs, Monte Carlo campaigns and the scripted experiments.
//!
//! Every run is a pure function of `(config, seed)`: the adversary, coin and
//! crash streams are all derived from the seed, so campaigns can run in any
//! order and still merge to the same statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::adversary::{make_adversary, Adversary, AdversaryContext};
use crate::config::{AdversaryKind, CoinMode, SystemConfig};
use crate::error::{Error, Result};
use crate::monitors::{coin_monitors_at, first_completed_write, run_all, Status};
use crate::sim::{coin_for, CoinSource, SystemState};
use crate::trace::{EventKind, Trace};
use crate::types::{Bit, ProcessId, RegisterModel, Seq};

/// One-sided confidence level of the coin-match lower bound.
pub const MATCH_CONFIDENCE: f64 = 0.99;

/// Steps `st` with `adversary` until every process halts or the event cap is hit.
pub fn drive(st: &mut SystemState, adversary: &mut dyn Adversary, coin: &mut dyn CoinSource) -> Result<()> {
    while !st.is_finished() && !st.hit_cap() {
        let choice = adversary.choose(&AdversaryContext::new(st))?;
        st.apply(choice, coin)?;
    }
    Ok(())
}

/// Runs `config` with `seed` (overriding `config.seed`) and returns the final state.
pub fn simulate(config: &SystemConfig, seed: u64) -> Result<SystemState> {
    let cfg = config.clone().with_seed(seed);
    let mut adversary = make_adversary(cfg.adversary, seed);
    let mut coin = coin_for(&cfg, seed);
    let mut st = SystemState::new(cfg)?;
    drive(&mut st, adversary.as_mut(), coin.as_mut())?;
    Ok(st)
}

pub fn run_once(config: &SystemConfig, seed: u64) -> Result<Trace> {
    simulate(config, seed).map(SystemState::into_trace)
}

/// Coin-match observations of one trace: for each round `r >= 2` with at
/// least one FLIP at `r` and a completed write at `r - 1`, whether every
/// round-`r` flip equals the first completed round-`r-1` value.
pub fn coin_match_observations(t: &Trace) -> Vec<(u32, bool)> {
    let writes = t.writes();
    let mut flips: BTreeMap<u32, Vec<Bit>> = BTreeMap::new();
    for e in t.events_of(EventKind::Flip) {
        if let Some(c) = e.value.prefer.bit() {
            flips.entry(e.value.round).or_default().push(c);
        }
    }
    flips
        .into_iter()
        .filter(|(r, _)| *r >= 2)
        .filter_map(|(r, coins)| {
            let (_, first) = first_completed_write(&writes, r - 1)?;
            let v = first.value.prefer.bit()?;
            Some((r, coins.iter().all(|&c| c == v)))
        })
        .collect()
}

/// Aggregated campaign statistics. Merging is associative and commutative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub n: usize,
    pub runs: u64,
    /// Runs in which every process decided or crashed.
    pub decided_runs: u64,
    pub capped_runs: u64,
    /// Round of every DECIDE event.
    pub decision_round_histogram: BTreeMap<u32, u64>,
    /// Per round r: (observations, observations where every flip matched).
    pub match_by_round: BTreeMap<u32, (u64, u64)>,
    /// Runs with at least one VIOLATION verdict.
    pub violating_runs: u64,
    pub violations: BTreeMap<&'static str, u64>,
    /// Lowest violating seed, for replay.
    pub first_violating_seed: Option<u64>,
    pub crashes: u64,
    pub events: u64,
}

impl RunStats {
    pub fn empty(n: usize) -> RunStats {
        RunStats {
            n,
            ..Default::default()
        }
    }

    /// Statistics of one finished trace produced with `seed`.
    pub fn of_trace(t: &Trace, seed: u64) -> RunStats {
        let mut s = RunStats::empty(t.n());
        s.runs = 1;
        if t.is_capped() {
            s.capped_runs = 1;
        } else {
            s.decided_runs = 1;
        }
        s.events = t.events.len() as u64;
        for e in &t.events {
            match e.kind {
                EventKind::Decide => *s.decision_round_histogram.entry(e.value.round).or_default() += 1,
                EventKind::Crash => s.crashes += 1,
                _ => {}
            }
        }
        for (r, ok) in coin_match_observations(t) {
            let slot = s.match_by_round.entry(r).or_default();
            slot.0 += 1;
            slot.1 += ok as u64;
        }
        let bad: Vec<&'static str> = run_all(t)
            .into_iter()
            .filter(|v| v.is_violation())
            .map(|v| v.name)
            .collect();
        if !bad.is_empty() {
            s.violating_runs = 1;
            s.first_violating_seed = Some(seed);
            for name in bad {
                *s.violations.entry(name).or_default() += 1;
            }
        }
        s
    }

    pub fn merge(mut self, other: RunStats) -> RunStats {
        self.n = self.n.max(other.n);
        self.runs += other.runs;
        self.decided_runs += other.decided_runs;
        self.capped_runs += other.capped_runs;
        for (k, v) in other.decision_round_histogram {
            *self.decision_round_histogram.entry(k).or_default() += v;
        }
        for (k, (a, b)) in other.match_by_round {
            let slot = self.match_by_round.entry(k).or_default();
            slot.0 += a;
            slot.1 += b;
        }
        self.violating_runs += other.violating_runs;
        for (k, v) in other.violations {
            *self.violations.entry(k).or_default() += v;
        }
        self.first_violating_seed = match (self.first_violating_seed, other.first_violating_seed) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.crashes += other.crashes;
        self.events += other.events;
        self
    }

    pub fn match_observations(&self) -> u64 {
        self.match_by_round.values().map(|(a, _)| a).sum()
    }

    pub fn match_successes(&self) -> u64 {
        self.match_by_round.values().map(|(_, b)| b).sum()
    }

    /// Pooled frequency over all rounds; 0 without observations.
    pub fn match_frequency(&self) -> f64 {
        let n = self.match_observations();
        if n == 0 {
            0.0
        } else {
            self.match_successes() as f64 / n as f64
        }
    }

    pub fn epsilon_bound(&self) -> f64 {
        0.5f64.powi(self.n as i32)
    }

    /// Clopper-Pearson lower bound on the match probability at [`MATCH_CONFIDENCE`].
    pub fn match_lower_bound(&self) -> f64 {
        clopper_pearson_lower(self.match_successes(), self.match_observations(), MATCH_CONFIDENCE)
    }

    /// Flat `key=value` report, one pair per line, stable order.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "runs={}", self.runs);
        let _ = writeln!(out, "decided_runs={}", self.decided_runs);
        let _ = writeln!(out, "capped_runs={}", self.capped_runs);
        let _ = writeln!(out, "violating_runs={}", self.violating_runs);
        if let Some(s) = self.first_violating_seed {
            let _ = writeln!(out, "first_violating_seed={s}");
        }
        for (k, v) in &self.violations {
            let _ = writeln!(out, "violations.{k}={v}");
        }
        let _ = writeln!(out, "crashes={}", self.crashes);
        let _ = writeln!(out, "events={}", self.events);
        for (r, c) in &self.decision_round_histogram {
            let _ = writeln!(out, "decision_round.{r}={c}");
        }
        for (r, (a, b)) in &self.match_by_round {
            let _ = writeln!(out, "match_round.{r}={b}/{a}");
        }
        let _ = writeln!(out, "match_observations={}", self.match_observations());
        let _ = writeln!(out, "match_successes={}", self.match_successes());
        let _ = writeln!(out, "match_frequency={:.6}", self.match_frequency());
        let _ = writeln!(out, "match_lower_99={:.6}", self.match_lower_bound());
        let _ = writeln!(out, "epsilon_bound={:.6}", self.epsilon_bound());
        out
    }
}

/// Exact one-sided lower confidence bound for a binomial proportion.
pub fn clopper_pearson_lower(successes: u64, trials: u64, confidence: f64) -> f64 {
    if successes == 0 || trials == 0 {
        return 0.0;
    }
    let beta = Beta::new(successes as f64, (trials - successes + 1) as f64).expect("positive shape parameters");
    beta.inverse_cdf(1.0 - confidence)
}

/// Runs seeds `base_seed..base_seed + runs` in parallel and merges their stats.
pub fn run_campaign(config: &SystemConfig, runs: u64, base_seed: u64) -> Result<RunStats> {
    if runs == 0 {
        return Err(Error::Config("a campaign needs at least one run".into()));
    }
    config.validate()?;
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            run_once(config, seed).map(|t| RunStats::of_trace(&t, seed))
        })
        .try_reduce(|| RunStats::empty(config.n), |a, b| Ok(a.merge(b)))
}

/// Outcome of a forced-coin experiment at one target round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ForcedReport {
    pub round: u32,
    pub inverted: bool,
    /// Runs in which some write of round `round - 1` completed.
    pub forced_runs: u64,
    /// Seeds skipped because no write of round `round - 1` ever completed.
    pub skipped: u64,
    /// Forced runs with at least one FLIP at the target round.
    pub consulted: u64,
    /// Status counts of the two coin monitors at the target round, in the
    /// order (block opposition, terminate).
    pub pass: [u64; 2],
    pub vacuous: [u64; 2],
    pub violations: [u64; 2],
    /// Among consulted runs, how many left each monitor vacuous.
    pub consulted_vacuous: [u64; 2],
    pub capped: u64,
}

impl ForcedReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "round={}", self.round);
        let _ = writeln!(out, "inverted={}", self.inverted);
        let _ = writeln!(out, "forced_runs={}", self.forced_runs);
        let _ = writeln!(out, "skipped={}", self.skipped);
        let _ = writeln!(out, "consulted={}", self.consulted);
        let _ = writeln!(out, "capped={}", self.capped);
        for (i, name) in ["matching_coins_block_opposition", "matching_coins_terminate"]
            .iter()
            .enumerate()
        {
            let _ = writeln!(out, "{name}.pass={}", self.pass[i]);
            let _ = writeln!(out, "{name}.vacuous={}", self.vacuous[i]);
            let _ = writeln!(out, "{name}.violation={}", self.violations[i]);
        }
        out
    }
}

/// Seeds tried per requested forced run before giving up.
pub const SEEDS_PER_FORCED_RUN: u64 = 1000;

/// Collects `runs` forced runs at target round `r`, trying seeds from
/// `config.seed` upward and giving up after `runs * SEEDS_PER_FORCED_RUN`.
///
/// The coin oracle returns the first completed round `r-1` value at round
/// `r` (its complement when `inverted`) and is fair at every other round.
pub fn forced_coin_experiment(config: &SystemConfig, r: u32, runs: u64, inverted: bool) -> Result<ForcedReport> {
    if r < 2 {
        return Err(Error::Config(format!("forced round must be at least 2, got {r}")));
    }
    if runs == 0 {
        return Err(Error::Config("a forced-coin experiment needs at least one run".into()));
    }
    let cfg = config.clone().with_coin(CoinMode::Forced { round: r, inverted });
    cfg.validate()?;
    let mut report = ForcedReport {
        round: r,
        inverted,
        ..Default::default()
    };
    let limit = runs.saturating_mul(SEEDS_PER_FORCED_RUN);
    let mut seed = config.seed;
    let mut tried = 0;
    while report.forced_runs < runs {
        if tried == limit {
            return Err(Error::ScenarioBroken(format!(
                "only {} of {runs} runs reached round {} after {limit} seeds",
                report.forced_runs,
                r - 1
            )));
        }
        // Batches keep the seed order deterministic while using every core.
        let batch: Vec<u64> = (0..(runs - report.forced_runs).max(256).min(limit - tried))
            .map(|i| seed.wrapping_add(i))
            .collect();
        let traces: Vec<Trace> = batch.par_iter().map(|&s| run_once(&cfg, s)).collect::<Result<_>>()?;
        for t in traces {
            if report.forced_runs == runs {
                break;
            }
            tried += 1;
            seed = seed.wrapping_add(1);
            if first_completed_write(&t.writes(), r - 1).is_none() {
                report.skipped += 1;
                continue;
            }
            report.forced_runs += 1;
            report.capped += t.is_capped() as u64;
            let consulted = t.events_of(EventKind::Flip).any(|e| e.value.round == r);
            report.consulted += consulted as u64;
            for (i, v) in coin_monitors_at(&t, r).iter().enumerate() {
                match v.status {
                    Status::Pass => report.pass[i] += 1,
                    Status::Vacuous => {
                        report.vacuous[i] += 1;
                        report.consulted_vacuous[i] += consulted as u64;
                    }
                    Status::Violation => report.violations[i] += 1,
                }
            }
        }
    }
    Ok(report)
}

/// One scripted attack run, reduced to the facts the demo reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackRun {
    pub seed: u64,
    pub coin: Bit,
    /// Value of the first round-1 write in the linearization, if any exists.
    pub first_linearized: Option<Bit>,
    /// Respond seq of the first round-1 write to complete.
    pub first_completed_at: Seq,
    pub flip_at: Seq,
}

impl AttackRun {
    pub fn linearized_against_coin(&self) -> bool {
        self.first_linearized.is_some_and(|v| v != self.coin)
    }

    pub fn completed_before_flip(&self) -> bool {
        self.first_completed_at < self.flip_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttackReport {
    pub model: Option<RegisterModel>,
    pub runs: u64,
    /// Runs whose first linearized round-1 write differs from the coin.
    pub linearized_against_coin: u64,
    /// Runs whose first completed round-1 write responded before the flip.
    pub completed_before_flip: u64,
    /// Runs with no linearization to inspect (non-linearizable model).
    pub no_linearization: u64,
    pub coins: [u64; 2],
    /// Runs whose full trace had a monitor VIOLATION.
    pub violating_runs: u64,
}

impl AttackReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        if let Some(m) = self.model {
            let _ = writeln!(out, "model={m}");
        }
        let _ = writeln!(out, "runs={}", self.runs);
        let _ = writeln!(out, "linearized_against_coin={}", self.linearized_against_coin);
        let _ = writeln!(out, "completed_before_flip={}", self.completed_before_flip);
        let _ = writeln!(out, "no_linearization={}", self.no_linearization);
        let _ = writeln!(out, "coin.0={}", self.coins[0]);
        let _ = writeln!(out, "coin.1={}", self.coins[1]);
        let _ = writeln!(out, "violating_runs={}", self.violating_runs);
        out
    }
}

/// Runs the scripted attack once with `seed`.
pub fn attack_run(config: &SystemConfig, seed: u64) -> Result<(AttackRun, Trace)> {
    let cfg = config.clone().with_adversary(AdversaryKind::ScriptedAttack);
    let st = simulate(&cfg, seed)?;
    let p = cfg
        .proposals
        .iter()
        .position(|&b| b == Bit::Zero)
        .map(|i| ProcessId(i as u32))
        .ok_or_else(|| Error::ScenarioBroken("nobody proposes 0".into()))?;
    let flip = st
        .events()
        .iter()
        .find(|e| e.kind == EventKind::Flip && e.pid == p)
        .copied()
        .ok_or_else(|| Error::ScenarioBroken(format!("{p} never flipped")))?;
    let coin = flip
        .value
        .prefer
        .bit()
        .ok_or_else(|| Error::Internal("a flip without a coin value".into()))?;
    let first_linearized = st.linearizer().and_then(|lin| {
        lin.committed_order()
            .into_iter()
            .map(|(reg, k)| st.register(reg).value_at(k))
            .find(|v| v.round == 1)
            .and_then(|v| v.prefer.bit())
    });
    let trace = st.into_trace();
    let (first_completed_at, _) = first_completed_write(&trace.writes(), 1)
        .ok_or_else(|| Error::ScenarioBroken("no round-1 write completed".into()))?;
    let run = AttackRun {
        seed,
        coin,
        first_linearized,
        first_completed_at,
        flip_at: flip.seq,
    };
    Ok((run, trace))
}

/// Runs the attack `runs` times with seeds from `config.seed` upward.
pub fn attack_demo(config: &SystemConfig, runs: u64) -> Result<AttackReport> {
    if runs == 0 {
        return Err(Error::Config("the attack demo needs at least one run".into()));
    }
    let results: Vec<(AttackRun, bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let (run, trace) = attack_run(config, config.seed.wrapping_add(i))?;
            let bad = run_all(&trace).iter().any(|v| v.is_violation());
            Ok((run, bad))
        })
        .collect::<Result<_>>()?;
    let mut report = AttackReport {
        model: Some(config.model),
        runs,
        ..Default::default()
    };
    for (run, bad) in results {
        report.linearized_against_coin += run.linearized_against_coin() as u64;
        report.completed_before_flip += run.completed_before_flip() as u64;
        report.no_linearization += run.first_linearized.is_none() as u64;
        report.coins[run.coin.as_u8() as usize] += 1;
        report.violating_runs += bad as u64;
    }
    Ok(report)
}
