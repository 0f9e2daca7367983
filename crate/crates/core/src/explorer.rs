//! Bounded exhaustive exploration of every adversary schedule, read result,
//! coin outcome and crash placement.
//!
//! The search is a depth-first walk over cloned [`SystemState`]s. A leaf is a
//! state where every process has halted, the event bound is reached, or some
//! register holds a round above `round_cap`. Each leaf trace goes through the
//! leaf monitors.
//!
//! With `memo` on, states are fingerprinted and a state is expanded again only
//! when reached at a smaller depth. The fingerprint keeps everything that
//! decides the future schedule tree plus the set of invoked `(prefer, round)`
//! pairs and the decisions, so pruning is exact for the monitors in
//! [`MEMO_EXACT_MONITORS`] but not for monitors that look at read histories.
//! Under [`SearchGoal::NewOldInversion`] the fingerprint also carries the
//! completed reads a later read could still invert, which makes the goal
//! exact too. Other goals are only checked on the leaves the memo keeps.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::monitors::{find_any_new_old_inversion, run_all, run_named, Status, MONITORS};
use crate::protocol::{NextAction, PendingOp};
use crate::sim::{FixedCoin, ScheduleChoice, SystemState};
use crate::trace::Trace;
use crate::types::{concurrent, Bit, ProcessId, RegisterModel, RegisterValue};

/// Leaf monitors whose results the memo cannot change.
pub const MEMO_EXACT_MONITORS: &[&str] = &["validity", "agreement", "decided_round_unopposed"];

/// Traces kept per list in a report; counts are always exact.
pub const KEPT_TRACES: usize = 8;

/// A property of a leaf trace the search tries to exhibit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchGoal {
    /// One reader sees a write's value and then the value it overwrote.
    NewOldInversion,
    /// The named monitor returns PASS (not VACUOUS) on the leaf.
    MonitorPasses(String),
}

impl SearchGoal {
    pub fn name(&self) -> &str {
        match self {
            SearchGoal::NewOldInversion => "new_old_inversion",
            SearchGoal::MonitorPasses(m) => m,
        }
    }

    fn holds(&self, t: &Trace) -> bool {
        match self {
            SearchGoal::NewOldInversion => find_any_new_old_inversion(t).is_some(),
            SearchGoal::MonitorPasses(m) => run_named(t, m).is_some_and(|v| v.status == Status::Pass),
        }
    }
}

impl fmt::Display for SearchGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchGoal {
    type Err = Error;

    fn from_str(s: &str) -> Result<SearchGoal> {
        if s == "new_old_inversion" {
            return Ok(SearchGoal::NewOldInversion);
        }
        if MONITORS.iter().any(|(name, _)| *name == s) {
            return Ok(SearchGoal::MonitorPasses(s.to_string()));
        }
        Err(Error::Config(format!("unknown search goal {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    pub proposals: Vec<Bit>,
    pub model: RegisterModel,
    pub max_events: usize,
    pub round_cap: u32,
    pub crash_budget: usize,
    pub goal: Option<SearchGoal>,
    /// Ignored under the linearizable model, whose commit state is not fingerprinted.
    pub memo: bool,
    /// Upper bound on visited nodes; exceeding it is `BoundTooLarge`.
    pub node_budget: u64,
    pub stop_at_first_witness: bool,
}

impl ExplorationConfig {
    pub fn new(proposals: Vec<Bit>) -> ExplorationConfig {
        ExplorationConfig {
            proposals,
            model: RegisterModel::Regular,
            max_events: 200,
            round_cap: 4,
            crash_budget: 0,
            goal: None,
            memo: true,
            node_budget: 50_000_000,
            stop_at_first_witness: false,
        }
    }

    pub fn n(&self) -> usize {
        self.proposals.len()
    }

    pub fn memo_active(&self) -> bool {
        self.memo && self.model != RegisterModel::Linearizable
    }

    /// Monitors run on every leaf: all of them without memo, the memo-exact
    /// subset with it.
    pub fn leaf_monitors(&self) -> Vec<&'static str> {
        if self.memo_active() {
            MEMO_EXACT_MONITORS.to_vec()
        } else {
            MONITORS.iter().map(|(name, _)| *name).collect()
        }
    }

    fn system_config(&self) -> SystemConfig {
        SystemConfig::new(self.proposals.clone())
            .with_model(self.model)
            .with_max_events(self.max_events)
            .with_crash_budget(self.crash_budget)
            .with_crash_rate(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorationReport {
    /// Leaves reached, whatever ended them.
    pub executions_explored: u64,
    /// Leaves where every process halted.
    pub complete: u64,
    /// Leaves cut by the event bound or the round cap.
    pub truncated: u64,
    pub violation_count: u64,
    /// Up to [`KEPT_TRACES`] `(monitor, leaf trace)` violations.
    pub violations: Vec<(String, Trace)>,
    pub witness_count: u64,
    pub witnesses: Vec<(String, Trace)>,
    pub nodes: u64,
    pub memo_hits: u64,
    /// Highest register round seen in any state.
    pub max_round: u32,
}

impl ExplorationReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("executions_explored", self.executions_explored.to_string());
        kv("complete", self.complete.to_string());
        kv("truncated", self.truncated.to_string());
        kv("violations", self.violation_count.to_string());
        kv("witnesses", self.witness_count.to_string());
        kv("nodes", self.nodes.to_string());
        kv("memo_hits", self.memo_hits.to_string());
        kv("max_round", self.max_round.to_string());
        for (name, _) in &self.violations {
            kv("violated", name.clone());
        }
        out
    }
}

/// Fingerprint of everything that shapes the subtree below `st` and the
/// memo-exact monitors' verdicts on its leaves.
fn fingerprint(st: &SystemState, goal: Option<&SearchGoal>) -> u128 {
    let inversion = matches!(goal, Some(SearchGoal::NewOldInversion)).then(|| inversion_summary(st));
    let mut a = DefaultHasher::new();
    let mut b = DefaultHasher::new();
    0xA5u8.hash(&mut b);
    let feed = |h: &mut DefaultHasher| {
        for p in st.processes() {
            (&p.pc, &p.pending, &p.captured).hash(h);
            if let Some(PendingOp::Read { .. }) = p.pending {
                // Future legal sets only grow from here by new writes.
                st.legal_responses(p.pid).hash(h);
            }
        }
        let mut invoked = BTreeSet::new();
        for r in st.registers() {
            let k = r.latest_index();
            let pending = r.write_pending();
            (r.latest_value(), pending).hash(h);
            if pending && k > 0 {
                r.value_at(k - 1).hash(h);
            }
            invoked.extend(r.writes.iter().map(|w| w.value));
        }
        invoked.hash(h);
        st.crashes().hash(h);
        inversion.hash(h);
    };
    feed(&mut a);
    feed(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

/// Whether the prefix already has an inversion, and otherwise every
/// `(reader, register, value)` read concurrently with the write of `value`
/// while that write could still overlap a later read by the same reader.
fn inversion_summary(st: &SystemState) -> (bool, BTreeSet<(ProcessId, ProcessId, RegisterValue)>) {
    let t = st.trace();
    let mut open = BTreeSet::new();
    if find_any_new_old_inversion(&t).is_some() {
        return (true, open);
    }
    let writes = t.writes();
    for rd in t.reads() {
        let Some(v) = rd.value else {
            continue;
        };
        let Some(w) = writes.iter().find(|w| w.pid == rd.register && w.value == v) else {
            continue;
        };
        if !concurrent(&w.interval, &rd.interval) {
            continue;
        }
        let overlaps_later = match w.interval.respond {
            None => true,
            Some(done) => st
                .register(rd.register)
                .pending_reads
                .get(&rd.reader)
                .is_some_and(|&invoke| invoke < done),
        };
        if overlaps_later {
            open.insert((rd.reader, rd.register, v));
        }
    }
    (false, open)
}

fn max_register_round(st: &SystemState) -> u32 {
    st.registers().iter().map(|r| r.latest_value().round).max().unwrap_or(0)
}

struct Walker<'a> {
    cfg: &'a ExplorationConfig,
    monitors: Vec<&'static str>,
    memo: HashMap<u128, usize>,
    report: ExplorationReport,
    stop: bool,
}

impl Walker<'_> {
    fn leaf(&mut self, st: &SystemState, complete: bool) {
        self.report.executions_explored += 1;
        if complete {
            self.report.complete += 1;
        } else {
            self.report.truncated += 1;
        }
        let t = st.trace();
        let verdicts = if self.monitors.len() == MONITORS.len() {
            run_all(&t)
        } else {
            self.monitors.iter().filter_map(|m| run_named(&t, m)).collect()
        };
        for v in verdicts.into_iter().filter(|v| v.is_violation()) {
            self.report.violation_count += 1;
            if self.report.violations.len() < KEPT_TRACES {
                self.report.violations.push((v.name.to_string(), t.clone()));
            }
        }
        if let Some(goal) = &self.cfg.goal {
            if goal.holds(&t) {
                self.report.witness_count += 1;
                if self.report.witnesses.len() < KEPT_TRACES {
                    self.report.witnesses.push((goal.name().to_string(), t));
                }
                self.stop |= self.cfg.stop_at_first_witness;
            }
        }
    }

    fn visit(&mut self, st: SystemState) -> Result<()> {
        if self.stop {
            return Ok(());
        }
        self.report.nodes += 1;
        if self.report.nodes > self.cfg.node_budget {
            return Err(Error::BoundTooLarge(format!(
                "more than {} nodes; tighten max_events, round_cap or crash_budget",
                self.cfg.node_budget
            )));
        }
        let round = max_register_round(&st);
        self.report.max_round = self.report.max_round.max(round);
        if st.is_finished() {
            self.leaf(&st, true);
            return Ok(());
        }
        if st.hit_cap() || round > self.cfg.round_cap {
            self.leaf(&st, false);
            return Ok(());
        }
        if self.cfg.memo_active() {
            let depth = st.events().len();
            let key = fingerprint(&st, self.cfg.goal.as_ref());
            match self.memo.get(&key) {
                Some(&seen) if seen <= depth => {
                    self.report.memo_hits += 1;
                    return Ok(());
                }
                _ => {
                    self.memo.insert(key, depth);
                }
            }
        }
        let choices = st.enabled();
        if choices.is_empty() {
            return Err(Error::Internal("a live process with no enabled step".into()));
        }
        for choice in choices {
            let flips = match choice {
                ScheduleChoice::Local { pid } => matches!(st.process(pid).next_action(), NextAction::Flip { .. }),
                _ => false,
            };
            let coins: &[Bit] = if flips { &Bit::ALL } else { &[Bit::Zero] };
            for &c in coins {
                let mut child = st.clone();
                child.apply(choice, &mut FixedCoin(c))?;
                self.visit(child)?;
                if self.stop {
                    return Ok(());
                }
            }
        }
        Ok(())
    }
}

/// Explores every execution within the bounds of `cfg`.
pub fn explore(cfg: &ExplorationConfig) -> Result<ExplorationReport> {
    if cfg.proposals.is_empty() {
        return Err(Error::Config("exploration needs at least one process".into()));
    }
    let root = SystemState::new(cfg.system_config())?;
    let mut w = Walker {
        cfg,
        monitors: cfg.leaf_monitors(),
        memo: HashMap::new(),
        report: ExplorationReport::default(),
        stop: false,
    };
    w.visit(root)?;
    Ok(w.report)
}
