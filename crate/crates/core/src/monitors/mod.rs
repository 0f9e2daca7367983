//! Pure predicates over finished traces.
//!
//! Each monitor returns a [`Verdict`]: PASS, VIOLATION with the seq numbers
//! of the offending events, or VACUOUS when the property's premise never
//! held. Monitors read only the trace, never simulator internals, so they can
//! judge hand-written or mutated traces as well as simulated ones.
//!
//! Clauses quantified over "by some time t" are checked on every prefix in a
//! single forward scan.

mod decisions;
mod reads;
mod structure;
mod writes;

use std::fmt;

use crate::trace::{EventKind, ReadOp, Trace, TraceEvent, WriteOp};
use crate::types::Seq;

pub use reads::{find_any_new_old_inversion, find_new_old_inversion, Inversion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Pass,
    Violation,
    Vacuous,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Violation => "VIOLATION",
            Status::Vacuous => "VACUOUS",
        })
    }
}

/// A monitor result before it is attached to a monitor name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub status: Status,
    pub witness: Vec<Seq>,
    pub note: String,
}

impl Finding {
    pub fn pass() -> Finding {
        Finding {
            status: Status::Pass,
            witness: Vec::new(),
            note: String::new(),
        }
    }

    pub fn pass_with(note: impl Into<String>) -> Finding {
        Finding {
            note: note.into(),
            ..Finding::pass()
        }
    }

    pub fn vacuous(note: impl Into<String>) -> Finding {
        Finding {
            status: Status::Vacuous,
            witness: Vec::new(),
            note: note.into(),
        }
    }

    /// `witness` must name at least one event.
    pub fn violation(witness: Vec<Seq>, note: impl Into<String>) -> Finding {
        assert!(!witness.is_empty(), "a violation needs a witness event");
        Finding {
            status: Status::Violation,
            witness,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: &'static str,
    pub status: Status,
    pub witness: Vec<Seq>,
    pub note: String,
}

impl Verdict {
    pub fn new(name: &'static str, f: Finding) -> Verdict {
        Verdict {
            name,
            status: f.status,
            witness: f.witness,
            note: f.note,
        }
    }

    pub fn is_violation(&self) -> bool {
        self.status == Status::Violation
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.status)?;
        if !self.witness.is_empty() {
            let w: Vec<String> = self.witness.iter().map(Seq::to_string).collect();
            write!(f, " witness={}", w.join(","))?;
        }
        if !self.note.is_empty() {
            write!(f, " ({})", self.note)?;
        }
        Ok(())
    }
}

/// Derived views of a trace shared by all monitors.
#[derive(Debug, Clone)]
pub struct TraceIndex<'a> {
    pub trace: &'a Trace,
    /// In invocation order.
    pub writes: Vec<WriteOp>,
    /// In invocation order.
    pub reads: Vec<ReadOp>,
    pub crashed: Vec<bool>,
    pub decides: Vec<TraceEvent>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a Trace) -> TraceIndex<'a> {
        TraceIndex {
            trace,
            writes: trace.writes(),
            reads: trace.reads(),
            crashed: trace.crashed(),
            decides: trace.events_of(EventKind::Decide).copied().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.trace.n()
    }

    pub fn max_round(&self) -> u32 {
        self.writes.iter().map(|w| w.value.round).max().unwrap_or(0)
    }
}

type Check = fn(&TraceIndex<'_>) -> Finding;

macro_rules! monitors {
    ($($(#[$doc:meta])* $name:ident => $check:path,)*) => {
        /// Every monitor run by [`run_all`], in report order.
        pub const MONITORS: &[(&str, Check)] = &[$((stringify!($name), $check),)*];

        $(
            $(#[$doc])*
            pub fn $name(t: &Trace) -> Verdict {
                Verdict::new(stringify!($name), $check(&TraceIndex::new(t)))
            }
        )*
    };
}

monitors! {
    /// Events are densely numbered, operations pair up, and nothing follows
    /// a halt. A complete trace leaves every process decided or crashed.
    well_formed => structure::well_formed,
    /// Replaying each process's events through the loop's state machine
    /// reproduces every value it wrote and decided.
    protocol_conformance => structure::protocol_conformance,
    /// Written rounds are at least 1.
    write_values_in_domain => writes::values_in_domain,
    /// No process invokes the same `(x, r)` write twice.
    write_invoked_at_most_once => writes::invoked_at_most_once,
    /// No process writes both 0 and 1 at one round.
    no_conflicting_writes_per_round => writes::no_conflicting_writes,
    /// Each process's written rounds never decrease.
    rounds_monotone => writes::rounds_monotone,
    /// A process writes `(B, r)` only after invoking a value write at round r.
    pause_after_preference_invoked => writes::pause_after_invoked,
    /// A process writes `(B, r)` only after completing a value write at round r.
    pause_after_preference_completed => writes::pause_after_completed,
    /// A process's next write is at its last round plus one, or a pause at
    /// the same round after a value write.
    round_progress => writes::round_progress,
    /// If `p` writes `v` at r and then the other value at r+1, some other
    /// process wrote that other value at a round >= r before.
    switch_has_earlier_witness => writes::switch_next_round,
    /// As above for a switch to any later round.
    switch_has_earlier_witness_any_round => writes::switch_any_round,
    /// On every prefix, the rounds at which a value was written are 1..=k.
    value_rounds_contiguous => writes::value_rounds_contiguous,
    /// On every prefix, a pause at round r needs both values written at
    /// every round up to r.
    pause_requires_opposing_write => writes::pause_requires_opposition,
    /// On every prefix, once a value is missing at round r, every write at a
    /// round >= r carries the other value.
    unopposed_value_persists => writes::unopposed_value_persists,
    /// Every decided value was proposed.
    validity => decisions::validity,
    /// No two processes decide different values.
    agreement => decisions::agreement,
    /// A value decided at round r is never opposed by a write at round r.
    decided_round_unopposed => decisions::decided_round_unopposed,
    /// If nobody writes the other value at r, every correct process that
    /// writes at r+1 decides `v` at r+1.
    unopposed_round_decides => decisions::unopposed_round_decides,
    /// If every round-r coin write matches the first completed round r-1
    /// write, nobody writes the opposite value at r.
    matching_coins_block_opposition => decisions::matching_coins_block_opposition,
    /// Under the same premise, every correct process decides by round r+1.
    matching_coins_terminate => decisions::matching_coins_terminate,
    /// Every read returns a value a regular register allows.
    regular_reads => reads::regular_reads,
}

/// Runs every monitor in [`MONITORS`].
pub fn run_all(t: &Trace) -> Vec<Verdict> {
    let ix = TraceIndex::new(t);
    MONITORS
        .iter()
        .map(|(name, check)| Verdict::new(name, check(&ix)))
        .collect()
}

/// Runs the named monitor, if it exists.
pub fn run_named(t: &Trace, name: &str) -> Option<Verdict> {
    let (name, check) = MONITORS.iter().find(|(n, _)| *n == name)?;
    Some(Verdict::new(name, check(&TraceIndex::new(t))))
}

/// The two round-targeted coin monitors, restricted to premise round `r`.
pub fn coin_monitors_at(t: &Trace, r: u32) -> [Verdict; 2] {
    let ix = TraceIndex::new(t);
    [
        Verdict::new(
            "matching_coins_block_opposition",
            decisions::block_opposition_at(&ix, Some(r)),
        ),
        Verdict::new("matching_coins_terminate", decisions::terminate_at(&ix, Some(r))),
    ]
}

/// The value of the first write of `round` to complete, with its respond seq.
pub fn first_completed_write(writes: &[WriteOp], round: u32) -> Option<(Seq, WriteOp)> {
    writes
        .iter()
        .filter(|w| w.value.round == round)
        .filter_map(|w| w.interval.respond.map(|t| (t, *w)))
        .min_by_key(|(t, _)| *t)
}
