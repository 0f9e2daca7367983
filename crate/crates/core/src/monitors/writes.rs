//! Monitors over the sequence of write invocations.

use std::collections::HashMap;

use crate::trace::WriteOp;
use crate::types::{Bit, Prefer, ProcessId, RegisterValue, Seq};

use super::{Finding, TraceIndex};

pub(super) fn values_in_domain(ix: &TraceIndex<'_>) -> Finding {
    match ix.writes.iter().find(|w| w.value.round == 0) {
        Some(w) => Finding::violation(
            vec![w.interval.invoke],
            format!("{} wrote {} at round 0", w.pid, w.value),
        ),
        None => Finding::pass(),
    }
}

pub(super) fn invoked_at_most_once(ix: &TraceIndex<'_>) -> Finding {
    let mut seen: HashMap<(ProcessId, RegisterValue), Seq> = HashMap::new();
    for w in &ix.writes {
        if let Some(&first) = seen.get(&(w.pid, w.value)) {
            return Finding::violation(
                vec![first, w.interval.invoke],
                format!("{} wrote {} twice", w.pid, w.value),
            );
        }
        seen.insert((w.pid, w.value), w.interval.invoke);
    }
    Finding::pass()
}

pub(super) fn no_conflicting_writes(ix: &TraceIndex<'_>) -> Finding {
    let mut seen: HashMap<(ProcessId, u32, Bit), Seq> = HashMap::new();
    for w in &ix.writes {
        let Some(b) = w.value.prefer.bit() else {
            continue;
        };
        if let Some(&other) = seen.get(&(w.pid, w.value.round, b.complement())) {
            return Finding::violation(
                vec![other, w.interval.invoke],
                format!("{} wrote both values at round {}", w.pid, w.value.round),
            );
        }
        seen.insert((w.pid, w.value.round, b), w.interval.invoke);
    }
    Finding::pass()
}

pub(super) fn rounds_monotone(ix: &TraceIndex<'_>) -> Finding {
    let mut last: Vec<Option<&WriteOp>> = vec![None; ix.n()];
    for w in &ix.writes {
        if let Some(prev) = last[w.pid.index()] {
            if w.value.round < prev.value.round {
                return Finding::violation(
                    vec![prev.interval.invoke, w.interval.invoke],
                    format!(
                        "{} went from round {} back to {}",
                        w.pid, prev.value.round, w.value.round
                    ),
                );
            }
        }
        last[w.pid.index()] = Some(w);
    }
    Finding::pass()
}

/// Pause writes whose process has no earlier value write at the same round
/// satisfying `counts`.
fn pause_needs(ix: &TraceIndex<'_>, counts: impl Fn(&WriteOp, &WriteOp) -> bool, what: &str) -> Finding {
    for (i, w) in ix.writes.iter().enumerate() {
        if !w.value.prefer.is_bot() {
            continue;
        }
        let ok = ix.writes[..i]
            .iter()
            .any(|e| e.pid == w.pid && e.value.round == w.value.round && !e.value.prefer.is_bot() && counts(e, w));
        if !ok {
            return Finding::violation(
                vec![w.interval.invoke],
                format!(
                    "{} paused at round {} without {what} a value write there",
                    w.pid, w.value.round
                ),
            );
        }
    }
    Finding::pass()
}

pub(super) fn pause_after_invoked(ix: &TraceIndex<'_>) -> Finding {
    pause_needs(ix, |_, _| true, "invoking")
}

pub(super) fn pause_after_completed(ix: &TraceIndex<'_>) -> Finding {
    pause_needs(
        ix,
        |e, w| e.interval.respond.is_some_and(|t| t < w.interval.invoke),
        "completing",
    )
}

pub(super) fn round_progress(ix: &TraceIndex<'_>) -> Finding {
    let mut last: Vec<Option<&WriteOp>> = vec![None; ix.n()];
    for w in &ix.writes {
        let (p, r) = (w.value.prefer, w.value.round);
        let ok = match last[w.pid.index()] {
            None => r == 1 && !p.is_bot(),
            Some(prev) if prev.value.prefer.is_bot() => r == prev.value.round + 1 && !p.is_bot(),
            Some(prev) => (p.is_bot() && r == prev.value.round) || (!p.is_bot() && r == prev.value.round + 1),
        };
        if !ok {
            let mut witness: Vec<Seq> = last[w.pid.index()].map(|e| e.interval.invoke).into_iter().collect();
            witness.push(w.interval.invoke);
            return Finding::violation(witness, format!("{} jumped to {}", w.pid, w.value));
        }
        last[w.pid.index()] = Some(w);
    }
    Finding::pass()
}

/// Shared scan for the two "switch" monitors. For every write `b` of value
/// `u` by `p`, `premise` picks from `p`'s earlier writes of the other value
/// the round that must be matched; some `q != p` must already have written
/// `u` at that round or later.
fn switch_witness(ix: &TraceIndex<'_>, premise: impl Fn(&[(u32, Seq)], u32) -> Option<(u32, Seq)>) -> Finding {
    let n = ix.n();
    // max_round[u][q]: highest round at which q has invoked a write of u.
    let mut max_round = [vec![0u32; n], vec![0u32; n]];
    // hist[p][u]: p's (round, seq) writes of u so far.
    let mut hist: Vec<[Vec<(u32, Seq)>; 2]> = vec![[Vec::new(), Vec::new()]; n];
    let mut instances = 0usize;
    for w in &ix.writes {
        let Some(u) = w.value.prefer.bit() else {
            continue;
        };
        let (p, r) = (w.pid.index(), w.value.round);
        let other = u.complement().as_u8() as usize;
        if let Some((need, from)) = premise(&hist[p][other], r) {
            instances += 1;
            let ok = (0..n).any(|q| q != p && max_round[u.as_u8() as usize][q] >= need.max(1));
            if !ok {
                return Finding::violation(
                    vec![from, w.interval.invoke],
                    format!(
                        "{} switched to {} at round {r} with no other process writing it at round >= {need}",
                        w.pid, u
                    ),
                );
            }
        }
        let slot = &mut max_round[u.as_u8() as usize][p];
        *slot = (*slot).max(r);
        hist[p][u.as_u8() as usize].push((r, w.interval.invoke));
    }
    if instances == 0 {
        Finding::vacuous("no process switched values")
    } else {
        Finding::pass_with(format!("{instances} switches"))
    }
}

pub(super) fn switch_next_round(ix: &TraceIndex<'_>) -> Finding {
    switch_witness(ix, |earlier, r| earlier.iter().copied().find(|&(ra, _)| ra + 1 == r))
}

pub(super) fn switch_any_round(ix: &TraceIndex<'_>) -> Finding {
    // The largest earlier round is the hardest premise; smaller ones follow.
    switch_witness(ix, |earlier, r| {
        earlier
            .iter()
            .copied()
            .filter(|&(ra, _)| ra < r)
            .max_by_key(|&(ra, _)| ra)
    })
}

/// Rounds at which each value has been invoked, scanned forward.
struct RoundsSeen {
    present: [Vec<bool>; 2],
    /// Largest k with rounds 1..=k all present.
    contiguous: [u32; 2],
}

impl RoundsSeen {
    fn new() -> RoundsSeen {
        RoundsSeen {
            present: [vec![false], vec![false]],
            contiguous: [0, 0],
        }
    }

    fn insert(&mut self, value: RegisterValue) {
        let Some(b) = value.prefer.bit() else {
            return;
        };
        let u = b.as_u8() as usize;
        let r = value.round as usize;
        if self.present[u].len() <= r {
            self.present[u].resize(r + 1, false);
        }
        self.present[u][r] = true;
        while self.present[u].get(self.contiguous[u] as usize + 1) == Some(&true) {
            self.contiguous[u] += 1;
        }
    }

    /// Whether value `u` has been written at every round 1..=r.
    fn covers(&self, u: Bit, r: u32) -> bool {
        self.contiguous[u.as_u8() as usize] >= r
    }
}

pub(super) fn value_rounds_contiguous(ix: &TraceIndex<'_>) -> Finding {
    let mut seen = RoundsSeen::new();
    for w in &ix.writes {
        seen.insert(w.value);
        if let Some(u) = w.value.prefer.bit() {
            if !seen.covers(u, w.value.round) {
                return Finding::violation(
                    vec![w.interval.invoke],
                    format!("{} written at round {} before some lower round", u, w.value.round),
                );
            }
        }
    }
    Finding::pass()
}

pub(super) fn pause_requires_opposition(ix: &TraceIndex<'_>) -> Finding {
    let mut seen = RoundsSeen::new();
    for w in &ix.writes {
        seen.insert(w.value);
        if w.value.prefer.is_bot() {
            if let Some(u) = Bit::ALL.into_iter().find(|&u| !seen.covers(u, w.value.round)) {
                return Finding::violation(
                    vec![w.interval.invoke],
                    format!(
                        "{} paused at round {} while {u} is missing at some round",
                        w.pid, w.value.round
                    ),
                );
            }
        }
    }
    Finding::pass()
}

pub(super) fn unopposed_value_persists(ix: &TraceIndex<'_>) -> Finding {
    let mut seen = RoundsSeen::new();
    for w in &ix.writes {
        seen.insert(w.value);
        for missing in Bit::ALL {
            if !seen.covers(missing, w.value.round) && w.value.prefer != Prefer::Val(missing.complement()) {
                return Finding::violation(
                    vec![w.interval.invoke],
                    format!(
                        "{} wrote {} although {missing} is missing at some round <= {}",
                        w.pid, w.value, w.value.round
                    ),
                );
            }
        }
    }
    Finding::pass()
}
