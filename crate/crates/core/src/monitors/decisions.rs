//! Monitors about decisions, and the conditional progress properties keyed
//! to coin flips.

use std::collections::HashMap;

use crate::trace::{Site, TraceEvent};
use crate::types::{Bit, Prefer, RegisterValue, Seq};

use super::{first_completed_write, Finding, TraceIndex};

pub(super) fn validity(ix: &TraceIndex<'_>) -> Finding {
    if ix.decides.is_empty() {
        return Finding::pass_with("vacuous: no decisions");
    }
    let proposed = |b: Bit| ix.trace.proposals().contains(&b);
    for d in &ix.decides {
        match d.value.prefer {
            Prefer::Val(b) if proposed(b) => {}
            _ => {
                return Finding::violation(
                    vec![d.seq],
                    format!("{} decided {} which nobody proposed", d.pid, d.value.prefer),
                )
            }
        }
    }
    Finding::pass()
}

pub(super) fn agreement(ix: &TraceIndex<'_>) -> Finding {
    let mut first: HashMap<Prefer, Seq> = HashMap::new();
    for d in &ix.decides {
        first.entry(d.value.prefer).or_insert(d.seq);
    }
    if first.len() > 1 {
        let mut w: Vec<Seq> = first.values().copied().collect();
        w.sort_unstable();
        return Finding::violation(w, "different values decided");
    }
    Finding::pass()
}

/// First invocation seq of each written value.
fn first_invokes(ix: &TraceIndex<'_>) -> HashMap<RegisterValue, Seq> {
    let mut out = HashMap::new();
    for w in &ix.writes {
        out.entry(w.value).or_insert(w.interval.invoke);
    }
    out
}

pub(super) fn decided_round_unopposed(ix: &TraceIndex<'_>) -> Finding {
    if ix.decides.is_empty() {
        return Finding::vacuous("no decisions");
    }
    let invoked = first_invokes(ix);
    for d in &ix.decides {
        let Ok(opp) = d.value.prefer.complement() else {
            continue;
        };
        if let Some(&s) = invoked.get(&RegisterValue {
            prefer: opp,
            round: d.value.round,
        }) {
            return Finding::violation(
                vec![s, d.seq],
                format!("{} decided {} but {opp} was written at that round", d.pid, d.value),
            );
        }
    }
    Finding::pass()
}

fn decisions_by_pid(ix: &TraceIndex<'_>) -> Vec<Option<TraceEvent>> {
    let mut out = vec![None; ix.n()];
    for d in &ix.decides {
        if let Some(slot) = out.get_mut(d.pid.index()) {
            slot.get_or_insert(*d);
        }
    }
    out
}

pub(super) fn unopposed_round_decides(ix: &TraceIndex<'_>) -> Finding {
    if ix.trace.is_capped() {
        return Finding::vacuous("trace hit its event cap");
    }
    let invoked = first_invokes(ix);
    let decided = decisions_by_pid(ix);
    let mut instances = 0usize;
    for r in 1..=ix.max_round() {
        for v in Bit::ALL {
            if invoked.contains_key(&RegisterValue::of(v.complement(), r)) {
                continue;
            }
            let next: Vec<_> = ix.writes.iter().filter(|w| w.value.round == r + 1).collect();
            if next.is_empty() {
                continue;
            }
            instances += 1;
            for w in next {
                if ix.crashed[w.pid.index()] {
                    continue;
                }
                let want = RegisterValue::of(v, r + 1);
                match decided[w.pid.index()] {
                    Some(d) if d.value == want => {}
                    Some(d) => {
                        return Finding::violation(
                            vec![w.interval.invoke, d.seq],
                            format!("{} decided {} instead of {want}", w.pid, d.value),
                        )
                    }
                    None => {
                        return Finding::violation(
                            vec![w.interval.invoke],
                            format!("{} reached round {} but never decided {want}", w.pid, r + 1),
                        )
                    }
                }
            }
        }
    }
    if instances == 0 {
        Finding::vacuous("every round saw both values")
    } else {
        Finding::pass_with(format!("{instances} unopposed rounds"))
    }
}

/// Rounds `r >= 2` whose coin premise holds: some round r-1 write completed,
/// the first to do so carries `v`, and every coin write at round r carries
/// `v`. Yields `(r, v, respond seq of that first write)`; a pause value in
/// first place is reported as an error with its seq.
fn coin_premises(ix: &TraceIndex<'_>, only: Option<u32>) -> std::result::Result<Vec<(u32, Bit, Seq)>, Seq> {
    let mut out = Vec::new();
    let top = ix.max_round() + 1;
    for r in 2..=top {
        if only.is_some_and(|o| o != r) {
            continue;
        }
        let Some((seq, first)) = first_completed_write(&ix.writes, r - 1) else {
            continue;
        };
        let Some(v) = first.value.prefer.bit() else {
            return Err(seq);
        };
        let coins_match = ix
            .writes
            .iter()
            .filter(|w| w.site == Site::Coin && w.value.round == r)
            .all(|w| w.value.prefer == Prefer::Val(v));
        if coins_match {
            out.push((r, v, seq));
        }
    }
    Ok(out)
}

fn pause_first(seq: Seq) -> Finding {
    Finding::violation(vec![seq], "the first write of a round to complete is a pause")
}

pub(super) fn block_opposition_at(ix: &TraceIndex<'_>, only: Option<u32>) -> Finding {
    let premises = match coin_premises(ix, only) {
        Ok(p) => p,
        Err(seq) => return pause_first(seq),
    };
    if premises.is_empty() {
        return Finding::vacuous("no round where every coin matched the first completed value");
    }
    let invoked = first_invokes(ix);
    for &(r, v, first) in &premises {
        if let Some(&s) = invoked.get(&RegisterValue::of(v.complement(), r)) {
            return Finding::violation(
                vec![first, s],
                format!("coins at round {r} all matched {v}, yet {} was written", v.complement()),
            );
        }
    }
    Finding::pass_with(format!("{} matching rounds", premises.len()))
}

pub(super) fn terminate_at(ix: &TraceIndex<'_>, only: Option<u32>) -> Finding {
    let premises = match coin_premises(ix, only) {
        Ok(p) => p,
        Err(seq) => return pause_first(seq),
    };
    if premises.is_empty() {
        return Finding::vacuous("no round where every coin matched the first completed value");
    }
    if ix.trace.is_capped() {
        return Finding::vacuous("trace hit its event cap");
    }
    let decided = decisions_by_pid(ix);
    for &(r, _, first) in &premises {
        for (p, d) in decided.iter().enumerate() {
            if ix.crashed[p] {
                continue;
            }
            match d {
                Some(d) if d.value.round <= r + 1 => {}
                Some(d) => {
                    return Finding::violation(
                        vec![first, d.seq],
                        format!(
                            "coins matched at round {r} but {} decided at round {}",
                            d.pid, d.value.round
                        ),
                    )
                }
                None => {
                    return Finding::violation(
                        vec![first],
                        format!("coins matched at round {r} but p{p} never decided"),
                    )
                }
            }
        }
    }
    Finding::pass_with(format!("{} matching rounds", premises.len()))
}

pub(super) fn matching_coins_block_opposition(ix: &TraceIndex<'_>) -> Finding {
    block_opposition_at(ix, None)
}

pub(super) fn matching_coins_terminate(ix: &TraceIndex<'_>) -> Finding {
    terminate_at(ix, None)
}
