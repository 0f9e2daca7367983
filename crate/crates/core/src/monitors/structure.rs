use crate::protocol::{init_process, ProcessState};
use crate::trace::{EventKind, Site, TraceEvent};
use crate::types::{ProcessId, RegisterValue, Seq};

use super::{Finding, TraceIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Open {
    Write(RegisterValue),
    Read(ProcessId),
}

fn site_fits(e: &TraceEvent) -> bool {
    match e.kind {
        EventKind::InvokeWrite | EventKind::RespondWrite => {
            matches!(e.site, Site::Init | Site::Adopt | Site::Pause | Site::Coin) && e.target == e.pid
        }
        EventKind::InvokeRead | EventKind::RespondRead => e.site == Site::Read,
        EventKind::Flip => e.site == Site::Coin && e.target == e.pid,
        EventKind::Decide => e.site == Site::Decide && e.target == e.pid,
        EventKind::Crash => e.site == Site::None && e.target == e.pid,
    }
}

pub(super) fn well_formed(ix: &TraceIndex<'_>) -> Finding {
    let t = ix.trace;
    let n = ix.n();
    let mut open: Vec<Option<Open>> = vec![None; n];
    let mut halted = vec![false; n];
    let mut last: Vec<Option<Seq>> = vec![None; n];
    for (i, e) in t.events.iter().enumerate() {
        let bad = |what: &str| Finding::violation(vec![e.seq], format!("event {i}: {what}"));
        if e.seq != i as Seq {
            return bad("sequence numbers are not dense");
        }
        if e.pid.index() >= n || e.target.index() >= n {
            return bad("process or register out of range");
        }
        if !site_fits(e) {
            return bad("line site does not fit the event kind");
        }
        let p = e.pid.index();
        if halted[p] {
            return bad("event after the process halted");
        }
        last[p] = Some(e.seq);
        match (e.kind, open[p]) {
            (EventKind::InvokeWrite, None) => open[p] = Some(Open::Write(e.value)),
            (EventKind::InvokeRead, None) => open[p] = Some(Open::Read(e.target)),
            (EventKind::RespondWrite, Some(Open::Write(v))) if v == e.value => open[p] = None,
            (EventKind::RespondRead, Some(Open::Read(r))) if r == e.target => open[p] = None,
            (EventKind::Flip, None) => {}
            (EventKind::Decide, None) => halted[p] = true,
            (EventKind::Crash, _) => halted[p] = true,
            _ => return bad("operation does not pair with the process's pending operation"),
        }
    }
    if !t.is_capped() {
        if let Some(p) = (0..n).find(|&p| !halted[p]) {
            let w = last[p].or(t.events.last().map(|e| e.seq)).unwrap_or(0);
            return Finding::violation(vec![w], format!("trace marked complete but p{p} never halted"));
        }
    }
    Finding::pass()
}

/// Replays each process through the consensus state machine, feeding it the
/// read results and coins recorded in the trace.
pub(super) fn protocol_conformance(ix: &TraceIndex<'_>) -> Finding {
    let t = ix.trace;
    let n = ix.n();
    let procs: Option<Vec<ProcessState>> = ProcessId::all(n)
        .zip(t.proposals())
        .map(|(pid, &b)| init_process(pid, b.into()).ok())
        .collect();
    let Some(mut procs) = procs else {
        return Finding::vacuous("proposals do not match n");
    };
    for e in &t.events {
        let Some(st) = procs.get_mut(e.pid.index()) else {
            return Finding::violation(vec![e.seq], "unknown process");
        };
        let ok = match e.kind {
            EventKind::InvokeWrite => st.on_invoke_write().is_ok_and(|got| got == (e.value, e.site)),
            EventKind::RespondWrite => st.on_write_response(n).is_ok(),
            EventKind::InvokeRead => st.on_invoke_read(e.target).is_ok(),
            EventKind::RespondRead => st.on_read_response(e.value).is_ok(),
            EventKind::Flip => match e.value.prefer.bit() {
                Some(c) => st.on_flip(c).is_ok_and(|w| w == e.value),
                None => false,
            },
            EventKind::Decide => st.on_decide().is_ok_and(|v| v == e.value),
            EventKind::Crash => {
                st.on_crash();
                true
            }
        };
        if !ok {
            return Finding::violation(
                vec![e.seq],
                format!("{} {} does not follow from its earlier steps", e.pid, e.kind.token()),
            );
        }
    }
    Finding::pass()
}
