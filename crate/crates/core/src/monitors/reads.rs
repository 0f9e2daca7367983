//! Post-hoc checks of read results against regular-register semantics,
//! written independently of the simulator's online legality code.

use crate::trace::{ReadOp, Trace, WriteOp};
use crate::types::{concurrent, precedes, ProcessId, RegisterValue, Seq};

use super::{Finding, TraceIndex};

fn writes_of(writes: &[WriteOp], register: ProcessId) -> Vec<WriteOp> {
    writes.iter().filter(|w| w.pid == register).copied().collect()
}

/// Whether a completed read of a register with history `ws` (invocation
/// order) could have returned `value`.
fn regular_allows(ws: &[WriteOp], read: &ReadOp, value: RegisterValue) -> bool {
    // The owner is sequential: preceding writes form a prefix of `ws`.
    let k = ws.partition_point(|w| precedes(&w.interval, &read.interval));
    let last = if k == 0 {
        RegisterValue::INITIAL
    } else {
        ws[k - 1].value
    };
    if value == last {
        return true;
    }
    ws[k..]
        .iter()
        .take_while(|w| concurrent(&w.interval, &read.interval))
        .any(|w| w.value == value)
}

pub(super) fn regular_reads(ix: &TraceIndex<'_>) -> Finding {
    let per_register: Vec<Vec<WriteOp>> = ProcessId::all(ix.n()).map(|r| writes_of(&ix.writes, r)).collect();
    for r in &ix.reads {
        let (Some(value), Some(respond)) = (r.value, r.interval.respond) else {
            continue;
        };
        let Some(ws) = per_register.get(r.register.index()) else {
            return Finding::violation(vec![respond], "read of an unknown register");
        };
        if !regular_allows(ws, r, value) {
            return Finding::violation(
                vec![r.interval.invoke, respond],
                format!(
                    "{} read {value} from {}, which no regular register allows",
                    r.reader, r.register
                ),
            );
        }
    }
    Finding::pass()
}

/// Two reads by one process, both concurrent with one write, where the
/// earlier read sees the write's value and the later one sees the value it
/// overwrote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inversion {
    pub reader: ProcessId,
    pub register: ProcessId,
    /// Invocation seq of the write.
    pub write: Seq,
    /// Response seqs of the new-value read and the old-value read.
    pub new_read: Seq,
    pub old_read: Seq,
}

impl Inversion {
    pub fn witness(&self) -> Vec<Seq> {
        vec![self.write, self.new_read, self.old_read]
    }
}

pub fn find_new_old_inversion(t: &Trace, register: ProcessId) -> Option<Inversion> {
    let ws = writes_of(&t.writes(), register);
    let reads: Vec<ReadOp> = t
        .reads()
        .into_iter()
        .filter(|r| r.register == register && r.value.is_some() && r.interval.respond.is_some())
        .collect();
    for (i, first) in reads.iter().enumerate() {
        // Values written by one process are pairwise distinct.
        let Some(k) = ws.iter().position(|w| Some(w.value) == first.value) else {
            continue;
        };
        let w = &ws[k];
        let old = if k == 0 {
            RegisterValue::INITIAL
        } else {
            ws[k - 1].value
        };
        if !concurrent(&w.interval, &first.interval) {
            continue;
        }
        for second in &reads[i + 1..] {
            if second.reader == first.reader
                && precedes(&first.interval, &second.interval)
                && concurrent(&w.interval, &second.interval)
                && second.value == Some(old)
            {
                return Some(Inversion {
                    reader: first.reader,
                    register,
                    write: w.interval.invoke,
                    new_read: first.interval.respond?,
                    old_read: second.interval.respond?,
                });
            }
        }
    }
    None
}

pub fn find_any_new_old_inversion(t: &Trace) -> Option<Inversion> {
    ProcessId::all(t.n()).find_map(|r| find_new_old_inversion(t, r))
}
