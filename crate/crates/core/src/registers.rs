//! Operational models of single-writer multi-reader registers.
//!
//! A register keeps its owner's write history. Write index 0 stands for the
//! initial value `(B, 0)`; index `k >= 1` is the owner's k-th write.
//!
//! * regular: a read may return the last write that precedes it (or the
//!   initial value when none does) or any write concurrent with it. The
//!   adversary picks which.
//! * atomic: reads and writes are instantaneous, a read returns the latest
//!   write.
//! * linearizable: reads must fit some sequential order consistent with real
//!   time. The order in which writes are *committed* to that order is chosen
//!   lazily by the adversary (see [`Linearizer`]).

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::types::{OpInterval, ProcessId, RegisterModel, RegisterValue, Seq};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WriteRecord {
    pub value: RegisterValue,
    pub interval: OpInterval,
    /// 1-based position in the owner's program order.
    pub writer_seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterState {
    pub owner: ProcessId,
    pub initial: RegisterValue,
    pub writes: Vec<WriteRecord>,
    /// Reader -> invocation index of its pending read.
    pub pending_reads: BTreeMap<ProcessId, Seq>,
}

impl RegisterState {
    pub fn new(owner: ProcessId) -> RegisterState {
        RegisterState {
            owner,
            initial: RegisterValue::INITIAL,
            writes: Vec::new(),
            pending_reads: BTreeMap::new(),
        }
    }

    /// Value of write `index` (0 = initial).
    pub fn value_at(&self, index: usize) -> RegisterValue {
        if index == 0 {
            self.initial
        } else {
            self.writes[index - 1].value
        }
    }

    /// Index of the most recently invoked write (0 if none).
    pub fn latest_index(&self) -> usize {
        self.writes.len()
    }

    pub fn latest_value(&self) -> RegisterValue {
        self.value_at(self.latest_index())
    }

    pub fn write_pending(&self) -> bool {
        self.writes.last().is_some_and(|w| w.interval.respond.is_none())
    }

    /// Index of the write holding `value`, if any. Values written by one
    /// process are pairwise distinct, so the lookup is unambiguous.
    pub fn index_of(&self, value: RegisterValue) -> Option<usize> {
        if value == self.initial {
            return Some(0);
        }
        self.writes.iter().position(|w| w.value == value).map(|i| i + 1)
    }

    pub fn invoke_write(&mut self, value: RegisterValue, now: Seq) -> Result<usize> {
        if self.write_pending() {
            return Err(Error::Internal(format!(
                "{} invoked a write while another is pending",
                self.owner
            )));
        }
        let writer_seq = self.writes.len() + 1;
        self.writes.push(WriteRecord {
            value,
            interval: OpInterval::pending(now),
            writer_seq,
        });
        Ok(writer_seq)
    }

    pub fn respond_write(&mut self, now: Seq) -> Result<usize> {
        match self.writes.last_mut() {
            Some(w) if w.interval.respond.is_none() => {
                w.interval.respond = Some(now);
                Ok(w.writer_seq)
            }
            _ => Err(Error::Internal(format!("{} has no pending write", self.owner))),
        }
    }

    pub fn invoke_read(&mut self, reader: ProcessId, now: Seq) -> Result<()> {
        if self.pending_reads.insert(reader, now).is_some() {
            return Err(Error::Internal(format!(
                "{reader} already has a pending read on {}",
                self.owner
            )));
        }
        Ok(())
    }

    /// Write indices a regular read invoked at `invoke` may return if it
    /// responds at `now`, ascending.
    pub fn legal_read_indices(&self, invoke: Seq, now: Seq) -> Vec<usize> {
        let read = OpInterval::complete(invoke, now);
        // The owner is sequential, so the preceding writes form a prefix.
        let last_preceding = self
            .writes
            .iter()
            .take_while(|w| crate::types::precedes(&w.interval, &read))
            .count();
        let mut out = vec![last_preceding];
        out.extend(
            self.writes
                .iter()
                .enumerate()
                .skip(last_preceding)
                .filter(|(_, w)| w.interval.invoke < now)
                .map(|(i, _)| i + 1),
        );
        out
    }
}

/// Values a regular read spanning `read` (response fixed at `read.respond`)
/// may return: the last preceding write or the initial value when no write
/// precedes, plus every concurrent write.
pub fn legal_read_values(state: &RegisterState, read: OpInterval) -> Result<BTreeSet<RegisterValue>> {
    let now = read
        .respond
        .ok_or_else(|| Error::Internal("read legality needs a response index".into()))?;
    for pair in state.writes.windows(2) {
        match pair[0].interval.respond {
            Some(r) if r < pair[1].interval.invoke => {}
            _ => {
                return Err(Error::Internal(format!(
                    "overlapping writes on single-writer register {}",
                    state.owner
                )))
            }
        }
    }
    Ok(state
        .legal_read_indices(read.invoke, now)
        .into_iter()
        .map(|i| state.value_at(i))
        .collect())
}

/// Completes `reader`'s pending read on `state` at time `now`.
///
/// `lin` must be the system's linearizer when `model` is linearizable.
pub fn respond_read(
    state: &mut RegisterState,
    reader: ProcessId,
    choice: RegisterValue,
    model: RegisterModel,
    lin: Option<&mut Linearizer>,
    now: Seq,
) -> Result<RegisterValue> {
    let invoke = *state
        .pending_reads
        .get(&reader)
        .ok_or_else(|| Error::Internal(format!("{reader} has no pending read on {}", state.owner)))?;
    let illegal = || Error::IllegalChoice {
        reader,
        register: state.owner,
        choice,
    };
    let value = match model {
        RegisterModel::Atomic => state.latest_value(),
        RegisterModel::Regular => {
            let legal = state.legal_read_indices(invoke, now);
            match state.index_of(choice) {
                Some(i) if legal.contains(&i) => choice,
                _ => return Err(illegal()),
            }
        }
        RegisterModel::Linearizable => {
            let lin = lin.ok_or_else(|| Error::Internal("linearizable model without linearizer".into()))?;
            let legal = state.legal_read_indices(invoke, now);
            let idx = match state.index_of(choice) {
                Some(i) if legal.contains(&i) => i,
                _ => return Err(illegal()),
            };
            if !lin.read_feasible(state.owner, invoke, now, idx) {
                return Err(illegal());
            }
            lin.add_read(state.owner, invoke, now, idx);
            choice
        }
    };
    state.pending_reads.remove(&reader);
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum LinKind {
    /// The register's `index`-th write (1-based).
    Write(usize),
    /// A completed read that returned write `index` (0 = initial value).
    Read(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct LinOp {
    register: ProcessId,
    kind: LinKind,
    interval: OpInterval,
}

/// Tracks a global linearization for the linearizable register model.
///
/// Writes enter a committed prefix in the order the adversary chooses; reads
/// are never committed explicitly but constrain which orders remain possible.
/// Every action is accepted only if the constraint graph (real-time
/// precedence, per-register write order, read-from edges, the committed
/// chain, and "committed before uncommitted") stays acyclic, i.e. some
/// linearization of the whole history still agrees with the commitments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Linearizer {
    ops: Vec<LinOp>,
    /// Per register, op ids of its writes in program order.
    writes: Vec<Vec<usize>>,
    committed: Vec<usize>,
    is_committed: Vec<bool>,
}

impl Linearizer {
    pub fn new(n: usize) -> Linearizer {
        Linearizer {
            writes: vec![Vec::new(); n],
            ..Default::default()
        }
    }

    pub fn add_write(&mut self, register: ProcessId, index: usize, invoke: Seq) {
        let id = self.ops.len();
        self.ops.push(LinOp {
            register,
            kind: LinKind::Write(index),
            interval: OpInterval::pending(invoke),
        });
        self.is_committed.push(false);
        self.writes[register.index()].push(id);
    }

    pub fn complete_write(&mut self, register: ProcessId, index: usize, respond: Seq) -> Result<()> {
        let id = self.write_id(register, index)?;
        self.ops[id].interval.respond = Some(respond);
        Ok(())
    }

    fn add_read(&mut self, register: ProcessId, invoke: Seq, respond: Seq, returned: usize) {
        self.ops.push(LinOp {
            register,
            kind: LinKind::Read(returned),
            interval: OpInterval::complete(invoke, respond),
        });
        self.is_committed.push(false);
    }

    fn write_id(&self, register: ProcessId, index: usize) -> Result<usize> {
        index
            .checked_sub(1)
            .and_then(|i| self.writes.get(register.index())?.get(i).copied())
            .ok_or_else(|| Error::OrderViolation(format!("{register} has no write #{index}")))
    }

    /// Whether a read of `register` spanning `[invoke, now]` could return
    /// write `index` without ruling out every linearization.
    pub fn read_feasible(&self, register: ProcessId, invoke: Seq, now: Seq, index: usize) -> bool {
        let extra = LinOp {
            register,
            kind: LinKind::Read(index),
            interval: OpInterval::complete(invoke, now),
        };
        self.acyclic(Some(extra), None)
    }

    /// Appends write `index` of `register` to the committed order.
    pub fn commit(&mut self, register: ProcessId, index: usize) -> Result<()> {
        let id = self.write_id(register, index)?;
        if self.is_committed[id] {
            return Err(Error::OrderViolation(format!(
                "write #{index} of {register} is already committed"
            )));
        }
        if !self.acyclic(None, Some(id)) {
            return Err(Error::OrderViolation(format!(
                "committing write #{index} of {register} contradicts real-time order or earlier reads"
            )));
        }
        self.committed.push(id);
        self.is_committed[id] = true;
        Ok(())
    }

    pub fn can_commit(&self, register: ProcessId, index: usize) -> bool {
        match self.write_id(register, index) {
            Ok(id) => !self.is_committed[id] && self.acyclic(None, Some(id)),
            Err(_) => false,
        }
    }

    /// Uncommitted invoked writes as `(register, index)`, in invocation order.
    pub fn uncommitted_writes(&self) -> Vec<(ProcessId, usize)> {
        let mut out: Vec<(Seq, ProcessId, usize)> = self
            .ops
            .iter()
            .enumerate()
            .filter(|(id, _)| !self.is_committed[*id])
            .filter_map(|(_, op)| match op.kind {
                LinKind::Write(k) => Some((op.interval.invoke, op.register, k)),
                LinKind::Read(_) => None,
            })
            .collect();
        out.sort();
        out.into_iter().map(|(_, r, k)| (r, k)).collect()
    }

    /// Committed writes as `(register, index)`, first-linearized first.
    pub fn committed_order(&self) -> Vec<(ProcessId, usize)> {
        self.committed
            .iter()
            .map(|&id| match self.ops[id].kind {
                LinKind::Write(k) => (self.ops[id].register, k),
                LinKind::Read(_) => unreachable!("reads are never committed"),
            })
            .collect()
    }

    fn acyclic(&self, extra: Option<LinOp>, commit_next: Option<usize>) -> bool {
        let mut ops: Vec<LinOp> = self.ops.clone();
        if let Some(e) = extra {
            ops.push(e);
        }
        let n_ops = ops.len();

        let mut times: Vec<Seq> = ops
            .iter()
            .flat_map(|op| std::iter::once(op.interval.invoke).chain(op.interval.respond))
            .collect();
        times.sort_unstable();
        times.dedup();
        let n_nodes = n_ops + times.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        let tnode = |t: Seq| n_ops + times.binary_search(&t).expect("time was collected");

        // Real time: a -> T(resp a) -> ... -> T(latest time before inv b) -> b.
        for i in 0..times.len().saturating_sub(1) {
            adj[n_ops + i].push(n_ops + i + 1);
        }
        for (id, op) in ops.iter().enumerate() {
            if let Some(r) = op.interval.respond {
                adj[id].push(tnode(r));
            }
            let pos = times.partition_point(|&t| t < op.interval.invoke);
            if pos > 0 {
                adj[n_ops + pos - 1].push(id);
            }
        }
        // Per-register write order and read-from edges.
        for list in &self.writes {
            for w in list.windows(2) {
                adj[w[0]].push(w[1]);
            }
        }
        for (id, op) in ops.iter().enumerate() {
            if let LinKind::Read(k) = op.kind {
                let list = &self.writes[op.register.index()];
                if k >= 1 {
                    match list.get(k - 1) {
                        Some(&w) => adj[w].push(id),
                        None => return false,
                    }
                }
                if let Some(&next) = list.get(k) {
                    adj[id].push(next);
                }
            }
        }
        // Committed writes form a prefix of the write order.
        let mut chain: Vec<usize> = self.committed.clone();
        chain.extend(commit_next);
        for c in chain.windows(2) {
            adj[c[0]].push(c[1]);
        }
        if let Some(&last) = chain.last() {
            for (id, op) in ops.iter().enumerate() {
                if matches!(op.kind, LinKind::Write(_)) && !chain.contains(&id) {
                    adj[last].push(id);
                }
            }
        }

        let mut indeg = vec![0usize; n_nodes];
        for outs in &adj {
            for &v in outs {
                indeg[v] += 1;
            }
        }
        let mut stack: Vec<usize> = (0..n_nodes).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = stack.pop() {
            seen += 1;
            for &v in &adj[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    stack.push(v);
                }
            }
        }
        seen == n_nodes
    }
}
