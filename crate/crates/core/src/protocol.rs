//! The per-process consensus state machine, split into register-operation
//! granularity so an adversary can interleave at every invocation and
//! response.
//!
//! Loop body, for a process holding `(x, r)` in its own register after
//! reading everyone:
//!
//! 1. leader, and everyone who disagrees trails by at least 2 rounds: decide `x`;
//! 2. else all leaders agree on some `v*`: write `(v*, r+1)`;
//! 3. else `x` is a value: write `(B, r)`;
//! 4. else write `(coin, r+1)`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::trace::Site;
use crate::types::{Bit, Prefer, ProcessId, RegisterValue};

/// Values read from every register during one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct View {
    slots: Vec<Option<RegisterValue>>,
}

impl View {
    pub fn empty(n: usize) -> View {
        View { slots: vec![None; n] }
    }

    pub fn from_values(values: impl IntoIterator<Item = RegisterValue>) -> View {
        View {
            slots: values.into_iter().map(Some).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, pid: ProcessId) -> Option<RegisterValue> {
        self.slots.get(pid.index()).copied().flatten()
    }

    pub fn set(&mut self, pid: ProcessId, value: RegisterValue) {
        self.slots[pid.index()] = Some(value);
    }

    pub fn is_read(&self, pid: ProcessId) -> bool {
        self.get(pid).is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn unread(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| ProcessId(i as u32))
    }

    fn complete_values(&self) -> Option<Vec<RegisterValue>> {
        self.slots.iter().copied().collect()
    }
}

/// Where a process is in the loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pc {
    /// About to write (or writing) `value`. `Site::Init` for the first write.
    Write {
        value: RegisterValue,
        site: Site,
    },
    /// Reading every register; `view` fills up as reads respond.
    ReadAll {
        view: View,
    },
    /// Evaluated to "decide": the DECIDE step is next.
    Deciding {
        value: RegisterValue,
    },
    /// Evaluated to "flip": the FLIP step for a write at `round` is next.
    Flipping {
        round: u32,
    },
    Decided {
        value: RegisterValue,
    },
    Crashed,
}

/// The register operation a process has invoked and not yet seen respond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PendingOp {
    Write,
    Read { target: ProcessId },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcessState {
    pub pid: ProcessId,
    pub proposal: Bit,
    pub pc: Pc,
    pub pending: Option<PendingOp>,
    /// `(x, r)` captured from the process's own register in the last view.
    pub captured: Option<RegisterValue>,
    /// Number of loop iterations entered.
    pub iteration: u32,
}

/// What [`evaluate`] concluded from a complete view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Decide(RegisterValue),
    Write(RegisterValue, Site),
    Flip { round: u32 },
}

/// What a process would do next if scheduled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextAction {
    InvokeWrite(RegisterValue, Site),
    /// Any of these registers may be read next.
    InvokeRead(Vec<ProcessId>),
    AwaitResponse(PendingOp),
    Decide(RegisterValue),
    Flip {
        round: u32,
    },
    Halted,
}

pub fn init_process(pid: ProcessId, proposal: Prefer) -> Result<ProcessState> {
    let bit = proposal
        .bit()
        .ok_or_else(|| Error::Domain(format!("{pid} cannot propose the pause marker")))?;
    Ok(ProcessState {
        pid,
        proposal: bit,
        pc: Pc::Write {
            value: RegisterValue::of(bit, 1),
            site: Site::Init,
        },
        pending: None,
        captured: None,
        iteration: 0,
    })
}

/// Processes whose round is maximal in the view.
pub fn leaders(view: &View) -> BTreeSet<ProcessId> {
    let Some(max) = view.slots.iter().flatten().map(|v| v.round).max() else {
        return BTreeSet::new();
    };
    ProcessId::all(view.n())
        .filter(|&p| view.get(p).is_some_and(|v| v.round == max))
        .collect()
}

/// The value every leader prefers, if they all prefer the same non-pause value.
pub fn leaders_agree(view: &View) -> Option<Bit> {
    let mut agreed: Option<Bit> = None;
    for p in leaders(view) {
        let b = view.get(p)?.prefer.bit()?;
        match agreed {
            None => agreed = Some(b),
            Some(a) if a != b => return None,
            _ => {}
        }
    }
    agreed
}

/// Decides the next step of `state` from its complete `view`.
pub fn evaluate(state: &ProcessState, view: &View) -> Result<Outcome> {
    let values = view.complete_values().ok_or(Error::MalformedView(state.pid))?;
    let own = values
        .get(state.pid.index())
        .copied()
        .ok_or(Error::MalformedView(state.pid))?;
    let (x, r) = (own.prefer, own.round);

    if let Prefer::Val(xb) = x {
        let is_leader = values.iter().all(|v| r >= v.round);
        // Pause markers never agree, so a paused process counts as disagreeing.
        let disagreers_trail = values
            .iter()
            .filter(|v| v.prefer != Prefer::Val(xb))
            .all(|v| r >= v.round + 2);
        if is_leader && disagreers_trail {
            return Ok(Outcome::Decide(own));
        }
    }
    if let Some(v) = leaders_agree(view) {
        return Ok(Outcome::Write(RegisterValue::of(v, r + 1), Site::Adopt));
    }
    if !x.is_bot() {
        return Ok(Outcome::Write(RegisterValue::bot(r), Site::Pause));
    }
    Ok(Outcome::Flip { round: r + 1 })
}

/// First register in `order` not yet read, or `None` once the view is complete.
pub fn next_pending_read_target(state: &ProcessState, order: &[ProcessId]) -> Option<ProcessId> {
    match &state.pc {
        Pc::ReadAll { view } => order.iter().copied().find(|&p| !view.is_read(p)),
        _ => None,
    }
}

impl ProcessState {
    pub fn is_live(&self) -> bool {
        !matches!(self.pc, Pc::Decided { .. } | Pc::Crashed)
    }

    pub fn next_action(&self) -> NextAction {
        if let Some(op) = self.pending {
            return NextAction::AwaitResponse(op);
        }
        match &self.pc {
            Pc::Write { value, site } => NextAction::InvokeWrite(*value, *site),
            Pc::ReadAll { view } => NextAction::InvokeRead(view.unread().collect()),
            Pc::Deciding { value } => NextAction::Decide(*value),
            Pc::Flipping { round } => NextAction::Flip { round: *round },
            Pc::Decided { .. } | Pc::Crashed => NextAction::Halted,
        }
    }

    pub fn on_invoke_write(&mut self) -> Result<(RegisterValue, Site)> {
        match (&self.pc, self.pending) {
            (Pc::Write { value, site }, None) => {
                let out = (*value, *site);
                self.pending = Some(PendingOp::Write);
                Ok(out)
            }
            _ => Err(self.bad_step("invoke a write")),
        }
    }

    /// A completed write starts the next loop iteration.
    pub fn on_write_response(&mut self, n: usize) -> Result<()> {
        match (&self.pc, self.pending) {
            (Pc::Write { .. }, Some(PendingOp::Write)) => {
                self.pending = None;
                self.iteration += 1;
                self.pc = Pc::ReadAll { view: View::empty(n) };
                Ok(())
            }
            _ => Err(self.bad_step("complete a write")),
        }
    }

    pub fn on_invoke_read(&mut self, target: ProcessId) -> Result<()> {
        match (&self.pc, self.pending) {
            (Pc::ReadAll { view }, None) if target.index() < view.n() && !view.is_read(target) => {
                self.pending = Some(PendingOp::Read { target });
                Ok(())
            }
            _ => Err(self.bad_step(&format!("read {target}"))),
        }
    }

    /// Records a read result; once the view is complete the process evaluates.
    pub fn on_read_response(&mut self, value: RegisterValue) -> Result<Option<Outcome>> {
        let target = match self.pending {
            Some(PendingOp::Read { target }) => target,
            _ => return Err(self.bad_step("complete a read")),
        };
        let Pc::ReadAll { view } = &mut self.pc else {
            return Err(self.bad_step("complete a read"));
        };
        view.set(target, value);
        self.pending = None;
        if !view.is_complete() {
            return Ok(None);
        }
        let view = view.clone();
        self.captured = view.get(self.pid);
        let outcome = evaluate(self, &view)?;
        self.pc = match outcome {
            Outcome::Decide(value) => Pc::Deciding { value },
            Outcome::Write(value, site) => Pc::Write { value, site },
            Outcome::Flip { round } => Pc::Flipping { round },
        };
        Ok(Some(outcome))
    }

    pub fn on_decide(&mut self) -> Result<RegisterValue> {
        match self.pc {
            Pc::Deciding { value } => {
                self.pc = Pc::Decided { value };
                Ok(value)
            }
            _ => Err(self.bad_step("decide")),
        }
    }

    pub fn on_flip(&mut self, coin: Bit) -> Result<RegisterValue> {
        match self.pc {
            Pc::Flipping { round } => {
                let value = RegisterValue::of(coin, round);
                self.pc = Pc::Write {
                    value,
                    site: Site::Coin,
                };
                Ok(value)
            }
            _ => Err(self.bad_step("flip")),
        }
    }

    pub fn on_crash(&mut self) {
        self.pc = Pc::Crashed;
    }

    fn bad_step(&self, what: &str) -> Error {
        Error::AdversaryFault(format!(
            "{} cannot {what} in state {:?} (pending {:?})",
            self.pid, self.pc, self.pending
        ))
    }
}
