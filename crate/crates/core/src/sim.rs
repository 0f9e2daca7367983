//! Whole-system state and the single step function driven by adversaries and
//! the explorer.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::protocol::{init_process, NextAction, Pc, PendingOp, ProcessState};
use crate::registers::{respond_read, Linearizer, RegisterState};
use crate::trace::{EventKind, Site, Trace, TraceEnd, TraceEvent};
use crate::types::{Bit, ProcessId, RegisterModel, RegisterValue, Seq};

/// One scheduling decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleChoice {
    /// Invoke the process's next register operation. `target` names the
    /// register for a read and is ignored for writes.
    Invoke {
        pid: ProcessId,
        target: Option<ProcessId>,
    },
    /// Complete the pending operation; `value` is the read result.
    Respond {
        pid: ProcessId,
        value: Option<RegisterValue>,
    },
    /// Fire a local DECIDE or FLIP step.
    Local {
        pid: ProcessId,
    },
    /// Append a write to the linearization order (linearizable model only).
    Commit {
        register: ProcessId,
        index: usize,
    },
    Crash {
        pid: ProcessId,
    },
}

impl ScheduleChoice {
    pub fn pid(&self) -> ProcessId {
        match *self {
            ScheduleChoice::Invoke { pid, .. }
            | ScheduleChoice::Respond { pid, .. }
            | ScheduleChoice::Local { pid }
            | ScheduleChoice::Crash { pid } => pid,
            ScheduleChoice::Commit { register, .. } => register,
        }
    }

    /// Sort key: `(pid, kind, value)`.
    pub fn sort_key(&self) -> (ProcessId, u8, u64, Option<RegisterValue>) {
        match *self {
            ScheduleChoice::Invoke { pid, target } => (pid, 0, target.map_or(0, |t| t.0 as u64), None),
            ScheduleChoice::Respond { pid, value } => (pid, 1, 0, value),
            ScheduleChoice::Local { pid } => (pid, 2, 0, None),
            ScheduleChoice::Commit { register, index } => (register, 3, index as u64, None),
            ScheduleChoice::Crash { pid } => (pid, 4, 0, None),
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, ScheduleChoice::Crash { .. })
    }

    pub fn is_commit(&self) -> bool {
        matches!(self, ScheduleChoice::Commit { .. })
    }
}

/// Supplies the outcome of a FLIP step. Sources see the system state only as
/// it is when the flip happens.
pub trait CoinSource {
    fn flip(&mut self, state: &SystemState, pid: ProcessId, round: u32) -> Bit;
}

/// A fair coin from a seeded stream.
#[derive(Debug, Clone)]
pub struct FairCoin {
    rng: ChaCha8Rng,
}

impl FairCoin {
    pub fn new(seed: u64) -> FairCoin {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(COIN_STREAM);
        FairCoin { rng }
    }
}

pub(crate) const COIN_STREAM: u64 = 0xC011;

impl CoinSource for FairCoin {
    fn flip(&mut self, _: &SystemState, _: ProcessId, _: u32) -> Bit {
        Bit::from_bool(self.rng.random())
    }
}

/// Always returns the same outcome; the explorer branches with one per side.
#[derive(Debug, Clone, Copy)]
pub struct FixedCoin(pub Bit);

impl CoinSource for FixedCoin {
    fn flip(&mut self, _: &SystemState, _: ProcessId, _: u32) -> Bit {
        self.0
    }
}

/// Coin oracle keyed to the first write of the previous round to complete.
///
/// At `round` it returns that value (or its complement when `inverted`);
/// every other round is fair.
#[derive(Debug, Clone)]
pub struct ForcedCoin {
    pub round: u32,
    pub inverted: bool,
    fair: FairCoin,
}

impl ForcedCoin {
    pub fn new(round: u32, inverted: bool, seed: u64) -> ForcedCoin {
        ForcedCoin {
            round,
            inverted,
            fair: FairCoin::new(seed),
        }
    }
}

impl CoinSource for ForcedCoin {
    fn flip(&mut self, state: &SystemState, pid: ProcessId, round: u32) -> Bit {
        if round != self.round {
            return self.fair.flip(state, pid, round);
        }
        // A flip at round r only happens after some write of round r-1
        // completed, and that write carries a value.
        let first = state.first_completed_write(round - 1).and_then(|v| v.prefer.bit());
        match first {
            Some(v) if !self.inverted => v,
            Some(v) => v.complement(),
            None => self.fair.flip(state, pid, round),
        }
    }
}

pub fn coin_for(config: &SystemConfig, seed: u64) -> Box<dyn CoinSource + Send> {
    match config.coin {
        crate::config::CoinMode::Fair => Box::new(FairCoin::new(seed)),
        crate::config::CoinMode::Forced { round, inverted } => Box::new(ForcedCoin::new(round, inverted, seed)),
    }
}

#[derive(Debug, Clone)]
pub struct SystemState {
    config: Arc<SystemConfig>,
    procs: Vec<ProcessState>,
    registers: Vec<RegisterState>,
    lin: Option<Linearizer>,
    events: Vec<TraceEvent>,
    crashes: usize,
}

impl SystemState {
    pub fn new(config: SystemConfig) -> Result<SystemState> {
        config.validate()?;
        let procs = ProcessId::all(config.n)
            .zip(&config.proposals)
            .map(|(pid, &b)| init_process(pid, b.into()))
            .collect::<Result<Vec<_>>>()?;
        let registers = ProcessId::all(config.n).map(RegisterState::new).collect();
        let lin = (config.model == RegisterModel::Linearizable).then(|| Linearizer::new(config.n));
        Ok(SystemState {
            config: Arc::new(config),
            procs,
            registers,
            lin,
            events: Vec::new(),
            crashes: 0,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn model(&self) -> RegisterModel {
        self.config.model
    }

    pub fn processes(&self) -> &[ProcessState] {
        &self.procs
    }

    pub fn process(&self, pid: ProcessId) -> &ProcessState {
        &self.procs[pid.index()]
    }

    pub fn registers(&self) -> &[RegisterState] {
        &self.registers
    }

    pub fn register(&self, pid: ProcessId) -> &RegisterState {
        &self.registers[pid.index()]
    }

    pub fn linearizer(&self) -> Option<&Linearizer> {
        self.lin.as_ref()
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Index the next event will get.
    pub fn now(&self) -> Seq {
        self.events.len() as Seq
    }

    pub fn crashes(&self) -> usize {
        self.crashes
    }

    pub fn crash_budget_left(&self) -> usize {
        self.config.crash_budget.saturating_sub(self.crashes)
    }

    pub fn live(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.procs.iter().filter(|p| p.is_live()).map(|p| p.pid)
    }

    /// No process can take another step.
    pub fn is_finished(&self) -> bool {
        self.live().next().is_none()
    }

    pub fn hit_cap(&self) -> bool {
        self.events.len() >= self.config.max_events
    }

    pub fn trace(&self) -> Trace {
        Trace {
            config: (*self.config).clone(),
            end: if self.is_finished() {
                TraceEnd::Complete
            } else {
                TraceEnd::Capped
            },
            events: self.events.clone(),
        }
    }

    pub fn into_trace(self) -> Trace {
        let end = if self.is_finished() {
            TraceEnd::Complete
        } else {
            TraceEnd::Capped
        };
        Trace {
            config: Arc::try_unwrap(self.config).unwrap_or_else(|c| (*c).clone()),
            end,
            events: self.events,
        }
    }

    /// Value of the first write of `round` to complete, if one has.
    pub fn first_completed_write(&self, round: u32) -> Option<RegisterValue> {
        self.registers
            .iter()
            .flat_map(|r| r.writes.iter())
            .filter(|w| w.value.round == round)
            .filter_map(|w| w.interval.respond.map(|t| (t, w.value)))
            .min_by_key(|(t, _)| *t)
            .map(|(_, v)| v)
    }

    /// Values `pid`'s pending read may return right now, oldest first.
    pub fn legal_responses(&self, pid: ProcessId) -> Vec<RegisterValue> {
        let Some(PendingOp::Read { target }) = self.procs[pid.index()].pending else {
            return Vec::new();
        };
        let reg = &self.registers[target.index()];
        let Some(&invoke) = reg.pending_reads.get(&pid) else {
            return Vec::new();
        };
        let now = self.now();
        let indices = reg.legal_read_indices(invoke, now);
        match (self.config.model, &self.lin) {
            (RegisterModel::Atomic, _) => vec![reg.latest_value()],
            (RegisterModel::Linearizable, Some(lin)) => indices
                .into_iter()
                .filter(|&i| lin.read_feasible(target, invoke, now, i))
                .map(|i| reg.value_at(i))
                .collect(),
            _ => indices.into_iter().map(|i| reg.value_at(i)).collect(),
        }
    }

    /// Choices that advance a process (no crashes, no commits), sorted.
    pub fn step_choices(&self) -> Vec<ScheduleChoice> {
        let mut out = Vec::new();
        for p in self.procs.iter().filter(|p| p.is_live()) {
            let pid = p.pid;
            match p.next_action() {
                NextAction::InvokeWrite(..) => out.push(ScheduleChoice::Invoke { pid, target: None }),
                NextAction::InvokeRead(targets) => out.extend(
                    targets
                        .into_iter()
                        .map(|t| ScheduleChoice::Invoke { pid, target: Some(t) }),
                ),
                NextAction::AwaitResponse(PendingOp::Write) => out.push(ScheduleChoice::Respond { pid, value: None }),
                NextAction::AwaitResponse(PendingOp::Read { .. }) => out.extend(
                    self.legal_responses(pid)
                        .into_iter()
                        .map(|v| ScheduleChoice::Respond { pid, value: Some(v) }),
                ),
                NextAction::Decide(_) | NextAction::Flip { .. } => out.push(ScheduleChoice::Local { pid }),
                NextAction::Halted => {}
            }
        }
        out.sort_by_key(ScheduleChoice::sort_key);
        out
    }

    pub fn commit_choices(&self) -> Vec<ScheduleChoice> {
        let Some(lin) = &self.lin else {
            return Vec::new();
        };
        lin.uncommitted_writes()
            .into_iter()
            .filter(|&(r, k)| lin.can_commit(r, k))
            .map(|(register, index)| ScheduleChoice::Commit { register, index })
            .collect()
    }

    pub fn crash_choices(&self) -> Vec<ScheduleChoice> {
        if self.crash_budget_left() == 0 {
            return Vec::new();
        }
        self.live().map(|pid| ScheduleChoice::Crash { pid }).collect()
    }

    /// Every enabled choice, sorted by `(pid, kind, value)`.
    pub fn enabled(&self) -> Vec<ScheduleChoice> {
        let mut out = self.step_choices();
        out.extend(self.commit_choices());
        out.extend(self.crash_choices());
        out.sort_by_key(ScheduleChoice::sort_key);
        out
    }

    fn emit(&mut self, pid: ProcessId, kind: EventKind, target: ProcessId, value: RegisterValue, site: Site) {
        let seq = self.now();
        self.events.push(TraceEvent {
            seq,
            pid,
            kind,
            target,
            value,
            site,
        });
    }

    fn live_process(&self, pid: ProcessId) -> Result<()> {
        match self.procs.get(pid.index()) {
            Some(p) if p.is_live() => Ok(()),
            Some(_) => Err(Error::AdversaryFault(format!("{pid} has halted"))),
            None => Err(Error::AdversaryFault(format!("no process {pid}"))),
        }
    }

    /// Applies one choice. Invalid choices are rejected without changing state.
    pub fn apply(&mut self, choice: ScheduleChoice, coin: &mut dyn CoinSource) -> Result<()> {
        match choice {
            ScheduleChoice::Invoke { pid, target } => {
                self.live_process(pid)?;
                match self.procs[pid.index()].next_action() {
                    NextAction::InvokeWrite(..) => self.invoke_write(pid),
                    NextAction::InvokeRead(_) => {
                        let target = target
                            .ok_or_else(|| Error::AdversaryFault(format!("{pid} read invoked without a target")))?;
                        self.invoke_read(pid, target)
                    }
                    other => Err(Error::AdversaryFault(format!("{pid} cannot invoke now ({other:?})"))),
                }
            }
            ScheduleChoice::Respond { pid, value } => {
                self.live_process(pid)?;
                match self.procs[pid.index()].pending {
                    Some(PendingOp::Write) => self.respond_write(pid),
                    Some(PendingOp::Read { target }) => {
                        let value = value
                            .ok_or_else(|| Error::AdversaryFault(format!("{pid} read response without a value")))?;
                        self.respond_read(pid, target, value)
                    }
                    None => Err(Error::AdversaryFault(format!("{pid} has nothing pending"))),
                }
            }
            ScheduleChoice::Local { pid } => {
                self.live_process(pid)?;
                match self.procs[pid.index()].pc {
                    Pc::Deciding { .. } => {
                        let value = self.procs[pid.index()].on_decide()?;
                        self.emit(pid, EventKind::Decide, pid, value, Site::Decide);
                        Ok(())
                    }
                    Pc::Flipping { round } => {
                        let c = coin.flip(self, pid, round);
                        let value = self.procs[pid.index()].on_flip(c)?;
                        self.emit(pid, EventKind::Flip, pid, value, Site::Coin);
                        Ok(())
                    }
                    _ => Err(Error::AdversaryFault(format!("{pid} has no local step"))),
                }
            }
            ScheduleChoice::Commit { register, index } => {
                let lin = self
                    .lin
                    .as_mut()
                    .ok_or_else(|| Error::AdversaryFault("commit outside the linearizable model".into()))?;
                lin.commit(register, index)
            }
            ScheduleChoice::Crash { pid } => {
                if pid.index() >= self.procs.len() {
                    return Err(Error::AdversaryFault(format!("no process {pid}")));
                }
                if !self.procs[pid.index()].is_live() {
                    return Ok(());
                }
                if self.crash_budget_left() == 0 {
                    return Err(Error::AdversaryFault("crash budget exhausted".into()));
                }
                if let Some(PendingOp::Read { target }) = self.procs[pid.index()].pending {
                    self.registers[target.index()].pending_reads.remove(&pid);
                }
                self.procs[pid.index()].on_crash();
                self.crashes += 1;
                self.emit(pid, EventKind::Crash, pid, RegisterValue::INITIAL, Site::None);
                Ok(())
            }
        }
    }

    fn invoke_write(&mut self, pid: ProcessId) -> Result<()> {
        let (value, site) = self.procs[pid.index()].on_invoke_write()?;
        let now = self.now();
        let index = self.registers[pid.index()].invoke_write(value, now)?;
        if let Some(lin) = &mut self.lin {
            lin.add_write(pid, index, now);
        }
        self.emit(pid, EventKind::InvokeWrite, pid, value, site);
        if self.config.model == RegisterModel::Atomic {
            self.respond_write(pid)?;
        }
        Ok(())
    }

    fn respond_write(&mut self, pid: ProcessId) -> Result<()> {
        let Pc::Write { value, site } = self.procs[pid.index()].pc else {
            return Err(Error::AdversaryFault(format!("{pid} has no write in flight")));
        };
        let now = self.now();
        let index = self.registers[pid.index()].respond_write(now)?;
        if let Some(lin) = &mut self.lin {
            lin.complete_write(pid, index, now)?;
        }
        let n = self.n();
        self.procs[pid.index()].on_write_response(n)?;
        self.emit(pid, EventKind::RespondWrite, pid, value, site);
        Ok(())
    }

    fn invoke_read(&mut self, pid: ProcessId, target: ProcessId) -> Result<()> {
        if target.index() >= self.n() {
            return Err(Error::AdversaryFault(format!("no register {target}")));
        }
        self.procs[pid.index()].on_invoke_read(target)?;
        let now = self.now();
        self.registers[target.index()].invoke_read(pid, now)?;
        self.emit(pid, EventKind::InvokeRead, target, RegisterValue::INITIAL, Site::Read);
        if self.config.model == RegisterModel::Atomic {
            let latest = self.registers[target.index()].latest_value();
            self.respond_read(pid, target, latest)?;
        }
        Ok(())
    }

    fn respond_read(&mut self, pid: ProcessId, target: ProcessId, choice: RegisterValue) -> Result<()> {
        let now = self.now();
        let model = self.config.model;
        let value = respond_read(
            &mut self.registers[target.index()],
            pid,
            choice,
            model,
            self.lin.as_mut(),
            now,
        )?;
        self.procs[pid.index()].on_read_response(value)?;
        self.emit(pid, EventKind::RespondRead, target, value, Site::Read);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(proposals: &[u8], model: RegisterModel) -> SystemConfig {
        SystemConfig::new(proposals.iter().map(|&b| Bit::from_bool(b == 1)).collect()).with_model(model)
    }

    #[test]
    fn solo_process_decides_round_one() {
        let mut st = SystemState::new(cfg(&[1], RegisterModel::Regular)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        while !st.is_finished() {
            let c = st.step_choices()[0];
            st.apply(c, &mut coin).unwrap();
        }
        let t = st.trace();
        let kinds: Vec<EventKind> = t.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::InvokeWrite,
                EventKind::RespondWrite,
                EventKind::InvokeRead,
                EventKind::RespondRead,
                EventKind::Decide
            ]
        );
        assert_eq!(t.events[4].value, RegisterValue::of(Bit::One, 1));
        assert_eq!(t.end, TraceEnd::Complete);
    }

    #[test]
    fn atomic_operations_are_single_steps() {
        let mut st = SystemState::new(cfg(&[0, 1], RegisterModel::Atomic)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        st.apply(
            ScheduleChoice::Invoke {
                pid: ProcessId(0),
                target: None,
            },
            &mut coin,
        )
        .unwrap();
        assert_eq!(st.events().len(), 2);
        st.apply(
            ScheduleChoice::Invoke {
                pid: ProcessId(0),
                target: Some(ProcessId(1)),
            },
            &mut coin,
        )
        .unwrap();
        assert_eq!(st.events()[3].kind, EventKind::RespondRead);
        assert_eq!(st.events()[3].value, RegisterValue::INITIAL);
        assert!(st
            .step_choices()
            .iter()
            .all(|c| !matches!(c, ScheduleChoice::Respond { .. })));
    }

    #[test]
    fn regular_read_offers_old_and_new() {
        let mut st = SystemState::new(cfg(&[0, 1], RegisterModel::Regular)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        let (p, q) = (ProcessId(0), ProcessId(1));
        st.apply(ScheduleChoice::Invoke { pid: q, target: None }, &mut coin)
            .unwrap();
        st.apply(ScheduleChoice::Invoke { pid: p, target: None }, &mut coin)
            .unwrap();
        st.apply(ScheduleChoice::Respond { pid: p, value: None }, &mut coin)
            .unwrap();
        st.apply(
            ScheduleChoice::Invoke {
                pid: p,
                target: Some(q),
            },
            &mut coin,
        )
        .unwrap();
        assert_eq!(
            st.legal_responses(p),
            vec![RegisterValue::INITIAL, RegisterValue::of(Bit::One, 1)]
        );
        let bad = st.apply(
            ScheduleChoice::Respond {
                pid: p,
                value: Some(RegisterValue::of(Bit::Zero, 1)),
            },
            &mut coin,
        );
        assert!(matches!(bad, Err(Error::IllegalChoice { .. })));
    }

    #[test]
    fn disabled_choices_are_faults() {
        let mut st = SystemState::new(cfg(&[0, 1], RegisterModel::Regular)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        let r = st.apply(
            ScheduleChoice::Respond {
                pid: ProcessId(0),
                value: None,
            },
            &mut coin,
        );
        assert!(matches!(r, Err(Error::AdversaryFault(_))));
        let r = st.apply(ScheduleChoice::Local { pid: ProcessId(1) }, &mut coin);
        assert!(matches!(r, Err(Error::AdversaryFault(_))));
        let r = st.apply(ScheduleChoice::Crash { pid: ProcessId(1) }, &mut coin);
        assert!(matches!(r, Err(Error::AdversaryFault(_))));
        assert!(st.events().is_empty());
    }

    #[test]
    fn crash_halts_process_but_register_stays() {
        let mut st = SystemState::new(cfg(&[0, 1], RegisterModel::Regular).with_crash_budget(1)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        let (p, q) = (ProcessId(0), ProcessId(1));
        st.apply(ScheduleChoice::Invoke { pid: q, target: None }, &mut coin)
            .unwrap();
        st.apply(ScheduleChoice::Crash { pid: q }, &mut coin).unwrap();
        assert!(st.step_choices().iter().all(|c| c.pid() == p));
        assert!(st.crash_choices().is_empty());
        // q's write never completes, so it stays concurrent with later reads.
        st.apply(ScheduleChoice::Invoke { pid: p, target: None }, &mut coin)
            .unwrap();
        st.apply(ScheduleChoice::Respond { pid: p, value: None }, &mut coin)
            .unwrap();
        st.apply(
            ScheduleChoice::Invoke {
                pid: p,
                target: Some(q),
            },
            &mut coin,
        )
        .unwrap();
        assert_eq!(
            st.legal_responses(p),
            vec![RegisterValue::INITIAL, RegisterValue::of(Bit::One, 1)]
        );
    }

    #[test]
    fn forced_coin_follows_first_completed_write() {
        let mut st = SystemState::new(cfg(&[0, 1], RegisterModel::Regular)).unwrap();
        let mut coin = FixedCoin(Bit::Zero);
        let q = ProcessId(1);
        st.apply(ScheduleChoice::Invoke { pid: q, target: None }, &mut coin)
            .unwrap();
        st.apply(ScheduleChoice::Respond { pid: q, value: None }, &mut coin)
            .unwrap();
        assert_eq!(st.first_completed_write(1), Some(RegisterValue::of(Bit::One, 1)));
        let mut forced = ForcedCoin::new(2, false, 1);
        assert_eq!(forced.flip(&st, ProcessId(0), 2), Bit::One);
        let mut inverted = ForcedCoin::new(2, true, 1);
        assert_eq!(inverted.flip(&st, ProcessId(0), 2), Bit::Zero);
        for target in [3, 5] {
            let mut off_target = ForcedCoin::new(target, false, 7);
            let mut fair = FairCoin::new(7);
            for _ in 0..16 {
                assert_eq!(off_target.flip(&st, ProcessId(0), 2), fair.flip(&st, ProcessId(0), 2));
            }
        }
    }
}
