//! Strong-adversary schedulers.
//!
//! An adversary sees the whole [`SystemState`] (every process, every register
//! history, the trace so far including past coin flips) and returns one
//! [`ScheduleChoice`] per step. Coin outcomes are produced by the coin source
//! only when a FLIP step is applied, so no adversary can see one early.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::AdversaryKind;
use crate::error::{Error, Result};
use crate::protocol::{NextAction, Pc, PendingOp};
use crate::sim::{ScheduleChoice, SystemState};
use crate::trace::{EventKind, Site};
use crate::types::{Bit, Prefer, ProcessId, RegisterModel, RegisterValue};

const ADVERSARY_STREAM: u64 = 0xAD;
const CRASH_STREAM: u64 = 0xC4A5;

/// Read-only view handed to an adversary.
#[derive(Debug, Clone, Copy)]
pub struct AdversaryContext<'a> {
    state: &'a SystemState,
}

impl<'a> AdversaryContext<'a> {
    pub fn new(state: &'a SystemState) -> AdversaryContext<'a> {
        AdversaryContext { state }
    }

    pub fn state(&self) -> &'a SystemState {
        self.state
    }
}

pub trait Adversary: Send {
    fn name(&self) -> &'static str;

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice>;

    /// Whether the crash policy may pre-empt this adversary right now.
    fn allows_crash(&self) -> bool {
        true
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Crashes a uniformly chosen live process with probability `rate`, while
/// fewer than `budget` crashes have happened.
pub fn crash_policy(
    ctx: &AdversaryContext<'_>,
    budget: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Option<ScheduleChoice> {
    let st = ctx.state();
    if st.crashes() >= budget || rate <= 0.0 {
        return None;
    }
    if !rng.random_bool(rate) {
        return None;
    }
    let live: Vec<ProcessId> = st.live().collect();
    live.choose(rng).map(|&pid| ScheduleChoice::Crash { pid })
}

/// Runs the crash policy from the run's config before delegating.
pub struct WithCrashes {
    inner: Box<dyn Adversary>,
    rng: ChaCha8Rng,
}

impl WithCrashes {
    pub fn new(inner: Box<dyn Adversary>, seed: u64) -> WithCrashes {
        WithCrashes {
            inner,
            rng: stream_rng(seed, CRASH_STREAM),
        }
    }
}

impl Adversary for WithCrashes {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        if self.inner.allows_crash() {
            let cfg = ctx.state().config();
            if let Some(c) = crash_policy(ctx, cfg.crash_budget, cfg.crash_rate, &mut self.rng) {
                return Ok(c);
            }
        }
        self.inner.choose(ctx)
    }
}

/// The adversary named by `kind`, seeded from the run seed and wrapped in the
/// crash policy.
pub fn make_adversary(kind: AdversaryKind, seed: u64) -> Box<dyn Adversary> {
    let inner: Box<dyn Adversary> = match kind {
        AdversaryKind::RoundRobin => Box::new(RoundRobin::new()),
        AdversaryKind::UniformRandom => Box::new(UniformRandom::new(seed)),
        AdversaryKind::StaleRead => Box::new(StaleRead::new(seed)),
        AdversaryKind::DisagreementMaximizer => Box::new(DisagreementMaximizer::new(seed)),
        AdversaryKind::ScriptedAttack => Box::new(ScriptedAttack::new()),
    };
    Box::new(WithCrashes::new(inner, seed))
}

fn no_choice() -> Error {
    Error::AdversaryFault("no process can take a step".into())
}

/// Processes that can take a step, ascending.
fn movable(st: &SystemState) -> Vec<ProcessId> {
    st.live().collect()
}

/// The step `pid` takes when its read targets and read results are picked by
/// `target` and `value`.
fn step_for(
    st: &SystemState,
    pid: ProcessId,
    target: impl FnOnce(&[ProcessId]) -> ProcessId,
    value: impl FnOnce(&[RegisterValue]) -> RegisterValue,
) -> Result<ScheduleChoice> {
    Ok(match st.process(pid).next_action() {
        NextAction::InvokeWrite(..) => ScheduleChoice::Invoke { pid, target: None },
        NextAction::InvokeRead(targets) => ScheduleChoice::Invoke {
            pid,
            target: Some(target(&targets)),
        },
        NextAction::AwaitResponse(PendingOp::Write) => ScheduleChoice::Respond { pid, value: None },
        NextAction::AwaitResponse(PendingOp::Read { .. }) => {
            let legal = st.legal_responses(pid);
            if legal.is_empty() {
                return Err(Error::Internal(format!("{pid} has no legal read value")));
            }
            ScheduleChoice::Respond {
                pid,
                value: Some(value(&legal)),
            }
        }
        NextAction::Decide(_) | NextAction::Flip { .. } => ScheduleChoice::Local { pid },
        NextAction::Halted => return Err(Error::AdversaryFault(format!("{pid} has halted"))),
    })
}

/// Cycles through processes, reads registers in index order, returns the
/// newest legal value and commits writes as soon as it can.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    last: Option<ProcessId>,
}

impl RoundRobin {
    pub fn new() -> RoundRobin {
        RoundRobin::default()
    }

    /// Starts the cycle after `pid`.
    pub fn after(pid: ProcessId) -> RoundRobin {
        RoundRobin { last: Some(pid) }
    }
}

impl Adversary for RoundRobin {
    fn name(&self) -> &'static str {
        AdversaryKind::RoundRobin.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        let st = ctx.state();
        if let Some(&c) = st.commit_choices().first() {
            return Ok(c);
        }
        let live = movable(st);
        let pid = match self.last {
            Some(l) => live.iter().copied().find(|p| *p > l).or(live.first().copied()),
            None => live.first().copied(),
        }
        .ok_or_else(no_choice)?;
        self.last = Some(pid);
        step_for(st, pid, |t| t[0], |v| *v.last().unwrap())
    }
}

/// Picks uniformly among every enabled non-crash choice.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    rng: ChaCha8Rng,
}

impl UniformRandom {
    pub fn new(seed: u64) -> UniformRandom {
        UniformRandom {
            rng: stream_rng(seed, ADVERSARY_STREAM),
        }
    }
}

impl Adversary for UniformRandom {
    fn name(&self) -> &'static str {
        AdversaryKind::UniformRandom.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        let st = ctx.state();
        let mut choices = st.step_choices();
        choices.extend(st.commit_choices());
        choices.choose(&mut self.rng).copied().ok_or_else(no_choice)
    }
}

/// Random scheduling; every read returns the oldest value it legally can.
#[derive(Debug, Clone)]
pub struct StaleRead {
    rng: ChaCha8Rng,
}

impl StaleRead {
    pub fn new(seed: u64) -> StaleRead {
        StaleRead {
            rng: stream_rng(seed, ADVERSARY_STREAM),
        }
    }
}

impl Adversary for StaleRead {
    fn name(&self) -> &'static str {
        AdversaryKind::StaleRead.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        let st = ctx.state();
        let live = movable(st);
        let &pid = live.choose(&mut self.rng).ok_or_else(no_choice)?;
        let rng = &mut self.rng;
        step_for(st, pid, |t| *t.choose(rng).unwrap(), |v| v[0])
    }
}

/// Greedy heuristic that tries to keep leaders disagreeing: it advances the
/// process with the lowest round, holds back DECIDE steps while anything else
/// can move, and answers reads with the value least likely to produce
/// agreement.
#[derive(Debug, Clone)]
pub struct DisagreementMaximizer {
    rng: ChaCha8Rng,
}

impl DisagreementMaximizer {
    pub fn new(seed: u64) -> DisagreementMaximizer {
        DisagreementMaximizer {
            rng: stream_rng(seed, ADVERSARY_STREAM),
        }
    }

    /// Higher is more disruptive for a reader currently preferring `own`:
    /// a pause marker, then the opposite value, then the same value; ties go
    /// to the higher round.
    pub fn read_score(own: Prefer, value: RegisterValue) -> (u8, u32) {
        let kind = match value.prefer {
            Prefer::Bot => 2,
            p if p != own => 1,
            _ => 0,
        };
        (kind, value.round)
    }

    pub fn pick_read(own: Prefer, legal: &[RegisterValue]) -> RegisterValue {
        *legal
            .iter()
            .max_by_key(|v| Self::read_score(own, **v))
            .expect("legal read sets are never empty")
    }
}

impl Adversary for DisagreementMaximizer {
    fn name(&self) -> &'static str {
        AdversaryKind::DisagreementMaximizer.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        let st = ctx.state();
        let live = movable(st);
        let non_deciding: Vec<ProcessId> = live
            .iter()
            .copied()
            .filter(|&p| !matches!(st.process(p).pc, Pc::Deciding { .. }))
            .collect();
        let pool = if non_deciding.is_empty() { live } else { non_deciding };
        let round_of = |p: ProcessId| st.register(p).latest_value().round;
        let min = pool.iter().map(|&p| round_of(p)).min().ok_or_else(no_choice)?;
        let lowest: Vec<ProcessId> = pool.into_iter().filter(|&p| round_of(p) == min).collect();
        let &pid = lowest.choose(&mut self.rng).ok_or_else(no_choice)?;
        let own = st.register(pid).latest_value().prefer;
        let rng = &mut self.rng;
        step_for(st, pid, |t| *t.choose(rng).unwrap(), |v| Self::pick_read(own, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttackPhase {
    /// Invoke every first write before any responds.
    InvokeAll,
    /// Complete only `p`'s first write.
    CompleteP,
    /// Run `p` alone, reading the newest values, until it flips.
    DriveP,
    /// Commit the first write of round 1 so its value differs from the coin.
    Commit,
    Done,
}

/// Scripted schedule showing that an adversary controlling a linearizable
/// register's linearization can choose, after seeing a round-2 coin, which
/// round-1 write counts as first.
///
/// `p` is the first process proposing 0, `q` the first proposing 1. All first
/// writes are invoked, only `p`'s completes, `p` runs alone (it sees `(1,1)`
/// in `q`'s pending write, pauses, re-reads and flips `c` for round 2), and
/// then the write whose value is `1 - c` is committed first. Afterwards the
/// run continues round-robin.
#[derive(Debug, Clone)]
pub struct ScriptedAttack {
    phase: AttackPhase,
    roles: Option<(ProcessId, ProcessId)>,
    coin: Option<Bit>,
    fallback: RoundRobin,
}

impl Default for ScriptedAttack {
    fn default() -> Self {
        ScriptedAttack::new()
    }
}

impl ScriptedAttack {
    pub fn new() -> ScriptedAttack {
        ScriptedAttack {
            phase: AttackPhase::InvokeAll,
            roles: None,
            coin: None,
            fallback: RoundRobin::new(),
        }
    }

    /// `(p, q)` once the scenario has started.
    pub fn roles(&self) -> Option<(ProcessId, ProcessId)> {
        self.roles
    }

    /// `p`'s round-2 coin, once flipped.
    pub fn coin(&self) -> Option<Bit> {
        self.coin
    }

    fn broken(msg: impl Into<String>) -> Error {
        Error::ScenarioBroken(msg.into())
    }

    fn setup(&mut self, st: &SystemState) -> Result<(ProcessId, ProcessId)> {
        if let Some(r) = self.roles {
            return Ok(r);
        }
        if st.model() == RegisterModel::Atomic {
            return Err(Self::broken("atomic registers leave no linearization to choose"));
        }
        if !st.events().is_empty() {
            return Err(Self::broken("the attack must start from the initial state"));
        }
        let props = &st.config().proposals;
        let find = |b: Bit| props.iter().position(|&x| x == b).map(|i| ProcessId(i as u32));
        match (find(Bit::Zero), find(Bit::One)) {
            (Some(p), Some(q)) => {
                self.roles = Some((p, q));
                Ok((p, q))
            }
            _ => Err(Self::broken("needs processes proposing both values")),
        }
    }

    fn scripted(&mut self, st: &SystemState) -> Result<Option<ScheduleChoice>> {
        let (p, q) = self.setup(st)?;
        loop {
            match self.phase {
                AttackPhase::InvokeAll => {
                    let next = movable(st)
                        .into_iter()
                        .find(|&x| matches!(st.process(x).next_action(), NextAction::InvokeWrite(_, Site::Init)));
                    match next {
                        Some(pid) => return Ok(Some(ScheduleChoice::Invoke { pid, target: None })),
                        None => self.phase = AttackPhase::CompleteP,
                    }
                }
                AttackPhase::CompleteP => {
                    if st.process(p).pending != Some(PendingOp::Write) {
                        return Err(Self::broken(format!("{p} has no first write in flight")));
                    }
                    self.phase = AttackPhase::DriveP;
                    return Ok(Some(ScheduleChoice::Respond { pid: p, value: None }));
                }
                AttackPhase::DriveP => {
                    if let Some(e) = st.events().last() {
                        if e.kind == EventKind::Flip && e.pid == p {
                            self.coin = e.value.prefer.bit();
                            self.phase = AttackPhase::Commit;
                            continue;
                        }
                    }
                    if st.register(q).write_pending() && st.register(q).latest_value().round != 1 {
                        return Err(Self::broken(format!("{q}'s first write is not in flight")));
                    }
                    match st.process(p).pc {
                        Pc::Deciding { .. } | Pc::Decided { .. } | Pc::Crashed => {
                            return Err(Self::broken(format!("{p} left the loop before flipping")))
                        }
                        _ => {}
                    }
                    return step_for(st, p, |t| t[0], |v| *v.last().unwrap()).map(Some);
                }
                AttackPhase::Commit => {
                    self.phase = AttackPhase::Done;
                    if st.model() != RegisterModel::Linearizable {
                        continue;
                    }
                    let coin = self.coin.ok_or_else(|| Self::broken("no coin recorded"))?;
                    let first = if coin == Bit::Zero { q } else { p };
                    let lin = st.linearizer().ok_or_else(|| Self::broken("missing linearizer"))?;
                    if !lin.committed_order().is_empty() {
                        return Err(Self::broken("a write was committed before the coin"));
                    }
                    if !lin.can_commit(first, 1) {
                        return Err(Self::broken(format!("{first}'s first write cannot go first")));
                    }
                    self.fallback = RoundRobin::after(p);
                    return Ok(Some(ScheduleChoice::Commit {
                        register: first,
                        index: 1,
                    }));
                }
                AttackPhase::Done => return Ok(None),
            }
        }
    }
}

impl Adversary for ScriptedAttack {
    fn name(&self) -> &'static str {
        AdversaryKind::ScriptedAttack.name()
    }

    fn choose(&mut self, ctx: &AdversaryContext<'_>) -> Result<ScheduleChoice> {
        match self.scripted(ctx.state())? {
            Some(c) => Ok(c),
            None => self.fallback.choose(ctx),
        }
    }

    fn allows_crash(&self) -> bool {
        self.phase == AttackPhase::Done
    }
}
