//! Execution traces and their line-oriented text format.
//!
//! ```text
//! #regcons n=2 proposals=01 model=regular ... end=complete
//! 0 0 INVOKE_WRITE 0 0 1 init
//! 1 0 RESPOND_WRITE 0 0 1 init
//! ```
//!
//! Each event line is `seq pid kind target prefer round line`, with prefer
//! written as `0`, `1` or `B`. Only complete events are ever written.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::types::{Bit, OpInterval, Prefer, ProcessId, RegisterValue, Seq};

pub const HEADER_TAG: &str = "#regcons";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    InvokeWrite,
    RespondWrite,
    InvokeRead,
    RespondRead,
    Flip,
    Decide,
    Crash,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::InvokeWrite => "INVOKE_WRITE",
            EventKind::RespondWrite => "RESPOND_WRITE",
            EventKind::InvokeRead => "INVOKE_READ",
            EventKind::RespondRead => "RESPOND_READ",
            EventKind::Flip => "FLIP",
            EventKind::Decide => "DECIDE",
            EventKind::Crash => "CRASH",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "INVOKE_WRITE" => EventKind::InvokeWrite,
            "RESPOND_WRITE" => EventKind::RespondWrite,
            "INVOKE_READ" => EventKind::InvokeRead,
            "RESPOND_READ" => EventKind::RespondRead,
            "FLIP" => EventKind::Flip,
            "DECIDE" => EventKind::Decide,
            "CRASH" => EventKind::Crash,
            other => return Err(Error::Parse(format!("unknown event kind {other:?}"))),
        })
    }
}

/// Which step of the consensus loop produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// First write of the proposal at round 1.
    Init,
    /// Write of the value all leaders agree on, at round r+1.
    Adopt,
    /// Pause write `(B, r)`.
    Pause,
    /// Write of a coin flip at round r+1 (also tags the FLIP itself).
    Coin,
    Read,
    Decide,
    None,
}

impl Site {
    pub fn token(self) -> &'static str {
        match self {
            Site::Init => "init",
            Site::Adopt => "adopt",
            Site::Pause => "pause",
            Site::Coin => "coin",
            Site::Read => "read",
            Site::Decide => "decide",
            Site::None => "-",
        }
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "init" => Site::Init,
            "adopt" => Site::Adopt,
            "pause" => Site::Pause,
            "coin" => Site::Coin,
            "read" => Site::Read,
            "decide" => Site::Decide,
            "-" => Site::None,
            other => return Err(Error::Parse(format!("unknown line site {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub seq: Seq,
    pub pid: ProcessId,
    pub kind: EventKind,
    /// Register owner for register operations; the acting process otherwise.
    pub target: ProcessId,
    /// Written value, read result, `(coin, round)` for flips, `(x, r)` for
    /// decisions; `(B, 0)` where nothing is carried.
    pub value: RegisterValue,
    pub site: Site,
}

impl TraceEvent {
    pub fn is_write_invoke(&self) -> bool {
        self.kind == EventKind::InvokeWrite
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.seq,
            self.pid.0,
            self.kind.token(),
            self.target.0,
            self.value.prefer.token(),
            self.value.round,
            self.site.token()
        )
    }
}

impl FromStr for TraceEvent {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("expected 7 fields, got {}: {line:?}", f.len())));
        }
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad number {s:?} in {line:?}")))
        };
        Ok(TraceEvent {
            seq: num(f[0])?,
            pid: ProcessId(num(f[1])? as u32),
            kind: f[2].parse()?,
            target: ProcessId(num(f[3])? as u32),
            value: RegisterValue {
                prefer: Prefer::from_token(f[4])?,
                round: num(f[5])? as u32,
            },
            site: f[6].parse()?,
        })
    }
}

/// How a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEnd {
    /// Every process decided or crashed.
    Complete,
    /// The event cap (or an exploration bound) was hit first.
    Capped,
}

impl TraceEnd {
    fn token(self) -> &'static str {
        match self {
            TraceEnd::Complete => "complete",
            TraceEnd::Capped => "capped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config: SystemConfig,
    pub end: TraceEnd,
    pub events: Vec<TraceEvent>,
}

/// A write operation reconstructed from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOp {
    pub pid: ProcessId,
    pub value: RegisterValue,
    pub site: Site,
    pub interval: OpInterval,
}

/// A read operation reconstructed from a trace; `value` is `None` while pending.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOp {
    pub reader: ProcessId,
    pub register: ProcessId,
    pub interval: OpInterval,
    pub value: Option<RegisterValue>,
}

impl Trace {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn is_capped(&self) -> bool {
        self.end == TraceEnd::Capped
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 24 + 128);
        out.push_str(HEADER_TAG);
        for (k, v) in self.config.to_pairs() {
            let _ = write!(out, " {k}={v}");
        }
        let _ = writeln!(out, " end={}", self.end.token());
        for e in &self.events {
            let _ = writeln!(out, "{e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty trace file".into()))?;
        let rest = header
            .strip_prefix(HEADER_TAG)
            .ok_or_else(|| Error::Parse(format!("missing {HEADER_TAG} header")))?;
        let mut pairs = Vec::new();
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field {tok:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let (config, extra) = SystemConfig::from_pairs(pairs)?;
        let end = match extra.get("end").map(String::as_str) {
            Some("complete") => TraceEnd::Complete,
            Some("capped") => TraceEnd::Capped,
            other => return Err(Error::Parse(format!("bad or missing end field: {other:?}"))),
        };
        let events = lines.map(str::parse).collect::<Result<Vec<_>>>()?;
        Ok(Trace { config, end, events })
    }

    /// Drops events matching `drop` and renumbers the rest densely.
    pub fn without(&self, mut drop: impl FnMut(&TraceEvent) -> bool) -> Trace {
        let mut events: Vec<TraceEvent> = self.events.iter().filter(|e| !drop(e)).copied().collect();
        for (i, e) in events.iter_mut().enumerate() {
            e.seq = i as Seq;
        }
        Trace {
            config: self.config.clone(),
            end: self.end,
            events,
        }
    }

    pub fn proposals(&self) -> &[Bit] {
        &self.config.proposals
    }

    /// All write operations in invocation order.
    pub fn writes(&self) -> Vec<WriteOp> {
        let mut out: Vec<WriteOp> = Vec::new();
        let mut open: Vec<Option<usize>> = vec![None; self.n()];
        for e in &self.events {
            match e.kind {
                EventKind::InvokeWrite => {
                    if let Some(slot) = open.get_mut(e.pid.index()) {
                        *slot = Some(out.len());
                    }
                    out.push(WriteOp {
                        pid: e.pid,
                        value: e.value,
                        site: e.site,
                        interval: OpInterval::pending(e.seq),
                    });
                }
                EventKind::RespondWrite => {
                    if let Some(i) = open.get_mut(e.pid.index()).and_then(Option::take) {
                        out[i].interval.respond = Some(e.seq);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// All read operations in invocation order.
    pub fn reads(&self) -> Vec<ReadOp> {
        let mut out: Vec<ReadOp> = Vec::new();
        let mut open: Vec<Option<usize>> = vec![None; self.n()];
        for e in &self.events {
            match e.kind {
                EventKind::InvokeRead => {
                    if let Some(slot) = open.get_mut(e.pid.index()) {
                        *slot = Some(out.len());
                    }
                    out.push(ReadOp {
                        reader: e.pid,
                        register: e.target,
                        interval: OpInterval::pending(e.seq),
                        value: None,
                    });
                }
                EventKind::RespondRead => {
                    if let Some(i) = open.get_mut(e.pid.index()).and_then(Option::take) {
                        out[i].interval.respond = Some(e.seq);
                        out[i].value = Some(e.value);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Processes that crashed somewhere in the trace.
    pub fn crashed(&self) -> Vec<bool> {
        let mut out = vec![false; self.n()];
        for e in self.events_of(EventKind::Crash) {
            if let Some(c) = out.get_mut(e.pid.index()) {
                *c = true;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use proptest::prelude::*;

    fn ev(seq: Seq, pid: u32, kind: EventKind, target: u32, v: RegisterValue, site: Site) -> TraceEvent {
        TraceEvent {
            seq,
            pid: ProcessId(pid),
            kind,
            target: ProcessId(target),
            value: v,
            site,
        }
    }

    #[test]
    fn event_line_format() {
        let e = ev(7, 1, EventKind::RespondRead, 0, RegisterValue::bot(2), Site::Read);
        assert_eq!(e.to_string(), "7 1 RESPOND_READ 0 B 2 read");
        assert_eq!("7 1 RESPOND_READ 0 B 2 read".parse::<TraceEvent>().unwrap(), e);
    }

    #[test]
    fn header_carries_config() {
        let t = Trace {
            config: SystemConfig::alternating(3).with_seed(5),
            end: TraceEnd::Capped,
            events: vec![ev(
                0,
                0,
                EventKind::InvokeWrite,
                0,
                RegisterValue::of(Bit::Zero, 1),
                Site::Init,
            )],
        };
        let text = t.to_text();
        assert!(text.starts_with("#regcons n=3 proposals=010 "));
        assert!(text.lines().next().unwrap().ends_with("end=capped"));
        assert_eq!(Trace::parse(&text).unwrap(), t);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Trace::parse("").is_err());
        assert!(Trace::parse("0 0 INVOKE_WRITE 0 0 1 init\n").is_err());
        let hdr = "#regcons n=1 proposals=1 end=complete\n";
        assert!(Trace::parse(&format!("{hdr}0 0 WRITE 0 0 1 init\n")).is_err());
        assert!(Trace::parse(&format!("{hdr}0 0 INVOKE_WRITE 0 2 1 init\n")).is_err());
    }

    #[test]
    fn without_renumbers() {
        let t = Trace {
            config: SystemConfig::alternating(1),
            end: TraceEnd::Complete,
            events: vec![
                ev(
                    0,
                    0,
                    EventKind::InvokeWrite,
                    0,
                    RegisterValue::of(Bit::Zero, 1),
                    Site::Init,
                ),
                ev(
                    1,
                    0,
                    EventKind::RespondWrite,
                    0,
                    RegisterValue::of(Bit::Zero, 1),
                    Site::Init,
                ),
                ev(2, 0, EventKind::InvokeRead, 0, RegisterValue::INITIAL, Site::Read),
            ],
        };
        let t2 = t.without(|e| e.seq == 1);
        assert_eq!(t2.events.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(t2.events[1].kind, EventKind::InvokeRead);
    }

    fn arb_event() -> impl Strategy<Value = TraceEvent> {
        let kinds = prop_oneof![
            Just(EventKind::InvokeWrite),
            Just(EventKind::RespondWrite),
            Just(EventKind::InvokeRead),
            Just(EventKind::RespondRead),
            Just(EventKind::Flip),
            Just(EventKind::Decide),
            Just(EventKind::Crash),
        ];
        let sites = prop_oneof![
            Just(Site::Init),
            Just(Site::Adopt),
            Just(Site::Pause),
            Just(Site::Coin),
            Just(Site::Read),
            Just(Site::Decide),
            Just(Site::None),
        ];
        let prefer = prop_oneof![Just(Prefer::ZERO), Just(Prefer::ONE), Just(Prefer::Bot)];
        (0u64..1000, 0u32..8, kinds, 0u32..8, prefer, 0u32..50, sites).prop_map(
            |(seq, pid, kind, target, prefer, round, site)| TraceEvent {
                seq,
                pid: ProcessId(pid),
                kind,
                target: ProcessId(target),
                value: RegisterValue { prefer, round },
                site,
            },
        )
    }

    proptest! {
        #[test]
        fn event_lines_round_trip(e in arb_event()) {
            prop_assert_eq!(e.to_string().parse::<TraceEvent>().unwrap(), e);
        }
    }
}
