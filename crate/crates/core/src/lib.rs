//! Simulation of randomized binary consensus built from single-writer
//! multi-reader registers.
//!
//! Every process repeatedly writes a `(preference, round)` pair into its own
//! register, reads everyone's register, and either decides, adopts the
//! leaders' value, pauses, or flips a coin. Registers can behave atomically,
//! regularly, or linearizably with an adversary-chosen linearization; a strong
//! adversary picks every interleaving, every read result it is allowed to pick,
//! and every crash.
//!
//! * [`sim`] holds the whole-system state and its step function.
//! * [`adversary`] ships the schedulers.
//! * [`monitors`] check safety and progress properties on finished traces.
//! * [`explorer`] enumerates every schedule of a small system.
//! * [`harness`] runs seeded campaigns and the scripted experiments.

pub mod adversary;
pub mod config;
pub mod error;
pub mod explorer;
pub mod harness;
pub mod monitors;
pub mod protocol;
pub mod registers;
pub mod sim;
pub mod trace;
pub mod types;

pub use adversary::{make_adversary, Adversary, AdversaryContext};
pub use config::{AdversaryKind, CoinMode, SystemConfig};
pub use error::{Error, Result};
pub use explorer::{explore, ExplorationConfig, ExplorationReport, SearchGoal};
pub use harness::{run_campaign, run_once, RunStats};
pub use monitors::{run_all, Status, Verdict};
pub use protocol::{ProcessState, View};
pub use registers::{Linearizer, RegisterState};
pub use sim::{CoinSource, ScheduleChoice, SystemState};
pub use trace::{EventKind, Site, Trace, TraceEnd, TraceEvent};
pub use types::{Bit, OpInterval, Prefer, ProcessId, RegisterModel, RegisterValue, Seq};
