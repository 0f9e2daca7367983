//! Fixtures shared by the benchmarks.

use regcons::explorer::ExplorationConfig;
use regcons::harness::run_once;
use regcons::{AdversaryKind, Bit, SystemConfig, Trace};

pub fn system(n: usize, adversary: AdversaryKind) -> SystemConfig {
    SystemConfig::alternating(n)
        .with_adversary(adversary)
        .with_crash_budget(0)
}

/// A finished trace to feed the monitors.
pub fn sample_trace(n: usize, seed: u64) -> Trace {
    run_once(&system(n, AdversaryKind::UniformRandom), seed).expect("fixture run")
}

/// A two-process exploration small enough to time repeatedly.
pub fn small_exploration(max_events: usize, round_cap: u32) -> ExplorationConfig {
    let mut c = ExplorationConfig::new(vec![Bit::Zero, Bit::One]);
    c.max_events = max_events;
    c.round_cap = round_cap;
    c
}
