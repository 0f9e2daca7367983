//! Run configuration and its flat `key=value` encoding, shared by config
//! files, trace headers and the CLI.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{Bit, RegisterModel};

pub const DEFAULT_MAX_EVENTS: usize = 100_000;
pub const DEFAULT_CRASH_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdversaryKind {
    RoundRobin,
    UniformRandom,
    StaleRead,
    DisagreementMaximizer,
    ScriptedAttack,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 5] = [
        AdversaryKind::RoundRobin,
        AdversaryKind::UniformRandom,
        AdversaryKind::StaleRead,
        AdversaryKind::DisagreementMaximizer,
        AdversaryKind::ScriptedAttack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::RoundRobin => "round_robin",
            AdversaryKind::UniformRandom => "uniform_random",
            AdversaryKind::StaleRead => "stale_read",
            AdversaryKind::DisagreementMaximizer => "disagreement_maximizer",
            AdversaryKind::ScriptedAttack => "appendix_attack",
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown adversary {s:?}")))
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where coin flips come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoinMode {
    /// Fair coin from the run's seeded coin stream.
    Fair,
    /// At `round`, every flip returns the value of the first write of round
    /// `round - 1` to complete (or its complement when `inverted`). Earlier
    /// rounds get the complement of that round's first-completed value, later
    /// rounds are fair.
    Forced { round: u32, inverted: bool },
}

impl fmt::Display for CoinMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoinMode::Fair => f.write_str("fair"),
            CoinMode::Forced { round, inverted: false } => write!(f, "forced@{round}"),
            CoinMode::Forced { round, inverted: true } => write!(f, "inverted@{round}"),
        }
    }
}

impl FromStr for CoinMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fair" {
            return Ok(CoinMode::Fair);
        }
        let (kind, round) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("bad coin mode {s:?}")))?;
        let round: u32 = round
            .parse()
            .map_err(|_| Error::Config(format!("bad coin round in {s:?}")))?;
        match kind {
            "forced" => Ok(CoinMode::Forced { round, inverted: false }),
            "inverted" => Ok(CoinMode::Forced { round, inverted: true }),
            _ => Err(Error::Config(format!("bad coin mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n: usize,
    pub proposals: Vec<Bit>,
    pub model: RegisterModel,
    pub adversary: AdversaryKind,
    pub seed: u64,
    pub max_events: usize,
    pub crash_budget: usize,
    /// Per-step probability that a crash-capable adversary spends budget.
    pub crash_rate: f64,
    pub coin: CoinMode,
}

impl SystemConfig {
    pub fn new(proposals: Vec<Bit>) -> SystemConfig {
        SystemConfig {
            n: proposals.len(),
            proposals,
            model: RegisterModel::Regular,
            adversary: AdversaryKind::UniformRandom,
            seed: 0,
            max_events: DEFAULT_MAX_EVENTS,
            crash_budget: 0,
            crash_rate: DEFAULT_CRASH_RATE,
            coin: CoinMode::Fair,
        }
    }

    /// `n` processes proposing 0,1,0,1,...
    pub fn alternating(n: usize) -> SystemConfig {
        SystemConfig::new(alternating_proposals(n))
    }

    pub fn with_model(mut self, model: RegisterModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_adversary(mut self, adversary: AdversaryKind) -> Self {
        self.adversary = adversary;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_events(mut self, max_events: usize) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn with_crash_budget(mut self, budget: usize) -> Self {
        self.crash_budget = budget;
        self
    }

    pub fn with_crash_rate(mut self, rate: f64) -> Self {
        self.crash_rate = rate;
        self
    }

    pub fn with_coin(mut self, coin: CoinMode) -> Self {
        self.coin = coin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.proposals.len() != self.n {
            return Err(Error::Config(format!(
                "{} proposals given for n = {}",
                self.proposals.len(),
                self.n
            )));
        }
        if self.max_events == 0 {
            return Err(Error::Config("max_events must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.crash_rate) {
            return Err(Error::Config("crash_rate must lie in [0, 1]".into()));
        }
        if let CoinMode::Forced { round, .. } = self.coin {
            if round < 2 {
                return Err(Error::Config("forced coin round must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// Builds a config from `key=value` pairs (later pairs win). Keys that are
    /// not config fields are handed back for the caller to interpret.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<(SystemConfig, BTreeMap<String, String>)>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut n: Option<usize> = None;
        let mut proposals: Option<Vec<Bit>> = None;
        let mut cfg = SystemConfig::alternating(2);
        let mut extra = BTreeMap::new();
        for (k, v) in pairs {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            match k {
                "n" => n = Some(parse_num(k, v)?),
                "proposals" => proposals = Some(parse_proposals(v)?),
                "model" => cfg.model = v.parse()?,
                "adversary" => cfg.adversary = v.parse()?,
                "seed" => cfg.seed = parse_num(k, v)?,
                "max_events" => cfg.max_events = parse_num(k, v)?,
                "crash_budget" => cfg.crash_budget = parse_num(k, v)?,
                "crash_rate" => {
                    cfg.crash_rate = v.parse().map_err(|_| Error::Config(format!("bad crash_rate {v:?}")))?
                }
                "coin" => cfg.coin = v.parse()?,
                _ => {
                    extra.insert(k.to_string(), v.to_string());
                }
            }
        }
        match (n, proposals) {
            (Some(n), Some(p)) => {
                cfg.n = n;
                cfg.proposals = p;
            }
            (Some(n), None) => {
                cfg.n = n;
                cfg.proposals = alternating_proposals(n);
            }
            (None, Some(p)) => {
                cfg.n = p.len();
                cfg.proposals = p;
            }
            (None, None) => {}
        }
        cfg.validate()?;
        Ok((cfg, extra))
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("proposals", format_proposals(&self.proposals)),
            ("model", self.model.to_string()),
            ("adversary", self.adversary.to_string()),
            ("seed", self.seed.to_string()),
            ("max_events", self.max_events.to_string()),
            ("crash_budget", self.crash_budget.to_string()),
            ("crash_rate", self.crash_rate.to_string()),
            ("coin", self.coin.to_string()),
        ]
    }
}

pub fn alternating_proposals(n: usize) -> Vec<Bit> {
    (0..n).map(|i| Bit::from_bool(i % 2 == 1)).collect()
}

/// Accepts `0110` or `0,1,1,0`.
pub fn parse_proposals(s: &str) -> Result<Vec<Bit>> {
    let out: Result<Vec<Bit>> = s
        .chars()
        .filter(|c| *c != ',' && !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(Bit::Zero),
            '1' => Ok(Bit::One),
            other => Err(Error::Config(format!("bad proposal {other:?}"))),
        })
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err(Error::Config("empty proposal list".into()));
    }
    Ok(out)
}

pub fn format_proposals(p: &[Bit]) -> String {
    p.iter().map(|b| b.to_string()).collect()
}

/// Parses a `key=value` config file. Blank lines and `#` comments are skipped.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
}
