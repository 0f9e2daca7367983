//! Shared domain types: register values, process ids, operation intervals and
//! the precedence predicates every other module builds on.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// A binary consensus value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub const ALL: [Bit; 2] = [Bit::Zero, Bit::One];

    pub fn complement(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    pub fn from_bool(b: bool) -> Bit {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The `prefer` field of a register: a value, or the pause marker `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefer {
    Val(Bit),
    Bot,
}

impl Prefer {
    pub const ZERO: Prefer = Prefer::Val(Bit::Zero);
    pub const ONE: Prefer = Prefer::Val(Bit::One);

    /// `1 - v`; the pause marker has no complement.
    pub fn complement(self) -> Result<Prefer, Error> {
        match self {
            Prefer::Val(b) => Ok(Prefer::Val(b.complement())),
            Prefer::Bot => Err(Error::Domain("complement of the pause marker is undefined".into())),
        }
    }

    pub fn bit(self) -> Option<Bit> {
        match self {
            Prefer::Val(b) => Some(b),
            Prefer::Bot => None,
        }
    }

    pub fn is_bot(self) -> bool {
        matches!(self, Prefer::Bot)
    }

    pub fn token(self) -> char {
        match self {
            Prefer::Val(Bit::Zero) => '0',
            Prefer::Val(Bit::One) => '1',
            Prefer::Bot => 'B',
        }
    }

    pub fn from_token(s: &str) -> Result<Prefer, Error> {
        match s {
            "0" => Ok(Prefer::ZERO),
            "1" => Ok(Prefer::ONE),
            "B" => Ok(Prefer::Bot),
            other => Err(Error::Parse(format!("bad prefer token {other:?}"))),
        }
    }
}

impl From<Bit> for Prefer {
    fn from(b: Bit) -> Self {
        Prefer::Val(b)
    }
}

impl fmt::Display for Prefer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

/// The `(prefer, round)` pair held by every register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegisterValue {
    pub prefer: Prefer,
    pub round: u32,
}

impl RegisterValue {
    /// Every register starts out holding `(B, 0)`.
    pub const INITIAL: RegisterValue = RegisterValue {
        prefer: Prefer::Bot,
        round: 0,
    };

    /// Round 0 is reserved for the initial value.
    pub fn new(prefer: Prefer, round: u32) -> Result<RegisterValue, Error> {
        if round == 0 && prefer != Prefer::Bot {
            return Err(Error::Domain(format!(
                "round 0 only holds the initial value, got prefer {prefer}"
            )));
        }
        Ok(RegisterValue { prefer, round })
    }

    pub fn of(prefer: impl Into<Prefer>, round: u32) -> RegisterValue {
        RegisterValue {
            prefer: prefer.into(),
            round,
        }
    }

    pub fn bot(round: u32) -> RegisterValue {
        RegisterValue {
            prefer: Prefer::Bot,
            round,
        }
    }

    pub fn is_initial(&self) -> bool {
        *self == Self::INITIAL
    }
}

impl fmt::Display for RegisterValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.prefer, self.round)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> {
        (0..n as u32).map(ProcessId)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Position in the global event sequence; one event per tick.
pub type Seq = u64;

/// The span of a register operation. `respond == None` means still pending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpInterval {
    pub invoke: Seq,
    pub respond: Option<Seq>,
}

impl OpInterval {
    pub fn complete(invoke: Seq, respond: Seq) -> OpInterval {
        OpInterval {
            invoke,
            respond: Some(respond),
        }
    }

    pub fn pending(invoke: Seq) -> OpInterval {
        OpInterval { invoke, respond: None }
    }
}

/// `a` precedes `b` when `a` responded before `b` was invoked.
pub fn precedes(a: &OpInterval, b: &OpInterval) -> bool {
    matches!(a.respond, Some(r) if r < b.invoke)
}

pub fn concurrent(a: &OpInterval, b: &OpInterval) -> bool {
    !precedes(a, b) && !precedes(b, a)
}

/// Register semantics used by a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegisterModel {
    Atomic,
    Regular,
    Linearizable,
}

impl RegisterModel {
    pub fn name(self) -> &'static str {
        match self {
            RegisterModel::Atomic => "atomic",
            RegisterModel::Regular => "regular",
            RegisterModel::Linearizable => "linearizable",
        }
    }
}

impl FromStr for RegisterModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "atomic" => Ok(RegisterModel::Atomic),
            "regular" => Ok(RegisterModel::Regular),
            "linearizable" => Ok(RegisterModel::Linearizable),
            other => Err(Error::Config(format!("unknown register model {other:?}"))),
        }
    }
}

impl fmt::Display for RegisterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: Seq, b: Option<Seq>) -> OpInterval {
        OpInterval { invoke: a, respond: b }
    }

    #[test]
    fn precedes_examples() {
        assert!(precedes(&iv(1, Some(2)), &iv(3, Some(4))));
        assert!(!precedes(&iv(1, Some(4)), &iv(2, Some(3))));
        assert!(!precedes(&iv(1, None), &iv(5, Some(6))));
    }

    #[test]
    fn concurrent_examples() {
        assert!(concurrent(&iv(1, Some(4)), &iv(2, Some(3))));
        assert!(!concurrent(&iv(1, Some(2)), &iv(3, Some(4))));
        assert!(concurrent(&iv(1, None), &iv(2, None)));
    }

    #[test]
    fn complement_examples() {
        assert_eq!(Prefer::ZERO.complement().unwrap(), Prefer::ONE);
        assert_eq!(Prefer::ONE.complement().unwrap(), Prefer::ZERO);
        assert!(Prefer::Bot.complement().is_err());
    }

    #[test]
    fn round_zero_is_reserved() {
        assert!(RegisterValue::new(Prefer::Bot, 0).is_ok());
        assert!(RegisterValue::new(Prefer::ONE, 0).is_err());
        assert!(RegisterValue::new(Prefer::ONE, 3).is_ok());
    }

    fn interval() -> impl Strategy<Value = OpInterval> {
        (0u64..50, proptest::option::of(1u64..20)).prop_map(|(a, d)| OpInterval {
            invoke: a,
            respond: d.map(|d| a + d),
        })
    }

    proptest! {
        #[test]
        fn interval_trichotomy(a in interval(), b in interval()) {
            let ab = precedes(&a, &b);
            let ba = precedes(&b, &a);
            prop_assert!(!(ab && ba));
            prop_assert_eq!(concurrent(&a, &b), !ab && !ba);
            prop_assert_eq!([ab, ba, concurrent(&a, &b)].iter().filter(|x| **x).count(), 1);
        }
    }
}
