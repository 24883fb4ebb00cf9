//! Histories, strategy vectors and donation-game payoffs for the alternating game.
//!
//! A history of a memory-`N` game is a word of `2N` actions, oldest round
//! first: symbols `2k-1, 2k` hold the (leader, follower) pair of the round
//! `N-k+1` rounds ago, so the final pair is the most recent round. Histories
//! are numbered lexicographically with `C` before `D`, i.e. as binary numbers
//! with `C = 0`, `D = 1` and the first symbol most significant.
//!
//! Some texts describe pair `k` as "k rounds ago" (newest first). That reading
//! is incompatible with the recursive block construction of the transition
//! matrix, which only works with the oldest-first order used here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    C,
    D,
}

impl Action {
    pub fn bit(self) -> usize {
        match self {
            Action::C => 0,
            Action::D => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 0 {
            Action::C
        } else {
            Action::D
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Action::C => Action::D,
            Action::D => Action::C,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Action::C => 'C',
            Action::D => 'D',
        }
    }
}

impl TryFrom<char> for Action {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        match c {
            'C' | 'c' => Ok(Action::C),
            'D' | 'd' => Ok(Action::D),
            other => Err(Error::InvalidSymbol(other)),
        }
    }
}

/// Number of history states `4^N`.
pub fn state_count(memory: usize) -> usize {
    1usize << (2 * memory)
}

/// A remembered window of `2N` actions, oldest first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct History {
    memory: usize,
    actions: Vec<Action>,
}

impl History {
    pub fn new(memory: usize, actions: Vec<Action>) -> Result<Self> {
        if memory == 0 {
            return Err(Error::ZeroMemory);
        }
        if actions.len() != 2 * memory {
            return Err(Error::HistoryLength {
                memory,
                len: actions.len(),
            });
        }
        Ok(Self { memory, actions })
    }

    /// Parses a word such as `"CDDC"`; `|` and whitespace are ignored.
    pub fn parse(memory: usize, word: &str) -> Result<Self> {
        let actions = word
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '|')
            .map(Action::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(memory, actions)
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Row/column index of this history.
    pub fn encode(&self) -> usize {
        self.actions.iter().fold(0, |acc, a| (acc << 1) | a.bit())
    }

    pub fn decode(memory: usize, index: usize) -> Result<Self> {
        if memory == 0 {
            return Err(Error::ZeroMemory);
        }
        let len = 2 * memory;
        let actions = (0..len)
            .map(|k| Action::from_bit(index >> (len - 1 - k)))
            .collect();
        Self::new(memory, actions)
    }

    /// Index of the follower's view once the leader has played `leader`:
    /// the oldest symbol (the leader's oldest action) is forgotten and the
    /// leader's fresh move is appended.
    pub fn follower_index(&self, leader: Action) -> usize {
        follower_index(self.memory, self.encode(), leader)
    }

    /// Label with rounds separated by `|`, e.g. `CD|DC`.
    pub fn label(&self) -> String {
        self.actions
            .chunks(2)
            .map(|pair| pair.iter().map(|a| a.to_char()).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.actions {
            write!(f, "{}", a.to_char())?;
        }
        Ok(())
    }
}

pub fn encode_history(h: &History) -> usize {
    h.encode()
}

pub fn decode_history(memory: usize, index: usize) -> Result<History> {
    History::decode(memory, index)
}

/// Index-level form of [`History::follower_index`].
pub fn follower_index(memory: usize, state: usize, leader: Action) -> usize {
    ((state << 1) | leader.bit()) & (state_count(memory) - 1)
}

/// State reached from `state` after a round in which the leader played
/// `leader` and the follower played `follower`.
pub fn successor(memory: usize, state: usize, leader: Action, follower: Action) -> usize {
    ((state << 2) | (leader.bit() << 1) | follower.bit()) & (state_count(memory) - 1)
}

/// Labels for every state in index order.
pub fn state_labels(memory: usize) -> Vec<String> {
    (0..state_count(memory))
        .map(|i| History::decode(memory, i).map(|h| h.label()).unwrap_or_default())
        .collect()
}

/// Conditional cooperation probabilities indexed by history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    memory: usize,
    probs: Vec<f64>,
}

impl Strategy {
    pub fn new(memory: usize, probs: Vec<f64>) -> Result<Self> {
        if memory == 0 {
            return Err(Error::ZeroMemory);
        }
        if probs.len() != state_count(memory) {
            return Err(Error::StrategyLength {
                memory,
                len: probs.len(),
            });
        }
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ProbabilityRange { index, value });
        }
        Ok(Self { memory, probs })
    }

    /// Builds a strategy without the `[0, 1]` range check. Used for the
    /// algebraic continuation of the dynamics outside the cube.
    pub fn unchecked(memory: usize, probs: Vec<f64>) -> Result<Self> {
        if memory == 0 {
            return Err(Error::ZeroMemory);
        }
        if probs.len() != state_count(memory) {
            return Err(Error::StrategyLength {
                memory,
                len: probs.len(),
            });
        }
        Ok(Self { memory, probs })
    }

    pub fn constant(memory: usize, value: f64) -> Result<Self> {
        Self::new(memory, vec![value; state_count(memory)])
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&v| v > 0.0 && v < 1.0)
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// Donation-game parameters: cooperating costs `C` and grants `B` to the
/// partner. Per-round totals are `R = B - C`, `S = -C`, `T = B`, `P = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffParams {
    b: f64,
    c: f64,
}

impl PayoffParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < b) || !b.is_finite() {
            return Err(Error::InvalidPayoffParams { b, c });
        }
        Ok(Self { b, c })
    }

    /// `B = 1` normalisation used throughout the memory-1 analysis.
    pub fn normalized(c: f64) -> Result<Self> {
        Self::new(1.0, c)
    }

    pub fn benefit(&self) -> f64 {
        self.b
    }

    pub fn cost(&self) -> f64 {
        self.c
    }

    pub fn reward(&self) -> f64 {
        self.b - self.c
    }

    pub fn sucker(&self) -> f64 {
        -self.c
    }

    pub fn temptation(&self) -> f64 {
        self.b
    }

    pub fn punishment(&self) -> f64 {
        0.0
    }

    /// `(R, S, T, P)`.
    pub fn rstp(&self) -> [f64; 4] {
        [self.reward(), self.sucker(), self.temptation(), self.punishment()]
    }

    /// Payoff of one round keyed by (leader action, follower action).
    pub fn round_payoff(&self, leader: Action, follower: Action) -> f64 {
        self.rstp()[(leader.bit() << 1) | follower.bit()]
    }
}

/// Per-choice payoffs: choosing `C` earns the chooser `a` and the partner
/// `b`; choosing `D` earns the chooser `c` and the partner `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPayoffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RawPayoffs {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// What the chooser of `action` receives.
    pub fn own(&self, action: Action) -> f64 {
        match action {
            Action::C => self.a,
            Action::D => self.c,
        }
    }

    /// What the partner of the chooser of `action` receives.
    pub fn granted(&self, action: Action) -> f64 {
        match action {
            Action::C => self.b,
            Action::D => self.d,
        }
    }

    /// `(R, S, T, P) = (a+b, a+d, c+b, c+d)`.
    pub fn rstp(&self) -> [f64; 4] {
        [
            self.a + self.b,
            self.a + self.d,
            self.c + self.b,
            self.c + self.d,
        ]
    }
}

/// Solves for per-choice payoffs given `(B, C)` and a free offset `a`.
pub fn raw_from_donation(params: &PayoffParams, a: f64) -> RawPayoffs {
    let (b, c) = (params.benefit(), params.cost());
    RawPayoffs {
        a,
        b: -a + b,
        c: a + c,
        d: -a - c - b,
    }
}

/// `c > a` and `c - a < b - d`.
pub fn validate_raw(r: &RawPayoffs) -> bool {
    r.c > r.a && r.c - r.a < r.b - r.d
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Action::try_from(c),
            (Some(c), Some(_)) | (None, Some(c)) => Err(Error::InvalidSymbol(c)),
            (None, None) => Err(Error::InvalidSymbol(' ')),
        }
    }
}
