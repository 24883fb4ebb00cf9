//! Per-history payoff vectors and the long-run payoff function.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{build_matrix_direct, stationary, TransitionMatrix};
use crate::error::{Error, Result};
use crate::strategy::{
    raw_from_donation, state_count, Action, History, PayoffParams, RawPayoffs, Strategy,
};

/// Average winnings per round over the remembered window, one entry per
/// history state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PayoffVector {
    pub memory: usize,
    pub f: Vec<f64>,
}

impl PayoffVector {
    pub fn values(&self) -> &[f64] {
        &self.f
    }

    /// Entries in reversed index order (every action flipped).
    pub fn reversed(&self) -> Vec<f64> {
        self.f.iter().rev().copied().collect()
    }
}

/// Stacks four shifted copies of the previous level, offset by R, S, T, P,
/// then divides by the memory length.
pub fn build_payoff_vector(params: &PayoffParams, memory: usize) -> Result<PayoffVector> {
    if memory == 0 {
        return Err(Error::ZeroMemory);
    }
    let rstp = params.rstp();
    let mut totals = rstp.to_vec();
    for _ in 1..memory {
        totals = rstp
            .iter()
            .flat_map(|offset| totals.iter().map(move |v| v + offset))
            .collect();
    }
    let n = memory as f64;
    Ok(PayoffVector {
        memory,
        f: totals.into_iter().map(|v| v / n).collect(),
    })
}

/// Winnings of the leader summed over its window. In the leader's index the
/// leader's own action opens every pair.
pub fn leader_winnings(raw: &RawPayoffs, memory: usize) -> Result<Vec<f64>> {
    (0..state_count(memory))
        .map(|index| {
            let h = History::decode(memory, index)?;
            Ok(h.actions()
                .chunks(2)
                .map(|round| raw.own(round[0]) + raw.granted(round[1]))
                .sum())
        })
        .collect()
}

/// Winnings of the follower summed over its window. The follower's index
/// starts with its own oldest action and ends with the leader's fresh move,
/// so even positions are the follower's choices and odd positions are what
/// the leader granted.
pub fn follower_winnings(raw: &RawPayoffs, memory: usize) -> Result<Vec<f64>> {
    (0..state_count(memory))
        .map(|index| {
            let h = History::decode(memory, index)?;
            let mut total = 0.0;
            for (pos, &action) in h.actions().iter().enumerate() {
                total += if pos % 2 == 0 {
                    raw.own(action)
                } else {
                    raw.granted(action)
                };
            }
            Ok(total)
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Both players' per-history winnings coincide for the per-choice payoffs
/// generated from `params` (with offset `a = 0`).
pub fn check_well_defined(params: &PayoffParams, memory: usize) -> bool {
    let raw = raw_from_donation(params, 0.0);
    check_well_defined_raw(&raw, &raw, memory)
}

/// Variant taking separate per-choice payoffs for each side, so a corrupted
/// construction can be detected.
pub fn check_well_defined_raw(leader: &RawPayoffs, follower: &RawPayoffs, memory: usize) -> bool {
    match (
        leader_winnings(leader, memory),
        follower_winnings(follower, memory),
    ) {
        (Ok(a), Ok(b)) => max_abs_diff(&a, &b) < 1e-12,
        _ => false,
    }
}

/// `<nu, f>` using the stationary distribution of the chain.
pub fn payoff_by_stationary(p: &Strategy, q: &Strategy, params: &PayoffParams) -> Result<f64> {
    let m = build_matrix_direct(p, q)?;
    let f = build_payoff_vector(params, p.memory())?;
    let nu = stationary(&m)?;
    Ok(nu.dot(&f.f))
}

pub(crate) const DETERMINANT_TOL: f64 = 1e-14;

/// Ratio of determinants: `M - I` with its last column replaced by `f`
/// over the same matrix with the last column replaced by ones.
pub fn payoff_by_determinant(p: &Strategy, q: &Strategy, params: &PayoffParams) -> Result<f64> {
    let m = build_matrix_direct(p, q)?;
    let f = build_payoff_vector(params, p.memory())?;
    determinant_ratio(&m, &f.f)
}

pub(crate) fn determinant_ratio(m: &TransitionMatrix, f: &[f64]) -> Result<f64> {
    let n = m.dim();
    let mut shifted: DMatrix<f64> = m.entries().clone();
    for i in 0..n {
        shifted[(i, i)] -= 1.0;
    }
    let mut ones = shifted.clone();
    for i in 0..n {
        shifted[(i, n - 1)] = f[i];
        ones[(i, n - 1)] = 1.0;
    }
    let den = ones.determinant();
    if !(den.abs() >= DETERMINANT_TOL) {
        return Err(Error::DeterminantSingular(den));
    }
    Ok(shifted.determinant() / den)
}

/// Payoff of each round keyed by the state it leads to; handy for the
/// simulator and for tests.
pub fn round_payoff_of_state(params: &PayoffParams, state: usize) -> f64 {
    let leader = Action::from_bit(state >> 1);
    let follower = Action::from_bit(state);
    params.round_payoff(leader, follower)
}
