//! Permutation symmetries of the alternating game.
//!
//! The four admissible relabellings flip the follower's actions (`J2`), the
//! leader's actions (`J3`), both (`J4`, which reverses the state order), or
//! nothing (`J1`). At memory `N` they act on every remembered pair, which is
//! the `N`-fold Kronecker power of the memory-1 matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::chain::{build_matrix_direct, stationary, successors, TransitionMatrix};
use crate::error::{Error, Result};
use crate::payoff::{build_payoff_vector, determinant_ratio};
use crate::strategy::{follower_index, state_count, Action, PayoffParams, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    J1,
    J2,
    J3,
    J4,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::J1, Label::J2, Label::J3, Label::J4];

    /// Whether the (leader, follower) actions of each pair are flipped.
    fn flips(self) -> (bool, bool) {
        match self {
            Label::J1 => (false, false),
            Label::J2 => (false, true),
            Label::J3 => (true, false),
            Label::J4 => (true, true),
        }
    }

    fn from_flips(leader: bool, follower: bool) -> Self {
        match (leader, follower) {
            (false, false) => Label::J1,
            (false, true) => Label::J2,
            (true, false) => Label::J3,
            (true, true) => Label::J4,
        }
    }

    /// Composition as group elements (`Z2 x Z2`).
    pub fn compose(self, other: Label) -> Label {
        let (a, b) = self.flips();
        let (c, d) = other.flips();
        Label::from_flips(a ^ c, b ^ d)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "J1" => Ok(Label::J1),
            "J2" => Ok(Label::J2),
            "J3" => Ok(Label::J3),
            "J4" => Ok(Label::J4),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Permutation matrix stored as an index map: `(J v)_i = v[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdmissibleMatrix {
    pub label: Label,
    pub memory: usize,
    pub perm: Vec<usize>,
}

/// The explicit memory-1 permutations.
fn base_perm(label: Label) -> [usize; 4] {
    match label {
        Label::J1 => [0, 1, 2, 3],
        Label::J2 => [1, 0, 3, 2],
        Label::J3 => [2, 3, 0, 1],
        Label::J4 => [3, 2, 1, 0],
    }
}

/// Kronecker product of two permutations: block `i` of the result is the
/// inner permutation placed at block `outer[i]`.
pub fn kronecker(outer: &[usize], inner: &[usize]) -> Vec<usize> {
    let n = inner.len();
    let mut out = Vec::with_capacity(outer.len() * n);
    for &o in outer {
        for &i in inner {
            out.push(o * n + i);
        }
    }
    out
}

/// Memory-1 matrix, extended block-wise: each 1 of the base pattern is
/// replaced by the previous level and each 0 by a zero block.
pub fn build_admissible(label: Label, memory: usize) -> Result<AdmissibleMatrix> {
    if memory == 0 {
        return Err(Error::ZeroMemory);
    }
    let base = base_perm(label);
    let mut perm = base.to_vec();
    for _ in 1..memory {
        perm = kronecker(&base, &perm);
    }
    Ok(AdmissibleMatrix {
        label,
        memory,
        perm,
    })
}

impl AdmissibleMatrix {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&j| v[j]).collect()
    }

    /// `J A J^T`.
    pub fn conjugate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        conjugate_by(&self.perm, a)
    }

    /// `self` applied after `other`.
    pub fn compose(&self, other: &AdmissibleMatrix) -> Vec<usize> {
        compose(&self.perm, &other.perm)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.perm.len();
        DMatrix::from_fn(n, n, |i, j| if self.perm[i] == j { 1.0 } else { 0.0 })
    }
}

pub fn compose(first: &[usize], second: &[usize]) -> Vec<usize> {
    // (A B v)_i = (B v)_{a(i)} = v_{b(a(i))}
    first.iter().map(|&i| second[i]).collect()
}

pub fn conjugate_by(perm: &[usize], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = perm.len();
    DMatrix::from_fn(n, n, |i, j| a[(perm[i], perm[j])])
}

/// XOR masks flipping the chosen roles in a leader index (first symbol of
/// each pair is the leader's) and in a follower index (first symbol of each
/// pair is the follower's).
fn masks(memory: usize, leader: bool, follower: bool) -> (usize, usize) {
    let mut p_mask = 0;
    let mut q_mask = 0;
    for _ in 0..memory {
        p_mask = (p_mask << 2) | ((leader as usize) << 1) | follower as usize;
        q_mask = (q_mask << 2) | ((follower as usize) << 1) | leader as usize;
    }
    (p_mask, q_mask)
}

/// Strategies `(p', q')` with `J M(p, q) J^T = M(p', q')`.
///
/// Flipping the leader's actions complements `p` and relabels both indices;
/// flipping the follower's actions complements `q` instead.
pub fn conjugation_action(label: Label, p: &Strategy, q: &Strategy) -> Result<(Strategy, Strategy)> {
    if p.memory() != q.memory() {
        return Err(Error::MemoryMismatch(p.memory(), q.memory()));
    }
    let memory = p.memory();
    if memory > 3 {
        return Err(Error::UnsupportedMemory(memory));
    }
    let (leader, follower) = label.flips();
    let (p_mask, q_mask) = masks(memory, leader, follower);
    let n = state_count(memory);
    let p_new = (0..n)
        .map(|h| {
            let v = p.get(h ^ p_mask);
            if leader {
                1.0 - v
            } else {
                v
            }
        })
        .collect();
    let q_new = (0..n)
        .map(|k| {
            let v = q.get(k ^ q_mask);
            if follower {
                1.0 - v
            } else {
                v
            }
        })
        .collect();
    Ok((Strategy::new(memory, p_new)?, Strategy::new(memory, q_new)?))
}

/// Reads `(p, q)` back from a matrix with the alternating-game sparsity
/// pattern. `None` if the pattern is violated or the follower probabilities
/// read from different rows disagree.
pub fn recover_strategies(m: &DMatrix<f64>, memory: usize, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = state_count(memory);
    if m.nrows() != n || m.ncols() != n {
        return None;
    }
    let mut p = vec![0.0; n];
    let mut q: Vec<Option<f64>> = vec![None; n];
    for h in 0..n {
        let succ = successors(memory, h);
        for j in 0..n {
            if !succ.contains(&j) && m[(h, j)].abs() > tol {
                return None;
            }
        }
        let [cc, cd, dc, dd] = succ.map(|j| m[(h, j)]);
        p[h] = cc + cd;
        let mut record = |k: usize, yes: f64, total: f64| -> bool {
            if total.abs() <= tol {
                return true;
            }
            let v = yes / total;
            match q[k] {
                Some(old) => (old - v).abs() <= tol.max(1e-9),
                None => {
                    q[k] = Some(v);
                    true
                }
            }
        };
        if !record(follower_index(memory, h, Action::C), cc, cc + cd)
            || !record(follower_index(memory, h, Action::D), dc, dc + dd)
        {
            return None;
        }
    }
    Some((p, q.into_iter().map(|v| v.unwrap_or(0.5)).collect()))
}

pub const SYMMETRY_TOL: f64 = 1e-10;

/// Outcome of checking one permutation against one strategy pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// `J M J^T` is again a game matrix.
    pub structure: bool,
    /// It equals `M(p', q')` for the predicted conjugated strategies.
    pub matches_action: bool,
    /// Stationary distribution transforms as `nu -> J nu`.
    pub stationary_residual: f64,
    /// `|A(p, q) - A'|` where `A'` is the payoff of the conjugated chain with
    /// the permuted payoff vector.
    pub payoff_residual: f64,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.structure
            && self.matches_action
            && self.stationary_residual < SYMMETRY_TOL
            && self.payoff_residual < SYMMETRY_TOL
    }
}

/// Checks a labelled admissible matrix against `(p, q)`.
pub fn admissibility_report(
    label: Label,
    p: &Strategy,
    q: &Strategy,
    params: &PayoffParams,
) -> Result<AdmissibilityReport> {
    let j = build_admissible(label, p.memory())?;
    let mut report = permutation_report(&j.perm, p, q, params)?;
    let (pp, qq) = conjugation_action(label, p, q)?;
    let predicted = build_matrix_direct(&pp, &qq)?;
    let m = build_matrix_direct(p, q)?;
    let conj = j.conjugate(m.entries());
    report.matches_action = (conj - predicted.entries()).abs().max() < 1e-14;
    Ok(report)
}

/// Structural and payoff checks for an arbitrary permutation.
pub fn permutation_report(
    perm: &[usize],
    p: &Strategy,
    q: &Strategy,
    params: &PayoffParams,
) -> Result<AdmissibilityReport> {
    let memory = p.memory();
    let m = build_matrix_direct(p, q)?;
    let conj = conjugate_by(perm, m.entries());
    let recovered = recover_strategies(&conj, memory, 1e-14);
    let structure = match &recovered {
        Some((pp, qq)) => {
            let rebuilt = build_matrix_direct(
                &Strategy::unchecked(memory, pp.clone())?,
                &Strategy::unchecked(memory, qq.clone())?,
            )?;
            (rebuilt.entries() - &conj).abs().max() < 1e-12
        }
        None => false,
    };
    let f = build_payoff_vector(params, memory)?;
    let nu = stationary(&m)?;
    let permuted = |v: &[f64]| -> Vec<f64> { perm.iter().map(|&i| v[i]).collect() };
    let conj_chain = TransitionMatrix::from_entries(memory, conj);
    let stationary_residual = match stationary(&conj_chain) {
        Ok(nu2) => nu2
            .nu
            .iter()
            .zip(permuted(&nu.nu))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let original = nu.dot(&f.f);
    let payoff_residual = match determinant_ratio(&conj_chain, &permuted(&f.f)) {
        Ok(a) => (a - original).abs(),
        Err(_) => f64::INFINITY,
    };
    Ok(AdmissibilityReport {
        structure,
        matches_action: structure,
        stationary_residual,
        payoff_residual,
    })
}

/// `true` when the labelled matrix maps the game matrix of `(p, q)` to a game
/// matrix and leaves the payoff unchanged.
pub fn verify_admissibility(label: Label, memory: usize, p: &Strategy, q: &Strategy, params: &PayoffParams) -> bool {
    if p.memory() != memory || q.memory() != memory {
        return false;
    }
    admissibility_report(label, p, q, params)
        .map(|r| r.passed())
        .unwrap_or(false)
}

/// Same check for an arbitrary permutation of the states.
pub fn verify_permutation(perm: &[usize], p: &Strategy, q: &Strategy, params: &PayoffParams) -> bool {
    permutation_report(perm, p, q, params)
        .map(|r| r.passed())
        .unwrap_or(false)
}

fn rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or(Error::Singular)
}

/// Exact `(R, S, T, P)` for the donation game, derived from `B` and `C`
/// without the rounding of `B - C`.
pub fn exact_rstp(params: &PayoffParams) -> Result<[BigRational; 4]> {
    let b = rational(params.benefit())?;
    let c = rational(params.cost())?;
    Ok([&b - &c, -c.clone(), b, BigRational::from_integer(0.into())])
}

/// Exact payoff vector over the rationals.
pub fn exact_payoff_vector(rstp: &[BigRational; 4], memory: usize) -> Vec<BigRational> {
    let mut totals = rstp.to_vec();
    for _ in 1..memory {
        totals = rstp
            .iter()
            .flat_map(|offset| totals.iter().map(move |v| v + offset))
            .collect();
    }
    let n = BigRational::from_integer((memory as u64).into());
    totals.into_iter().map(|v| v / &n).collect()
}

/// `-f + constant * 1 == J4 f` over the rationals.
pub fn reversal_holds(f: &[BigRational], constant: &BigRational) -> bool {
    f.iter()
        .zip(f.iter().rev())
        .all(|(v, r)| &(constant - v) == r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversalCheck {
    pub holds: bool,
    /// `R + P`.
    pub constant: f64,
}

/// Exact reversal identity for the payoff vector of `params`.
pub fn reversal_identity_check(params: &PayoffParams, memory: usize) -> Result<ReversalCheck> {
    reversal_identity_exact(exact_rstp(params)?, memory)
}

/// Reversal identity for arbitrary floating-point `(R, S, T, P)`, each taken
/// as the dyadic rational it represents. It holds iff `R + P = S + T`.
pub fn reversal_identity_for(rstp: [f64; 4], memory: usize) -> Result<ReversalCheck> {
    let exact = [
        rational(rstp[0])?,
        rational(rstp[1])?,
        rational(rstp[2])?,
        rational(rstp[3])?,
    ];
    reversal_identity_exact(exact, memory)
}

fn reversal_identity_exact(rstp: [BigRational; 4], memory: usize) -> Result<ReversalCheck> {
    if memory == 0 {
        return Err(Error::ZeroMemory);
    }
    let f = exact_payoff_vector(&rstp, memory);
    let constant = &rstp[0] + &rstp[3];
    let constant_f = rstp[0].to_f64().unwrap_or(f64::NAN) + rstp[3].to_f64().unwrap_or(f64::NAN);
    Ok(ReversalCheck {
        holds: reversal_holds(&f, &constant),
        constant: constant_f,
    })
}

/// Whether the composition table of the four labels is that of `Z2 x Z2`,
/// checked on the actual permutations at `memory`.
pub fn group_table_is_klein(memory: usize) -> Result<bool> {
    let mats: Vec<AdmissibleMatrix> = Label::ALL
        .iter()
        .map(|&l| build_admissible(l, memory))
        .collect::<Result<_>>()?;
    let identity: Vec<usize> = (0..state_count(memory)).collect();
    for a in &mats {
        if a.compose(a) != identity {
            return Ok(false);
        }
        for b in &mats {
            let product = a.compose(b);
            let expected = build_admissible(a.label.compose(b.label), memory)?;
            if product != expected.perm || product != b.compose(a) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = vec![items.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            out.push(items.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn close_to_entry_or_complement(v: f64, pool: &[f64]) -> bool {
    pool.iter()
        .any(|&w| (v - w).abs() < 1e-12 || (v - (1.0 - w)).abs() < 1e-12)
}

/// Memory-1 permutations that conjugate `M(p, q)` into a game matrix whose
/// leader is built from `q` and whose follower is built from `p`
/// (entries possibly relabelled or complemented). Generic `(p, q)` should
/// give an empty list.
pub fn player_exchange_candidates(p: &Strategy, q: &Strategy) -> Result<Vec<Vec<usize>>> {
    if p.memory() != 1 || q.memory() != 1 {
        return Err(Error::RequiresMemoryOne(p.memory()));
    }
    let m = build_matrix_direct(p, q)?;
    let mut hits = Vec::new();
    for perm in all_permutations(4) {
        let conj = conjugate_by(&perm, m.entries());
        let Some((pp, qq)) = recover_strategies(&conj, 1, 1e-14) else {
            continue;
        };
        let exchanged = pp.iter().all(|&v| close_to_entry_or_complement(v, q.probs()))
            && qq.iter().all(|&v| close_to_entry_or_complement(v, p.probs()));
        if exchanged {
            hits.push(perm);
        }
    }
    Ok(hits)
}

/// Memory-1 permutations preserving the game structure for `(p, q)`.
pub fn structure_preserving(p: &Strategy, q: &Strategy) -> Result<Vec<Vec<usize>>> {
    let m = build_matrix_direct(p, q)?;
    let memory = p.memory();
    Ok(all_permutations(state_count(memory))
        .into_iter()
        .filter(|perm| recover_strategies(&conjugate_by(perm, m.entries()), memory, 1e-14).is_some())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PayoffParams {
        PayoffParams::normalized(0.3).unwrap()
    }

    fn interior(rng: &mut impl Rng, memory: usize) -> Strategy {
        Strategy::new(
            memory,
            (0..state_count(memory))
                .map(|_| rng.random_range(0.02..0.98))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn base_matrices() {
        assert_eq!(build_admissible(Label::J4, 1).unwrap().perm, vec![3, 2, 1, 0]);
        assert_eq!(
            build_admissible(Label::J1, 2).unwrap().perm,
            (0..16).collect::<Vec<_>>()
        );
        let j2 = build_admissible(Label::J2, 1).unwrap();
        let j3 = build_admissible(Label::J3, 1).unwrap();
        let j4 = build_admissible(Label::J4, 1).unwrap();
        assert_eq!(j2.compose(&j3), j4.perm);
        assert_eq!(j3.compose(&j2), j4.perm);
        assert_eq!(&j2.dense() * &j3.dense(), j4.dense());
    }

    #[test]
    fn reversal_is_j4_at_every_memory() {
        for memory in 1..=3 {
            let j4 = build_admissible(Label::J4, memory).unwrap();
            let n = state_count(memory);
            assert_eq!(j4.perm, (0..n).rev().collect::<Vec<_>>());
        }
    }

    #[test]
    fn action_examples() {
        let p = Strategy::new(1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = Strategy::new(1, vec![0.5, 0.6, 0.7, 0.8]).unwrap();
        let (p1, q1) = conjugation_action(Label::J1, &p, &q).unwrap();
        assert_eq!((&p1, &q1), (&p, &q));

        let (p3, q3) = conjugation_action(Label::J3, &p, &q).unwrap();
        let want = [0.7, 0.6, 0.9, 0.8];
        assert!(p3.probs().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(q3.probs(), &[0.6, 0.5, 0.8, 0.7]);

        let (p2, q2) = conjugation_action(Label::J2, &p, &q).unwrap();
        assert_eq!(p2.probs(), &[0.2, 0.1, 0.4, 0.3]);
        // the follower's own action is flipped: q'_CC = 1 - q_DC
        assert!((q2.get(0) - (1.0 - 0.7)).abs() < 1e-15);
        assert!((q2.get(1) - (1.0 - 0.8)).abs() < 1e-15);
        let (pp, qq) = conjugation_action(Label::J2, &p2, &q2).unwrap();
        assert!(pp.probs().iter().zip(p.probs()).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(qq.probs().iter().zip(q.probs()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn all_labels_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for memory in [1, 2] {
            for _ in 0..30 {
                let p = interior(&mut rng, memory);
                let q = interior(&mut rng, memory);
                for label in Label::ALL {
                    let report = admissibility_report(label, &p, &q, &params()).unwrap();
                    assert!(report.passed(), "{label} memory {memory}: {report:?}");
                }
            }
        }
    }

    #[test]
    fn reversed_kronecker_order_is_the_same_matrix() {
        for label in Label::ALL {
            let base = base_perm(label);
            let a = kronecker(&base, &kronecker(&base, &base));
            let b = kronecker(&kronecker(&base, &base), &base);
            assert_eq!(a, b);
            assert_eq!(a, build_admissible(label, 3).unwrap().perm);
        }
    }

    #[test]
    fn only_four_permutations_preserve_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let p = interior(&mut rng, 1);
        let q = interior(&mut rng, 1);
        let mut found = structure_preserving(&p, &q).unwrap();
        found.sort();
        let mut expected: Vec<Vec<usize>> = Label::ALL.iter().map(|&l| base_perm(l).to_vec()).collect();
        expected.sort();
        assert_eq!(found, expected);
        for perm in all_permutations(4) {
            let admissible = expected.contains(&perm);
            assert_eq!(verify_permutation(&perm, &p, &q, &params()), admissible, "{perm:?}");
        }
    }

    #[test]
    fn no_player_exchange() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let p = interior(&mut rng, 1);
            let q = interior(&mut rng, 1);
            assert!(player_exchange_candidates(&p, &q).unwrap().is_empty());
        }
        assert_eq!(all_permutations(4).len(), 24);
    }

    #[test]
    fn reversal_identity_examples() {
        let check = reversal_identity_check(&params(), 1).unwrap();
        assert!(check.holds);
        assert!((check.constant - 0.7).abs() < 1e-15);
        for memory in [2, 3] {
            let check = reversal_identity_check(&params(), memory).unwrap();
            assert!(check.holds && (check.constant - 0.7).abs() < 1e-15);
        }
        let mut broken = params().rstp();
        broken[3] += 0.05;
        assert!(!reversal_identity_for(broken, 2).unwrap().holds);
    }

    #[test]
    fn klein_group() {
        for memory in 1..=3 {
            assert!(group_table_is_klein(memory).unwrap());
        }
    }
}
