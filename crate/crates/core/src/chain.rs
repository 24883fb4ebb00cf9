//! Transition matrix of the alternating game and its stationary distribution.
//!
//! Two constructions are provided. [`build_matrix_direct`] applies the
//! shift-and-append semantics state by state. [`build_matrix_recursive`]
//! starts from the explicit memory-1 table and grows it block by block,
//! relabelling strategy indices the way the block recursion prescribes. They share
//! no code beyond [`Strategy`] lookups, so their agreement checks both.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::strategy::{follower_index, state_count, successor, Action, Strategy};

/// Row-stochastic matrix over history states; entry `(i, j)` is the
/// probability of moving from state `i` to state `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    memory: usize,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn from_entries(memory: usize, entries: DMatrix<f64>) -> Self {
        Self { memory, entries }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.row_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// The four successor states of `state`, ordered CC, CD, DC, DD by the
    /// (leader, follower) actions of the new round.
    pub fn successors(&self, state: usize) -> [usize; 4] {
        successors(self.memory, state)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

pub(crate) fn successors(memory: usize, state: usize) -> [usize; 4] {
    [
        successor(memory, state, Action::C, Action::C),
        successor(memory, state, Action::C, Action::D),
        successor(memory, state, Action::D, Action::C),
        successor(memory, state, Action::D, Action::D),
    ]
}

fn check_pair(p: &Strategy, q: &Strategy) -> Result<usize> {
    if p.memory() != q.memory() {
        return Err(Error::MemoryMismatch(p.memory(), q.memory()));
    }
    Ok(p.memory())
}

/// Entry from `h = (i1 .. i2N)` to `(i3 .. i2N a b)` is
/// `[a = C ? p_h : 1 - p_h] * [b = C ? q_k : 1 - q_k]` with
/// `k = follower_index(h, a)`.
pub fn build_matrix_direct(p: &Strategy, q: &Strategy) -> Result<TransitionMatrix> {
    let memory = check_pair(p, q)?;
    let n = state_count(memory);
    let mut entries = DMatrix::zeros(n, n);
    for state in 0..n {
        let lead = p.get(state);
        for a in [Action::C, Action::D] {
            let pa = if a == Action::C { lead } else { 1.0 - lead };
            let follow = q.get(follower_index(memory, state, a));
            for b in [Action::C, Action::D] {
                let qb = if b == Action::C { follow } else { 1.0 - follow };
                entries[(state, successor(memory, state, a, b))] = pa * qb;
            }
        }
    }
    Ok(TransitionMatrix { memory, entries })
}

/// One nonzero entry of the transition matrix in symbolic form:
/// `(leader_coop ? p[leader] : 1 - p[leader]) * (follower_coop ? q[follower] : 1 - q[follower])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Term {
    pub row: usize,
    pub col: usize,
    pub leader: usize,
    pub leader_coop: bool,
    pub follower: usize,
    pub follower_coop: bool,
}

/// Follower entries used by rows CC, CD, DC, DD of the memory-1 matrix
/// when the leader cooperates (first) or defects (second).
const MEMORY_ONE_FOLLOWER: [[usize; 2]; 4] = [[0, 1], [2, 3], [0, 1], [2, 3]];

fn memory_one_terms() -> Vec<Term> {
    let mut terms = Vec::with_capacity(16);
    for (row, [on_c, on_d]) in MEMORY_ONE_FOLLOWER.iter().copied().enumerate() {
        let quad = [
            (0, true, on_c, true),
            (1, true, on_c, false),
            (2, false, on_d, true),
            (3, false, on_d, false),
        ];
        for (col, leader_coop, follower, follower_coop) in quad {
            terms.push(Term {
                row,
                col,
                leader: row,
                leader_coop,
                follower,
                follower_coop,
            });
        }
    }
    terms
}

/// Symbolic memory-`N` matrix grown from the memory-1 table.
///
/// The memory-`(N-1)` matrix is cut into four horizontal slabs `M_1..M_4`.
/// For each prefix `c` in `CC, CD, DC, DD` the slabs are placed on the block
/// diagonal (`M_j` in column block `j`); the prefix is prepended to every
/// leader index, and the follower index gains the second and third symbols
/// of the new leader index in front.
pub fn symbolic_terms(memory: usize) -> Result<Vec<Term>> {
    if memory == 0 {
        return Err(Error::ZeroMemory);
    }
    let mut terms = memory_one_terms();
    for level in 2..=memory {
        let prev = state_count(level - 1);
        let slab = prev / 4;
        // leader/follower indices at the previous level have 2(level-1) symbols
        let prev_bits = 2 * (level - 1);
        let mut next = Vec::with_capacity(terms.len() * 4);
        for prefix in 0..4 {
            for t in &terms {
                let block = t.row / slab;
                let first_leader_symbol = t.leader >> (prev_bits - 1);
                let front = ((prefix & 1) << 1) | first_leader_symbol;
                next.push(Term {
                    row: prefix * prev + t.row,
                    col: block * prev + t.col,
                    leader: prefix * prev + t.leader,
                    leader_coop: t.leader_coop,
                    follower: (front << prev_bits) | t.follower,
                    follower_coop: t.follower_coop,
                });
            }
        }
        terms = next;
    }
    Ok(terms)
}

pub fn evaluate_terms(memory: usize, terms: &[Term], p: &Strategy, q: &Strategy) -> TransitionMatrix {
    let n = state_count(memory);
    let mut entries = DMatrix::zeros(n, n);
    for t in terms {
        let lead = p.get(t.leader);
        let follow = q.get(t.follower);
        let pa = if t.leader_coop { lead } else { 1.0 - lead };
        let qb = if t.follower_coop { follow } else { 1.0 - follow };
        entries[(t.row, t.col)] = pa * qb;
    }
    TransitionMatrix { memory, entries }
}

/// Block-recursive construction; defined for `N >= 2`.
pub fn build_matrix_recursive(p: &Strategy, q: &Strategy) -> Result<TransitionMatrix> {
    let memory = check_pair(p, q)?;
    if memory < 2 {
        return Err(Error::RecursionBase);
    }
    let terms = symbolic_terms(memory)?;
    Ok(evaluate_terms(memory, &terms, p, q))
}

/// Probability vector `nu` with `nu^T M = nu^T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub nu: Vec<f64>,
}

impl StationaryDistribution {
    /// `max_j |(nu^T M)_j - nu_j|`.
    pub fn residual(&self, m: &TransitionMatrix) -> f64 {
        let n = m.dim();
        (0..n)
            .map(|j| {
                let s: f64 = (0..n).map(|i| self.nu[i] * m.get(i, j)).sum();
                (s - self.nu[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.nu.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

pub(crate) const NULL_SPACE_TOL: f64 = 1e-10;

/// Stationary distribution by a dense solve of `(M^T - I) nu = 0` with the
/// last equation replaced by `sum(nu) = 1`.
///
/// Fails with [`Error::NonUniqueStationary`] when `M^T - I` has more than one
/// singular value below `1e-10`.
pub fn stationary(m: &TransitionMatrix) -> Result<StationaryDistribution> {
    let n = m.dim();
    let system = m.entries.transpose() - DMatrix::<f64>::identity(n, n);
    let sv = system.clone().singular_values();
    let nullity = sv.iter().filter(|&&s| s < NULL_SPACE_TOL).count();
    if nullity > 1 {
        return Err(Error::NonUniqueStationary(nullity));
    }
    let mut nu = solve_left_kernel(m.entries())?;
    if let Some(min) = nu.iter().copied().reduce(f64::min) {
        if min < -1e-9 {
            return Err(Error::NegativeMass(min));
        }
    }
    for v in nu.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= total);
    Ok(StationaryDistribution { nu })
}

/// Raw normalised left kernel vector, no clamping or rank diagnosis. Works for
/// the algebraic continuation of `M` outside the probability cube.
pub(crate) fn solve_left_kernel(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut system = m.transpose();
    for i in 0..n {
        system[(i, i)] -= 1.0;
    }
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = system.lu().solve(&rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(sol.iter().copied().collect())
}

/// Maps every entry to `eps + (1 - 2 eps) * value`, which keeps strategies
/// away from the cube faces and makes the chain irreducible.
pub fn perturb_strategies(p: &Strategy, q: &Strategy, eps: f64) -> Result<(Strategy, Strategy)> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::PerturbationRange(eps));
    }
    let squeeze = |s: &Strategy| {
        Strategy::new(
            s.memory(),
            s.probs().iter().map(|v| eps + (1.0 - 2.0 * eps) * v).collect(),
        )
    };
    Ok((squeeze(p)?, squeeze(q)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_strategy(rng: &mut impl Rng, memory: usize) -> Strategy {
        Strategy::new(
            memory,
            (0..state_count(memory)).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap()
    }

    fn interior_strategy(rng: &mut impl Rng, memory: usize) -> Strategy {
        Strategy::new(
            memory,
            (0..state_count(memory))
                .map(|_| rng.random_range(0.01..0.99))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_cooperation_rows() {
        let p = Strategy::constant(1, 1.0).unwrap();
        let m = build_matrix_direct(&p, &p).unwrap();
        for row in m.rows() {
            assert_eq!(row, vec![1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn entry_cd_to_cc() {
        let p = Strategy::new(1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = Strategy::new(1, vec![0.5, 0.6, 0.7, 0.8]).unwrap();
        let m = build_matrix_direct(&p, &q).unwrap();
        assert!((m.get(1, 0) - 0.14).abs() < 1e-15);
    }

    #[test]
    fn uniform_half_gives_quarter_entries() {
        let h = Strategy::constant(1, 0.5).unwrap();
        let m = build_matrix_direct(&h, &h).unwrap();
        assert!(m.entries().iter().all(|&v| v == 0.25));
    }

    /// Writes the memory-1 matrix as the explicit polynomial table
    /// (rows CC, CD, DC, DD with follower entries q1,q2 | q3,q4 | q1,q2 | q3,q4).
    fn memory_one_table(p: &[f64], q: &[f64]) -> [[f64; 4]; 4] {
        let row = |pi: f64, qa: f64, qb: f64| {
            [pi * qa, pi * (1.0 - qa), (1.0 - pi) * qb, (1.0 - pi) * (1.0 - qb)]
        };
        [
            row(p[0], q[0], q[1]),
            row(p[1], q[2], q[3]),
            row(p[2], q[0], q[1]),
            row(p[3], q[2], q[3]),
        ]
    }

    #[test]
    fn memory_one_matches_table_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = random_strategy(&mut rng, 1);
            let q = random_strategy(&mut rng, 1);
            let m = build_matrix_direct(&p, &q).unwrap();
            let table = memory_one_table(p.probs(), q.probs());
            for (i, row) in table.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((m.get(i, j) - v).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn recursion_requires_memory_two() {
        let p = Strategy::constant(1, 0.5).unwrap();
        let err = build_matrix_recursive(&p, &p).unwrap_err();
        assert_eq!(err.to_string(), "recursion base is memory 1");
    }

    #[test]
    fn mismatched_memory_is_an_error() {
        let p = Strategy::constant(1, 0.5).unwrap();
        let q = Strategy::constant(2, 0.5).unwrap();
        assert!(matches!(
            build_matrix_direct(&p, &q),
            Err(Error::MemoryMismatch(1, 2))
        ));
    }

    #[test]
    fn recursive_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for memory in [2, 3] {
            for _ in 0..20 {
                let p = random_strategy(&mut rng, memory);
                let q = random_strategy(&mut rng, memory);
                let a = build_matrix_direct(&p, &q).unwrap();
                let b = build_matrix_recursive(&p, &q).unwrap();
                let diff = (a.entries() - b.entries()).abs().max();
                assert!(diff <= 1e-15, "memory {memory}: {diff}");
            }
        }
    }

    #[test]
    fn recursive_absorbing_cooperation() {
        let ones = Strategy::constant(2, 1.0).unwrap();
        let m = build_matrix_recursive(&ones, &ones).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert!((1..16).all(|j| m.get(0, j) == 0.0));
    }

    #[test]
    fn four_nonzeros_per_row_at_successors() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = interior_strategy(&mut rng, 2);
        let q = interior_strategy(&mut rng, 2);
        let m = build_matrix_recursive(&p, &q).unwrap();
        for i in 0..16 {
            let nz: Vec<usize> = (0..16).filter(|&j| m.get(i, j) != 0.0).collect();
            let mut succ = m.successors(i).to_vec();
            succ.sort();
            assert_eq!(nz, succ);
        }
    }

    #[test]
    fn symbolic_terms_cover_each_row_once_per_successor() {
        for memory in 1..=3 {
            let terms = symbolic_terms(memory).unwrap();
            assert_eq!(terms.len(), 4 * state_count(memory));
            for t in &terms {
                assert!(successors(memory, t.row).contains(&t.col));
                assert_eq!(t.leader, t.row);
            }
        }
    }

    #[test]
    fn stationary_examples() {
        let ones = Strategy::constant(1, 1.0).unwrap();
        let nu = stationary(&build_matrix_direct(&ones, &ones).unwrap()).unwrap();
        assert_eq!(nu.nu, vec![1.0, 0.0, 0.0, 0.0]);

        let half = Strategy::constant(1, 0.5).unwrap();
        let nu = stationary(&build_matrix_direct(&half, &half).unwrap()).unwrap();
        for v in nu.nu {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn reducible_chain_reports_non_unique() {
        // each player repeats its own previous action: every state absorbs
        let repeat = Strategy::new(1, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let m = build_matrix_direct(&repeat, &repeat).unwrap();
        assert!(matches!(stationary(&m), Err(Error::NonUniqueStationary(4))));

        let (p, q) = perturb_strategies(&repeat, &repeat, 0.01).unwrap();
        let m = build_matrix_direct(&p, &q).unwrap();
        assert!(stationary(&m).is_ok());
    }

    #[test]
    fn leader_cooperates_follower_defects() {
        let p = Strategy::constant(1, 1.0).unwrap();
        let q = Strategy::constant(1, 0.0).unwrap();
        let nu = stationary(&build_matrix_direct(&p, &q).unwrap()).unwrap();
        assert_eq!(nu.nu, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn perturb_examples() {
        let ones = Strategy::constant(1, 1.0).unwrap();
        let zeros = Strategy::constant(1, 0.0).unwrap();
        let half = Strategy::constant(1, 0.5).unwrap();
        let (a, b) = perturb_strategies(&ones, &zeros, 0.01).unwrap();
        assert!(a.probs().iter().all(|v| (v - 0.99).abs() < 1e-15));
        assert!(b.probs().iter().all(|v| (v - 0.01).abs() < 1e-15));
        let (c, _) = perturb_strategies(&half, &half, 0.3).unwrap();
        assert_eq!(c.probs(), half.probs());
        assert!(perturb_strategies(&half, &half, 0.5).is_err());
    }

    #[test]
    fn row_sums_and_stationary_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for memory in 1..=3 {
            for _ in 0..1000 {
                let p = random_strategy(&mut rng, memory);
                let q = random_strategy(&mut rng, memory);
                let m = build_matrix_direct(&p, &q).unwrap();
                assert!(m.max_row_sum_error() < 1e-12);
            }
            for _ in 0..20 {
                let p = interior_strategy(&mut rng, memory);
                let q = interior_strategy(&mut rng, memory);
                let m = build_matrix_direct(&p, &q).unwrap();
                let nu = stationary(&m).expect("interior chains are irreducible");
                assert!(nu.residual(&m) < 1e-10);
                assert!((nu.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
