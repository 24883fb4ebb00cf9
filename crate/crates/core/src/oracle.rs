//! Monte Carlo simulation of the alternating game, used as an independent
//! check on the Markov-chain payoffs.
//!
//! The opening history is drawn uniformly over all `4^N` states instead of
//! playing explicit opening moves; for irreducible chains this has no effect
//! on long-run averages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::strategy::{follower_index, state_count, successor, Action, PayoffParams, Strategy};

/// Number of batches used for the batch-means error estimate.
pub const BATCHES: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub memory: usize,
    pub mean_payoff: f64,
    /// Sample standard deviation of the per-round payoff over `sqrt(rounds)`.
    pub std_error: f64,
    /// Batch-means estimate, which accounts for correlation between rounds.
    /// Falls back to `std_error` when there are fewer rounds than batches.
    pub batch_std_error: f64,
    pub state_frequencies: Vec<f64>,
    /// Rounds that entered the statistics (burn-in excluded).
    pub rounds: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub replica: u64,
}

impl SimulationResult {
    /// Largest of the two error estimates.
    pub fn conservative_error(&self) -> f64 {
        self.std_error.max(self.batch_std_error)
    }
}

/// Default burn-in: a tenth of the recorded rounds.
pub fn default_burn_in(rounds: u64) -> u64 {
    rounds / 10
}

fn generator(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn coin(rng: &mut ChaCha8Rng, cooperate: f64) -> Action {
    if rng.random::<f64>() < cooperate {
        Action::C
    } else {
        Action::D
    }
}

/// Plays `burn_in` unrecorded rounds followed by `rounds` recorded ones.
pub fn simulate(
    p: &Strategy,
    q: &Strategy,
    params: &PayoffParams,
    rounds: u64,
    burn_in: u64,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_replica(p, q, params, rounds, burn_in, seed, 0)
}

/// Same as [`simulate`] on the independent stream `replica` of `seed`.
pub fn simulate_replica(
    p: &Strategy,
    q: &Strategy,
    params: &PayoffParams,
    rounds: u64,
    burn_in: u64,
    seed: u64,
    replica: u64,
) -> Result<SimulationResult> {
    if p.memory() != q.memory() {
        return Err(Error::MemoryMismatch(p.memory(), q.memory()));
    }
    if rounds == 0 {
        return Err(Error::ZeroRounds);
    }
    let memory = p.memory();
    let n = state_count(memory);
    let mut rng = generator(seed, replica);
    let mut state = rng.random_range(0..n);

    let play = |state: usize, rng: &mut ChaCha8Rng| -> (usize, usize) {
        let leader = coin(rng, p.get(state));
        let seen = follower_index(memory, state, leader);
        let follower = coin(rng, q.get(seen));
        let outcome = (leader.bit() << 1) | follower.bit();
        (successor(memory, state, leader, follower), outcome)
    };

    for _ in 0..burn_in {
        state = play(state, &mut rng).0;
    }

    let values = params.rstp();
    let mut visits = vec![0u64; n];
    let mut outcomes = [0u64; 4];
    let batches = if rounds >= BATCHES { BATCHES } else { 1 };
    let batch_len = rounds / batches;
    let mut batch_means = Vec::with_capacity(batches as usize);
    let mut batch_outcomes = [0u64; 4];
    let mut in_batch = 0u64;

    for _ in 0..rounds {
        let (next, outcome) = play(state, &mut rng);
        state = next;
        visits[state] += 1;
        outcomes[outcome] += 1;
        if (batch_means.len() as u64) < batches {
            batch_outcomes[outcome] += 1;
            in_batch += 1;
            if in_batch == batch_len {
                batch_means.push(weighted_mean(&batch_outcomes, in_batch, &values));
                batch_outcomes = [0; 4];
                in_batch = 0;
            }
        }
    }

    let mean_payoff = weighted_mean(&outcomes, rounds, &values);
    let std_error = if rounds > 1 {
        let var: f64 = outcomes
            .iter()
            .zip(values)
            .map(|(&k, v)| k as f64 * (v - mean_payoff).powi(2))
            .sum::<f64>()
            / (rounds - 1) as f64;
        (var / rounds as f64).sqrt()
    } else {
        0.0
    };
    let batch_std_error = if batch_means.len() > 1 {
        let k = batch_means.len() as f64;
        let centre = batch_means.iter().sum::<f64>() / k;
        let var = batch_means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        std_error
    };

    Ok(SimulationResult {
        memory,
        mean_payoff,
        std_error,
        batch_std_error,
        state_frequencies: visits.iter().map(|&v| v as f64 / rounds as f64).collect(),
        rounds,
        burn_in,
        seed,
        replica,
    })
}

// Written as a sum of frequency-weighted payoffs so that a single outcome
// reproduces its payoff exactly.
fn weighted_mean(counts: &[u64; 4], total: u64, values: &[f64; 4]) -> f64 {
    counts
        .iter()
        .zip(values)
        .map(|(&k, v)| (k as f64 / total as f64) * v)
        .sum()
}

/// Runs `replicas` independent simulations on separate threads, stream `i`
/// for replica `i`.
pub fn simulate_replicas(
    p: &Strategy,
    q: &Strategy,
    params: &PayoffParams,
    rounds: u64,
    burn_in: u64,
    seed: u64,
    replicas: u64,
) -> Result<Vec<SimulationResult>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..replicas)
            .map(|r| scope.spawn(move || simulate_replica(p, q, params, rounds, burn_in, seed, r)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

pub fn empirical_stationary(result: &SimulationResult) -> Vec<f64> {
    result.state_frequencies.clone()
}
