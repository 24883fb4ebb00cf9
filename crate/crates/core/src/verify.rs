//! Property suite run by `altpd verify`: every check reports the measured
//! error next to the tolerance it is held to.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{build_matrix_direct, build_matrix_recursive, stationary};
use crate::dynamics::{field_closed_form, field_exact, integrate, mirror, FieldMethod, FlowState};
use crate::error::Result;
use crate::ode::Settings;
use crate::oracle::{default_burn_in, simulate};
use crate::payoff::{check_well_defined, payoff_by_determinant, payoff_by_stationary};
use crate::strategy::{state_count, PayoffParams, Strategy};
use crate::symmetry::{admissibility_report, exact_payoff_vector, exact_rstp, reversal_holds, Label};
use crate::torus::{admissible_rectangle, integrate_torus, plane_residual, to_cube, to_torus, torus_equilibria, TorusLevel, TorusPoint};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub memory: usize,
    pub params: PayoffParams,
    pub seed: u64,
    /// Random strategy pairs per property.
    pub samples: usize,
    /// Monte Carlo rounds per pair.
    pub rounds: u64,
    /// Test hook: perturbs one entry of the exact payoff vector before the
    /// reversal check.
    pub corrupt_payoff: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            memory: 1,
            params: PayoffParams::normalized(0.3).expect("valid default"),
            seed: 1,
            samples: 50,
            rounds: 200_000,
            corrupt_payoff: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyResult {
    fn below(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        PropertyResult {
            name: name.to_string(),
            passed: measured < tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.3e} (tolerance {:.1e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" [{}]", self.detail)
            }
        )
    }
}

fn interior(rng: &mut ChaCha8Rng, memory: usize) -> Strategy {
    Strategy::new(
        memory,
        (0..state_count(memory))
            .map(|_| rng.random_range(0.02..0.98))
            .collect(),
    )
    .expect("entries inside the cube")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.memory;
    let params = &opts.params;
    let pairs: Vec<(Strategy, Strategy)> = (0..opts.samples)
        .map(|_| (interior(&mut rng, n), interior(&mut rng, n)))
        .collect();
    let mut out = Vec::new();

    let mut row_err = 0.0f64;
    let mut residual = 0.0f64;
    for (p, q) in &pairs {
        let m = build_matrix_direct(p, q)?;
        row_err = row_err.max(m.max_row_sum_error());
        residual = residual.max(stationary(&m)?.residual(&m));
    }
    out.push(PropertyResult::below("stochasticity", row_err, 1e-12, format!("N = {n}")));
    out.push(PropertyResult::below("stationary residual", residual, 1e-10, format!("N = {n}")));

    if n >= 2 {
        let mut err = 0.0f64;
        for (p, q) in &pairs {
            let a = build_matrix_direct(p, q)?;
            let b = build_matrix_recursive(p, q)?;
            err = err.max((a.entries() - b.entries()).abs().max());
        }
        out.push(PropertyResult::below(
            "construction equivalence",
            err,
            1e-15,
            format!("N = {n}, recursive vs direct"),
        ));
    }

    out.push(PropertyResult {
        name: "well-defined payoffs".into(),
        passed: check_well_defined(params, n),
        measured: 0.0,
        tolerance: 1e-12,
        detail: "leader and follower winnings agree".into(),
    });

    if n <= 2 {
        let mut err = 0.0f64;
        for (p, q) in &pairs {
            let a = payoff_by_stationary(p, q, params)?;
            let b = payoff_by_determinant(p, q, params)?;
            err = err.max((a - b).abs());
        }
        out.push(PropertyResult::below(
            "payoff cross-check",
            err,
            1e-9,
            "determinant ratio vs stationary inner product",
        ));
    }

    // memory-one flow properties
    let flow_starts: Vec<[f64; 4]> = (0..opts.samples.clamp(4, 20))
        .map(|_| std::array::from_fn(|_| rng.random_range(0.1..0.9)))
        .collect();
    let mut err = 0.0f64;
    for x in &flow_starts {
        let x: FlowState = (*x).into();
        let a = field_closed_form(&x, params)?;
        let b = field_exact(&x, params)?;
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        err = err.max(max_diff(&a, &b) / scale);
    }
    out.push(PropertyResult::below("field cross-check", err, 1e-8, "closed form vs exact gradient"));

    let mut drift = 0.0f64;
    for x in flow_starts.iter().take(4) {
        let traj = integrate(&(*x).into(), params, 10.0, &Settings::rk4(1e-3), FieldMethod::ClosedForm);
        let (d1, d2) = traj.invariant_drift()?;
        drift = drift.max(d1).max(d2);
    }
    out.push(PropertyResult::below("conservation", drift, 1e-8, "RK4, dt = 1e-3, T = 10"));

    let mut err = 0.0f64;
    let reversal_points = if n == 1 { opts.samples } else { opts.samples.min(10) };
    for _ in 0..reversal_points {
        let x = FlowState::new((0..state_count(n)).map(|_| rng.random_range(0.05..0.95)).collect())?;
        let g = field_exact(&x, params)?;
        let gm = field_exact(&mirror(&x), params)?;
        let reversed: Vec<f64> = g.iter().rev().copied().collect();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        err = err.max(max_diff(&gm, &reversed) / scale);
    }
    out.push(PropertyResult::below(
        "time-reversal field identity",
        err,
        1e-9,
        format!("G(1 - rev x) = rev G(x), N = {n}"),
    ));

    let mut worst = 0.0f64;
    let mut failures = 0;
    let symmetry_pairs = if n >= 3 { 5 } else { pairs.len() };
    for (p, q) in pairs.iter().take(symmetry_pairs) {
        for label in Label::ALL {
            let r = admissibility_report(label, p, q, params)?;
            worst = worst.max(r.payoff_residual).max(r.stationary_residual);
            if !r.passed() {
                failures += 1;
            }
        }
    }
    out.push(PropertyResult {
        name: "symmetry".into(),
        passed: failures == 0 && worst < 1e-10,
        measured: worst,
        tolerance: 1e-10,
        detail: format!("J1..J4 at N = {n}, {failures} structural failures"),
    });

    let rstp = exact_rstp(params)?;
    let mut f = exact_payoff_vector(&rstp, n);
    if opts.corrupt_payoff {
        f[0] += BigRational::new(1.into(), 1000.into());
    }
    let holds = reversal_holds(&f, &(&rstp[0] + &rstp[3]));
    out.push(PropertyResult {
        name: "reversal identity".into(),
        passed: holds,
        measured: if holds { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!("exact rational check at N = {n}"),
    });

    // the torus reduction is stated for B = 1; rescale time otherwise
    let unit = PayoffParams::normalized(params.cost() / params.benefit())?;
    let mut err = 0.0f64;
    let mut round_trip = 0.0f64;
    for x in flow_starts.iter().take(4) {
        let x0: FlowState = (*x).into();
        let pt = to_torus(&x0)?;
        round_trip = round_trip.max(max_diff(to_cube(&pt).as_slice(), x0.as_slice()));
        let settings = Settings::rk4(1e-3);
        let cube = integrate(&x0, &unit, 2.0, &settings, FieldMethod::ClosedForm);
        let tor = integrate_torus(&pt, &unit, 2.0, &settings);
        let steps = cube.solution.len().min(tor.len());
        for k in 0..steps {
            let y = &tor.states[k];
            let mapped = to_cube(&TorusPoint { phi: y[0], psi: y[1], level: pt.level });
            err = err.max(max_diff(mapped.as_slice(), &cube.solution.states[k]));
        }
    }
    out.push(PropertyResult::below("torus commuting diagram", err, 1e-6, "T = 2"));
    out.push(PropertyResult::below("torus round trip", round_trip, 1e-12, ""));

    let mut worst = 0.0f64;
    let mut most = 0;
    for _ in 0..opts.samples {
        let level = TorusLevel::new(rng.random_range(0.05..1.95), rng.random_range(0.05..1.95))?;
        let c = rng.random_range(0.05..0.95);
        let eqs = torus_equilibria(&level, &PayoffParams::normalized(c)?)?;
        most = most.max(eqs.len());
        for e in &eqs {
            worst = worst.max(plane_residual(e, c));
        }
        admissible_rectangle(&level)?;
    }
    out.push(PropertyResult {
        name: "torus equilibria".into(),
        passed: most <= 4 && worst < 1e-10,
        measured: worst,
        tolerance: 1e-10,
        detail: format!("at most {most} per level"),
    });

    if n <= 2 {
        let mut worst = 0.0f64;
        for (i, (p, q)) in pairs.iter().take(3).enumerate() {
            let exact = payoff_by_stationary(p, q, params)?;
            let sim = simulate(p, q, params, opts.rounds, default_burn_in(opts.rounds), opts.seed + i as u64)?;
            worst = worst.max((sim.mean_payoff - exact).abs() / sim.conservative_error());
        }
        out.push(PropertyResult::below(
            "oracle agreement",
            worst,
            3.0,
            format!("Monte Carlo deviation in standard errors, {} rounds", opts.rounds),
        ));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(memory: usize) -> VerifyOptions {
        VerifyOptions {
            memory,
            samples: 8,
            rounds: 50_000,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn default_suite_passes() {
        for memory in [1, 2] {
            let results = run_suite(&quick(memory)).unwrap();
            for r in &results {
                assert!(r.passed, "{}", r.line());
            }
        }
    }

    #[test]
    fn memory_three_includes_construction_and_reversal() {
        let results = run_suite(&quick(3)).unwrap();
        let names: Vec<&str> = results.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains(&"construction equivalence"));
        assert!(names.contains(&"reversal identity"));
        assert!(results.iter().all(|r| r.passed), "{results:?}");
    }

    #[test]
    fn corrupted_payoff_fails_reversal() {
        let opts = VerifyOptions {
            corrupt_payoff: true,
            ..quick(1)
        };
        let results = run_suite(&opts).unwrap();
        let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        assert_eq!(failed, ["reversal identity"]);
    }
}
