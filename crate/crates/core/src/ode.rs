//! Explicit integrators for autonomous systems with a region monitor.
//!
//! The right-hand side may fail (a vanishing denominator); integration then
//! stops with [`Status::Singular`] and keeps the partial trajectory. When a
//! step would leave the monitored region the step length is bisected until
//! the exit point is bracketed to `1e-12` in time, the last inside point is
//! recorded, and integration stops with [`Status::Boundary`].

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "rk45" | "dopri" | "dopri5" => Ok(Method::Rk45),
            other => Err(format!("unknown method {other:?} (expected rk4 or rk45)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Completed,
    Boundary,
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 50_000_000,
        }
    }
}

impl Settings {
    pub fn rk4(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn rk45(rtol: f64) -> Self {
        Self {
            method: Method::Rk45,
            dt: 1e-3,
            rtol,
            atol: rtol * 1e-3,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub status: Status,
    pub message: Option<String>,
}

impl Solution {
    pub fn last(&self) -> (f64, &[f64]) {
        let i = self.times.len() - 1;
        (self.times[i], &self.states[i])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

fn combine(x: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (w, k) in terms {
        if *w != 0.0 {
            for (o, ki) in out.iter_mut().zip(k.iter()) {
                *o += h * w * ki;
            }
        }
    }
    out
}

fn rk4_step<F>(rhs: &mut F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k1 = rhs(x)?;
    let k2 = rhs(&axpy(x, h / 2.0, &k1))?;
    let k3 = rhs(&axpy(x, h / 2.0, &k2))?;
    let k4 = rhs(&axpy(x, h, &k3))?;
    Ok(combine(
        x,
        h,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
    ))
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand-Prince step; returns the fifth-order solution and the
/// embedded error estimate.
fn dopri_step<F>(rhs: &mut F, x: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k1 = rhs(x)?;
    let k2 = rhs(&combine(x, h, &[(A21, &k1)]))?;
    let k3 = rhs(&combine(x, h, &[(A31, &k1), (A32, &k2)]))?;
    let k4 = rhs(&combine(x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = rhs(&combine(
        x,
        h,
        &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    ))?;
    let k6 = rhs(&combine(
        x,
        h,
        &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let next = combine(
        x,
        h,
        &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = rhs(&next)?;
    let err = combine(
        &vec![0.0; x.len()],
        h,
        &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
    );
    Ok((next, err))
}

/// Integrates `x' = rhs(x)` from `x0` over signed time `t_end` (negative
/// values integrate backwards). `inside` is the region monitor; the initial
/// point is expected to satisfy it.
pub fn solve<F, I>(mut rhs: F, x0: &[f64], t_end: f64, settings: &Settings, inside: I) -> Solution
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64]) -> bool,
{
    let dir = if t_end < 0.0 { -1.0 } else { 1.0 };
    let span = t_end.abs();
    let mut signed = |x: &[f64]| -> Result<Vec<f64>> {
        let mut v = rhs(x)?;
        if dir < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        Ok(v)
    };

    let mut sol = Solution {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        status: Status::Completed,
        message: None,
    };
    if !inside(x0) {
        sol.status = Status::Boundary;
        sol.message = Some("initial point outside the monitored region".into());
        return sol;
    }

    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut h = settings.dt.abs().min(span.max(f64::MIN_POSITIVE));
    let mut steps = 0usize;

    while t < span {
        if steps >= settings.max_steps {
            sol.message = Some(format!("step limit {} reached", settings.max_steps));
            sol.status = Status::Singular;
            return sol;
        }
        steps += 1;
        let remaining = span - t;
        // avoid a sliver of a final step
        let step = if remaining <= h * (1.0 + 1e-9) { remaining } else { h };

        let trial = match settings.method {
            Method::Rk4 => rk4_step(&mut signed, &x, step).map(|next| (next, None)),
            Method::Rk45 => dopri_step(&mut signed, &x, step).map(|(next, err)| {
                let scale = |i: usize| settings.atol + settings.rtol * x[i].abs().max(next[i].abs());
                let norm = (err
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (e / scale(i)).powi(2))
                    .sum::<f64>()
                    / err.len() as f64)
                    .sqrt();
                (next, Some(norm))
            }),
        };

        let (next, err_norm) = match trial {
            Ok(v) => v,
            Err(e) => {
                sol.status = Status::Singular;
                sol.message = Some(e.to_string());
                return sol;
            }
        };

        if let Some(norm) = err_norm {
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if norm > 1.0 || !norm.is_finite() {
                h = step * factor.min(0.9);
                if h < 1e-14 {
                    sol.status = Status::Singular;
                    sol.message = Some("step size underflow".into());
                    return sol;
                }
                continue;
            }
            h = step * factor;
        }

        if !inside(&next) || next.iter().any(|v| !v.is_finite()) {
            let (t_hit, x_hit) = locate_exit(&mut signed, &x, step, settings, &inside);
            if t_hit > 0.0 {
                sol.times.push(dir * (t + t_hit));
                sol.states.push(x_hit);
            }
            sol.status = Status::Boundary;
            return sol;
        }

        t += step;
        x = next;
        sol.times.push(dir * t);
        sol.states.push(x.clone());
    }
    sol
}

/// Bisects the step length to find the last inside point before the exit.
fn locate_exit<F, I>(rhs: &mut F, x: &[f64], step: f64, settings: &Settings, inside: &I) -> (f64, Vec<f64>)
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64]) -> bool,
{
    let advance = |rhs: &mut F, h: f64| -> Option<Vec<f64>> {
        let next = match settings.method {
            Method::Rk4 => rk4_step(rhs, x, h).ok()?,
            Method::Rk45 => dopri_step(rhs, x, h).ok()?.0,
        };
        (inside(&next) && next.iter().all(|v| v.is_finite())).then_some(next)
    };
    let (mut lo, mut hi) = (0.0, step);
    let mut best = x.to_vec();
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        match advance(rhs, mid) {
            Some(next) => {
                lo = mid;
                best = next;
            }
            None => hi = mid,
        }
    }
    (lo, best)
}
