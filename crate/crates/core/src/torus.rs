//! Memory-1 dynamics restricted to the invariant tori
//! `(p1 - 1)^2 + p3^2 = C1`, `(p2 - 1)^2 + p4^2 = C2`.
//!
//! Angles follow `p1 = 1 + r1 sin(phi)`, `p3 = r1 cos(phi)` with `r1 = sqrt(C1)`
//! (and likewise `psi` with `r2 = sqrt(C2)` for `p2`, `p4`). The image of the
//! open cube sits in the fourth quadrant of both angles.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::Serialize;

use crate::dynamics::{closed_form, FieldMethod, FlowState, within_margin};
use crate::error::{Error, Result};
use crate::ode::{self, Settings, Solution};
use crate::strategy::PayoffParams;

/// Level values of the two conserved quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusLevel {
    pub c1: f64,
    pub c2: f64,
}

impl TorusLevel {
    /// Level meeting the cube: both values in `(0, 2]`.
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        for v in [c1, c2] {
            if !(v > 0.0 && v <= 2.0) {
                return Err(Error::LevelRange(v));
            }
        }
        Ok(Self { c1, c2 })
    }

    /// Any nonnegative level, including the degenerate `C1 = 0`; used by the
    /// desingularised field.
    pub fn degenerate(c1: f64, c2: f64) -> Self {
        Self { c1, c2 }
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.c1.sqrt(), self.c2.sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusPoint {
    pub phi: f64,
    pub psi: f64,
    pub level: TorusLevel,
}

impl TorusPoint {
    pub fn new(phi: f64, psi: f64, level: TorusLevel) -> Self {
        Self {
            phi: wrap(phi),
            psi: wrap(psi),
            level,
        }
    }
}

/// Reduces an angle to `[0, 2 pi)`.
pub fn wrap(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two angles on the circle.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(TAU - d)
}

pub fn to_cube(pt: &TorusPoint) -> FlowState {
    let (r1, r2) = pt.level.radii();
    FlowState::from([
        1.0 + r1 * pt.phi.sin(),
        1.0 + r2 * pt.psi.sin(),
        r1 * pt.phi.cos(),
        r2 * pt.psi.cos(),
    ])
}

const DEGENERATE_LEVEL: f64 = 1e-14;

pub fn to_torus(x: &FlowState) -> Result<TorusPoint> {
    let [p1, p2, p3, p4] = match x.as_slice() {
        &[a, b, c, d] => [a, b, c, d],
        _ => return Err(Error::RequiresMemoryOne(x.memory())),
    };
    let c1 = (p1 - 1.0).powi(2) + p3 * p3;
    let c2 = (p2 - 1.0).powi(2) + p4 * p4;
    if c1 < DEGENERATE_LEVEL || c2 < DEGENERATE_LEVEL {
        return Err(Error::DegenerateTorus);
    }
    Ok(TorusPoint::new(
        (p1 - 1.0).atan2(p3),
        (p2 - 1.0).atan2(p4),
        TorusLevel { c1, c2 },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdmissibleRectangle {
    pub phi: (f64, f64),
    pub psi: (f64, f64),
}

impl AdmissibleRectangle {
    /// Open-rectangle membership; angles are wrapped first.
    pub fn contains(&self, phi: f64, psi: f64) -> bool {
        let (phi, psi) = (wrap(phi), wrap(psi));
        phi > self.phi.0 && phi < self.phi.1 && psi > self.psi.0 && psi < self.psi.1
    }

    /// Closed boundary as a polyline `(phi, psi)`, first corner repeated.
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        vec![
            (self.phi.0, self.psi.0),
            (self.phi.1, self.psi.0),
            (self.phi.1, self.psi.1),
            (self.phi.0, self.psi.1),
            (self.phi.0, self.psi.0),
        ]
    }
}

/// Angular interval of one circle whose image lies in `(0, 1)^2`.
fn admissible_interval(level: f64) -> (f64, f64) {
    if level <= 1.0 {
        (1.5 * PI, TAU)
    } else {
        let inv = 1.0 / level.sqrt();
        let a = TAU - inv.acos();
        let b = TAU - inv.asin();
        (a.min(b), a.max(b))
    }
}

pub fn admissible_rectangle(level: &TorusLevel) -> Result<AdmissibleRectangle> {
    let level = TorusLevel::new(level.c1, level.c2)?;
    Ok(AdmissibleRectangle {
        phi: admissible_interval(level.c1),
        psi: admissible_interval(level.c2),
    })
}

/// `K = sin(phi) sin(psi) - 2 sin(phi) cos(psi) + cos(phi) cos(psi)`.
pub fn first_factor(phi: f64, psi: f64) -> f64 {
    let (sf, cf) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    sf * ss - 2.0 * sf * cs + cf * cs
}

/// The level-dependent factor `L` of the toric denominator.
pub fn second_factor(phi: f64, psi: f64, level: &TorusLevel) -> f64 {
    let (r1, r2) = level.radii();
    let (sf, cf) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    r1 * r2 * sf * ss - 2.0 * r1 * r2 * ss * cf + r1 * r2 * cf * cs - 2.0 * r1 * cf + 2.0 * r2 * ss
}

/// Toric denominator `4 K^2 L`.
pub fn toric_denominator(pt: &TorusPoint) -> f64 {
    let k = first_factor(pt.phi, pt.psi);
    4.0 * k * k * second_factor(pt.phi, pt.psi, &pt.level)
}

/// Factor relating the desingularised field to the toric field,
/// `C1 C2 K^2 L`. It changes sign across `L = 0`.
pub fn desingularisation_multiplier(pt: &TorusPoint) -> f64 {
    let k = first_factor(pt.phi, pt.psi);
    pt.level.c1 * pt.level.c2 * k * k * second_factor(pt.phi, pt.psi, &pt.level)
}

const TORIC_TOL: f64 = 1e-14;

/// Chain rule on the angle parametrisation applied to a cube field.
pub fn pushforward(pt: &TorusPoint, cube_field: &[f64]) -> (f64, f64) {
    let (r1, r2) = pt.level.radii();
    let (sf, cf) = pt.phi.sin_cos();
    let (ss, cs) = pt.psi.sin_cos();
    (
        (cf * cube_field[0] - sf * cube_field[2]) / r1,
        (cs * cube_field[1] - ss * cube_field[3]) / r2,
    )
}

/// Toric field from the explicit memory-1 cube field.
pub fn torus_field(pt: &TorusPoint, params: &PayoffParams) -> Result<(f64, f64)> {
    if toric_denominator(pt).abs() < TORIC_TOL {
        return Err(Error::ToricDenominator);
    }
    let x = to_cube(pt);
    let xs: [f64; 4] = x.as_slice().try_into().expect("memory-1 point");
    let g = closed_form(&xs, params)?;
    Ok(pushforward(pt, &g))
}

/// Toric field from any cube-field evaluation.
pub fn torus_field_with(pt: &TorusPoint, params: &PayoffParams, method: FieldMethod) -> Result<(f64, f64)> {
    if toric_denominator(pt).abs() < TORIC_TOL {
        return Err(Error::ToricDenominator);
    }
    let g = method.evaluate(&to_cube(pt), params)?;
    Ok(pushforward(pt, &g))
}

fn require_unit_benefit(params: &PayoffParams) -> Result<()> {
    if params.benefit() != 1.0 {
        return Err(Error::RequiresUnitBenefit(params.benefit()));
    }
    Ok(())
}

/// Explicit trigonometric form of the toric field (`B = 1`).
pub fn torus_field_closed_form(pt: &TorusPoint, params: &PayoffParams) -> Result<(f64, f64)> {
    require_unit_benefit(params)?;
    let den = toric_denominator(pt);
    if den.abs() < TORIC_TOL {
        return Err(Error::ToricDenominator);
    }
    let c = params.cost();
    let TorusLevel { c1, c2 } = pt.level;
    let (r1, r2) = pt.level.radii();
    let (sf, cf) = pt.phi.sin_cos();
    let (ss, cs) = pt.psi.sin_cos();
    let (s2f, c2f) = (2.0 * pt.phi).sin_cos();
    let (s2s, c2s) = (2.0 * pt.psi).sin_cos();
    let (s3s, c3s) = (3.0 * pt.psi).sin_cos();

    let mix = 2.0 * c * sf - 2.0 * c * cf + sf + cf;
    let inner = 2.0
        * r1
        * (-r2 * s2s * mix + r2 * mix + 2.0 * ss * (c * sf - c * cf + sf + cf) + r2 * c2s * (sf - cf))
        + (c - 1.0) * r2;
    let tail = 8.0 * r1 * cs * cs * (c * cf - (c + 1.0) * sf) - (c - 1.0) * r2 * (ss + s3s + c3s);
    let phi_dot = (cs * inner + tail) / (c1 * den);

    let psi_num = -r2
        * cs
        * (r1 * ((2.0 * c + 1.0) * s2f + c2f) - (2.0 * c + 1.0) * r1 - 4.0 * (c + 1.0) * sf
            + 2.0 * (c + 1.0) * cf)
        + r2 * ss
            * ((2.0 * c - 1.0) * r1 * s2f + r1 * (-2.0 * c + c2f + 1.0) - 4.0 * c * sf
                + 2.0 * (c - 1.0) * cf)
        - (c - 1.0) * r1 * (-s2f + c2f + 1.0);
    let psi_dot = 2.0 * sf * psi_num / (c2 * den);
    Ok((phi_dot, psi_dot))
}

/// Toric field multiplied by `C1 C2 K^2 L`; defined on every torus,
/// including `C1 = 0` (`B = 1`).
pub fn desingularized_field(pt: &TorusPoint, params: &PayoffParams) -> Result<(f64, f64)> {
    require_unit_benefit(params)?;
    let c = params.cost();
    let TorusLevel { c1, c2 } = pt.level;
    let (r1, r2) = (c1.max(0.0).sqrt(), c2.max(0.0).sqrt());
    let (sf, cf) = pt.phi.sin_cos();
    let (ss, cs) = pt.psi.sin_cos();
    let (s2s, c2s) = (2.0 * pt.psi).sin_cos();

    let phi_dot = 0.5
        * c2
        * cs
        * (2.0 * r1 * cf * (ss * (-c + r2 * ss + 1.0) + cs * (2.0 * c - (1.0 - 2.0 * c) * r2 * ss) - c * r2)
            + r1 * sf
                * (-(2.0 * c + 1.0) * r2 * s2s + (2.0 * c + 1.0) * r2 + 2.0 * (c + 1.0) * ss
                    - 4.0 * (c + 1.0) * cs
                    + r2 * c2s)
            + (1.0 - c) * r2 * (s2s + c2s - 1.0));

    let cooperative = (c + 1.0) * cs - c * ss;
    let psi_dot = -r1
        * sf
        * (-c1 * cf * cf * (r2 * ((1.0 - c) * ss + c * cs) - c + 1.0)
            + c1 * sf * cf * (r2 * ((1.0 - 2.0 * c) * ss + (2.0 * c + 1.0) * cs) - c + 1.0)
            + r1 * r2 * cf * ((1.0 - c) * ss + (c + 1.0) * cs)
            - r1 * r2 * sf * (r1 * sf + 2.0) * cooperative);
    Ok((phi_dot, psi_dot))
}

/// Coefficient of `C1` in the desingularised `psi` component at small `C1`.
///
/// The component is `r1^2 S + r1^3 R` in `r1 = sqrt(C1)` with `S`, `R`
/// independent of `r1`, so two evaluations at `r1 = 1/2` and `r1 = 1`
/// isolate `S` exactly.
pub fn slow_coefficient(phi: f64, psi: f64, c2: f64, params: &PayoffParams) -> Result<f64> {
    let at = |r1: f64| -> Result<f64> {
        let pt = TorusPoint {
            phi,
            psi,
            level: TorusLevel::degenerate(r1 * r1, c2),
        };
        Ok(desingularized_field(&pt, params)?.1)
    };
    let a = 0.5;
    Ok((8.0 * at(a)? - at(2.0 * a)?) / (4.0 * a * a))
}

pub const AVERAGING_PANELS: usize = 1024;

/// Integral of the slow coefficient over one fast period `phi in [0, 2 pi]`
/// by composite Simpson with 1024 panels. A nonzero value means the slow
/// drift in `psi` does not average out.
pub fn averaged_slow_field(psi: f64, level: &TorusLevel, params: &PayoffParams) -> Result<f64> {
    let n = AVERAGING_PANELS;
    let h = TAU / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * slow_coefficient(i as f64 * h, psi, level.c2, params)?;
    }
    Ok(sum * h / 3.0)
}

/// Closed form of [`averaged_slow_field`]:
/// `2 pi sqrt(C2) ((C + 1) cos(psi) - C sin(psi))`.
pub fn averaged_slow_field_formula(psi: f64, c2: f64, cost: f64) -> f64 {
    TAU * c2.sqrt() * ((cost + 1.0) * psi.cos() - cost * psi.sin())
}

/// Residuals of the equilibrium conditions on the torus (plane of
/// equilibria written in angles).
pub fn plane_residual(pt: &TorusPoint, cost: f64) -> f64 {
    let (r1, r2) = pt.level.radii();
    let (sf, cf) = pt.phi.sin_cos();
    let (ss, cs) = pt.psi.sin_cos();
    let c = cost;
    let e1 = r1 * sf - r2 * (-c * ss + c * cs + ss);
    let e2 = r1 * cf - r2 * ((c + 1.0) * cs - c * ss);
    e1.abs().max(e2.abs())
}

/// Difference of the two plane conditions:
/// `r1 (sin phi - cos phi) = r2 (sin psi - cos psi)`.
pub fn difference_residual(pt: &TorusPoint) -> f64 {
    let (r1, r2) = pt.level.radii();
    (r1 * (pt.phi.sin() - pt.phi.cos()) - r2 * (pt.psi.sin() - pt.psi.cos())).abs()
}

/// The same condition in phase form:
/// `sin(phi - pi/4) = sqrt(C2 / C1) sin(psi - pi/4)`.
pub fn phase_residual(pt: &TorusPoint) -> f64 {
    ((pt.phi - FRAC_PI_4).sin() - (pt.level.c2 / pt.level.c1).sqrt() * (pt.psi - FRAC_PI_4).sin()).abs()
}

pub const TORUS_EQUILIBRIUM_FIELD_TOL: f64 = 1e-8;
const PLANE_TOL: f64 = 1e-10;

/// Candidate angles solving the squared and differenced plane conditions,
/// before any filtering.
pub fn equilibrium_candidates(level: &TorusLevel, cost: f64) -> Vec<(f64, f64)> {
    let TorusLevel { c1, c2 } = *level;
    let c = cost;
    let norm = (1.0 + c * c).sqrt();
    let s = (c2 + 2.0 * c2 * c * c - c1) / (2.0 * c * norm * c2);
    if !(-1.0..=1.0).contains(&s) {
        return Vec::new();
    }
    let alpha = (c / norm).acos();
    let base = s.asin();
    let mut out = Vec::new();
    for k in -1..=1 {
        let k = k as f64;
        for psi in [0.5 * (base + alpha) + PI * k, 0.5 * (-base + alpha) + FRAC_PI_2 + PI * k] {
            let sigma = (c2 / c1).sqrt() * (psi - FRAC_PI_4).sin();
            if !(-1.0..=1.0).contains(&sigma) {
                continue;
            }
            let turn = sigma.asin();
            for l in -1..=1 {
                let l = l as f64;
                for phi in [FRAC_PI_4 + turn + TAU * l, FRAC_PI_4 - turn + PI * (2.0 * l + 1.0)] {
                    out.push((wrap(phi), wrap(psi)));
                }
            }
        }
    }
    out
}

/// Equilibria on the torus inside its admissible rectangle (`B = 1`). At
/// most four exist.
pub fn torus_equilibria(level: &TorusLevel, params: &PayoffParams) -> Result<Vec<TorusPoint>> {
    require_unit_benefit(params)?;
    let rect = admissible_rectangle(level)?;
    let mut found: Vec<TorusPoint> = Vec::new();
    for (phi, psi) in equilibrium_candidates(level, params.cost()) {
        let pt = TorusPoint::new(phi, psi, *level);
        if !rect.contains(phi, psi) || plane_residual(&pt, params.cost()) > PLANE_TOL {
            continue;
        }
        let Ok((a, b)) = torus_field(&pt, params) else { continue };
        if a.hypot(b) >= TORUS_EQUILIBRIUM_FIELD_TOL {
            continue;
        }
        let duplicate = found
            .iter()
            .any(|q| angular_distance(q.phi, phi) < 1e-9 && angular_distance(q.psi, psi) < 1e-9);
        if !duplicate {
            found.push(pt);
        }
    }
    found.truncate(4);
    Ok(found)
}

/// Zeros found by scanning a `resolution x resolution` grid over the
/// rectangle for cells where both components change sign, then polishing
/// with Newton's method. Independent of the explicit equilibrium formulas.
pub fn grid_scan_zeros(
    level: &TorusLevel,
    params: &PayoffParams,
    resolution: usize,
    method: FieldMethod,
) -> Result<Vec<TorusPoint>> {
    let rect = admissible_rectangle(level)?;
    let n = resolution.max(2);
    let dphi = (rect.phi.1 - rect.phi.0) / n as f64;
    let dpsi = (rect.psi.1 - rect.psi.0) / n as f64;
    // sample at cell corners shifted half a cell inside the open rectangle
    let phi_at = |i: usize| rect.phi.0 + (i as f64 + 0.5) * dphi;
    let psi_at = |j: usize| rect.psi.0 + (j as f64 + 0.5) * dpsi;
    let eval = |phi: f64, psi: f64| -> Option<(f64, f64)> {
        torus_field_with(&TorusPoint { phi, psi, level: *level }, params, method).ok()
    };
    let values: Vec<Vec<Option<(f64, f64)>>> = (0..n)
        .map(|i| (0..n).map(|j| eval(phi_at(i), psi_at(j))).collect())
        .collect();

    let mut zeros: Vec<TorusPoint> = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let corners = [values[i][j], values[i + 1][j], values[i][j + 1], values[i + 1][j + 1]];
            let Some(corners) = corners.into_iter().collect::<Option<Vec<_>>>() else {
                continue;
            };
            let changes = |pick: fn(&(f64, f64)) -> f64| {
                let lo = corners.iter().map(pick).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(pick).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if !(changes(|v| v.0) && changes(|v| v.1)) {
                continue;
            }
            let start = (phi_at(i) + 0.5 * dphi, psi_at(j) + 0.5 * dpsi);
            if let Some((phi, psi)) = newton_polish(start, &eval) {
                if !rect.contains(phi, psi) {
                    continue;
                }
                let duplicate = zeros
                    .iter()
                    .any(|q| angular_distance(q.phi, phi) < 1e-7 && angular_distance(q.psi, psi) < 1e-7);
                if !duplicate {
                    zeros.push(TorusPoint::new(phi, psi, *level));
                }
            }
        }
    }
    Ok(zeros)
}

fn newton_polish<F>(start: (f64, f64), eval: &F) -> Option<(f64, f64)>
where
    F: Fn(f64, f64) -> Option<(f64, f64)>,
{
    let (mut phi, mut psi) = start;
    let h = 1e-7;
    for _ in 0..50 {
        let (f1, f2) = eval(phi, psi)?;
        if f1.hypot(f2) < 1e-12 {
            return Some((phi, psi));
        }
        let (a1, a2) = eval(phi + h, psi)?;
        let (b1, b2) = eval(phi - h, psi)?;
        let (c1, c2) = eval(phi, psi + h)?;
        let (d1, d2) = eval(phi, psi - h)?;
        let j11 = (a1 - b1) / (2.0 * h);
        let j21 = (a2 - b2) / (2.0 * h);
        let j12 = (c1 - d1) / (2.0 * h);
        let j22 = (c2 - d2) / (2.0 * h);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step_phi = (j22 * f1 - j12 * f2) / det;
        let step_psi = (-j21 * f1 + j11 * f2) / det;
        phi -= step_phi;
        psi -= step_psi;
        if step_phi.hypot(step_psi) < 1e-14 {
            break;
        }
    }
    let (f1, f2) = eval(phi, psi)?;
    (f1.hypot(f2) < TORUS_EQUILIBRIUM_FIELD_TOL).then_some((phi, psi))
}

/// Integrates the toric field, halting when the image point leaves the
/// cube margin. Angles are not wrapped along the way.
pub fn integrate_torus(pt: &TorusPoint, params: &PayoffParams, t_end: f64, settings: &Settings) -> Solution {
    let level = pt.level;
    ode::solve(
        |y| {
            let (a, b) = torus_field(&TorusPoint { phi: y[0], psi: y[1], level }, params)?;
            Ok(vec![a, b])
        },
        &[pt.phi, pt.psi],
        t_end,
        settings,
        |y| within_margin(to_cube(&TorusPoint { phi: y[0], psi: y[1], level }).as_slice()),
    )
}

/// A sampled branch of the zero set of the toric denominator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenominatorCurve {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Samples the curves `K = 0` and `L = 0` at `samples` values of `psi`.
pub fn denominator_zero_curves(level: &TorusLevel, samples: usize) -> Vec<DenominatorCurve> {
    let (r1, r2) = level.radii();
    let mut k_plus = Vec::new();
    let mut k_minus = Vec::new();
    let mut l_plus = Vec::new();
    let mut l_minus = Vec::new();
    for j in 0..samples {
        let psi = TAU * j as f64 / samples as f64;
        let (ss, cs) = psi.sin_cos();
        // K = sin(phi) (sin psi - 2 cos psi) + cos(phi) cos psi
        let phi = (-cs).atan2(ss - 2.0 * cs);
        k_plus.push((wrap(phi), psi));
        k_minus.push((wrap(phi + PI), psi));
        // L = a sin(phi) + b cos(phi) + c0
        let a = r1 * r2 * ss;
        let b = r1 * r2 * (cs - 2.0 * ss) - 2.0 * r1;
        let c0 = 2.0 * r2 * ss;
        let rho = a.hypot(b);
        if rho > 0.0 && (c0 / rho).abs() <= 1.0 {
            let theta = b.atan2(a);
            let base = (-c0 / rho).asin();
            l_plus.push((wrap(base - theta), psi));
            l_minus.push((wrap(PI - base - theta), psi));
        }
    }
    vec![
        DenominatorCurve { name: "K+".into(), points: k_plus },
        DenominatorCurve { name: "K-".into(), points: k_minus },
        DenominatorCurve { name: "L+".into(), points: l_plus },
        DenominatorCurve { name: "L-".into(), points: l_minus },
    ]
}
