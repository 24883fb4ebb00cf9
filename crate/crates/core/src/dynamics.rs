//! Adaptive dynamics `x' = d/dp A(p, x) |_{p = x}` on the strategy cube.
//!
//! Three evaluations of the field are available:
//! * [`field_numeric`] differentiates the determinant payoff by central
//!   differences. It is the reference definition but carries `~1e-10` noise.
//! * [`field_exact`] uses the Markov-chain sensitivity formula
//!   `dA/dp_s = nu_s * sum_j dM_sj/dp_s * h_j` with `(I - M + 1 nu^T) h = f`.
//!   It is exact up to rounding, works for any memory, and also evaluates the
//!   algebraic continuation of the field outside the cube.
//! * [`field_closed_form`] is the explicit rational field for memory 1.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::Serialize;

use crate::chain::{build_matrix_direct, solve_left_kernel};
use crate::error::{Error, Result};
use crate::ode::{self, Settings, Solution};
use crate::payoff::{build_payoff_vector, payoff_by_determinant};
use crate::strategy::{follower_index, state_count, Action, PayoffParams, Strategy};

/// Resident strategy `x`, shared by both roles while it evolves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowState {
    x: Vec<f64>,
}

impl FlowState {
    /// Requires a length `4^N` vector; entries are not range checked so that
    /// continuation points outside the cube can be represented.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        memory_of(x.len())?;
        Ok(Self { x })
    }

    pub fn memory(&self) -> usize {
        memory_of(self.x.len()).unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    pub fn in_open_cube(&self) -> bool {
        self.x.iter().all(|&v| v > 0.0 && v < 1.0)
    }

    pub fn in_closed_cube(&self) -> bool {
        self.x.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    pub(crate) fn strategy(&self) -> Strategy {
        Strategy::unchecked(self.memory(), self.x.clone()).expect("length checked on construction")
    }
}

impl From<[f64; 4]> for FlowState {
    fn from(x: [f64; 4]) -> Self {
        Self { x: x.to_vec() }
    }
}

pub(crate) fn memory_of(len: usize) -> Result<usize> {
    (1..=8)
        .find(|&n| state_count(n) == len)
        .ok_or(Error::StrategyLength {
            memory: 0,
            len,
        })
}

fn require_memory_one(x: &FlowState) -> Result<[f64; 4]> {
    match x.as_slice() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::RequiresMemoryOne(x.memory())),
    }
}

pub const DEFAULT_FIELD_STEP: f64 = 1e-6;

/// Central difference of the determinant payoff in each leader coordinate,
/// with the co-player fixed at `x`.
pub fn field_numeric(x: &FlowState, params: &PayoffParams, h: f64) -> Result<Vec<f64>> {
    let xs = x.as_slice();
    if let Some(i) = xs.iter().position(|&v| v - h <= 0.0 || v + h >= 1.0) {
        return Err(Error::StencilOutside(i));
    }
    let q = x.strategy();
    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let mut up = xs.to_vec();
        let mut down = xs.to_vec();
        up[i] += h;
        down[i] -= h;
        let a_up = payoff_by_determinant(&Strategy::new(q.memory(), up)?, &q, params)?;
        let a_down = payoff_by_determinant(&Strategy::new(q.memory(), down)?, &q, params)?;
        out.push((a_up - a_down) / (2.0 * h));
    }
    Ok(out)
}

/// Exact gradient through the fundamental matrix of the chain.
pub fn field_exact(x: &FlowState, params: &PayoffParams) -> Result<Vec<f64>> {
    let memory = x.memory();
    let s = x.strategy();
    let m = build_matrix_direct(&s, &s)?;
    let n = m.dim();
    let nu = solve_left_kernel(m.entries())?;
    let f = build_payoff_vector(params, memory)?;

    let mut fundamental = DMatrix::<f64>::identity(n, n) - m.entries();
    for i in 0..n {
        for j in 0..n {
            fundamental[(i, j)] += nu[j];
        }
    }
    let h = fundamental
        .lu()
        .solve(&DVector::from_column_slice(&f.f))
        .ok_or(Error::Singular)?;

    let succ_of = |state: usize| crate::chain::successors(memory, state);
    let xs = s.probs();
    let mut grad = Vec::with_capacity(n);
    for state in 0..n {
        // row `state` depends on p[state] only through the leader's move
        let on_c = xs[follower_index(memory, state, Action::C)];
        let on_d = xs[follower_index(memory, state, Action::D)];
        let [cc, cd, dc, dd] = succ_of(state);
        let row = on_c * h[cc] + (1.0 - on_c) * h[cd] - on_d * h[dc] - (1.0 - on_d) * h[dd];
        grad.push(nu[state] * row);
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(grad)
}

/// Common denominator of the memory-1 closed form.
pub fn closed_form_denominator(x: &[f64; 4]) -> f64 {
    let [p1, p2, p3, p4] = *x;
    let first = p1 * (p2 - 1.0) - 2.0 * p2 * p3 + p2 + p3 * p4 - 1.0;
    let second = p1 * (p2 - 2.0 * p4 - 1.0) - p2 + (p3 + 2.0) * p4 + 1.0;
    first * second * second
}

pub(crate) const DENOMINATOR_TOL: f64 = 1e-14;

/// Explicit memory-1 field. Errors when the common denominator is below
/// `1e-14` in magnitude.
pub fn field_closed_form(x: &FlowState, params: &PayoffParams) -> Result<[f64; 4]> {
    let xs = require_memory_one(x)?;
    closed_form(&xs, params)
}

pub(crate) fn closed_form(xs: &[f64; 4], params: &PayoffParams) -> Result<[f64; 4]> {
    let [p1, p2, p3, p4] = *xs;
    let (b, c) = (params.benefit(), params.cost());
    let a = closed_form_denominator(xs);
    if !(a.abs() >= DENOMINATOR_TOL) {
        return Err(Error::FieldDenominator);
    }
    // shared factor of the first and third components
    let shared = b * (p2 - p4) * (-p1 * p4 + p1 + p2 * (p3 - 1.0) - p3 + p4)
        + b * (p2 - p1)
        + c * (p4 * (-2.0 * p1 * p2 + 2.0 * p2 * p3 + p2 + 1.0)
            + (p2 - 1.0) * (p1 * p2 - p2 * p3 - 1.0)
            + p4 * p4 * (p1 - p3 - 1.0));
    let d1 = p3 * p4 * shared / a;
    let d3 = -(p1 - 1.0) * p4 * shared / a;
    let d2 = (1.0 - p1)
        * p4
        * (b * (p3 * (p1 * p2 - p2 * p3 - 1.0) + p1 * p4 * (p3 - p1) + p4)
            + c * (p1 * p1 * (p2 - p4 - 1.0)
                + p1 * p3 * (-2.0 * p2 + 2.0 * p4 + 1.0)
                + p3 * (p3 + 1.0) * (p2 - p4)
                - p2
                + p4
                + 1.0))
        / a;
    let d4 = (1.0 - p1)
        * (p2 - 1.0)
        * (b * ((p1 * p1 - 1.0) * p4 - p1 * p3 * (p2 + p4) + p2 * p3 * p3 + p3)
            + c * (p1 * p1 * (-p2 + p4 + 1.0)
                + p1 * p3 * (2.0 * p2 - 2.0 * p4 - 1.0)
                - p3 * (p3 + 1.0) * (p2 - p4)
                + p2
                - p4
                - 1.0))
        / a;
    Ok([d1, d2, d3, d4])
}

/// How the field is evaluated by integrators and analyses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FieldMethod {
    FiniteDifference { h: f64 },
    Exact,
    ClosedForm,
}

impl FieldMethod {
    pub fn evaluate(&self, x: &FlowState, params: &PayoffParams) -> Result<Vec<f64>> {
        match *self {
            FieldMethod::FiniteDifference { h } => field_numeric(x, params, h),
            FieldMethod::Exact => field_exact(x, params),
            FieldMethod::ClosedForm => field_closed_form(x, params).map(|v| v.to_vec()),
        }
    }

    /// Closed form for memory 1, exact sensitivities otherwise.
    pub fn fastest_for(memory: usize) -> Self {
        if memory == 1 {
            FieldMethod::ClosedForm
        } else {
            FieldMethod::Exact
        }
    }
}

/// `((x1 - 1)^2 + x3^2, (x2 - 1)^2 + x4^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvariantPair {
    pub first: f64,
    pub second: f64,
}

pub fn invariants(x: &FlowState) -> Result<InvariantPair> {
    let [p1, p2, p3, p4] = require_memory_one(x)?;
    Ok(InvariantPair {
        first: (p1 - 1.0).powi(2) + p3 * p3,
        second: (p2 - 1.0).powi(2) + p4 * p4,
    })
}

/// Margin used by the boundary monitor.
pub const BOUNDARY_MARGIN: f64 = 1e-9;

pub fn within_margin(x: &[f64]) -> bool {
    x.iter()
        .all(|&v| (BOUNDARY_MARGIN..=1.0 - BOUNDARY_MARGIN).contains(&v))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    #[serde(flatten)]
    pub solution: Solution,
}

impl Trajectory {
    pub fn points(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.solution
            .times
            .iter()
            .copied()
            .zip(self.solution.states.iter().map(|s| s.as_slice()))
    }

    pub fn status(&self) -> ode::Status {
        self.solution.status
    }

    pub fn last(&self) -> (f64, &[f64]) {
        self.solution.last()
    }

    /// Largest deviation of the two invariants from their initial values.
    pub fn invariant_drift(&self) -> Result<(f64, f64)> {
        let start = invariants(&FlowState::new(self.solution.states[0].clone())?)?;
        let mut drift = (0.0f64, 0.0f64);
        for s in &self.solution.states {
            let inv = invariants(&FlowState::new(s.clone())?)?;
            drift.0 = drift.0.max((inv.first - start.first).abs());
            drift.1 = drift.1.max((inv.second - start.second).abs());
        }
        Ok(drift)
    }
}

/// Integrates the adaptive dynamics over signed time `t_end`, halting with a
/// boundary status when a coordinate leaves `[1e-9, 1 - 1e-9]`.
pub fn integrate(
    x0: &FlowState,
    params: &PayoffParams,
    t_end: f64,
    settings: &Settings,
    method: FieldMethod,
) -> Trajectory {
    let solution = ode::solve(
        |x| method.evaluate(&FlowState { x: x.to_vec() }, params),
        x0.as_slice(),
        t_end,
        settings,
        within_margin,
    );
    Trajectory { solution }
}

/// `x -> 1 - reverse(x)`: swap the roles of cooperation and defection in
/// every remembered action.
pub fn mirror(x: &FlowState) -> FlowState {
    FlowState {
        x: x.as_slice().iter().rev().map(|v| 1.0 - v).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `p1 = 1` with `p3` a rational function of `(p2, p4)`.
    CooperateAfterMutualCooperation,
    /// The plane parametrised by `(p2, p4)`.
    Plane,
    /// `p4 = 0` with `p2` a rational function of `(p1, p3)`.
    NeverForgiveMutualDefection,
    /// Curve `p1 = C p4 / B + 1`, `p2 = 1`.
    ShiftedLine,
    /// Curve through `(1, 1, 0, 0)` parametrised by `p1`.
    DegenerateLine,
}

/// One family of zeros of the memory-1 field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquilibriumFamily {
    pub kind: FamilyKind,
    pub location: Location,
    pub free: [&'static str; 2],
    #[serde(skip)]
    params: PayoffParams,
}

impl EquilibriumFamily {
    /// Point of the family at free parameters `(u, v)`; one-parameter
    /// families ignore `v`. `None` where a defining denominator vanishes.
    pub fn point(&self, u: f64, v: f64) -> Option<[f64; 4]> {
        let (b, c) = (self.params.benefit(), self.params.cost());
        match self.kind {
            FamilyKind::CooperateAfterMutualCooperation => {
                let (p2, p4) = (u, v);
                let den = b * (p2 - 1.0) * (p2 - p4) - c * (-2.0 * p2 * p4 + (p2 - 1.0) * p2 + p4 * p4);
                (den != 0.0).then(|| [1.0, p2, (p2 - 1.0) * (b - c) * (p2 - p4 - 1.0) / den, p4])
            }
            FamilyKind::Plane => {
                let (p2, p4) = (u, v);
                Some([
                    ((b - c) * p2 + c * (p4 + 1.0)) / b,
                    p2,
                    (c * (1.0 - p2) + p4 * (b + c)) / b,
                    p4,
                ])
            }
            FamilyKind::NeverForgiveMutualDefection => {
                let (p1, p3) = (u, v);
                let den = b * p3 * (p1 - p3) + c * ((p1 - p3).powi(2) + p3 - 1.0);
                (den != 0.0).then(|| [p1, (b * p3 + c * (p1 * p1 - p1 * p3 - 1.0)) / den, p3, 0.0])
            }
            FamilyKind::ShiftedLine => {
                let p4 = u;
                Some([c * p4 / b + 1.0, 1.0, p4 * (b + c) / b, p4])
            }
            FamilyKind::DegenerateLine => {
                let p1 = u;
                Some([p1, c * (p1 - 1.0) / b + p1, 0.0, c * (p1 - 1.0) / b])
            }
        }
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            FamilyKind::ShiftedLine | FamilyKind::DegenerateLine => 1,
            _ => 2,
        }
    }
}

/// The five zero sets of the memory-1 field. Only the plane meets the open
/// cube; the shifted line lies outside it and the degenerate line meets the
/// cube only at `(1, 1, 0, 0)`.
pub fn equilibrium_families(params: &PayoffParams) -> Vec<EquilibriumFamily> {
    use FamilyKind::*;
    let family = |kind, location, free| EquilibriumFamily {
        kind,
        location,
        free,
        params: *params,
    };
    vec![
        family(CooperateAfterMutualCooperation, Location::Boundary, ["p2", "p4"]),
        family(Plane, Location::Interior, ["p2", "p4"]),
        family(NeverForgiveMutualDefection, Location::Boundary, ["p1", "p3"]),
        family(ShiftedLine, Location::Exterior, ["p4", ""]),
        family(DegenerateLine, Location::Boundary, ["p1", ""]),
    ]
}

/// Point of the equilibrium plane for free parameters `(p2, p4)`.
pub fn plane_point(params: &PayoffParams, p2: f64, p4: f64) -> [f64; 4] {
    let (b, c) = (params.benefit(), params.cost());
    [
        ((b - c) * p2 + c * (p4 + 1.0)) / b,
        p2,
        (c * (1.0 - p2) + p4 * (b + c)) / b,
        p4,
    ]
}

/// The two non-trivial eigenvalues on the plane (`B = 1`), in closed form.
pub fn plane_eigenvalues(p2: f64, p4: f64, cost: f64) -> (f64, f64) {
    let c = cost;
    let f = 2.0 * (c - 1.0).powi(2) * (c + 1.0) * (p2 - p4 - 1.0).powi(5) * (p2 - p4 + 1.0);
    let lead = c * (p2 - 1.0).powi(2) * p4 * (c * c - 2.0 * c * p2 - 3.0)
        + (c - 1.0) * (p2 - 1.0).powi(3) * (-c * c + c + p2 + 1.0)
        - p4.powi(3) * (c * (c * (c + 6.0 * p2 - 2.0) + 4.0 * p2 + 1.0) + 2.0)
        + c * (p2 - 1.0) * p4 * p4 * (c * (c + 6.0 * p2 - 2.0) + 3.0)
        + (c + 1.0) * (2.0 * c + 1.0) * p4.powi(4);
    let disc = lead * lead
        - 8.0
            * c
            * (c * c - 1.0)
            * p4
            * (p2 - p4 + 1.0)
            * (-p2 + p4 + 1.0).powi(2)
            * ((c - 1.0) * (p2 - 1.0) - c * p4)
            * (c * ((p2 - 1.0).powi(2) - p4 * p4) - 2.0 * (p2 - 1.0) * p4);
    let root = disc.sqrt();
    let t1 = 2.0
        * c
        * c
        * (p2 - p4 - 1.0)
        * (p2 * p2 * (p4 - 1.0) - 2.0 * p2 * (p4 * p4 + p4 - 1.0) + p4.powi(3) + p4 - 1.0);
    let rest = c.powi(3) * (-p2 + p4 + 1.0).powi(2) * (p2 + p4 - 1.0)
        - c * (-(4.0 * p2 + 1.0) * p4.powi(3) + 3.0 * (p2 - 1.0) * p4 * p4
            - 3.0 * (p2 - 1.0).powi(2) * p4
            + (p2 - 1.0).powi(3) * p2
            + 3.0 * p4.powi(4))
        + p2.powi(4)
        - 2.0 * p2.powi(3)
        + 2.0 * p2
        - p4.powi(4)
        + 2.0 * p4.powi(3)
        - 1.0;
    (-(t1 + root + rest) / f, (-t1 + root - rest) / f)
}

/// Fourth-order central-difference Jacobian of the exact field.
pub fn jacobian(x: &FlowState, params: &PayoffParams, step: f64) -> Result<DMatrix<f64>> {
    let n = x.as_slice().len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let at = |offset: f64| -> Result<Vec<f64>> {
            let mut y = x.as_slice().to_vec();
            y[j] += offset;
            field_exact(&FlowState { x: y }, params)
        };
        let (m2, m1, p1, p2) = (at(-2.0 * step)?, at(-step)?, at(step)?, at(2.0 * step)?);
        for i in 0..n {
            jac[(i, j)] = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * step);
        }
    }
    Ok(jac)
}

pub const JACOBIAN_STEP: f64 = 1e-5;
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    DegenerateSaddle,
    DegenerateSource,
    Boundary,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub x: Vec<f64>,
    pub field_norm: f64,
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Eigenvalue>,
    pub classification: Classification,
}

impl EquilibriumPoint {
    pub fn near_zero_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|e| e.modulus() < ZERO_EIGENVALUE_TOL)
            .count()
    }

    /// Eigenvalues of modulus at least `1e-8`, by decreasing real part.
    pub fn nonzero(&self) -> Vec<Eigenvalue> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|e| e.modulus() >= ZERO_EIGENVALUE_TOL)
            .collect()
    }
}

pub fn eigenvalues(jac: &DMatrix<f64>) -> Vec<Eigenvalue> {
    let mut ev: Vec<Eigenvalue> = if jac.nrows() == 4 {
        let fixed = Matrix4::from_iterator(jac.iter().copied());
        fixed
            .complex_eigenvalues()
            .iter()
            .map(|z| Eigenvalue { re: z.re, im: z.im })
            .collect()
    } else {
        jac.clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| Eigenvalue { re: z.re, im: z.im })
            .collect()
    };
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    ev
}

/// Eigen-analysis at a zero of the field.
pub fn classify_equilibrium(x: &FlowState, params: &PayoffParams) -> Result<EquilibriumPoint> {
    let g = field_exact(x, params)?;
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm < EQUILIBRIUM_TOL) {
        return Err(Error::NotEquilibrium(norm));
    }
    let jac = jacobian(x, params, JACOBIAN_STEP)?;
    let eigenvalues = eigenvalues(&jac);
    let mut point = EquilibriumPoint {
        x: x.as_slice().to_vec(),
        field_norm: norm,
        eigenvalues,
        classification: Classification::Other,
    };
    let nonzero = point.nonzero();
    point.classification = if !x.in_open_cube() {
        Classification::Boundary
    } else if point.near_zero_count() == 2
        && nonzero.len() == 2
        && nonzero.iter().all(|e| e.im.abs() < ZERO_EIGENVALUE_TOL)
    {
        match (nonzero[0].re > 0.0, nonzero[1].re > 0.0) {
            (true, true) => Classification::DegenerateSource,
            (true, false) => Classification::DegenerateSaddle,
            _ => Classification::Other,
        }
    } else {
        Classification::Other
    };
    Ok(point)
}
