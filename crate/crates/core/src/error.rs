use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("history length must be 2N (memory {memory}, got {len} symbols)")]
    HistoryLength { memory: usize, len: usize },

    #[error("invalid action symbol {0:?}, expected 'C' or 'D'")]
    InvalidSymbol(char),

    #[error("memory must be at least 1")]
    ZeroMemory,

    #[error("strategy length {len} does not match 4^{memory}")]
    StrategyLength { memory: usize, len: usize },

    #[error("strategy entry {index} = {value} lies outside [0, 1]")]
    ProbabilityRange { index: usize, value: f64 },

    #[error("strategies have different memory ({0} vs {1})")]
    MemoryMismatch(usize, usize),

    #[error("payoff parameters require 0 < C < B (got B = {b}, C = {c})")]
    InvalidPayoffParams { b: f64, c: f64 },

    #[error("recursion base is memory 1")]
    RecursionBase,

    #[error("non-unique stationary distribution (null space dimension {0})")]
    NonUniqueStationary(usize),

    #[error("stationary distribution has negative mass {0:e}")]
    NegativeMass(f64),

    #[error("linear system is singular")]
    Singular,

    #[error("determinant formula singular (denominator {0:e})")]
    DeterminantSingular(f64),

    #[error("field denominator vanishes")]
    FieldDenominator,

    #[error("finite-difference stencil leaves the open cube at coordinate {0}")]
    StencilOutside(usize),

    #[error("operation requires memory 1 (got {0})")]
    RequiresMemoryOne(usize),

    #[error("not an equilibrium (field norm {0:e})")]
    NotEquilibrium(f64),

    #[error("point on a degenerate torus")]
    DegenerateTorus,

    #[error("toric denominator vanishes")]
    ToricDenominator,

    #[error("torus level {0} outside (0, 2]")]
    LevelRange(f64),

    #[error("perturbation eps must lie in (0, 0.5), got {0}")]
    PerturbationRange(f64),

    #[error("operation assumes the normalisation B = 1 (got B = {0})")]
    RequiresUnitBenefit(f64),

    #[error("simulation needs at least one recorded round")]
    ZeroRounds,

    #[error("unsupported memory {0} for this operation")]
    UnsupportedMemory(usize),
}
