//! Minimum worst-case source transmit power for multi-pair wireless networks
//! assisted by energy-harvesting (EH) relays.
//!
//! The library solves a joint power assignment / relay selection problem:
//! `M` source-destination pairs, each on its own frequency band, are assisted
//! by `K` half-duplex amplify-and-forward relays powered only by harvested
//! energy. The solver finds the smallest common source power bound `eta` such
//! that every pair can meet a per-block QoS target while every relay respects
//! energy causality, then verifies the resulting policy in a block-level
//! simulator.
//!
//! Module map:
//! - [`model`]: scenario description, geometry, EH traces, energy ledgers.
//! - [`utility`]: Rayleigh / AF success probabilities and their inverses.
//! - [`lp`]: dense simplex feasibility / optimization solver.
//! - [`feasibility`]: relay pre-selection, the zeta sufficient condition and
//!   the per-interval relay-division LP.
//! - [`optimizer`]: bisection on `eta`, greedy baseline, LP-relaxation bound.
//! - [`simulator`]: block-level execution with energy-causality enforcement.
//! - [`experiment`]: Monte Carlo sweeps and CSV output for the CLI.

pub mod experiment;
pub mod feasibility;
pub mod lp;
pub mod model;
pub mod optimizer;
pub mod simulator;
pub mod utility;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: zero distance between endpoints")]
    DegenerateGeometry,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Target utility unreachable even at peak relay power; the relay is not
    /// in the candidate set for this source power.
    #[error("not in candidate set: target utility unreachable at peak relay power")]
    NotInCandidateSet,

    #[error("energy causality violation: relay {relay} short by {deficit:.3e} J at block {block}")]
    EnergyCausality {
        relay: usize,
        block: usize,
        deficit: f64,
    },

    #[error("solver stall: pivot cap exceeded")]
    SolverStall,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("scenario infeasible at eta = {eta:.6} W: {reason}")]
    InfeasibleScenario { eta: f64, reason: String },

    #[error("bound requires desk-scale N: {0} variables exceeds cap")]
    SizeCap(usize),

    #[error("sufficiency witness failure: no active relay for pair {pair} at block {block}")]
    WitnessFailure { pair: usize, block: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
