//! Central tolerance record and solver options.
//!
//! Every numeric comparison in the workspace routes through [`Tolerances`] so
//! that feasibility, duplicate-point, integrality and positivity thresholds
//! stay consistent between the simplex core, the oracles and the drivers.

use serde::{Deserialize, Serialize};

/// Shared numeric thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Constraint residual below which a point counts as feasible.
    pub feas: f64,
    /// Two points closer than this (inf-norm) are duplicates.
    pub dup: f64,
    /// Distance from the nearest integer below which a value is integral.
    pub mip: f64,
    /// Threshold for "strictly positive" in oracle verdicts.
    pub pos: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-7,
            dup: 1e-8,
            mip: 1e-6,
            pos: 1e-6,
        }
    }
}

/// Which half-space family the partition step treats as primary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PartitionSign {
    /// Primary element is exactly `{w : basis policy λ(w) ≥ 0}`.
    #[default]
    PolicyNonnegative,
    /// Mirror convention: the same rows with flipped sign.
    Mirrored,
}

/// Knobs shared by the drivers and oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: Tolerances,
    /// Relative optimality gap target for CCG / DBC termination.
    pub epsilon: f64,
    /// Absolute gap threshold for the inner Benders loop (`UB − LB`).
    pub conv: f64,
    /// Multiplier applied to the instance-derived scale when building big-M.
    pub big_m_mult: f64,
    /// Hard cap on driver iterations (outer + inner combined per driver).
    pub iter_limit: usize,
    /// Wall-clock budget in seconds; `None` = unlimited.
    pub time_limit: Option<f64>,
    /// Cap on alternating-maximization rounds before truncation.
    pub am_max_rounds: usize,
    /// Cap on partition-tree nodes before the oracle gives up.
    pub tree_node_limit: usize,
    /// Candidate cap for brute-force vertex enumeration.
    pub vertex_candidate_limit: u64,
    pub partition_sign: PartitionSign,
    /// Seed recorded in reports; generators take their own seed.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: Tolerances::default(),
            epsilon: 1e-3,
            conv: 1e-9,
            big_m_mult: 1e4,
            iter_limit: 500,
            time_limit: Some(1000.0),
            am_max_rounds: 100,
            tree_node_limit: 10_000,
            vertex_candidate_limit: 1_000_000,
            partition_sign: PartitionSign::PolicyNonnegative,
            seed: 0,
        }
    }
}
