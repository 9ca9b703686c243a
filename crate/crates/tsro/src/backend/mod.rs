//! Solver backend: immutable model description, a dense bounded-variable
//! simplex for LPs, and a HiGHS adapter for mixed-integer models.
//!
//! LPs always go through the built-in simplex because downstream code depends
//! on properties external engines do not promise: the returned point is a
//! basic (vertex) solution, the optimal basis is exposed, and unbounded
//! models come with an explicit ray. MIPs go to HiGHS, where only status,
//! objective and primal values are consumed.

mod mip;
mod simplex;

use crate::config::Tolerances;
use crate::error::{Error, Result};

/// Constraint sense for a linear row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub cost: f64,
    pub lb: f64,
    pub ub: f64,
    pub integer: bool,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse coefficient pairs `(column, value)`.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: ConSense,
    pub rhs: f64,
}

/// A linear (or mixed-integer) model. Immutable once handed to a solve call,
/// so concurrent solves over shared models are safe.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub sense: Objective,
    pub cols: Vec<Column>,
    pub rows: Vec<Row>,
}

impl LinearModel {
    pub fn new(sense: Objective) -> Self {
        LinearModel {
            sense,
            cols: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_col(&mut self, cost: f64, lb: f64, ub: f64) -> usize {
        self.cols.push(Column {
            cost,
            lb,
            ub,
            integer: false,
        });
        self.cols.len() - 1
    }

    pub fn add_int_col(&mut self, cost: f64, lb: f64, ub: f64) -> usize {
        self.cols.push(Column {
            cost,
            lb,
            ub,
            integer: true,
        });
        self.cols.len() - 1
    }

    /// Add a row, dropping explicit zeros and merging duplicate columns.
    pub fn add_row(&mut self, sense: ConSense, rhs: f64, coeffs: &[(usize, f64)]) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(j, v) in coeffs {
            assert!(j < self.cols.len(), "row references unknown column");
            if v == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += v,
                None => merged.push((j, v)),
            }
        }
        self.rows.push(Row {
            coeffs: merged,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_integers(&self) -> bool {
        self.cols.iter().any(|c| c.integer)
    }

    /// CPLEX LP-format text dump for debugging.
    pub fn to_lp_format(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}",
            match self.sense {
                Objective::Minimize => "Minimize",
                Objective::Maximize => "Maximize",
            }
        );
        let mut obj = String::from(" obj:");
        for (j, c) in self.cols.iter().enumerate() {
            if c.cost != 0.0 {
                let _ = write!(obj, " {} {} x{}", if c.cost < 0.0 { "-" } else { "+" }, c.cost.abs(), j);
            }
        }
        let _ = writeln!(s, "{obj}");
        let _ = writeln!(s, "Subject To");
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = format!(" r{i}:");
            for &(j, v) in &r.coeffs {
                let _ = write!(line, " {} {} x{}", if v < 0.0 { "-" } else { "+" }, v.abs(), j);
            }
            let op = match r.sense {
                ConSense::Le => "<=",
                ConSense::Ge => ">=",
                ConSense::Eq => "=",
            };
            let _ = writeln!(s, "{line} {op} {}", r.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for (j, c) in self.cols.iter().enumerate() {
            let lo = if c.lb == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{}", c.lb)
            };
            let hi = if c.ub == f64::INFINITY {
                "+inf".to_string()
            } else {
                format!("{}", c.ub)
            };
            let _ = writeln!(s, " {lo} <= x{j} <= {hi}");
        }
        let ints: Vec<String> = self
            .cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.integer)
            .map(|(j, _)| format!("x{j}"))
            .collect();
        if !ints.is_empty() {
            let _ = writeln!(s, "General\n {}", ints.join(" "));
        }
        s.push_str("End\n");
        s
    }

    /// Inf-norm residual of the worst-violated row at `x` (bounds included).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, c) in self.cols.iter().enumerate() {
            worst = worst.max(c.lb - x[j]).max(x[j] - c.ub);
        }
        for r in &self.rows {
            let v: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let resid = match r.sense {
                ConSense::Le => v - r.rhs,
                ConSense::Ge => r.rhs - v,
                ConSense::Eq => (v - r.rhs).abs(),
            };
            worst = worst.max(resid);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(x)
            .map(|(c, v)| c.cost * v)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time or iteration budget hit before a proven answer.
    Limit,
}

/// Which model column or row-slack occupies a basis position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSlot {
    Col(usize),
    Slack(usize),
    /// Phase-1 artificial left basic on a dependent row (degenerate, value 0).
    Artificial(usize),
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Structural column values (meaningful for Optimal; best incumbent on Limit when available).
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Row duals as ∂objective/∂rhs; LP solves only.
    pub duals: Option<Vec<f64>>,
    /// True when `primal` is a basic (vertex) solution.
    pub basic: bool,
    /// Optimal basis, one slot per row; LP solves only.
    pub basis: Option<Vec<BasisSlot>>,
    /// Recession direction in structural columns when Unbounded.
    pub ray: Option<Vec<f64>>,
    pub seconds: f64,
}

impl SolveOutcome {
    /// Unwrap an Optimal outcome; anything else is an internal error with context.
    pub fn expect_optimal(self, what: &str) -> Result<SolveOutcome> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            s => Err(Error::Internal(format!("{what}: expected optimal, got {s:?}"))),
        }
    }
}

/// Options forwarded to MIP solves.
#[derive(Debug, Clone, Default)]
pub struct MipOptions {
    pub time_limit: Option<f64>,
}

/// Solve a pure LP with the built-in simplex.
pub fn solve_lp(model: &LinearModel, tol: &Tolerances) -> Result<SolveOutcome> {
    simplex::solve(model, tol)
}

/// Solve a model that may contain integer columns. Continuous models are
/// forwarded to the simplex so that duals/basis stay available.
pub fn solve_mip(model: &LinearModel, tol: &Tolerances, opts: &MipOptions) -> Result<SolveOutcome> {
    if model.has_integers() {
        mip::solve(model, opts)
    } else {
        solve_lp(model, tol)
    }
}

#[cfg(test)]
mod tests;
