//! HiGHS adapter for mixed-integer solves.
//!
//! Only status, objective and primal values are consumed from HiGHS; duals,
//! rays and bases come exclusively from the built-in simplex so that their
//! semantics stay under our control.

use super::{ConSense, LinearModel, MipOptions, Objective, SolveOutcome, SolveStatus};
use crate::error::{Error, Result};
use highs::{HighsModelStatus, RowProblem, Sense};
use std::ops::Bound;
use std::time::Instant;

pub fn solve(model: &LinearModel, opts: &MipOptions) -> Result<SolveOutcome> {
    let start = Instant::now();
    let mut pb = RowProblem::new();
    let mut cols = Vec::with_capacity(model.num_cols());
    for c in &model.cols {
        let bounds = (Bound::Included(c.lb), Bound::Included(c.ub));
        let col = if c.integer {
            pb.add_integer_column(c.cost, bounds)
        } else {
            pb.add_column(c.cost, bounds)
        };
        cols.push(col);
    }
    for row in &model.rows {
        let bounds: (Bound<f64>, Bound<f64>) = match row.sense {
            ConSense::Le => (Bound::Unbounded, Bound::Included(row.rhs)),
            ConSense::Ge => (Bound::Included(row.rhs), Bound::Unbounded),
            ConSense::Eq => (Bound::Included(row.rhs), Bound::Included(row.rhs)),
        };
        pb.add_row(bounds, row.coeffs.iter().map(|&(j, v)| (cols[j], v)));
    }
    let sense = match model.sense {
        Objective::Minimize => Sense::Minimise,
        Objective::Maximize => Sense::Maximise,
    };
    let mut hm = pb.optimise(sense);
    hm.make_quiet();
    hm.set_option("threads", 1);
    hm.set_option("random_seed", 0);
    hm.set_option("mip_rel_gap", 0.0);
    hm.set_option("mip_abs_gap", 1e-9);
    hm.set_option("primal_feasibility_tolerance", 1e-9);
    hm.set_option("mip_feasibility_tolerance", 1e-9);
    if let Some(limit) = opts.time_limit {
        hm.set_option("time_limit", limit.max(0.0));
    }
    let solved = hm.solve();
    let seconds = start.elapsed().as_secs_f64();
    let n = model.num_cols();
    let blank = |status: SolveStatus, objective: f64| SolveOutcome {
        status,
        primal: vec![0.0; n],
        objective,
        duals: None,
        basic: false,
        basis: None,
        ray: None,
        seconds,
    };
    match solved.status() {
        HighsModelStatus::Optimal => {
            let sol = solved.get_solution();
            Ok(SolveOutcome {
                status: SolveStatus::Optimal,
                primal: sol.columns().to_vec(),
                objective: solved.objective_value(),
                duals: None,
                basic: false,
                basis: None,
                ray: None,
                seconds,
            })
        }
        HighsModelStatus::Infeasible => {
            let objective = match model.sense {
                Objective::Minimize => f64::INFINITY,
                Objective::Maximize => f64::NEG_INFINITY,
            };
            Ok(blank(SolveStatus::Infeasible, objective))
        }
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            let objective = match model.sense {
                Objective::Minimize => f64::NEG_INFINITY,
                Objective::Maximize => f64::INFINITY,
            };
            Ok(blank(SolveStatus::Unbounded, objective))
        }
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            let sol = solved.get_solution();
            let mut out = blank(SolveStatus::Limit, f64::NAN);
            if sol.columns().len() == n {
                out.primal = sol.columns().to_vec();
                out.objective = solved.objective_value();
            }
            Ok(out)
        }
        other => Err(Error::Internal(format!("mip engine returned {other:?}"))),
    }
}
