//! Restricted master problem over a finite scenario set.
//!
//! `Z̲(x, V) = min a'x + θ  s.t.  θ ≥ b'yˢ, Ax + Byˢ + Cuˢ ≥ c, yˢ ≥ 0`
//! for every scenario `uˢ ∈ V`. The model object grows by one recourse block
//! per added scenario instead of being rebuilt, so drivers can extend it
//! cheaply across iterations.

use crate::backend::{self, ConSense, LinearModel, MipOptions, Objective, SolveStatus};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::model::{second_stage_value, ScenarioSet, TwoStageInstance};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub x: Vec<f64>,
    pub theta: f64,
    /// `a'x + θ`, the lower bound delivered by this master.
    pub objective: f64,
    /// Recourse plan per scenario, in insertion order.
    pub ys: Vec<Vec<f64>>,
    pub seconds: f64,
}

/// Incrementally grown master model.
pub struct MasterModel<'a> {
    inst: &'a TwoStageInstance,
    mdl: LinearModel,
    x_cols: Vec<usize>,
    theta_col: usize,
    y_blocks: Vec<Vec<usize>>,
}

impl<'a> MasterModel<'a> {
    pub fn new(inst: &'a TwoStageInstance) -> Self {
        let mut mdl = LinearModel::new(Objective::Minimize);
        let x_cols = inst.x_set.install(&mut mdl, &inst.a);
        let theta_col = mdl.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
        MasterModel {
            inst,
            mdl,
            x_cols,
            theta_col,
            y_blocks: Vec::new(),
        }
    }

    pub fn num_scenarios(&self) -> usize {
        self.y_blocks.len()
    }

    /// Append the recourse block for one scenario.
    pub fn add_scenario(&mut self, u: &[f64]) {
        assert_eq!(u.len(), self.inst.l(), "scenario dimension mismatch");
        let inst = self.inst;
        let ys: Vec<usize> = (0..inst.m())
            .map(|_| self.mdl.add_col(0.0, 0.0, f64::INFINITY))
            .collect();
        let cu = inst.c_mat.matvec(u);
        for i in 0..inst.r() {
            let mut coeffs: Vec<(usize, f64)> = inst
                .a_mat
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, &v)| (self.x_cols[j], v))
                .collect();
            coeffs.extend(
                inst.b_mat
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (ys[j], v)),
            );
            self.mdl.add_row(ConSense::Ge, inst.c[i] - cu[i], &coeffs);
        }
        // b'yˢ ≤ θ
        let mut coeffs: Vec<(usize, f64)> = inst
            .b
            .iter()
            .enumerate()
            .map(|(j, &v)| (ys[j], v))
            .collect();
        coeffs.push((self.theta_col, -1.0));
        self.mdl.add_row(ConSense::Le, 0.0, &coeffs);
        self.y_blocks.push(ys);
    }

    pub fn solve(&self, tol: &Tolerances, mip: &MipOptions) -> Result<MasterSolution> {
        if self.y_blocks.is_empty() {
            return Err(Error::Internal("master solved with no scenarios".into()));
        }
        let out = backend::solve_mip(&self.mdl, tol, mip)?;
        match out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::ProblemInfeasible(
                    "deterministic master is infeasible: no first-stage decision covers the \
                     current scenarios"
                        .into(),
                ))
            }
            SolveStatus::Unbounded => {
                return Err(Error::Internal(
                    "master unbounded below; instance violates boundedness".into(),
                ))
            }
            SolveStatus::Limit => {
                return Err(Error::LimitReached("master solve hit the time limit".into()))
            }
        }
        let mut x: Vec<f64> = self.x_cols.iter().map(|&j| out.primal[j]).collect();
        for (j, &int) in self.inst.x_set.integer.iter().enumerate() {
            if int {
                x[j] = x[j].round();
            }
        }
        let theta = out.primal[self.theta_col];
        let ys = self
            .y_blocks
            .iter()
            .map(|block| block.iter().map(|&j| out.primal[j]).collect())
            .collect();
        Ok(MasterSolution {
            objective: out.objective,
            x,
            theta,
            ys,
            seconds: out.seconds,
        })
    }
}

/// One-shot master solve over a scenario set.
pub fn solve_master(
    inst: &TwoStageInstance,
    scenarios: &ScenarioSet,
    tol: &Tolerances,
    mip: &MipOptions,
) -> Result<MasterSolution> {
    let mut mm = MasterModel::new(inst);
    for u in scenarios.points() {
        mm.add_scenario(u);
    }
    mm.solve(tol, mip)
}

/// `Z̲(x, V)` for fixed `x`: worst scenario value; `+∞` as soon as any
/// scenario's recourse LP is infeasible. Scenario LPs run concurrently.
pub fn eval_under_z(
    inst: &TwoStageInstance,
    x: &[f64],
    scenarios: &ScenarioSet,
    tol: &Tolerances,
) -> Result<f64> {
    let values: Result<Vec<f64>> = scenarios
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|u| second_stage_value(inst, x, u, tol))
        .collect();
    Ok(values?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{tiny1, tiny2};
    use crate::model::CutOrigin;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn scen(us: &[&[f64]]) -> ScenarioSet {
        let mut s = ScenarioSet::new();
        for u in us {
            s.add(u.to_vec(), CutOrigin::Seed, true, 1e-8);
        }
        s
    }

    #[test]
    fn tiny1_master_lower_bounds() {
        let inst = tiny1();
        // Only u = 1: the constraint is free to satisfy with x = y = 0.
        let sol = solve_master(&inst, &scen(&[&[1.0]]), &tol(), &MipOptions::default()).unwrap();
        assert!(sol.objective.abs() < 1e-9);
        assert!(sol.x[0].abs() < 1e-9);
        // Worst vertex u = 0 forces value 1.
        let sol = solve_master(&inst, &scen(&[&[0.0]]), &tol(), &MipOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        // Both vertices: still 1 (u = 0 dominates).
        let sol =
            solve_master(&inst, &scen(&[&[0.0], &[1.0]]), &tol(), &MipOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tiny2_master_needs_adverse_scenario() {
        let inst = tiny2();
        // u = 0 alone lets the master close the facility.
        let sol = solve_master(&inst, &scen(&[&[0.0]]), &tol(), &MipOptions::default()).unwrap();
        assert!(sol.objective.abs() < 1e-9);
        assert!(sol.x[0].abs() < 1e-9);
        // Adding u = 1 forces x = 1 and the true optimum 1.5.
        let sol =
            solve_master(&inst, &scen(&[&[0.0], &[1.0]]), &tol(), &MipOptions::default()).unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-6);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn master_grows_monotonically() {
        let inst = tiny1();
        let mut mm = MasterModel::new(&inst);
        mm.add_scenario(&[1.0]);
        let lb1 = mm.solve(&tol(), &MipOptions::default()).unwrap().objective;
        mm.add_scenario(&[0.5]);
        let lb2 = mm.solve(&tol(), &MipOptions::default()).unwrap().objective;
        mm.add_scenario(&[0.0]);
        let lb3 = mm.solve(&tol(), &MipOptions::default()).unwrap().objective;
        assert!(lb2 >= lb1 - 1e-9 && lb3 >= lb2 - 1e-9);
        assert!((lb3 - 1.0).abs() < 1e-9);
        assert_eq!(mm.num_scenarios(), 3);
    }

    #[test]
    fn eval_under_z_matches_worst_scenario() {
        let inst = tiny1();
        let v = eval_under_z(&inst, &[0.5], &scen(&[&[0.0], &[0.5], &[1.0]]), &tol()).unwrap();
        // value(x=1/2, u) = 1/2 + max(1/2 − u, 0); worst at u = 0.
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eval_under_z_propagates_infeasibility() {
        let inst = tiny2();
        let v = eval_under_z(&inst, &[0.0], &scen(&[&[0.0], &[0.5]]), &tol()).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn master_infeasible_when_scenarios_conflict() {
        // Shrink TINY-2's X to {0}: u = 1 can then never be covered.
        let mut inst = tiny2();
        inst.x_set.ub = vec![0.0];
        let err = solve_master(&inst, &scen(&[&[1.0]]), &tol(), &MipOptions::default());
        assert!(matches!(err, Err(Error::ProblemInfeasible(_))));
    }
}
