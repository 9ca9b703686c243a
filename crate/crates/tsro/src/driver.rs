//! Top-level solve loops: column-and-constraint generation and
//! duality-driven Benders decomposition.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adversary::{default_big_m, solve_alpha_oracle, solve_tilde_z};
use crate::am::f1_oracle;
use crate::backend::{self, ConSense, LinearModel, MipOptions, Objective, SolveStatus};
use crate::config::SolverOptions;
use crate::dbc::{f2_oracle, F2Verdict, PartitionTree};
use crate::error::{Error, Result};
use crate::master::solve_master;
use crate::model::{second_stage_value, CutOrigin, ScenarioSet, TwoStageInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    TimeLimit,
    IterLimit,
    /// The deterministic master itself has no feasible first stage.
    InfeasibleProblem,
    /// An oracle stalled before producing a certificate.
    Inconclusive,
}

/// Scenario appended to V during one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutRecord {
    pub origin: CutOrigin,
    pub u: Vec<f64>,
    pub vertex: bool,
    /// False when the duplicate filter dropped it.
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub cut: Option<CutRecord>,
    /// Wall time since the run started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    /// Master solves (CCG iterations / DDBD inner iterations / DBC rounds).
    pub iterations: usize,
    /// F1 cuts added (DDBD only).
    pub inner_iterations: usize,
    /// F2 invocations (DDBD only).
    pub outer_iterations: usize,
    pub termination: Termination,
    pub x: Vec<f64>,
    pub value: f64,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub trajectory: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    pub seconds: f64,
    /// Final partition-tree listing (DDBD / DBC only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tree_dump: Option<String>,
}

/// Relative optimality gap `(UB−LB)/max(min(|LB|,|UB|),1)`; `+∞` while
/// either bound is open. Bounds crossing beyond float slop is a bug.
pub fn ul_gap(lb: f64, ub: f64) -> Result<f64> {
    if lb.is_finite() && ub.is_finite() && lb > ub + 1e-9 * (1.0 + lb.abs().max(ub.abs())) {
        return Err(Error::Internal(format!("crossed bounds: LB={lb} > UB={ub}")));
    }
    if !lb.is_finite() || !ub.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok((ub - lb) / lb.abs().min(ub.abs()).max(1.0))
}

/// Seconds left in the wall-clock budget; `None` = unlimited.
pub(crate) fn remaining_budget(start: &Instant, opts: &SolverOptions) -> Option<f64> {
    opts.time_limit.map(|t| t - start.elapsed().as_secs_f64())
}

fn exhausted(budget: &Option<f64>) -> bool {
    matches!(budget, Some(b) if *b <= 0.0)
}

/// Deterministic starting scenario: the vertex of U maximizing a fixed
/// seeded random direction (flipped once if that direction is unbounded).
pub fn default_u0(inst: &TwoStageInstance, seed: u64, opts: &SolverOptions) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..inst.l()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for flip in [1.0, -1.0] {
        let mut mdl = LinearModel::new(Objective::Maximize);
        let us: Vec<usize> = g
            .iter()
            .map(|&gk| mdl.add_col(flip * gk, 0.0, f64::INFINITY))
            .collect();
        for (t, &rhs) in inst.u_set.rhs.iter().enumerate() {
            let coeffs: Vec<(usize, f64)> = (0..inst.l())
                .map(|k| (us[k], inst.u_set.d_mat[(t, k)]))
                .collect();
            mdl.add_row(ConSense::Le, rhs, &coeffs);
        }
        let out = backend::solve_lp(&mdl, &opts.tol)?;
        match out.status {
            SolveStatus::Optimal => return Ok(out.primal),
            SolveStatus::Unbounded => continue,
            SolveStatus::Infeasible => {
                return Err(Error::InvalidInstance(vec!["uncertainty set is empty".into()]))
            }
            SolveStatus::Limit => {
                return Err(Error::LimitReached("u0 probe iteration cap".into()))
            }
        }
    }
    Err(Error::InvalidInstance(vec![
        "uncertainty set is unbounded in both sampled directions".into(),
    ]))
}

/// Adversary used in CCG Step 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcgOracle {
    /// Complementarity MIO alone — reproduces the plain CCG including its
    /// silent mis-certification on instances without full recourse.
    TildeZ,
    /// Feasibility (ᾱ) oracle first; worst case only when ᾱ ≤ 0. Exact.
    AlphaExact,
}

/// Column-and-constraint generation. Each iteration solves the scenario
/// master for `(x^k, LB^k)`, asks the adversary for `u^k`, sets
/// `UB^k = Z̲(x^k, {u^k})` and appends `u^k` to V; stops when the relative
/// gap is within `opts.epsilon`.
pub fn ccg(
    inst: &TwoStageInstance,
    u0: &[f64],
    oracle: CcgOracle,
    opts: &SolverOptions,
) -> Result<RunReport> {
    let clock = Instant::now();
    let tol = &opts.tol;
    let mut warnings: Vec<String> = Vec::new();
    let mut scen = ScenarioSet::new();
    scen.add(u0.to_vec(), CutOrigin::Seed, inst.u_set.is_vertex(u0, tol.feas.max(1e-6)), tol.dup);
    let big_m = default_big_m(inst, opts.big_m_mult, tol)?;

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut k = 0usize;
    let mut x: Vec<f64> = Vec::new();
    let mut trajectory: Vec<IterationRecord> = Vec::new();

    let termination = loop {
        if ul_gap(lb, ub)? <= opts.epsilon {
            break Termination::Converged;
        }
        if k >= opts.iter_limit {
            break Termination::IterLimit;
        }
        let budget = remaining_budget(&clock, opts);
        if exhausted(&budget) {
            break Termination::TimeLimit;
        }
        k += 1;
        let mip = MipOptions { time_limit: budget };
        let master = match solve_master(inst, &scen, tol, &mip) {
            Ok(m) => m,
            Err(Error::ProblemInfeasible(msg)) => {
                warnings.push(msg);
                ub = f64::INFINITY;
                break Termination::InfeasibleProblem;
            }
            Err(Error::LimitReached(_)) => break Termination::TimeLimit,
            Err(e) => return Err(e),
        };
        x = master.x.clone();
        lb = master.objective;

        let (u_new, origin) = match oracle {
            CcgOracle::TildeZ => {
                let adv = solve_tilde_z(inst, &x, big_m, tol, &mip)?;
                warnings.extend(adv.warnings.iter().cloned());
                (adv.u_star, CutOrigin::AdversaryMio)
            }
            CcgOracle::AlphaExact => {
                let alpha = solve_alpha_oracle(inst, &x, Some(big_m), tol, &mip)?;
                warnings.extend(alpha.warnings.iter().cloned());
                if alpha.value > tol.pos {
                    (alpha.u_star, CutOrigin::AlphaOracle)
                } else {
                    let adv = solve_tilde_z(inst, &x, big_m, tol, &mip)?;
                    warnings.extend(adv.warnings.iter().cloned());
                    (adv.u_star, CutOrigin::AdversaryMio)
                }
            }
        };
        // UB^k = Z̲(x^k, {u^k}): direct assignment, not a running minimum.
        ub = second_stage_value(inst, &x, &u_new, tol)?;
        let vertex = inst.u_set.is_vertex(&u_new, tol.feas.max(1e-6));
        let accepted = scen.add(u_new.clone(), origin, vertex, tol.dup);
        trajectory.push(IterationRecord {
            k,
            lb,
            ub,
            gap: ul_gap(lb, ub)?,
            cut: Some(CutRecord { origin, u: u_new, vertex, accepted }),
            seconds: clock.elapsed().as_secs_f64(),
        });
        if !accepted && ul_gap(lb, ub)? > opts.epsilon {
            // A duplicate scenario cannot move the master; with LB ≥ Z̲(x,{u})
            // for u ∈ V this only happens under numerical stress.
            warnings.push(format!("iteration {k}: duplicate cut with open gap"));
            break Termination::Inconclusive;
        }
    };

    let gap = ul_gap(lb.min(ub), ub)?;
    Ok(RunReport {
        algorithm: match oracle {
            CcgOracle::TildeZ => "ccg".into(),
            CcgOracle::AlphaExact => "ccg-exact".into(),
        },
        iterations: k,
        inner_iterations: 0,
        outer_iterations: 0,
        termination,
        x,
        value: ub,
        lb,
        ub,
        gap,
        trajectory,
        warnings,
        seconds: clock.elapsed().as_secs_f64(),
        tree_dump: None,
    })
}

/// Duality-driven Benders decomposition. The inner loop cuts with F1 until
/// `LB ≥ UB − conv`; Step 4 verifies the incumbent with F2 and either
/// returns `Z̄(x)` (feasible) or adds the blow-up scenario and reopens the
/// bound (outer iteration).
pub fn ddbd(inst: &TwoStageInstance, u0: &[f64], opts: &SolverOptions) -> Result<RunReport> {
    let clock = Instant::now();
    let tol = &opts.tol;
    let mut warnings: Vec<String> = Vec::new();
    let mut scen = ScenarioSet::new();
    scen.add(u0.to_vec(), CutOrigin::Seed, inst.u_set.is_vertex(u0, tol.feas.max(1e-6)), tol.dup);
    let big_m = default_big_m(inst, opts.big_m_mult, tol)?;
    let mut tree = PartitionTree::new(inst, tol)?;

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut k = 0usize;
    let mut inner = 0usize;
    let mut outer = 0usize;
    let mut x: Vec<f64> = Vec::new();
    let mut trajectory: Vec<IterationRecord> = Vec::new();

    let termination = 'outer: loop {
        // Step 3: Benders loop under the current V.
        while lb < ub - opts.conv {
            if k >= opts.iter_limit {
                break 'outer Termination::IterLimit;
            }
            let budget = remaining_budget(&clock, opts);
            if exhausted(&budget) {
                break 'outer Termination::TimeLimit;
            }
            k += 1;
            let mip = MipOptions { time_limit: budget };
            let master = match solve_master(inst, &scen, tol, &mip) {
                Ok(m) => m,
                Err(Error::ProblemInfeasible(msg)) => {
                    warnings.push(msg);
                    ub = f64::INFINITY;
                    break 'outer Termination::InfeasibleProblem;
                }
                Err(Error::LimitReached(_)) => break 'outer Termination::TimeLimit,
                Err(e) => return Err(e),
            };
            x = master.x.clone();
            lb = master.objective;

            // F1: seed the alternating maximization at ũ(x^k).
            let adv = solve_tilde_z(inst, &x, big_m, tol, &mip)?;
            warnings.extend(adv.warnings.iter().cloned());
            let f1 = f1_oracle(inst, &x, &adv.u_star, opts)?;
            inner += 1;
            let u_new = f1.u_star.clone();
            ub = second_stage_value(inst, &x, &u_new, tol)?;
            let accepted = scen.add(u_new.clone(), CutOrigin::AmOracle, f1.vertex, tol.dup);
            trajectory.push(IterationRecord {
                k,
                lb,
                ub,
                gap: ul_gap(lb, ub)?,
                cut: Some(CutRecord {
                    origin: CutOrigin::AmOracle,
                    u: u_new,
                    vertex: f1.vertex,
                    accepted,
                }),
                seconds: clock.elapsed().as_secs_f64(),
            });
            if !accepted && lb < ub - opts.conv {
                warnings.push(format!(
                    "inner iteration {k}: duplicate F1 cut with open bound — verifying anyway"
                ));
                break;
            }
        }

        // Step 4: exact verification of the incumbent.
        let budget = remaining_budget(&clock, opts);
        if exhausted(&budget) {
            break Termination::TimeLimit;
        }
        outer += 1;
        let adv = solve_tilde_z(inst, &x, big_m, tol, &MipOptions { time_limit: budget })?;
        let f2 = f2_oracle(inst, &x, &adv.u_star, &mut tree, opts)?;
        warnings.extend(f2.warnings.iter().cloned());
        match f2.verdict {
            F2Verdict::Feasible => {
                ub = second_stage_value(inst, &x, &f2.u_star, tol)?;
                break Termination::Converged;
            }
            F2Verdict::Infeasible => {
                let accepted =
                    scen.add(f2.u_star.clone(), CutOrigin::DualBasisCut, f2.vertex, tol.dup);
                ub = f64::INFINITY;
                trajectory.push(IterationRecord {
                    k,
                    lb,
                    ub,
                    gap: f64::INFINITY,
                    cut: Some(CutRecord {
                        origin: CutOrigin::DualBasisCut,
                        u: f2.u_star.clone(),
                        vertex: f2.vertex,
                        accepted,
                    }),
                    seconds: clock.elapsed().as_secs_f64(),
                });
                if !accepted {
                    // A master-covered scenario cannot be a blow-up witness.
                    warnings.push("F2 returned an already-covered scenario".into());
                    break Termination::Inconclusive;
                }
            }
            F2Verdict::Inconclusive => break Termination::Inconclusive,
        }
    };

    // At Converged the Step-4 value is exact, so LB may exceed it only by
    // MIP noise; anything larger is a real crossing and must error. On
    // other exits UB is still the F1 surrogate, which can sit below LB.
    let gap = if termination == Termination::Converged {
        if lb > ub && lb - ub <= tol.mip * (1.0 + lb.abs().max(ub.abs())) {
            lb = ub;
        }
        ul_gap(lb, ub)?
    } else {
        ul_gap(lb.min(ub), ub)?
    };
    Ok(RunReport {
        algorithm: "ddbd".into(),
        iterations: k,
        inner_iterations: inner,
        outer_iterations: outer,
        termination,
        x,
        value: ub,
        lb,
        ub,
        gap,
        trajectory,
        warnings,
        seconds: clock.elapsed().as_secs_f64(),
        tree_dump: Some(tree.dump()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{tiny1, tiny2};

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn gap_formula() {
        assert_eq!(ul_gap(5.0, 5.0).unwrap(), 0.0);
        assert!((ul_gap(0.5, 0.6).unwrap() - 0.1).abs() < 1e-12);
        assert!((ul_gap(100.0, 101.0).unwrap() - 0.01).abs() < 1e-12);
        assert!(ul_gap(f64::NEG_INFINITY, 3.0).unwrap().is_infinite());
        assert!(ul_gap(3.0, f64::INFINITY).unwrap().is_infinite());
        assert!(ul_gap(1.0, 0.5).is_err());
    }

    #[test]
    fn default_u0_is_a_vertex() {
        let inst = tiny2();
        let u0 = default_u0(&inst, 7, &opts()).unwrap();
        assert!(inst.u_set.contains(&u0, 1e-7));
        assert!(inst.u_set.is_vertex(&u0, 1e-7));
        assert_eq!(u0, default_u0(&inst, 7, &opts()).unwrap());
    }

    #[test]
    fn ccg_tiny1_two_iterations() {
        let inst = tiny1();
        let rep = ccg(&inst, &[1.0], CcgOracle::TildeZ, &opts()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!((rep.value - 1.0).abs() < 1e-6);
        assert_eq!(rep.iterations, 2);
        assert!(rep.gap <= opts().epsilon);
    }

    #[test]
    fn ccg_tilde_z_mis_certifies_tiny2() {
        // The documented failure mode: converges to the infeasible x = 0.
        let inst = tiny2();
        let rep = ccg(&inst, &[0.0], CcgOracle::TildeZ, &opts()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!(rep.x[0].abs() < 1e-9);
        assert!(rep.value.abs() < 1e-9);
    }

    #[test]
    fn ccg_alpha_exact_solves_tiny2() {
        let inst = tiny2();
        let rep = ccg(&inst, &[0.0], CcgOracle::AlphaExact, &opts()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!((rep.x[0] - 1.0).abs() < 1e-9);
        assert!((rep.value - 1.5).abs() < 1e-6);
        // The feasibility cut that repaired the master is flagged by origin.
        assert!(rep
            .trajectory
            .iter()
            .any(|r| matches!(&r.cut, Some(c) if c.origin == CutOrigin::AlphaOracle)));
    }

    #[test]
    fn ddbd_tiny2_verified_optimum() {
        let inst = tiny2();
        let rep = ddbd(&inst, &[0.0], &opts()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!((rep.x[0] - 1.0).abs() < 1e-9);
        assert!((rep.value - 1.5).abs() < 1e-6);
        assert_eq!(rep.outer_iterations, 1);
        assert!(rep.inner_iterations >= 1);
        // The F1 cut at u = 1 is what repairs the master.
        assert!(rep.trajectory.iter().any(|r| matches!(
            &r.cut,
            Some(c) if c.origin == CutOrigin::AmOracle && (c.u[0] - 1.0).abs() < 1e-9
        )));
    }

    #[test]
    fn ddbd_tiny1() {
        let inst = tiny1();
        let rep = ddbd(&inst, &[1.0], &opts()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!((rep.value - 1.0).abs() < 1e-6);
        assert_eq!(rep.outer_iterations, 1);
        assert!(rep.x[0] >= -1e-9 && rep.x[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn ddbd_matches_reference_on_lotsizing() {
        let inst = crate::generators::lotsizing(3, 0, 20.0).unwrap();
        let o = opts();
        let u0 = default_u0(&inst, o.seed, &o).unwrap();
        let rep = ddbd(&inst, &u0, &o).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        let exact = crate::reference::exact_solve(
            &inst,
            &o.tol,
            1_000_000,
            &crate::backend::MipOptions { time_limit: None },
        )
        .unwrap();
        let scale = 1.0_f64.max(exact.value.abs());
        assert!(
            (rep.value - exact.value).abs() <= 1e-6 * scale,
            "ddbd {} vs reference {}",
            rep.value,
            exact.value
        );
    }

    #[test]
    fn ccg_exact_matches_reference_on_capcover() {
        let inst = crate::generators::capcover(2, 0).unwrap();
        let o = opts();
        let u0 = default_u0(&inst, o.seed, &o).unwrap();
        let rep = ccg(&inst, &u0, CcgOracle::AlphaExact, &o).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        let exact = crate::reference::exact_solve(
            &inst,
            &o.tol,
            1_000_000,
            &crate::backend::MipOptions { time_limit: None },
        )
        .unwrap();
        let scale = 1.0_f64.max(exact.value.abs());
        assert!((rep.value - exact.value).abs() <= 1e-6 * scale);
        assert!(crate::reference::reference_feasible(&inst, &rep.x, &o.tol, 1_000_000).unwrap());
    }

    #[test]
    fn lb_trajectory_is_monotone() {
        let inst = tiny2();
        let rep = ddbd(&inst, &[0.0], &opts()).unwrap();
        let lbs: Vec<f64> = rep
            .trajectory
            .iter()
            .filter(|r| r.cut.as_ref().is_some_and(|c| c.origin == CutOrigin::AmOracle))
            .map(|r| r.lb)
            .collect();
        assert!(lbs.windows(2).all(|p| p[0] <= p[1] + 1e-9));
    }
}
