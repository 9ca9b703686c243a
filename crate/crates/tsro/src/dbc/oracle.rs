//! The F2 verification loop and the standalone partition solver.

use std::time::Instant;

use rayon::prelude::*;

use crate::backend::{self, LinearModel, MipOptions, Objective, SolveStatus};
use crate::config::{PartitionSign, SolverOptions, Tolerances};
use crate::driver::{remaining_budget, ul_gap, IterationRecord, RunReport, Termination};
use crate::error::{Error, Result};
use crate::linalg::DMat;
use crate::model::{second_stage_value, TwoStageInstance};

use super::partition::{add_node_families, PolicyRef, RobustRegion, XRef};
use super::{
    expand_partition, interior_point, lambda_lp, partition_lp, primary_nonempty, unbounded_ray,
    PartitionTree,
};

/// Verdict of one F2 verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F2Verdict {
    /// Worst case certified finite; `value` is a valid ceiling.
    Feasible,
    /// A blow-up scenario was found; `u_star` makes the recourse empty.
    Infeasible,
    /// Partitioning stalled before either certificate — surfaced instead of
    /// being silently treated as feasible.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct F2Outcome {
    pub verdict: F2Verdict,
    /// Certified ceiling τ* when Feasible, `+∞` otherwise.
    pub value: f64,
    /// `u_tilde` echoed back when Feasible, the blow-up vertex when
    /// Infeasible.
    pub u_star: Vec<f64>,
    pub vertex: bool,
    pub rounds: usize,
    /// Tree size after the call.
    pub nodes: usize,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

/// Evaluates every leaf at `x` (concurrently, memoized on the last `x`) and
/// returns `(leaf id, τ^p)` pairs.
fn evaluate_leaves(
    inst: &TwoStageInstance,
    x: &[f64],
    tree: &mut PartitionTree,
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<Vec<(usize, f64)>> {
    let leaves = tree.leaves();
    let stale: Vec<usize> = leaves
        .iter()
        .copied()
        .filter(|&id| {
            tree.nodes[id]
                .tau_memo
                .as_ref()
                .map_or(true, |(mx, _)| mx.as_slice() != x)
        })
        .collect();
    let fresh: Vec<(usize, f64)> = {
        let nodes = &tree.nodes;
        let dual = &tree.dual;
        stale
            .par_iter()
            .map(|&id| partition_lp(inst, x, &nodes[id], dual, sign, tol).map(|e| (id, e.tau)))
            .collect::<Result<_>>()?
    };
    for (id, tau) in fresh {
        tree.nodes[id].tau_memo = Some((x.to_vec(), tau));
    }
    Ok(leaves
        .into_iter()
        .map(|id| (id, tree.nodes[id].tau_memo.as_ref().expect("memo populated").1))
        .collect())
}

/// Takes the basis at `w`, honors the lineage guard and (optionally) a
/// nonempty-primary requirement, then expands. `Ok(false)` = candidate
/// rejected or expansion produced nothing.
fn expand_at_point(
    tree: &mut PartitionTree,
    id: usize,
    w: &[f64],
    require_primary: bool,
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<bool> {
    let basis = match lambda_lp(&tree.dual, w, tol)?.basis {
        Some(b) => b,
        None => return Ok(false),
    };
    if tree.basis_seen_on_lineage(id, &basis) {
        return Ok(false);
    }
    if require_primary && !primary_nonempty(&tree.dual, &basis, sign, tol)? {
        return Ok(false);
    }
    Ok(!expand_partition(tree, id, &basis, sign, tol)?.is_empty())
}

/// Exact verification of `x`: refine the dual partition until every live
/// cell either certifies finite worst-case cost or yields a blow-up
/// scenario. `u_tilde` is the adversary's maximizer at `x`, echoed back on
/// the Feasible exit per the outer algorithm's contract.
pub fn f2_oracle(
    inst: &TwoStageInstance,
    x: &[f64],
    u_tilde: &[f64],
    tree: &mut PartitionTree,
    opts: &SolverOptions,
) -> Result<F2Outcome> {
    let clock = Instant::now();
    let tol = &opts.tol;
    let sign = opts.partition_sign;
    let mut warnings: Vec<String> = Vec::new();
    let mut rounds = 0usize;

    macro_rules! done {
        ($verdict:expr, $value:expr, $u:expr, $warnings:expr) => {{
            let u: Vec<f64> = $u;
            let vertex = inst.u_set.is_vertex(&u, tol.feas.max(1e-6));
            return Ok(F2Outcome {
                verdict: $verdict,
                value: $value,
                u_star: u,
                vertex,
                rounds,
                nodes: tree.nodes.len(),
                warnings: $warnings,
                seconds: clock.elapsed().as_secs_f64(),
            });
        }};
    }

    loop {
        rounds += 1;
        if rounds > opts.iter_limit {
            warnings.push(format!("partition round cap {} reached", opts.iter_limit));
            done!(F2Verdict::Inconclusive, f64::INFINITY, u_tilde.to_vec(), warnings);
        }
        let evals = evaluate_leaves(inst, x, tree, sign, tol)?;
        let tau_star = evals.iter().map(|&(_, t)| t).fold(f64::NEG_INFINITY, f64::max);
        if tau_star.is_finite() {
            done!(F2Verdict::Feasible, tau_star, u_tilde.to_vec(), warnings);
        }
        let active: Vec<usize> =
            evals.iter().filter(|&&(_, t)| t.is_infinite()).map(|&(id, _)| id).collect();

        // Prop. 5: an unbounded ℓ=0 cell certifies infeasibility.
        for &id in &active {
            if tree.nodes[id].ell != 0 || tree.nodes[id].cannot_partition {
                continue;
            }
            let ray = unbounded_ray(inst, x, &tree.nodes[id], tol);
            match sign {
                PartitionSign::PolicyNonnegative => {
                    let (_, u_bar) = ray?;
                    if !second_stage_value(inst, x, &u_bar, tol)?.is_infinite() {
                        return Err(Error::Internal(format!(
                            "node {id}: ray scenario does not break the recourse; \
                             partition invariant violated"
                        )));
                    }
                    done!(F2Verdict::Infeasible, f64::INFINITY, u_bar, warnings);
                }
                PartitionSign::Mirrored => match ray {
                    Ok((_, u_bar))
                        if second_stage_value(inst, x, &u_bar, tol)?.is_infinite() =>
                    {
                        done!(F2Verdict::Infeasible, f64::INFINITY, u_bar, warnings);
                    }
                    _ => {
                        // Mirrored cells carry no validity guarantee; without a
                        // verified certificate the node is a dead end.
                        warnings.push(format!("node {id}: mirrored cell gave no certificate"));
                        tree.nodes[id].cannot_partition = true;
                    }
                },
            }
        }

        let mut grew = false;
        for &id in &active {
            if tree.nodes[id].ell == 0 || tree.nodes[id].cannot_partition {
                continue;
            }
            if tree.nodes.len() >= opts.tree_node_limit {
                warnings.push(format!("partition tree node limit {} reached", opts.tree_node_limit));
                done!(F2Verdict::Inconclusive, f64::INFINITY, u_tilde.to_vec(), warnings);
            }
            let w = match interior_point(&tree.nodes[id].rows, &tree.nodes[id].rhs, tol)? {
                Some(w) => w,
                None => {
                    warnings.push(format!("node {id}: empty interior"));
                    tree.nodes[id].cannot_partition = true;
                    continue;
                }
            };
            if expand_at_point(tree, id, &w, false, sign, tol)? {
                grew = true;
            } else {
                warnings.push(format!("node {id}: cannot partition further"));
                tree.nodes[id].cannot_partition = true;
            }
        }
        if !grew {
            warnings.push("no active leaf could be partitioned".into());
            done!(F2Verdict::Inconclusive, f64::INFINITY, u_tilde.to_vec(), warnings);
        }
    }
}

/// Decision columns of one leaf inside the joint counterpart.
struct LeafVars {
    id: usize,
    tau: usize,
    /// `None` → the stored ℓ=0 policy was baked in as constants.
    zcols: Option<(Vec<Vec<usize>>, Vec<usize>)>,
}

/// Builds the joint counterpart `min τ*` over `x`, per-leaf `τ^p` and
/// policies, with `τ* ≥ τ^p` and the three robust families per leaf.
fn build_joint(
    inst: &TwoStageInstance,
    tree: &PartitionTree,
    leaf_ids: &[usize],
    sign: PartitionSign,
) -> (LinearModel, Vec<usize>, usize, Vec<LeafVars>) {
    let mut mdl = LinearModel::new(Objective::Minimize);
    let xcols = inst.x_set.install(&mut mdl, &vec![0.0; inst.n()]);
    let tau_star = mdl.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
    let mut leaves = Vec::new();
    for &id in leaf_ids {
        let node = &tree.nodes[id];
        let tau_p = mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY);
        mdl.add_row(backend::ConSense::Ge, 0.0, &[(tau_star, 1.0), (tau_p, -1.0)]);
        let region = RobustRegion { rows: &node.rows, rhs: &node.rhs };
        if node.ell == 0 && sign == PartitionSign::PolicyNonnegative {
            let (z_mat, z_vec) = node.policy.as_ref().expect("ℓ=0 node carries a policy");
            add_node_families(
                &mut mdl,
                inst,
                &tree.dual,
                region,
                &XRef::Cols(&xcols),
                tau_p,
                &PolicyRef::Fixed(z_mat, z_vec),
            );
            leaves.push(LeafVars { id, tau: tau_p, zcols: None });
        } else {
            let zc: Vec<Vec<usize>> = (0..tree.dual.d)
                .map(|_| {
                    (0..tree.dual.r)
                        .map(|_| mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY))
                        .collect()
                })
                .collect();
            let zv: Vec<usize> = (0..tree.dual.d)
                .map(|_| mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY))
                .collect();
            add_node_families(
                &mut mdl,
                inst,
                &tree.dual,
                region,
                &XRef::Cols(&xcols),
                tau_p,
                &PolicyRef::Cols(&zc, &zv),
            );
            leaves.push(LeafVars { id, tau: tau_p, zcols: Some((zc, zv)) });
        }
    }
    (mdl, xcols, tau_star, leaves)
}

/// Per-leaf slice of a joint solution used for the expansion step.
struct LeafState {
    id: usize,
    tau: f64,
    /// Solved policy for free-policy leaves; `None` for baked-in ℓ=0.
    policy: Option<(DMat, Vec<f64>)>,
}

/// Splits an active leaf at the maximizer of its node objective under the
/// solved policy, falling back to the Chebyshev center when the objective
/// point's primary element would be empty (or the LP misbehaves).
fn expand_active_leaf(
    inst: &TwoStageInstance,
    tree: &mut PartitionTree,
    id: usize,
    x: &[f64],
    policy: Option<&(DMat, Vec<f64>)>,
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<bool> {
    let w_obj: Option<Vec<f64>> = {
        let node = &tree.nodes[id];
        let hint = policy.or(node.policy.as_ref());
        match hint {
            Some((z_mat, _)) => {
                let ax = inst.a_mat.matvec(x);
                let mut mdl = LinearModel::new(Objective::Maximize);
                let ws: Vec<usize> = (0..tree.dual.r)
                    .map(|t| {
                        let mut obj = inst.c[t] - ax[t];
                        for j in 0..tree.dual.d {
                            obj += inst.u_set.rhs[j] * z_mat[(j, t)];
                        }
                        mdl.add_col(obj, 0.0, f64::INFINITY)
                    })
                    .collect();
                for s in 0..node.rows.rows {
                    let coeffs: Vec<(usize, f64)> =
                        (0..tree.dual.r).map(|t| (ws[t], node.rows[(s, t)])).collect();
                    mdl.add_row(backend::ConSense::Le, node.rhs[s], &coeffs);
                }
                let out = backend::solve_lp(&mdl, tol)?;
                (out.status == SolveStatus::Optimal).then_some(out.primal)
            }
            None => None,
        }
    };
    if let Some(w) = w_obj {
        if expand_at_point(tree, id, &w, true, sign, tol)? {
            return Ok(true);
        }
    }
    let w_int = interior_point(&tree.nodes[id].rows, &tree.nodes[id].rhs, tol)?;
    if let Some(w) = w_int {
        if expand_at_point(tree, id, &w, false, sign, tol)? {
            return Ok(true);
        }
    }
    tree.nodes[id].cannot_partition = true;
    Ok(false)
}

/// Standalone partition solver (Eq. 26): alternates a joint policy MIP over
/// all leaves (upper bound), the same MIP over ℓ=0 leaves (lower bound),
/// and partition refinement at the incumbent, until the relative gap closes.
pub fn dbc_solve(
    inst: &TwoStageInstance,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64, RunReport)> {
    let clock = Instant::now();
    let tol = &opts.tol;
    let sign = opts.partition_sign;
    let mut tree = PartitionTree::new(inst, tol)?;
    let mut warnings: Vec<String> = Vec::new();
    let mut trajectory: Vec<IterationRecord> = Vec::new();

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut best_x: Vec<f64> = Vec::new();
    let mut k = 0usize;

    let termination = loop {
        if k >= opts.iter_limit {
            break Termination::IterLimit;
        }
        let budget = remaining_budget(&clock, opts);
        if matches!(budget, Some(b) if b <= 0.0) {
            break Termination::TimeLimit;
        }
        k += 1;

        let leaf_ids = tree.leaves();
        let (mdl, xcols, tau_star_col, leaf_vars) = build_joint(inst, &tree, &leaf_ids, sign);
        let out = backend::solve_mip(&mdl, tol, &MipOptions { time_limit: budget })?;
        let incumbent: Option<(Vec<f64>, f64, Vec<LeafState>)> = match out.status {
            SolveStatus::Optimal => {
                let mut x: Vec<f64> = xcols.iter().map(|&j| out.primal[j]).collect();
                for (j, &int) in inst.x_set.integer.iter().enumerate() {
                    if int {
                        x[j] = x[j].round();
                    }
                }
                let tau = out.primal[tau_star_col];
                let states = leaf_vars
                    .iter()
                    .map(|lv| LeafState {
                        id: lv.id,
                        tau: out.primal[lv.tau],
                        policy: lv.zcols.as_ref().map(|(zc, zv)| {
                            let mut z_mat = DMat::zeros(tree.dual.d, tree.dual.r);
                            for j in 0..tree.dual.d {
                                for t in 0..tree.dual.r {
                                    z_mat[(j, t)] = out.primal[zc[j][t]];
                                }
                            }
                            (z_mat, zv.iter().map(|&c| out.primal[c]).collect())
                        }),
                    })
                    .collect();
                if tau < ub {
                    ub = tau;
                    best_x = x.clone();
                }
                Some((x, tau, states))
            }
            SolveStatus::Infeasible => None,
            SolveStatus::Limit => break Termination::TimeLimit,
            SolveStatus::Unbounded => {
                return Err(Error::Internal(
                    "joint counterpart unbounded: first stage decreases without bound".into(),
                ))
            }
        };

        // Lower bound: same problem restricted to proven-exact cells.
        let l0: Vec<usize> = leaf_ids
            .iter()
            .copied()
            .filter(|&id| tree.nodes[id].ell == 0 && sign == PartitionSign::PolicyNonnegative)
            .collect();
        if !l0.is_empty() {
            let (mdl0, _, tau0, _) = build_joint(inst, &tree, &l0, sign);
            let budget0 = remaining_budget(&clock, opts);
            if matches!(budget0, Some(b) if b <= 0.0) {
                break Termination::TimeLimit;
            }
            let out0 = backend::solve_mip(&mdl0, tol, &MipOptions { time_limit: budget0 })?;
            match out0.status {
                SolveStatus::Optimal => lb = lb.max(out0.primal[tau0]),
                SolveStatus::Infeasible => {
                    // Every x blows up on some exact cell: genuinely infeasible.
                    ub = f64::INFINITY;
                    best_x.clear();
                    break Termination::InfeasibleProblem;
                }
                SolveStatus::Limit => break Termination::TimeLimit,
                SolveStatus::Unbounded => {
                    return Err(Error::Internal(
                        "lower-bound counterpart unbounded: first stage decreases without bound"
                            .into(),
                    ))
                }
            }
        }

        let gap = ul_gap(lb, ub)?;
        trajectory.push(IterationRecord {
            k,
            lb,
            ub,
            gap,
            cut: None,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if gap <= opts.epsilon {
            break Termination::Converged;
        }

        let mut grew = false;
        match &incumbent {
            Some((x, tau, states)) => {
                let act_tol = 1e-6 * (1.0 + tau.abs());
                for st in states {
                    if st.tau < tau - act_tol {
                        continue;
                    }
                    if tree.nodes[st.id].ell == 0 || tree.nodes[st.id].cannot_partition {
                        continue;
                    }
                    if tree.nodes.len() >= opts.tree_node_limit {
                        warnings.push(format!(
                            "partition tree node limit {} reached",
                            opts.tree_node_limit
                        ));
                        break;
                    }
                    grew |= expand_active_leaf(
                        inst,
                        &mut tree,
                        st.id,
                        x,
                        st.policy.as_ref(),
                        sign,
                        tol,
                    )?;
                }
            }
            None => {
                // No policy bounds all leaves at any x: refine everywhere.
                for &id in &leaf_ids {
                    if tree.nodes[id].ell == 0 || tree.nodes[id].cannot_partition {
                        continue;
                    }
                    if tree.nodes.len() >= opts.tree_node_limit {
                        warnings.push(format!(
                            "partition tree node limit {} reached",
                            opts.tree_node_limit
                        ));
                        break;
                    }
                    let w = interior_point(&tree.nodes[id].rows, &tree.nodes[id].rhs, tol)?;
                    match w {
                        Some(w) => grew |= expand_at_point(&mut tree, id, &w, false, sign, tol)?,
                        None => tree.nodes[id].cannot_partition = true,
                    }
                }
            }
        }
        if !grew {
            warnings.push("no active leaf could be partitioned".into());
            break Termination::Inconclusive;
        }
    };

    let gap = ul_gap(lb.min(ub), ub)?;
    let report = RunReport {
        algorithm: "dbc".into(),
        iterations: k,
        inner_iterations: 0,
        outer_iterations: 0,
        termination,
        x: best_x.clone(),
        value: ub,
        lb,
        ub,
        gap,
        trajectory,
        warnings,
        seconds: clock.elapsed().as_secs_f64(),
        tree_dump: Some(tree.dump()),
    };
    Ok((best_x, ub, report))
}
