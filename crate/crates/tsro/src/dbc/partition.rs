//! Region geometry and per-cell LPs of the partition tree.

use crate::am::adversary_step_lp;
use crate::backend::{self, ConSense, LinearModel, Objective, SolveStatus};
use crate::config::{PartitionSign, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{dot, DMat};
use crate::model::TwoStageInstance;

use super::{DualProblemData, PartitionNode};

/// Box edge of the Chebyshev LP; keeps centers finite on unbounded cells.
const INTERIOR_BOX: f64 = 1e6;

/// Affine expression in model columns: `constant + Σ coeff·col`.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(v: f64) -> Self {
        Affine { constant: v, terms: Vec::new() }
    }

    pub fn with_term(mut self, col: usize, coeff: f64) -> Self {
        self.terms.push((col, coeff));
        self
    }
}

/// `{w ≥ 0 : rows·w ≤ rhs}` quantifying a robust constraint.
#[derive(Debug, Clone, Copy)]
pub struct RobustRegion<'a> {
    pub rows: &'a DMat,
    pub rhs: &'a [f64],
}

impl RobustRegion<'_> {
    /// Appends the exact counterpart of `g(θ)'w ≤ h(θ) ∀w ∈ region`: fresh
    /// multipliers μ ≥ 0 with `rowsᵀμ ≥ g(θ)` and `rhs'μ ≤ h(θ)`. Valid for
    /// unbounded regions too — the counterpart is infeasible exactly when
    /// the supremum is `+∞`.
    pub fn add_robust_le(&self, mdl: &mut LinearModel, g: &[Affine], h: &Affine) {
        assert_eq!(g.len(), self.rows.cols, "one g component per w coordinate");
        let mus: Vec<usize> = (0..self.rows.rows)
            .map(|_| mdl.add_col(0.0, 0.0, f64::INFINITY))
            .collect();
        for (t, gt) in g.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = mus
                .iter()
                .enumerate()
                .map(|(s, &mu)| (mu, self.rows[(s, t)]))
                .collect();
            for &(col, v) in &gt.terms {
                coeffs.push((col, -v));
            }
            mdl.add_row(ConSense::Ge, gt.constant, &coeffs);
        }
        let mut coeffs: Vec<(usize, f64)> = mus
            .iter()
            .enumerate()
            .map(|(s, &mu)| (mu, self.rhs[s]))
            .collect();
        for &(col, v) in &h.terms {
            coeffs.push((col, -v));
        }
        mdl.add_row(ConSense::Le, h.constant, &coeffs);
    }
}

/// First-stage reference inside a counterpart: numeric or decision columns.
pub(crate) enum XRef<'a> {
    Fixed(&'a [f64]),
    Cols(&'a [usize]),
}

/// Policy reference: a stored `(Z, z)` or free decision columns.
pub(crate) enum PolicyRef<'a> {
    Fixed(&'a DMat, &'a [f64]),
    Cols(&'a [Vec<usize>], &'a [usize]),
}

/// Appends the Eq. (22) robust families of one node to `mdl`:
///   (1) `(c−Ax)'w + d'(Zw+z) + a'x ≤ τ`   ∀w ∈ region
///   (2) `Cᵀw + Dᵀ(Zw+z) ≥ 0`              ∀w ∈ region  (skipped for Fixed)
///   (3) `Zw + z ≥ 0`                       ∀w ∈ region  (skipped for Fixed)
/// Fixed policies come from ℓ=0 nodes where (2)–(3) hold on the cell by
/// construction, so only family (1) is emitted for them.
pub(crate) fn add_node_families(
    mdl: &mut LinearModel,
    inst: &TwoStageInstance,
    dual: &DualProblemData,
    region: RobustRegion<'_>,
    x: &XRef<'_>,
    tau_col: usize,
    policy: &PolicyRef<'_>,
) {
    let (r, l, d) = (dual.r, dual.l, dual.d);
    let d_rhs = &inst.u_set.rhs;

    let mut g: Vec<Affine> = (0..r)
        .map(|t| {
            let mut a = Affine::constant(inst.c[t]);
            match x {
                XRef::Fixed(xv) => a.constant -= dot(inst.a_mat.row(t), xv),
                XRef::Cols(xc) => {
                    for (k, &col) in xc.iter().enumerate() {
                        a.terms.push((col, -inst.a_mat[(t, k)]));
                    }
                }
            }
            match policy {
                PolicyRef::Fixed(z_mat, _) => {
                    for j in 0..d {
                        a.constant += d_rhs[j] * z_mat[(j, t)];
                    }
                }
                PolicyRef::Cols(zcols, _) => {
                    for j in 0..d {
                        a.terms.push((zcols[j][t], d_rhs[j]));
                    }
                }
            }
            a
        })
        .collect();
    let mut h = Affine::constant(0.0).with_term(tau_col, 1.0);
    match x {
        XRef::Fixed(xv) => h.constant -= dot(&inst.a, xv),
        XRef::Cols(xc) => {
            for (k, &col) in xc.iter().enumerate() {
                h.terms.push((col, -inst.a[k]));
            }
        }
    }
    match policy {
        PolicyRef::Fixed(_, z_vec) => h.constant -= dot(d_rhs, z_vec),
        PolicyRef::Cols(_, zvec) => {
            for j in 0..d {
                h.terms.push((zvec[j], -d_rhs[j]));
            }
        }
    }
    region.add_robust_le(mdl, &g, &h);

    let (zcols, zvec) = match policy {
        PolicyRef::Fixed(..) => return,
        PolicyRef::Cols(zc, zv) => (zc, zv),
    };
    for i in 0..l {
        for (t, gt) in g.iter_mut().enumerate() {
            gt.constant = -dual.ct[(i, t)];
            gt.terms.clear();
            for j in 0..d {
                gt.terms.push((zcols[j][t], -inst.u_set.d_mat[(j, i)]));
            }
        }
        let mut hi = Affine::constant(0.0);
        for j in 0..d {
            hi.terms.push((zvec[j], inst.u_set.d_mat[(j, i)]));
        }
        region.add_robust_le(mdl, &g, &hi);
    }
    for j in 0..d {
        for (t, gt) in g.iter_mut().enumerate() {
            gt.constant = 0.0;
            gt.terms.clear();
            gt.terms.push((zcols[j][t], -1.0));
        }
        let hj = Affine::constant(0.0).with_term(zvec[j], 1.0);
        region.add_robust_le(mdl, &g, &hj);
    }
}

/// Chebyshev center of `{w ≥ 0 : rows·w ≤ rhs}` intersected with a large
/// box; `None` when the best inscribed radius is ≤ tol_feas (no interior).
pub fn interior_point(rows: &DMat, rhs: &[f64], tol: &Tolerances) -> Result<Option<Vec<f64>>> {
    let r = rows.cols;
    let mut mdl = LinearModel::new(Objective::Maximize);
    let ws: Vec<usize> = (0..r)
        .map(|_| mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let rho = mdl.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
    for s in 0..rows.rows {
        let norm = dot(rows.row(s), rows.row(s)).sqrt();
        let mut coeffs: Vec<(usize, f64)> =
            (0..r).map(|t| (ws[t], rows[(s, t)])).collect();
        coeffs.push((rho, norm));
        mdl.add_row(ConSense::Le, rhs[s], &coeffs);
    }
    for t in 0..r {
        mdl.add_row(ConSense::Le, 0.0, &[(ws[t], -1.0), (rho, 1.0)]);
        mdl.add_row(ConSense::Le, INTERIOR_BOX, &[(ws[t], 1.0), (rho, 1.0)]);
    }
    let out = backend::solve_lp(&mdl, tol)?.expect_optimal("interior-point LP")?;
    if out.objective <= tol.feas {
        return Ok(None);
    }
    Ok(Some(out.primal[..r].to_vec()))
}

/// Result of evaluating one node at a fixed `x`.
#[derive(Debug, Clone)]
pub struct NodeEval {
    /// `+∞` when no affine policy keeps the node bounded.
    pub tau: f64,
    /// Optimizing policy of the general counterpart; `None` on the ℓ=0
    /// fast path (the node's stored policy applies) and when τ=+∞.
    pub policy: Option<(DMat, Vec<f64>)>,
}

/// Eq. (22) for one node: least τ an affine policy can certify over the
/// cell. ℓ=0 nodes under the default sign skip the counterpart — their
/// stored policy is pointwise optimal, so τ comes from one maximization.
pub fn partition_lp(
    inst: &TwoStageInstance,
    x: &[f64],
    node: &PartitionNode,
    dual: &DualProblemData,
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<NodeEval> {
    let r = dual.r;
    let cax: Vec<f64> = {
        let ax = inst.a_mat.matvec(x);
        (0..r).map(|t| inst.c[t] - ax[t]).collect()
    };
    if let (Some((z_mat, z_vec)), PartitionSign::PolicyNonnegative) = (&node.policy, sign) {
        let mut mdl = LinearModel::new(Objective::Maximize);
        let ws: Vec<usize> = (0..r)
            .map(|t| {
                let mut obj = cax[t];
                for j in 0..dual.d {
                    obj += inst.u_set.rhs[j] * z_mat[(j, t)];
                }
                mdl.add_col(obj, 0.0, f64::INFINITY)
            })
            .collect();
        for s in 0..node.rows.rows {
            let coeffs: Vec<(usize, f64)> =
                (0..r).map(|t| (ws[t], node.rows[(s, t)])).collect();
            mdl.add_row(ConSense::Le, node.rhs[s], &coeffs);
        }
        let out = backend::solve_lp(&mdl, tol)?;
        return match out.status {
            SolveStatus::Optimal => Ok(NodeEval {
                tau: dot(&inst.a, x) + dot(&inst.u_set.rhs, z_vec) + out.objective,
                policy: None,
            }),
            SolveStatus::Unbounded => Ok(NodeEval { tau: f64::INFINITY, policy: None }),
            SolveStatus::Infeasible => {
                Err(Error::Internal(format!("partition cell {} is empty", node.id)))
            }
            SolveStatus::Limit => Err(Error::LimitReached("partition LP iteration cap".into())),
        };
    }

    let d = dual.d;
    let mut mdl = LinearModel::new(Objective::Minimize);
    let tau_col = mdl.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
    let zcols: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            (0..r)
                .map(|_| mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY))
                .collect()
        })
        .collect();
    let zvec: Vec<usize> = (0..d)
        .map(|_| mdl.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    add_node_families(
        &mut mdl,
        inst,
        dual,
        RobustRegion { rows: &node.rows, rhs: &node.rhs },
        &XRef::Fixed(x),
        tau_col,
        &PolicyRef::Cols(&zcols, &zvec),
    );
    let out = backend::solve_lp(&mdl, tol)?;
    match out.status {
        SolveStatus::Optimal => {
            let mut z_mat = DMat::zeros(d, r);
            for j in 0..d {
                for t in 0..r {
                    z_mat[(j, t)] = out.primal[zcols[j][t]];
                }
            }
            let z_vec: Vec<f64> = zvec.iter().map(|&c| out.primal[c]).collect();
            Ok(NodeEval { tau: out.primal[tau_col], policy: Some((z_mat, z_vec)) })
        }
        SolveStatus::Infeasible => Ok(NodeEval { tau: f64::INFINITY, policy: None }),
        SolveStatus::Unbounded => Err(Error::Internal(format!(
            "partition counterpart unbounded: cell {} has empty region",
            node.id
        ))),
        SolveStatus::Limit => Err(Error::LimitReached("partition LP iteration cap".into())),
    }
}

/// Eq. (25): a recession direction of an ℓ=0 cell along which the policy
/// value grows, plus the uncertainty vertex realizing the blow-up.
pub fn unbounded_ray(
    inst: &TwoStageInstance,
    x: &[f64],
    node: &PartitionNode,
    tol: &Tolerances,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (z_mat, _) = node
        .policy
        .as_ref()
        .ok_or_else(|| Error::Internal(format!("ray requested on node {} without policy", node.id)))?;
    let r = node.rows.cols;
    let ax = inst.a_mat.matvec(x);
    let mut mdl = LinearModel::new(Objective::Maximize);
    let ws: Vec<usize> = (0..r)
        .map(|t| {
            let mut obj = inst.c[t] - ax[t];
            for j in 0..inst.u_set.num_rows() {
                obj += inst.u_set.rhs[j] * z_mat[(j, t)];
            }
            mdl.add_col(obj, 0.0, 1.0)
        })
        .collect();
    for s in 0..node.rows.rows {
        let coeffs: Vec<(usize, f64)> =
            (0..r).map(|t| (ws[t], node.rows[(s, t)])).collect();
        mdl.add_row(ConSense::Le, 0.0, &coeffs);
    }
    let out = backend::solve_lp(&mdl, tol)?.expect_optimal("ray LP")?;
    if out.objective <= tol.pos {
        return Err(Error::Internal(format!(
            "ray LP on node {} returned {:.3e}, contradicting an unbounded cell; x={:?}",
            node.id, out.objective, x
        )));
    }
    let w_ray = out.primal;
    let (_, u_bar) = adversary_step_lp(inst, x, &w_ray, tol)?;
    Ok((w_ray, u_bar))
}
