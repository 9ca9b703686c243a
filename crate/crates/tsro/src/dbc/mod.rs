//! Exact feasibility via dual basis cuts.
//!
//! For fixed `x`, the worst case equals the dual problem
//! `max_{w∈W} min_{λ≥0: C'w + D'λ ≥ 0} (c − Ax)'w + d'λ` over
//! `W = {w ≥ 0 : B'w ≤ b}`. The inner minimum is a parametric LP whose
//! optimal basis is piecewise constant in `w`: writing it in standard form
//! with `D̃ = [D; −I]`, a basis `I` solves `λ̃_I(w) = −D̃_I⁻¹C'w`, valid
//! wherever `λ̃_I(w) ≥ 0`. The oracle grows a partition tree of such cells.
//! Cells whose policy is proven optimal (`ℓ = 0`) either bound the worst
//! case from above or expose an unbounded ray certifying infeasibility;
//! other cells are split along the rows of the policy matrix.

mod oracle;
mod partition;

pub use oracle::{dbc_solve, f2_oracle, F2Outcome, F2Verdict};
pub use partition::{interior_point, partition_lp, unbounded_ray, Affine, NodeEval, RobustRegion};

use crate::backend::{self, BasisSlot, ConSense, LinearModel, Objective, SolveStatus};
use crate::config::{PartitionSign, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{DMat, Lu};
use crate::model::TwoStageInstance;

/// Data of the dual problem, fixed for the lifetime of a tree.
#[derive(Debug, Clone)]
pub struct DualProblemData {
    pub r: usize,
    pub l: usize,
    pub d: usize,
    /// `W = {w ≥ 0 : w_rows·w ≤ w_rhs}`; `w_rows = Bᵀ`.
    pub w_rows: DMat,
    pub w_rhs: Vec<f64>,
    /// `Cᵀ` (l × r).
    pub ct: DMat,
    /// Standard form `D̃ᵀ = [Dᵀ, −I]` (l × (d+l)).
    pub m_mat: DMat,
    /// `d̃ = [d_rhs; 0]`.
    pub d_tilde: Vec<f64>,
}

impl DualProblemData {
    /// Extracts the dual data and verifies that W is nonempty (w = 0 needs
    /// `b ≥ 0`, which is not assumed, so an LP probe decides).
    pub fn new(inst: &TwoStageInstance, tol: &Tolerances) -> Result<Self> {
        let (r, l, d, m) = (inst.r(), inst.l(), inst.u_set.num_rows(), inst.m());
        let w_rows = inst.b_mat.transpose();
        let mut m_mat = DMat::zeros(l, d + l);
        for j in 0..d {
            for i in 0..l {
                m_mat[(i, j)] = inst.u_set.d_mat[(j, i)];
            }
        }
        for i in 0..l {
            m_mat[(i, d + i)] = -1.0;
        }
        let mut d_tilde = inst.u_set.rhs.clone();
        d_tilde.extend(std::iter::repeat(0.0).take(l));

        let mut probe = LinearModel::new(Objective::Minimize);
        let ws: Vec<usize> = (0..r).map(|_| probe.add_col(0.0, 0.0, f64::INFINITY)).collect();
        for s in 0..m {
            let coeffs: Vec<(usize, f64)> =
                (0..r).map(|t| (ws[t], w_rows[(s, t)])).collect();
            probe.add_row(ConSense::Le, inst.b[s], &coeffs);
        }
        if backend::solve_lp(&probe, tol)?.status == SolveStatus::Infeasible {
            return Err(Error::InvalidInstance(vec![
                "dual region W is empty: the recourse objective is unbounded below".into(),
            ]));
        }

        Ok(DualProblemData {
            r,
            l,
            d,
            w_rows,
            w_rhs: inst.b.clone(),
            ct: inst.c_mat.transpose(),
            m_mat,
            d_tilde,
        })
    }
}

/// Basic optimal solution of the inner λ-problem at a fixed `w`.
#[derive(Debug, Clone)]
pub struct LambdaBasis {
    /// Full standard-form solution `(λ, s)` of length d+l.
    pub lambda: Vec<f64>,
    /// Sorted structural basis columns of `D̃ᵀ`; `None` when degeneracy left
    /// no dual-feasible structural basis recoverable.
    pub basis: Option<Vec<usize>>,
}

/// Solves `min d̃'λ̃ s.t. D̃ᵀλ̃ = −C'w, λ̃ ≥ 0` and extracts an optimal basis.
///
/// The simplex can finish with pinned slack slots in degenerate bases; those
/// are completed to `l` structural columns with zero reduced cost. When even
/// that fails, completion falls back to arbitrary independent columns and
/// keeps the basis only if it verifies as dual-feasible — an invalid cell is
/// never produced.
pub fn lambda_lp(dual: &DualProblemData, w: &[f64], tol: &Tolerances) -> Result<LambdaBasis> {
    let (l, total) = (dual.l, dual.d + dual.l);
    let q: Vec<f64> = dual.ct.matvec(w).iter().map(|v| -v).collect();
    let mut mdl = LinearModel::new(Objective::Minimize);
    let cols: Vec<usize> = (0..total)
        .map(|j| mdl.add_col(dual.d_tilde[j], 0.0, f64::INFINITY))
        .collect();
    for i in 0..l {
        let coeffs: Vec<(usize, f64)> =
            (0..total).map(|j| (cols[j], dual.m_mat[(i, j)])).collect();
        mdl.add_row(ConSense::Eq, q[i], &coeffs);
    }
    let out = backend::solve_lp(&mdl, tol)?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Internal(
                "lambda LP infeasible although U is nonempty".into(),
            ))
        }
        SolveStatus::Unbounded => {
            return Err(Error::Internal("lambda LP unbounded: dual pricing failure".into()))
        }
        SolveStatus::Limit => return Err(Error::LimitReached("lambda LP iteration cap".into())),
    }
    let lambda = out.primal.clone();
    let duals = out
        .duals
        .clone()
        .ok_or_else(|| Error::Internal("lambda LP returned no duals".into()))?;

    let mut chosen: Vec<usize> = out
        .basis
        .as_ref()
        .map(|slots| {
            slots
                .iter()
                .filter_map(|s| match s {
                    BasisSlot::Col(j) => Some(*j),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();
    chosen.sort_unstable();
    chosen.dedup();

    let cost_scale = 1.0 + dual.d_tilde.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let reduced = |j: usize| -> f64 {
        let mut v = dual.d_tilde[j];
        for i in 0..l {
            v -= duals[i] * dual.m_mat[(i, j)];
        }
        v
    };

    // Echelon over chosen columns so independence tests are incremental.
    let mut echelon: Vec<Vec<f64>> = Vec::new();
    let push_if_independent = |echelon: &mut Vec<Vec<f64>>, j: usize| -> bool {
        let mut col: Vec<f64> = (0..l).map(|i| dual.m_mat[(i, j)]).collect();
        let scale = col.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for e in echelon.iter() {
            let lead = e.iter().position(|&v| v != 0.0).expect("nonzero echelon row");
            let f = col[lead] / e[lead];
            if f != 0.0 {
                for i in 0..l {
                    col[i] -= f * e[i];
                }
            }
        }
        if col.iter().fold(0.0_f64, |a, v| a.max(v.abs())) > 1e-9 * scale {
            echelon.push(col);
            true
        } else {
            false
        }
    };
    for &j in &chosen {
        push_if_independent(&mut echelon, j);
    }

    if chosen.len() < l {
        for j in 0..total {
            if chosen.len() == l {
                break;
            }
            if !chosen.contains(&j) && reduced(j).abs() <= 1e-6 * cost_scale
                && push_if_independent(&mut echelon, j)
            {
                chosen.push(j);
            }
        }
    }
    let mut verified = chosen.len() == l;
    if !verified {
        for j in 0..total {
            if chosen.len() == l {
                break;
            }
            if !chosen.contains(&j) && push_if_independent(&mut echelon, j) {
                chosen.push(j);
            }
        }
        if chosen.len() == l {
            // Forced completion: accept only a certified dual-feasible basis.
            chosen.sort_unstable();
            let mut m_basis = DMat::zeros(l, l);
            for (k, &j) in chosen.iter().enumerate() {
                for i in 0..l {
                    m_basis[(i, k)] = dual.m_mat[(i, j)];
                }
            }
            let lu = Lu::factor(&m_basis, 1e-12);
            let db: Vec<f64> = chosen.iter().map(|&j| dual.d_tilde[j]).collect();
            if let Some(y) = lu.solve_transposed(&db) {
                verified = (0..total).all(|j| {
                    let mut v = dual.d_tilde[j];
                    for i in 0..l {
                        v -= y[i] * dual.m_mat[(i, j)];
                    }
                    v >= -1e-6 * cost_scale
                });
            }
        }
    }
    chosen.sort_unstable();
    Ok(LambdaBasis {
        lambda,
        basis: if verified && chosen.len() == l { Some(chosen) } else { None },
    })
}

/// `λ̃_I(w)` coefficient matrix `−D̃_I⁻¹Cᵀ` (l × r), rows in sorted basis
/// order; also the linear policy behind an `ℓ = 0` cell.
pub fn basis_rows(dual: &DualProblemData, basis: &[usize]) -> Result<DMat> {
    let l = dual.l;
    assert_eq!(basis.len(), l, "basis must have {l} columns");
    let mut m_basis = DMat::zeros(l, l);
    for (k, &j) in basis.iter().enumerate() {
        for i in 0..l {
            m_basis[(i, k)] = dual.m_mat[(i, j)];
        }
    }
    let lu = Lu::factor(&m_basis, 1e-12);
    if lu.is_singular() {
        return Err(Error::Internal("singular basis matrix in basis_rows".into()));
    }
    let mut rows = DMat::zeros(l, dual.r);
    for t in 0..dual.r {
        let col: Vec<f64> = (0..l).map(|i| dual.ct[(i, t)]).collect();
        let sol = lu
            .solve(&col)
            .ok_or_else(|| Error::Internal("basis solve failed in basis_rows".into()))?;
        for k in 0..l {
            rows[(k, t)] = -sol[k];
        }
    }
    Ok(rows)
}

/// Policy `(Z, z)` of a basis: `Z` scatters the λ-part of `λ̃_I(w)` back to
/// the original λ coordinates, `z = 0`. Independent of `x`.
pub fn basis_policy(dual: &DualProblemData, basis: &[usize]) -> Result<(DMat, Vec<f64>)> {
    let rows = basis_rows(dual, basis)?;
    let mut z_mat = DMat::zeros(dual.d, dual.r);
    for (k, &j) in basis.iter().enumerate() {
        if j < dual.d {
            for t in 0..dual.r {
                z_mat[(j, t)] = rows[(k, t)];
            }
        }
    }
    Ok((z_mat, vec![0.0; dual.d]))
}

/// One cell of the partition tree.
#[derive(Debug, Clone)]
pub struct PartitionNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Full constraint system beyond `w ≥ 0`: `rows·w ≤ rhs`.
    pub rows: DMat,
    pub rhs: Vec<f64>,
    /// −1 root, 0 primary (policy proven optimal), j ≥ 1 secondary.
    pub ell: i64,
    pub children: Vec<usize>,
    /// Basis whose cuts carved this node out (None for the root).
    pub basis: Option<Vec<usize>>,
    /// `(Z, z)` for ℓ = 0 nodes; reusable across x.
    pub policy: Option<(DMat, Vec<f64>)>,
    /// Expansion of this node failed (all candidates empty / basis repeat).
    pub cannot_partition: bool,
    /// Bases already used to split this node.
    pub used_bases: Vec<Vec<usize>>,
    /// Last `(x, τ)` evaluation, reused while x is unchanged.
    pub tau_memo: Option<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct PartitionTree {
    pub dual: DualProblemData,
    pub nodes: Vec<PartitionNode>,
}

impl PartitionTree {
    /// Fresh tree for an instance: the root cell is W itself with ℓ = −1.
    pub fn new(inst: &TwoStageInstance, tol: &Tolerances) -> Result<Self> {
        let dual = DualProblemData::new(inst, tol)?;
        let root = PartitionNode {
            id: 0,
            parent: None,
            rows: dual.w_rows.clone(),
            rhs: dual.w_rhs.clone(),
            ell: -1,
            children: Vec::new(),
            basis: None,
            policy: None,
            cannot_partition: false,
            used_bases: Vec::new(),
            tau_memo: None,
        };
        Ok(PartitionTree { dual, nodes: vec![root] })
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .map(|n| n.id)
            .collect()
    }

    fn attach(&mut self, parent: usize, mut node: PartitionNode) -> usize {
        let id = self.nodes.len();
        node.id = id;
        node.parent = Some(parent);
        self.nodes.push(node);
        self.nodes[parent].children.push(id);
        id
    }

    /// True when `basis` already generated cuts on the node or any ancestor.
    pub fn basis_seen_on_lineage(&self, node: usize, basis: &[usize]) -> bool {
        if self.nodes[node].used_bases.iter().any(|b| b == basis) {
            return true;
        }
        let mut cur = Some(node);
        while let Some(id) = cur {
            let n = &self.nodes[id];
            if n.basis.as_deref() == Some(basis) {
                return true;
            }
            cur = n.parent;
        }
        false
    }

    /// One line per node for diagnostics and the CLI tree dump.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let parent = n
                .parent
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            let basis = n
                .basis
                .as_ref()
                .map(|b| format!("{b:?}"))
                .unwrap_or_else(|| "-".into());
            let tau = n
                .tau_memo
                .as_ref()
                .map(|(_, t)| format!("{t}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "node {:>3}  ell={:>2}  parent={:>3}  rows={:>3}  basis={}  tau={}  children={:?}{}\n",
                n.id,
                n.ell,
                parent,
                n.rows.rows,
                basis,
                tau,
                n.children,
                if n.cannot_partition { "  CANNOT-PARTITION" } else { "" },
            ));
        }
        out
    }
}

/// Nonzero rows of the sign-adjusted cut matrix `±B̃` for a basis; the cell
/// where the basis stays valid is `{s·w ≥ 0}` over these rows. Empty means
/// every row vanished and the basis cannot partition anything.
fn partition_cuts(dual: &DualProblemData, basis: &[usize], sign: PartitionSign) -> Result<Vec<Vec<f64>>> {
    let rows_pol = basis_rows(dual, basis)?;
    let scale = 1.0 + rows_pol.max_abs();
    let flip = match sign {
        PartitionSign::PolicyNonnegative => 1.0,
        PartitionSign::Mirrored => -1.0,
    };
    Ok((0..rows_pol.rows)
        .filter(|&i| {
            rows_pol.row(i).iter().fold(0.0_f64, |a, v| a.max(v.abs())) > 1e-9 * scale
        })
        .map(|i| (0..dual.r).map(|t| flip * rows_pol[(i, t)]).collect())
        .collect())
}

/// Region of the primary element a basis would create: `W ∩ {s·w ≥ 0}`.
fn primary_region(dual: &DualProblemData, cuts: &[Vec<f64>]) -> (DMat, Vec<f64>) {
    let mut rows: Vec<Vec<f64>> = (0..dual.w_rows.rows)
        .map(|s| dual.w_rows.row(s).to_vec())
        .collect();
    let mut rhs = dual.w_rhs.clone();
    for cut in cuts {
        rows.push(cut.iter().map(|v| -v).collect());
        rhs.push(0.0);
    }
    (DMat::from_rows(&rows), rhs)
}

/// Interior test for the primary element `basis` would create, used to pick
/// split points before committing to an expansion.
pub(crate) fn primary_nonempty(
    dual: &DualProblemData,
    basis: &[usize],
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<bool> {
    let cuts = partition_cuts(dual, basis, sign)?;
    if cuts.is_empty() {
        return Ok(false);
    }
    let (rows, rhs) = primary_region(dual, &cuts);
    Ok(interior_point(&rows, &rhs, tol)?.is_some())
}

/// Splits `node` along the cell of `basis` per the partitioning scheme:
/// the primary element `W ∩ {B̃w ≥ 0}` (ℓ = 0, child of the root, carries
/// the policy) and secondary elements
/// `W^p ∩ {B̃_i w ≥ 0 (i<j), B̃_j w ≤ 0}` (ℓ = j, children of `node`).
/// Zero rows of B̃ are dropped; candidates with empty interior are skipped.
/// Returns the created ids — empty means the node cannot be partitioned.
pub fn expand_partition(
    tree: &mut PartitionTree,
    node: usize,
    basis: &[usize],
    sign: PartitionSign,
    tol: &Tolerances,
) -> Result<Vec<usize>> {
    let cuts = partition_cuts(&tree.dual, basis, sign)?;
    tree.nodes[node].used_bases.push(basis.to_vec());
    if cuts.is_empty() {
        return Ok(Vec::new());
    }
    let mut created = Vec::new();

    let (prim_mat, prim_rhs) = primary_region(&tree.dual, &cuts);
    if interior_point(&prim_mat, &prim_rhs, tol)?.is_some() {
        let policy = basis_policy(&tree.dual, basis)?;
        let id = tree.attach(
            0,
            PartitionNode {
                id: 0,
                parent: None,
                rows: prim_mat,
                rhs: prim_rhs,
                ell: 0,
                children: Vec::new(),
                basis: Some(basis.to_vec()),
                policy: Some(policy),
                cannot_partition: false,
                used_bases: Vec::new(),
                tau_memo: None,
            },
        );
        created.push(id);
    }

    for j_pos in 0..cuts.len() {
        let base = &tree.nodes[node];
        let mut rows: Vec<Vec<f64>> =
            (0..base.rows.rows).map(|s| base.rows.row(s).to_vec()).collect();
        let mut rhs = base.rhs.clone();
        for cut in &cuts[..j_pos] {
            rows.push(cut.iter().map(|v| -v).collect());
            rhs.push(0.0);
        }
        rows.push(cuts[j_pos].clone());
        rhs.push(0.0);
        let mat = DMat::from_rows(&rows);
        if interior_point(&mat, &rhs, tol)?.is_none() {
            continue;
        }
        let id = tree.attach(
            node,
            PartitionNode {
                id: 0,
                parent: None,
                rows: mat,
                rhs,
                ell: (j_pos + 1) as i64,
                children: Vec::new(),
                basis: Some(basis.to_vec()),
                policy: None,
                cannot_partition: false,
                used_bases: Vec::new(),
                tau_memo: None,
            },
        );
        created.push(id);
    }
    debug_assert!(created.len() <= cuts.len() + 1);
    Ok(created)
}
