//! Problem data: two-stage robust instances, the uncertainty polytope, the
//! first-stage feasible set, and scenario bookkeeping with provenance.
//!
//! An instance encodes
//! `min_{x∈X} max_{u∈U} min{ b'y : Ax + By + Cu ≥ c, y ≥ 0 } + a'x`
//! with `U = {u ≥ 0 : Du ≤ d_rhs}` and `X` a box plus linear rows, each
//! coordinate optionally integral.

use crate::backend::{self, ConSense, LinearModel, Objective, SolveStatus};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::DMat;
use serde::{Deserialize, Serialize};

/// `U = {u ∈ R^l : u ≥ 0, Du ≤ rhs}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPolytope {
    /// `d × l` coefficient matrix.
    pub d_mat: DMat,
    pub rhs: Vec<f64>,
}

impl UncertaintyPolytope {
    /// Axis-aligned box `0 ≤ u ≤ hi` as rows of an identity block.
    pub fn bounded_box(hi: &[f64]) -> Self {
        let l = hi.len();
        let mut d = DMat::zeros(l, l);
        for i in 0..l {
            d[(i, i)] = 1.0;
        }
        UncertaintyPolytope {
            d_mat: d,
            rhs: hi.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d_mat.cols
    }

    pub fn num_rows(&self) -> usize {
        self.d_mat.rows
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        if u.iter().any(|&v| v < -tol) {
            return false;
        }
        self.d_mat
            .matvec(u)
            .iter()
            .zip(&self.rhs)
            .all(|(lhs, rhs)| *lhs <= rhs + tol * (1.0 + rhs.abs()))
    }

    /// True when `u` sits on at least `l` linearly independent active
    /// constraints of `{u ≥ 0, Du ≤ rhs}`.
    pub fn is_vertex(&self, u: &[f64], tol: f64) -> bool {
        if !self.contains(u, tol.max(1e-6)) {
            return false;
        }
        let l = self.dim();
        let mut active: Vec<Vec<f64>> = Vec::new();
        for (i, (lhs, rhs)) in self.d_mat.matvec(u).iter().zip(&self.rhs).enumerate() {
            if (lhs - rhs).abs() <= tol * (1.0 + rhs.abs()) {
                active.push(self.d_mat.row(i).to_vec());
            }
        }
        for (j, &v) in u.iter().enumerate() {
            if v.abs() <= tol {
                let mut e = vec![0.0; l];
                e[j] = 1.0;
                active.push(e);
            }
        }
        if active.len() < l {
            return false;
        }
        DMat::from_rows(&active).rank(1e-9) == l
    }

    /// Per-coordinate maxima over U; `None` when U is unbounded, error when empty.
    pub fn bounding_box(&self, tol: &Tolerances) -> Result<Option<Vec<f64>>> {
        let l = self.dim();
        let mut hi = Vec::with_capacity(l);
        for j in 0..l {
            let mut m = LinearModel::new(Objective::Maximize);
            for k in 0..l {
                m.add_col(if k == j { 1.0 } else { 0.0 }, 0.0, f64::INFINITY);
            }
            for (i, rhs) in self.rhs.iter().enumerate() {
                let coeffs: Vec<(usize, f64)> = self
                    .d_mat
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (k, v))
                    .collect();
                m.add_row(ConSense::Le, *rhs, &coeffs);
            }
            let out = backend::solve_lp(&m, tol)?;
            match out.status {
                SolveStatus::Optimal => hi.push(out.objective),
                SolveStatus::Unbounded => return Ok(None),
                SolveStatus::Infeasible => {
                    return Err(Error::InvalidInstance(vec!["uncertainty set is empty".into()]))
                }
                SolveStatus::Limit => return Err(Error::Internal("bounding-box LP hit limit".into())),
            }
        }
        Ok(Some(hi))
    }
}

/// One linear first-stage row `coeffs·x (≤|≥|=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    #[serde(with = "sense_serde")]
    pub sense: ConSense,
    pub rhs: f64,
}

mod sense_serde {
    use super::ConSense;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &ConSense, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(match s {
            ConSense::Le => "le",
            ConSense::Ge => "ge",
            ConSense::Eq => "eq",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ConSense, D::Error> {
        match String::deserialize(d)?.as_str() {
            "le" => Ok(ConSense::Le),
            "ge" => Ok(ConSense::Ge),
            "eq" => Ok(ConSense::Eq),
            other => Err(serde::de::Error::custom(format!("unknown sense {other:?}"))),
        }
    }
}

/// `X = {x : lb ≤ x ≤ ub, constraints, x_j ∈ Z for flagged j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSet {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub integer: Vec<bool>,
    pub constraints: Vec<LinearConstraint>,
}

impl FirstStageSet {
    pub fn continuous_box(lb: Vec<f64>, ub: Vec<f64>) -> Self {
        let n = lb.len();
        FirstStageSet {
            lb,
            ub,
            integer: vec![false; n],
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn has_integers(&self) -> bool {
        self.integer.iter().any(|&b| b)
    }

    /// Append x columns and X rows to a model; returns the column ids.
    pub fn install(&self, mdl: &mut LinearModel, cost: &[f64]) -> Vec<usize> {
        let xs: Vec<usize> = (0..self.dim())
            .map(|j| {
                if self.integer[j] {
                    mdl.add_int_col(cost[j], self.lb[j], self.ub[j])
                } else {
                    mdl.add_col(cost[j], self.lb[j], self.ub[j])
                }
            })
            .collect();
        for con in &self.constraints {
            let coeffs: Vec<(usize, f64)> = con
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, &v)| (xs[j], v))
                .collect();
            mdl.add_row(con.sense, con.rhs, &coeffs);
        }
        xs
    }

    pub fn contains(&self, x: &[f64], tol: &Tolerances) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        for j in 0..x.len() {
            if x[j] < self.lb[j] - tol.feas || x[j] > self.ub[j] + tol.feas {
                return false;
            }
            if self.integer[j] && (x[j] - x[j].round()).abs() > tol.mip {
                return false;
            }
        }
        self.constraints.iter().all(|con| {
            let v = crate::linalg::dot(&con.coeffs, x);
            match con.sense {
                ConSense::Le => v <= con.rhs + tol.feas * (1.0 + con.rhs.abs()),
                ConSense::Ge => v >= con.rhs - tol.feas * (1.0 + con.rhs.abs()),
                ConSense::Eq => (v - con.rhs).abs() <= tol.feas * (1.0 + con.rhs.abs()),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub name: String,
    pub seed: Option<u64>,
    pub family: Option<String>,
}

impl Default for InstanceMeta {
    fn default() -> Self {
        InstanceMeta {
            name: "unnamed".into(),
            seed: None,
            family: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageInstance {
    pub meta: InstanceMeta,
    /// First-stage cost.
    pub a: Vec<f64>,
    /// Second-stage cost.
    pub b: Vec<f64>,
    /// Constraint right-hand side.
    pub c: Vec<f64>,
    /// `r × n` first-stage coefficients.
    pub a_mat: DMat,
    /// `r × m` recourse coefficients.
    pub b_mat: DMat,
    /// `r × l` uncertainty coefficients.
    pub c_mat: DMat,
    pub x_set: FirstStageSet,
    pub u_set: UncertaintyPolytope,
}

impl TwoStageInstance {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn r(&self) -> usize {
        self.c.len()
    }

    pub fn l(&self) -> usize {
        self.u_set.dim()
    }

    /// Structural diagnostics; empty vector means the instance is usable.
    pub fn validate(&self, tol: &Tolerances) -> Vec<String> {
        let mut bad = Vec::new();
        let (n, m, r, l) = (self.n(), self.m(), self.r(), self.l());
        if self.a_mat.rows != r || self.a_mat.cols != n {
            bad.push(format!(
                "A is {}x{}, expected {}x{}",
                self.a_mat.rows, self.a_mat.cols, r, n
            ));
        }
        if self.b_mat.rows != r || self.b_mat.cols != m {
            bad.push(format!(
                "B is {}x{}, expected {}x{}",
                self.b_mat.rows, self.b_mat.cols, r, m
            ));
        }
        if self.c_mat.rows != r || self.c_mat.cols != l {
            bad.push(format!(
                "C is {}x{}, expected {}x{}",
                self.c_mat.rows, self.c_mat.cols, r, l
            ));
        }
        if self.u_set.rhs.len() != self.u_set.num_rows() {
            bad.push("uncertainty rhs length mismatch".into());
        }
        if self.x_set.dim() != n || self.x_set.ub.len() != n || self.x_set.integer.len() != n {
            bad.push("first-stage set dimensions mismatch".into());
        }
        for con in &self.x_set.constraints {
            if con.coeffs.len() != n {
                bad.push("first-stage constraint width mismatch".into());
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.a) || !finite(&self.b) || !finite(&self.c) || !finite(&self.u_set.rhs) {
            bad.push("non-finite vector entry".into());
        }
        if !self.a_mat.is_finite() || !self.b_mat.is_finite() || !self.c_mat.is_finite()
            || !self.u_set.d_mat.is_finite()
        {
            bad.push("non-finite matrix entry".into());
        }
        for j in 0..n.min(self.x_set.ub.len()) {
            if self.x_set.lb[j] > self.x_set.ub[j] {
                bad.push(format!("x bounds crossed at coordinate {j}"));
            }
            if self.x_set.lb[j].is_nan() || self.x_set.ub[j].is_nan() {
                bad.push(format!("x bound NaN at coordinate {j}"));
            }
        }
        if !bad.is_empty() {
            return bad; // LP probes below assume consistent shapes
        }
        match self.u_set.bounding_box(tol) {
            Ok(Some(_)) => {}
            Ok(None) => bad.push("uncertainty set is unbounded".into()),
            Err(Error::InvalidInstance(mut v)) => bad.append(&mut v),
            Err(e) => bad.push(format!("uncertainty probe failed: {e}")),
        }
        // Continuous relaxation of X must be nonempty.
        let mut xm = LinearModel::new(Objective::Minimize);
        let mut relaxed = self.clone();
        relaxed.x_set.integer = vec![false; n];
        relaxed.x_set.install(&mut xm, &vec![0.0; n]);
        match backend::solve_lp(&xm, tol) {
            Ok(out) if out.status == SolveStatus::Infeasible => {
                bad.push("first-stage set is empty".into())
            }
            Ok(_) => {}
            Err(e) => bad.push(format!("first-stage probe failed: {e}")),
        }
        bad
    }

    pub fn validated(&self, tol: &Tolerances) -> Result<()> {
        let bad = self.validate(tol);
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(bad))
        }
    }

    /// Residual vector `c − Ax − Cu` that the recourse `By` must cover.
    pub fn recourse_rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a_mat.matvec(x);
        let cu = self.c_mat.matvec(u);
        (0..self.r()).map(|i| self.c[i] - ax[i] - cu[i]).collect()
    }

    pub fn first_stage_cost(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.a, x)
    }
}

/// Optimal second-stage LP outcome for fixed `(x, u)`:
/// `min { b'y : By ≥ c − Ax − Cu, y ≥ 0 }`.
pub fn second_stage_outcome(
    inst: &TwoStageInstance,
    x: &[f64],
    u: &[f64],
    tol: &Tolerances,
) -> Result<backend::SolveOutcome> {
    let mut mdl = LinearModel::new(Objective::Minimize);
    let ys: Vec<usize> = (0..inst.m())
        .map(|j| mdl.add_col(inst.b[j], 0.0, f64::INFINITY))
        .collect();
    let rhs = inst.recourse_rhs(x, u);
    for i in 0..inst.r() {
        let coeffs: Vec<(usize, f64)> = inst
            .b_mat
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &v)| (ys[j], v))
            .collect();
        mdl.add_row(ConSense::Ge, rhs[i], &coeffs);
    }
    backend::solve_lp(&mdl, tol)
}

/// Full objective `a'x + min b'y` at `(x, u)`; `+∞` when the recourse LP is
/// infeasible, `−∞` when it is unbounded below.
pub fn second_stage_value(
    inst: &TwoStageInstance,
    x: &[f64],
    u: &[f64],
    tol: &Tolerances,
) -> Result<f64> {
    let out = second_stage_outcome(inst, x, u, tol)?;
    Ok(match out.status {
        SolveStatus::Optimal => inst.first_stage_cost(x) + out.objective,
        SolveStatus::Infeasible => f64::INFINITY,
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        SolveStatus::Limit => return Err(Error::Internal("second-stage LP hit limit".into())),
    })
}

/// Where a scenario came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutOrigin {
    /// Caller-provided starting scenario.
    Seed,
    /// Complementarity MIO maximizer.
    AdversaryMio,
    /// Feasibility (alpha) variant of the MIO.
    AlphaOracle,
    /// Alternating-maximization oracle.
    AmOracle,
    /// Dual-basis-cut oracle ray step.
    DualBasisCut,
    /// Brute-force reference enumeration.
    Reference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub u: Vec<f64>,
    pub origin: CutOrigin,
    /// Result of the geometric vertex test at insert time.
    pub vertex: bool,
}

/// Scenario collection with duplicate suppression and provenance.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert unless an existing scenario is within `tol_dup` (inf-norm).
    /// Returns false on duplicate.
    pub fn add(&mut self, u: Vec<f64>, origin: CutOrigin, vertex: bool, tol_dup: f64) -> bool {
        if self.position_of(&u, tol_dup).is_some() {
            return false;
        }
        self.scenarios.push(Scenario { u, origin, vertex });
        true
    }

    pub fn position_of(&self, u: &[f64], tol_dup: f64) -> Option<usize> {
        self.scenarios.iter().position(|s| {
            s.u.len() == u.len()
                && s.u
                    .iter()
                    .zip(u)
                    .all(|(a, b)| (a - b).abs() <= tol_dup)
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.scenarios.iter()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.scenarios.iter().map(|s| s.u.as_slice())
    }
}

pub mod fixtures {
    //! Tiny analytic instances used throughout the test suites.

    use super::*;

    /// One continuous first-stage var, one recourse var, box uncertainty.
    ///
    /// `min x + max_{u∈[0,1]} min{ y : x + y + u ≥ 1, y ≥ 0 }`, `x ∈ [0, 2]`.
    /// Worst case is `u = 0`; optimal value 1, attained on `x ∈ [0, 1]`.
    pub fn tiny1() -> TwoStageInstance {
        TwoStageInstance {
            meta: InstanceMeta {
                name: "tiny-1".into(),
                seed: None,
                family: Some("fixture".into()),
            },
            a: vec![1.0],
            b: vec![1.0],
            c: vec![1.0],
            a_mat: DMat::from_rows(&[vec![1.0]]),
            b_mat: DMat::from_rows(&[vec![1.0]]),
            c_mat: DMat::from_rows(&[vec![1.0]]),
            x_set: FirstStageSet::continuous_box(vec![0.0], vec![2.0]),
            u_set: UncertaintyPolytope::bounded_box(&[1.0]),
        }
    }

    /// One binary first-stage var gating all recourse: no relatively
    /// complete recourse.
    ///
    /// Rows `x − y ≥ 0` and `y − u ≥ 0`, `u ∈ [0,1]`, `a = 1/2`, `b = 1`.
    /// `x = 0` is infeasible for every `u > 0`; optimum is `x = 1`,
    /// value `1/2 + 1 = 3/2`.
    pub fn tiny2() -> TwoStageInstance {
        TwoStageInstance {
            meta: InstanceMeta {
                name: "tiny-2".into(),
                seed: None,
                family: Some("fixture".into()),
            },
            a: vec![0.5],
            b: vec![1.0],
            c: vec![0.0, 0.0],
            a_mat: DMat::from_rows(&[vec![1.0], vec![0.0]]),
            b_mat: DMat::from_rows(&[vec![-1.0], vec![1.0]]),
            c_mat: DMat::from_rows(&[vec![0.0], vec![-1.0]]),
            x_set: FirstStageSet {
                lb: vec![0.0],
                ub: vec![1.0],
                integer: vec![true],
                constraints: Vec::new(),
            },
            u_set: UncertaintyPolytope::bounded_box(&[1.0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{tiny1, tiny2};
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn fixtures_validate_clean() {
        assert!(tiny1().validate(&tol()).is_empty());
        assert!(tiny2().validate(&tol()).is_empty());
    }

    #[test]
    fn tiny1_second_stage_values() {
        let inst = tiny1();
        // x = 0, u = 0: y must cover 1 → value 0 + 1.
        assert!((second_stage_value(&inst, &[0.0], &[0.0], &tol()).unwrap() - 1.0).abs() < 1e-9);
        // x = 2, u = 1: constraint already satisfied → y = 0.
        assert!((second_stage_value(&inst, &[2.0], &[1.0], &tol()).unwrap() - 2.0).abs() < 1e-9);
        // Analytic check across a grid: value(x, u) = x + max(1 − x − u, 0).
        for x in [0.0, 0.3, 0.7, 1.0, 1.6, 2.0] {
            for u in [0.0, 0.25, 0.5, 1.0] {
                let got = second_stage_value(&inst, &[x], &[u], &tol()).unwrap();
                let want = x + (1.0 - x - u).max(0.0);
                assert!((got - want).abs() < 1e-9, "x={x} u={u}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn tiny2_infeasible_at_closed_facility() {
        let inst = tiny2();
        // x = 0 kills the recourse for any u > 0.
        assert_eq!(
            second_stage_value(&inst, &[0.0], &[0.5], &tol()).unwrap(),
            f64::INFINITY
        );
        // x = 0, u = 0 is fine with y = 0.
        assert!((second_stage_value(&inst, &[0.0], &[0.0], &tol()).unwrap()).abs() < 1e-9);
        // x = 1: value = 1/2 + u.
        for u in [0.0, 0.4, 1.0] {
            let got = second_stage_value(&inst, &[1.0], &[u], &tol()).unwrap();
            assert!((got - (0.5 + u)).abs() < 1e-9);
        }
    }

    #[test]
    fn polytope_membership_and_vertices() {
        let u = tiny1().u_set;
        assert!(u.contains(&[0.0], 1e-7));
        assert!(u.contains(&[1.0], 1e-7));
        assert!(!u.contains(&[1.1], 1e-7));
        assert!(!u.contains(&[-0.1], 1e-7));
        assert!(u.is_vertex(&[0.0], 1e-7));
        assert!(u.is_vertex(&[1.0], 1e-7));
        assert!(!u.is_vertex(&[0.5], 1e-7));
    }

    #[test]
    fn simplex_uncertainty_vertices() {
        // U = {u ≥ 0, u1 + u2 ≤ 1}: vertices (0,0), (1,0), (0,1).
        let u = UncertaintyPolytope {
            d_mat: DMat::from_rows(&[vec![1.0, 1.0]]),
            rhs: vec![1.0],
        };
        assert!(u.is_vertex(&[0.0, 0.0], 1e-7));
        assert!(u.is_vertex(&[1.0, 0.0], 1e-7));
        assert!(u.is_vertex(&[0.0, 1.0], 1e-7));
        assert!(!u.is_vertex(&[0.5, 0.5], 1e-7));
        assert!(!u.is_vertex(&[0.25, 0.25], 1e-7));
    }

    #[test]
    fn bounding_box_detects_unbounded() {
        let unbounded = UncertaintyPolytope {
            d_mat: DMat::from_rows(&[vec![1.0, -1.0]]),
            rhs: vec![1.0],
        };
        assert_eq!(unbounded.bounding_box(&tol()).unwrap(), None);
        let boxed = UncertaintyPolytope::bounded_box(&[2.0, 3.0]);
        assert_eq!(boxed.bounding_box(&tol()).unwrap(), Some(vec![2.0, 3.0]));
    }

    #[test]
    fn validate_flags_defects() {
        let mut inst = tiny1();
        inst.c = vec![1.0, 2.0]; // r now disagrees with A/B/C row counts
        assert!(!inst.validate(&tol()).is_empty());

        let mut inst2 = tiny1();
        inst2.u_set.rhs = vec![-1.0]; // u ≥ 0 with u ≤ −1: empty
        assert!(inst2
            .validate(&tol())
            .iter()
            .any(|s| s.contains("empty")));

        let mut inst3 = tiny1();
        inst3.u_set.d_mat = DMat::from_rows(&[vec![-1.0]]); // u ≥ 0, −u ≤ 1: unbounded
        assert!(inst3
            .validate(&tol())
            .iter()
            .any(|s| s.contains("unbounded")));
    }

    #[test]
    fn scenario_set_dedups_with_provenance() {
        let mut set = ScenarioSet::new();
        assert!(set.add(vec![0.0, 1.0], CutOrigin::Seed, true, 1e-8));
        assert!(!set.add(vec![0.0, 1.0 + 1e-10], CutOrigin::AdversaryMio, true, 1e-8));
        assert!(set.add(vec![0.0, 0.5], CutOrigin::AmOracle, false, 1e-8));
        assert_eq!(set.len(), 2);
        assert_eq!(set.iter().next().unwrap().origin, CutOrigin::Seed);
    }
}
