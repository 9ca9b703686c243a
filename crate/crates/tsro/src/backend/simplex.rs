//! Dense bounded-variable two-phase revised simplex.
//!
//! Design goals, in order: correctness, determinism, inspectability. The
//! basis inverse is kept as an explicit dense matrix with periodic
//! refactorization; pivoting is Dantzig with a Bland fallback after a run of
//! degenerate steps, so the method terminates on every input.

use super::{BasisSlot, ConSense, LinearModel, Objective, SolveOutcome, SolveStatus};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{DMat, Lu};
use std::time::Instant;

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGEN_STEP: f64 = 1e-11;
const BLAND_TRIGGER: usize = 500;
const REFACTOR_EVERY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
    /// Free variable parked at zero.
    FreeZero,
}

struct Tableau {
    /// Sparse columns of the equality system `[A | I | G]` (structural,
    /// slack, artificial), as `(row, value)` pairs.
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    rhs: Vec<f64>,
    n_struct: usize,
    n_slack: usize,
    stat: Vec<VStat>,
    /// Basic column per row.
    basis: Vec<usize>,
    /// Values of basic variables, aligned with `basis`.
    vals: Vec<f64>,
    binv: DMat,
    /// Start value of the most recent entering candidate, per column.
    entering_start: Vec<f64>,
    degen_run: usize,
    bland: bool,
    pivots: usize,
}

impl Tableau {
    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct + self.n_slack
    }

    fn bound_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            VStat::AtLower => self.lb[j],
            VStat::AtUpper => self.ub[j],
            VStat::FreeZero => 0.0,
            VStat::Basic => unreachable!("basic variable has no bound value"),
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        if self.stat[j] == VStat::Basic {
            let row = self
                .basis
                .iter()
                .position(|&b| b == j)
                .expect("basic column present in basis");
            self.vals[row]
        } else {
            self.bound_value(j)
        }
    }

    /// `w = B⁻¹·A_q`.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.basis.len();
        let mut w = vec![0.0; m];
        for &(i, v) in &self.cols[q] {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += v * self.binv[(k, i)];
            }
        }
        w
    }

    /// Simplex multipliers `y = B⁻ᵀ·c_B`.
    fn multipliers(&self) -> Vec<f64> {
        let m = self.basis.len();
        let mut y = vec![0.0; m];
        for k in 0..m {
            let cb = self.cost[self.basis[k]];
            if cb != 0.0 {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += cb * self.binv[(k, i)];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        for &(i, v) in &self.cols[j] {
            d -= y[i] * v;
        }
        d
    }

    fn prepare_entering(&mut self, q: usize) {
        self.entering_start[q] = self.bound_value(q);
    }

    /// Rebuild `binv` and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.basis.len();
        let mut bm = DMat::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                bm[(i, k)] = v;
            }
        }
        let lu = Lu::factor(&bm, 1e-12);
        self.binv = lu
            .inverse()
            .ok_or_else(|| Error::Internal("simplex basis matrix singular at refactor".into()))?;
        let mut resid = self.rhs.clone();
        for j in 0..self.cols.len() {
            if self.stat[j] != VStat::Basic {
                let v = self.bound_value(j);
                if v != 0.0 {
                    for &(i, a) in &self.cols[j] {
                        resid[i] -= a * v;
                    }
                }
            }
        }
        self.vals = self.binv.matvec(&resid);
        Ok(())
    }

    fn pivot(&mut self, p: usize, q: usize, w: &[f64], dir: f64, t: f64) {
        let m = self.basis.len();
        for (vk, &wk) in self.vals.iter_mut().zip(w) {
            *vk -= dir * t * wk;
        }
        let leaving = self.basis[p];
        self.stat[leaving] = if dir * w[p] > 0.0 { VStat::AtLower } else { VStat::AtUpper };
        if self.is_artificial(leaving) {
            // Pin so it can never re-enter.
            self.lb[leaving] = 0.0;
            self.ub[leaving] = 0.0;
            self.stat[leaving] = VStat::AtLower;
        }
        self.basis[p] = q;
        self.vals[p] = self.entering_start[q] + dir * t;
        self.stat[q] = VStat::Basic;
        let wp = w[p];
        let m_cols = self.binv.cols;
        for c in 0..m_cols {
            self.binv[(p, c)] /= wp;
        }
        for (k, &f) in w.iter().enumerate() {
            if k != p && f != 0.0 {
                for c in 0..m_cols {
                    let v = self.binv[(p, c)];
                    self.binv[(k, c)] -= f * v;
                }
            }
        }
        self.pivots += 1;
        if t.abs() <= DEGEN_STEP {
            self.degen_run += 1;
            if self.degen_run >= BLAND_TRIGGER {
                self.bland = true;
            }
        } else {
            self.degen_run = 0;
            self.bland = false;
        }
    }
}

enum Iterate {
    Optimal,
    Unbounded { entering: usize, dir: f64, w: Vec<f64> },
}

pub fn solve(model: &LinearModel, tol: &Tolerances) -> Result<SolveOutcome> {
    let start = Instant::now();
    let minimize = model.sense == Objective::Minimize;
    let infeasible_obj = if minimize { f64::INFINITY } else { f64::NEG_INFINITY };
    let n = model.num_cols();
    let m = model.num_rows();

    if model.cols.iter().any(|c| c.lb > c.ub + 1e-12) {
        return Ok(infeasible_outcome(n, infeasible_obj, start));
    }

    let total = n + m;
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
    for (i, row) in model.rows.iter().enumerate() {
        for &(j, v) in &row.coeffs {
            cols[j].push((i, v));
        }
    }
    let mut lb = Vec::with_capacity(total);
    let mut ub = Vec::with_capacity(total);
    let mut cost = vec![0.0; total];
    for (j, c) in model.cols.iter().enumerate() {
        lb.push(c.lb);
        ub.push(c.ub);
        cost[j] = if minimize { c.cost } else { -c.cost };
    }
    let mut rhs = Vec::with_capacity(m);
    for (i, row) in model.rows.iter().enumerate() {
        cols[n + i].push((i, 1.0));
        let (slb, sub) = match row.sense {
            ConSense::Le => (0.0, f64::INFINITY),
            ConSense::Ge => (f64::NEG_INFINITY, 0.0),
            ConSense::Eq => (0.0, 0.0),
        };
        lb.push(slb);
        ub.push(sub);
        rhs.push(row.rhs);
    }

    let mut stat = vec![VStat::AtLower; total];
    for j in 0..total {
        stat[j] = if lb[j].is_finite() {
            VStat::AtLower
        } else if ub[j].is_finite() {
            VStat::AtUpper
        } else {
            VStat::FreeZero
        };
    }

    // Residual each row must absorb; slack-basic when its bounds allow,
    // otherwise an artificial carries the violation into phase 1.
    let mut basis = Vec::with_capacity(m);
    let mut vals = Vec::with_capacity(m);
    let mut n_art = 0usize;
    let mut residuals = rhs.clone();
    for j in 0..n {
        let v = match stat[j] {
            VStat::AtLower => lb[j],
            VStat::AtUpper => ub[j],
            _ => 0.0,
        };
        if v != 0.0 {
            for &(i, a) in &cols[j] {
                residuals[i] -= a * v;
            }
        }
    }
    for i in 0..m {
        let r = residuals[i];
        let s = n + i;
        if r >= lb[s] - 1e-12 && r <= ub[s] + 1e-12 {
            basis.push(s);
            vals.push(r);
            stat[s] = VStat::Basic;
        } else {
            let clamped = r.clamp(lb[s], ub[s]);
            stat[s] = if clamped == lb[s] { VStat::AtLower } else { VStat::AtUpper };
            let e = r - clamped;
            cols.push(vec![(i, e.signum())]);
            lb.push(0.0);
            ub.push(f64::INFINITY);
            cost.push(0.0);
            stat.push(VStat::Basic);
            basis.push(total + n_art);
            vals.push(e.abs());
            n_art += 1;
        }
    }

    // Initial basis is one ±unit column per row, so B⁻¹ is the matching
    // ±1 diagonal (artificials for negative residuals carry −1).
    let mut binv = DMat::zeros(m, m);
    for (k, &j) in basis.iter().enumerate() {
        let &(i, v) = &cols[j][0];
        binv[(k, i)] = 1.0 / v;
    }
    let entering_start = vec![0.0; cols.len()];
    let mut tab = Tableau {
        cols,
        cost,
        lb,
        ub,
        rhs,
        n_struct: n,
        n_slack: m,
        stat,
        basis,
        vals,
        binv,
        entering_start,
        degen_run: 0,
        bland: false,
        pivots: 0,
    };

    let iter_cap = 20_000 + 200 * (n + m);
    let feas_scale = tab.rhs.iter().fold(1.0_f64, |a, v| a.max(v.abs()));

    if n_art > 0 {
        let real_cost = tab.cost.clone();
        for j in 0..tab.cost.len() {
            tab.cost[j] = if tab.is_artificial(j) { 1.0 } else { 0.0 };
        }
        match iterate(&mut tab, iter_cap)? {
            Iterate::Optimal => {}
            Iterate::Unbounded { .. } => {
                return Err(Error::Internal("phase-1 objective unbounded".into()));
            }
        }
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.vals)
            .filter(|&(&j, _)| tab.is_artificial(j))
            .map(|(_, v)| v.abs())
            .sum();
        if infeas > tol.feas * feas_scale {
            let primal: Vec<f64> = (0..n).map(|j| tab.value_of(j)).collect();
            let mut out = infeasible_outcome(n, infeasible_obj, start);
            out.primal = primal;
            return Ok(out);
        }
        drive_out_artificials(&mut tab);
        tab.cost = real_cost;
        for j in n + m..tab.cols.len() {
            tab.lb[j] = 0.0;
            tab.ub[j] = 0.0;
            tab.cost[j] = 0.0;
        }
        tab.bland = false;
        tab.degen_run = 0;
        tab.refactor()?;
    }

    let outcome = iterate(&mut tab, iter_cap)?;
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Iterate::Optimal => {
            let primal: Vec<f64> = (0..n).map(|j| tab.value_of(j)).collect();
            let obj_min: f64 = (0..tab.cols.len())
                .map(|j| {
                    if tab.cost[j] != 0.0 {
                        tab.cost[j] * tab.value_of(j)
                    } else {
                        0.0
                    }
                })
                .sum();
            let y = tab.multipliers();
            let (objective, duals) = if minimize {
                (obj_min, y)
            } else {
                (-obj_min, y.iter().map(|v| -v).collect())
            };
            let basis_slots = tab
                .basis
                .iter()
                .map(|&j| {
                    if j < n {
                        BasisSlot::Col(j)
                    } else if j < n + m {
                        BasisSlot::Slack(j - n)
                    } else {
                        BasisSlot::Artificial(tab.cols[j].first().map(|&(i, _)| i).unwrap_or(0))
                    }
                })
                .collect();
            Ok(SolveOutcome {
                status: SolveStatus::Optimal,
                primal,
                objective,
                duals: Some(duals),
                basic: true,
                basis: Some(basis_slots),
                ray: None,
                seconds,
            })
        }
        Iterate::Unbounded { entering, dir, w } => {
            let mut ray = vec![0.0; n];
            if entering < n {
                ray[entering] = dir;
            }
            for (k, &j) in tab.basis.iter().enumerate() {
                if j < n {
                    ray[j] -= dir * w[k];
                }
            }
            let primal: Vec<f64> = (0..n).map(|j| tab.value_of(j)).collect();
            let objective = if minimize { f64::NEG_INFINITY } else { f64::INFINITY };
            Ok(SolveOutcome {
                status: SolveStatus::Unbounded,
                primal,
                objective,
                duals: None,
                basic: false,
                basis: None,
                ray: Some(ray),
                seconds,
            })
        }
    }
}

fn infeasible_outcome(n: usize, objective: f64, start: Instant) -> SolveOutcome {
    SolveOutcome {
        status: SolveStatus::Infeasible,
        primal: vec![0.0; n],
        objective,
        duals: None,
        basic: false,
        basis: None,
        ray: None,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn iterate(tab: &mut Tableau, iter_cap: usize) -> Result<Iterate> {
    let cost_scale = tab.cost.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let dtol = DUAL_TOL * cost_scale;
    for _ in 0..iter_cap {
        let y = tab.multipliers();
        let mut entering: Option<(usize, f64, f64)> = None; // (col, |d|, dir)
        for j in 0..tab.cols.len() {
            if tab.stat[j] == VStat::Basic || tab.lb[j] == tab.ub[j] {
                continue;
            }
            let d = tab.reduced_cost(j, &y);
            let dir = match tab.stat[j] {
                VStat::AtLower if d < -dtol => 1.0,
                VStat::AtUpper if d > dtol => -1.0,
                VStat::FreeZero if d < -dtol => 1.0,
                VStat::FreeZero if d > dtol => -1.0,
                _ => continue,
            };
            if tab.bland {
                entering = Some((j, d.abs(), dir));
                break;
            }
            match entering {
                Some((_, best, _)) if d.abs() <= best => {}
                _ => entering = Some((j, d.abs(), dir)),
            }
        }
        let Some((q, _, dir)) = entering else {
            return Ok(Iterate::Optimal);
        };

        let w = tab.ftran(q);
        let span = tab.ub[q] - tab.lb[q]; // may be inf
        let mut t_min = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for k in 0..tab.basis.len() {
            let delta = -dir * w[k];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let bj = tab.basis[k];
            let limit = if delta < 0.0 {
                if tab.lb[bj] == f64::NEG_INFINITY {
                    continue;
                }
                (tab.vals[k] - tab.lb[bj]) / -delta
            } else {
                if tab.ub[bj] == f64::INFINITY {
                    continue;
                }
                (tab.ub[bj] - tab.vals[k]) / delta
            };
            let limit = limit.max(0.0);
            if tab.bland {
                let better = limit < t_min - 1e-12
                    || (limit <= t_min + 1e-12
                        && leave.map_or(true, |p| tab.basis[k] < tab.basis[p]));
                if better {
                    t_min = t_min.min(limit);
                    leave = Some(k);
                }
            } else if limit < t_min - 1e-9 * (1.0 + t_min) {
                t_min = limit;
                leave = Some(k);
            } else if limit <= t_min + 1e-9 * (1.0 + t_min)
                && leave.map_or(true, |p| w[k].abs() > w[p].abs())
            {
                t_min = t_min.min(limit);
                leave = Some(k);
            }
        }

        if span <= t_min {
            if !span.is_finite() {
                return Ok(Iterate::Unbounded { entering: q, dir, w });
            }
            for k in 0..tab.basis.len() {
                tab.vals[k] -= dir * span * w[k];
            }
            tab.stat[q] = match tab.stat[q] {
                VStat::AtLower => VStat::AtUpper,
                VStat::AtUpper => VStat::AtLower,
                s => s,
            };
            continue;
        }
        let Some(p) = leave else {
            return Ok(Iterate::Unbounded { entering: q, dir, w });
        };
        tab.prepare_entering(q);
        tab.pivot(p, q, &w, dir, t_min);
        if tab.pivots % REFACTOR_EVERY == 0 {
            tab.refactor()?;
        }
    }
    Err(Error::LimitReached("simplex iteration cap".into()))
}

/// Replace basic artificials (all at value ~0) with structural or slack
/// columns where a usable pivot exists; dependent rows keep their artificial
/// pinned at zero.
fn drive_out_artificials(tab: &mut Tableau) {
    let m = tab.basis.len();
    for p in 0..m {
        if !tab.is_artificial(tab.basis[p]) {
            continue;
        }
        for j in 0..tab.n_struct + tab.n_slack {
            if tab.stat[j] == VStat::Basic || tab.lb[j] == tab.ub[j] {
                continue;
            }
            let w = tab.ftran(j);
            if w[p].abs() > 1e-7 {
                tab.prepare_entering(j);
                tab.pivot(p, j, &w, 1.0, 0.0);
                break;
            }
        }
    }
}
