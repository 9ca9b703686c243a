//! Seeded benchmark instance generators.
//!
//! All three families draw from a `ChaCha8Rng` seeded with the given value
//! and a documented stream order, so equal seeds give bit-identical
//! instances on every platform.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::backend::ConSense;
use crate::error::{Error, Result};
use crate::linalg::DMat;
use crate::model::{
    FirstStageSet, InstanceMeta, LinearConstraint, TwoStageInstance, UncertaintyPolytope,
};

/// Sampling ranges for the location–transportation family. Defaults follow
/// the usual uniform ranges for this benchmark; `gamma` scales the demand
/// budget `e·u ≤ gamma·L`.
#[derive(Debug, Clone)]
pub struct LoctranParams {
    pub fixed_cost: (f64, f64),
    pub variable_cost: (f64, f64),
    pub ship_cost: (f64, f64),
    pub capacity: (f64, f64),
    pub demand_min: (f64, f64),
    /// Demand spread as a fraction of `d_min`: δ_j = frac·d_min_j.
    pub delta_frac: (f64, f64),
    pub gamma: f64,
    /// Attempts at satisfying the coverage condition Σσ ≥ Σ(d_min+δ)
    /// before giving up.
    pub rejection_cap: usize,
}

impl Default for LoctranParams {
    fn default() -> Self {
        LoctranParams {
            fixed_cost: (1.0, 10.0),
            variable_cost: (0.1, 1.0),
            ship_cost: (0.0, 10.0),
            capacity: (200.0, 700.0),
            demand_min: (10.0, 500.0),
            delta_frac: (0.1, 0.5),
            gamma: 0.5,
            rejection_cap: 1000,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..hi)
}

/// Location–transportation: open facilities (binary) with linked production
/// levels serve L uncertain demands through a complete bipartite shipping
/// stage.
///
/// First stage `x = (x_1..x_N, z_1..z_N)`: production `x_i ∈ [0, σ_i]`
/// continuous, opens `z_i ∈ {0,1}`, linking rows `x_i ≤ σ_i z_i` inside X;
/// cost `a = (a^v, a^f)`. Second stage `y_ij ≥ 0` (index `i·L+j`), cost
/// `b_ij`. Recourse rows: demands `Σ_i y_ij − δ_j u_j ≥ d^min_j` (j < L)
/// then capacities `x_i − Σ_j y_ij ≥ 0`. Uncertainty
/// `U = {0 ≤ u ≤ e, e·u ≤ γL}`.
///
/// Stream order per attempt: `a^f` (N), `a^v` (N), `b` (N·L row-major),
/// `σ` (N), `d^min` (L), `δ`-fractions (L). Attempts repeat with fresh
/// draws until `Σσ_i ≥ Σ(d^min_j + δ_j)`, so every demand realization is
/// coverable with all facilities open.
pub fn loctran(
    n_fac: usize,
    n_cust: usize,
    seed: u64,
    params: &LoctranParams,
) -> Result<TwoStageInstance> {
    if n_fac == 0 || n_cust == 0 {
        return Err(Error::InvalidInstance(vec![
            "loctran requires N ≥ 1 and L ≥ 1".into(),
        ]));
    }
    let (n, l) = (n_fac, n_cust);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut attempt = 0usize;
    let (a_fix, a_var, ship, sigma, d_min, delta) = loop {
        attempt += 1;
        if attempt > params.rejection_cap {
            return Err(Error::InvalidInstance(vec![format!(
                "loctran seed {seed}: coverage condition unmet after {} draws",
                params.rejection_cap
            )]));
        }
        let a_fix: Vec<f64> = (0..n).map(|_| draw(&mut rng, params.fixed_cost)).collect();
        let a_var: Vec<f64> = (0..n).map(|_| draw(&mut rng, params.variable_cost)).collect();
        let ship: Vec<f64> = (0..n * l).map(|_| draw(&mut rng, params.ship_cost)).collect();
        let sigma: Vec<f64> = (0..n).map(|_| draw(&mut rng, params.capacity)).collect();
        let d_min: Vec<f64> = (0..l).map(|_| draw(&mut rng, params.demand_min)).collect();
        let delta: Vec<f64> = d_min
            .iter()
            .map(|&dm| draw(&mut rng, params.delta_frac) * dm)
            .collect();
        let demand_peak: f64 = d_min.iter().zip(&delta).map(|(dm, dl)| dm + dl).sum();
        if sigma.iter().sum::<f64>() >= demand_peak {
            break (a_fix, a_var, ship, sigma, d_min, delta);
        }
    };

    let r = l + n;
    let nx = 2 * n;
    let m = n * l;
    let mut a_mat = DMat::zeros(r, nx);
    let mut b_mat = DMat::zeros(r, m);
    let mut c_mat = DMat::zeros(r, l);
    let mut c = vec![0.0; r];
    for j in 0..l {
        for i in 0..n {
            b_mat[(j, i * l + j)] = 1.0;
        }
        c_mat[(j, j)] = -delta[j];
        c[j] = d_min[j];
    }
    for i in 0..n {
        let row = l + i;
        a_mat[(row, i)] = 1.0;
        for j in 0..l {
            b_mat[(row, i * l + j)] = -1.0;
        }
    }

    let lb = vec![0.0; nx];
    let mut ub = sigma.clone();
    ub.extend(std::iter::repeat(1.0).take(n));
    let mut integer = vec![false; n];
    integer.extend(std::iter::repeat(true).take(n));
    let constraints: Vec<LinearConstraint> = (0..n)
        .map(|i| {
            let mut coeffs = vec![0.0; nx];
            coeffs[i] = 1.0;
            coeffs[n + i] = -sigma[i];
            LinearConstraint { coeffs, sense: ConSense::Le, rhs: 0.0 }
        })
        .collect();

    let mut d_rows = DMat::zeros(l + 1, l);
    for j in 0..l {
        d_rows[(j, j)] = 1.0;
        d_rows[(l, j)] = 1.0;
    }
    let mut d_rhs = vec![1.0; l];
    d_rhs.push(params.gamma * l as f64);

    let mut a_cost = a_var;
    a_cost.extend(a_fix);
    Ok(TwoStageInstance {
        meta: InstanceMeta {
            name: format!("loctran-n{n}-l{l}-s{seed}"),
            seed: Some(seed),
            family: Some("loctran".into()),
        },
        a: a_cost,
        b: ship,
        c,
        a_mat,
        b_mat,
        c_mat,
        x_set: FirstStageSet { lb, ub, integer, constraints },
        u_set: UncertaintyPolytope { d_mat: d_rows, rhs: d_rhs },
    })
}

/// Lot-sizing on a network: stock `x_i ∈ [0, K]` is placed at N sites drawn
/// from a standard 2D Gaussian; after demand `u` reveals, stock moves along
/// arcs `y_ij` (unit cost = Euclidean distance, capacity
/// `c_ij = K/(N−1)·Uniform[0,1)`).
///
/// First stage cost `a = e`. Arcs are the ordered pairs `i≠j` in row-major
/// order. Recourse rows: balances `x_i − Σ_j y_ij + Σ_j y_ji − u_i ≥ 0`
/// (i < N) then arc capacities `−y_ij ≥ −c_ij`. Uncertainty
/// `U = {0 ≤ u ≤ K·e, e·u ≤ √N·K}`.
///
/// Stream order: site coordinates ((x, y) standard-normal pairs, N sites),
/// then arc capacities (N(N−1) uniforms in arc order).
pub fn lotsizing(n_sites: usize, seed: u64, cap: f64) -> Result<TwoStageInstance> {
    if n_sites < 2 {
        return Err(Error::InvalidInstance(vec![
            "lotsizing requires N ≥ 2 (no arcs otherwise)".into(),
        ]));
    }
    if !(cap > 0.0) {
        return Err(Error::InvalidInstance(vec!["lotsizing requires K > 0".into()]));
    }
    let n = n_sites;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let sx: f64 = rng.sample(StandardNormal);
            let sy: f64 = rng.sample(StandardNormal);
            (sx, sy)
        })
        .collect();
    let arcs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let arc_cap: Vec<f64> = arcs
        .iter()
        .map(|_| cap / (n as f64 - 1.0) * rng.random_range(0.0..1.0))
        .collect();
    let dist: Vec<f64> = arcs
        .iter()
        .map(|&(i, j)| {
            let (dx, dy) = (sites[i].0 - sites[j].0, sites[i].1 - sites[j].1);
            dx.hypot(dy)
        })
        .collect();

    let m = arcs.len();
    let r = n + m;
    let mut a_mat = DMat::zeros(r, n);
    let mut b_mat = DMat::zeros(r, m);
    let mut c_mat = DMat::zeros(r, n);
    let mut c = vec![0.0; r];
    for i in 0..n {
        a_mat[(i, i)] = 1.0;
        c_mat[(i, i)] = -1.0;
    }
    for (p, &(i, j)) in arcs.iter().enumerate() {
        b_mat[(i, p)] = -1.0;
        b_mat[(j, p)] = 1.0;
        b_mat[(n + p, p)] = -1.0;
        c[n + p] = -arc_cap[p];
    }

    let mut d_rows = DMat::zeros(n + 1, n);
    for i in 0..n {
        d_rows[(i, i)] = 1.0;
        d_rows[(n, i)] = 1.0;
    }
    let mut d_rhs = vec![cap; n];
    d_rhs.push((n as f64).sqrt() * cap);

    Ok(TwoStageInstance {
        meta: InstanceMeta {
            name: format!("lotsizing-n{n}-s{seed}"),
            seed: Some(seed),
            family: Some("lotsizing".into()),
        },
        a: vec![1.0; n],
        b: dist,
        c,
        a_mat,
        b_mat,
        c_mat,
        x_set: FirstStageSet {
            lb: vec![0.0; n],
            ub: vec![cap; n],
            integer: vec![false; n],
            constraints: Vec::new(),
        },
        u_set: UncertaintyPolytope { d_mat: d_rows, rhs: d_rhs },
    })
}

/// Capacity-linked coverage: N binary facility opens with hard capacities
/// serve N uncertain demands; there is no slack production, so closed-heavy
/// first stages are genuinely infeasible for adverse demand — the family
/// deliberately violates relatively complete recourse.
///
/// First stage `z_i ∈ {0,1}`, cost `f_i`. Second stage `y_ij ≥ 0`
/// (index `i·N+j`), cost `b_ij`. Recourse rows: demands
/// `Σ_i y_ij − u_j ≥ 0` (j < N) then capacities `κ_i z_i − Σ_j y_ij ≥ 0`.
/// Uncertainty `U = {0 ≤ u ≤ ū, e·u ≤ Γ}` with `Γ = 0.75·Σū`.
///
/// Stream order per attempt: `f` (N) in [1,10), `κ` (N) in [2,6), `ū` (N)
/// in [1,5), `b` (N·N row-major) in [0.1,1). Attempts repeat until
/// `Σκ ≥ Γ` (all-open covers the worst total demand), cap 1000.
pub fn capcover(n_fac: usize, seed: u64) -> Result<TwoStageInstance> {
    if n_fac == 0 {
        return Err(Error::InvalidInstance(vec!["capcover requires N ≥ 1".into()]));
    }
    let n = n_fac;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempt = 0usize;
    let (f, kappa, u_hi, ship, budget) = loop {
        attempt += 1;
        if attempt > 1000 {
            return Err(Error::InvalidInstance(vec![format!(
                "capcover seed {seed}: coverage condition unmet after 1000 draws"
            )]));
        }
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let kappa: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..6.0)).collect();
        let u_hi: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let ship: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.1..1.0)).collect();
        let budget = 0.75 * u_hi.iter().sum::<f64>();
        if kappa.iter().sum::<f64>() >= budget {
            break (f, kappa, u_hi, ship, budget);
        }
    };

    let m = n * n;
    let r = 2 * n;
    let a_mat = {
        let mut a = DMat::zeros(r, n);
        for i in 0..n {
            a[(n + i, i)] = kappa[i];
        }
        a
    };
    let mut b_mat = DMat::zeros(r, m);
    let mut c_mat = DMat::zeros(r, n);
    for j in 0..n {
        for i in 0..n {
            b_mat[(j, i * n + j)] = 1.0;
        }
        c_mat[(j, j)] = -1.0;
    }
    for i in 0..n {
        for j in 0..n {
            b_mat[(n + i, i * n + j)] = -1.0;
        }
    }

    let mut d_rows = DMat::zeros(n + 1, n);
    for j in 0..n {
        d_rows[(j, j)] = 1.0;
        d_rows[(n, j)] = 1.0;
    }
    let mut d_rhs = u_hi.clone();
    d_rhs.push(budget);

    Ok(TwoStageInstance {
        meta: InstanceMeta {
            name: format!("capcover-n{n}-s{seed}"),
            seed: Some(seed),
            family: Some("capcover".into()),
        },
        a: f,
        b: ship,
        c: vec![0.0; r],
        a_mat,
        b_mat,
        c_mat,
        x_set: FirstStageSet {
            lb: vec![0.0; n],
            ub: vec![1.0; n],
            integer: vec![true; n],
            constraints: Vec::new(),
        },
        u_set: UncertaintyPolytope { d_mat: d_rows, rhs: d_rhs },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;

    #[test]
    fn loctran_dimensions_at_benchmark_scale() {
        let inst = loctran(10, 10, 3, &LoctranParams::default()).unwrap();
        assert_eq!(inst.n(), 20);
        assert_eq!(inst.m(), 100);
        assert_eq!(inst.l(), 10);
        assert_eq!(inst.r(), 20);
        assert_eq!(inst.u_set.num_rows(), 11);
        assert_eq!(inst.x_set.integer.iter().filter(|&&b| b).count(), 10);
    }

    #[test]
    fn loctran_unit_budget() {
        let inst = loctran(1, 1, 0, &LoctranParams::default()).unwrap();
        assert_eq!(inst.u_set.d_mat[(0, 0)], 1.0);
        assert_eq!(inst.u_set.d_mat[(1, 0)], 1.0);
        assert_eq!(inst.u_set.rhs, vec![1.0, 0.5]);
    }

    #[test]
    fn loctran_coverage_condition() {
        for seed in 0..20 {
            let inst = loctran(3, 3, seed, &LoctranParams::default()).unwrap();
            let sigma: f64 = (0..3).map(|i| inst.x_set.ub[i]).sum();
            // Worst total demand = Σ(d_min + δ); c holds d_min, C holds −δ.
            let peak: f64 = (0..3).map(|j| inst.c[j] - inst.c_mat[(j, j)]).sum();
            assert!(sigma >= peak, "seed {seed}");
        }
    }

    #[test]
    fn lotsizing_dimensions() {
        let inst = lotsizing(5, 1, 20.0).unwrap();
        assert_eq!(inst.n(), 5);
        assert_eq!(inst.m(), 20);
        assert_eq!(inst.l(), 5);
        assert_eq!(inst.r(), 25);
        assert_eq!(inst.u_set.num_rows(), 6);
        assert!((inst.u_set.rhs[5] - 5.0_f64.sqrt() * 20.0).abs() < 1e-12);
    }

    #[test]
    fn lotsizing_small_budget() {
        let inst = lotsizing(2, 0, 1.0).unwrap();
        assert!((inst.u_set.rhs[2] - 2.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(inst.x_set.ub, vec![1.0, 1.0]);
    }

    #[test]
    fn generators_are_deterministic() {
        let p = LoctranParams::default();
        let x1 = serde_json::to_string(&loctran(4, 3, 9, &p).unwrap()).unwrap();
        let x2 = serde_json::to_string(&loctran(4, 3, 9, &p).unwrap()).unwrap();
        assert_eq!(x1, x2);
        let y1 = serde_json::to_string(&lotsizing(4, 9, 20.0).unwrap()).unwrap();
        let y2 = serde_json::to_string(&lotsizing(4, 9, 20.0).unwrap()).unwrap();
        assert_eq!(y1, y2);
        let z1 = serde_json::to_string(&capcover(4, 9).unwrap()).unwrap();
        let z2 = serde_json::to_string(&capcover(4, 9).unwrap()).unwrap();
        assert_eq!(z1, z2);
        let other = serde_json::to_string(&capcover(4, 10).unwrap()).unwrap();
        assert_ne!(z1, other);
    }

    #[test]
    fn all_families_validate() {
        let tol = Tolerances::default();
        for seed in 0..10 {
            for inst in [
                loctran(2, 2, seed, &LoctranParams::default()).unwrap(),
                lotsizing(3, seed, 20.0).unwrap(),
                capcover(2, seed).unwrap(),
            ] {
                let defects = inst.validate(&tol);
                assert!(defects.is_empty(), "{}: {:?}", inst.meta.name, defects);
            }
        }
    }

    #[test]
    fn capcover_closed_everything_lacks_recourse() {
        let inst = capcover(2, 0).unwrap();
        let u_hi = inst.u_set.rhs[0];
        let v =
            crate::model::second_stage_value(&inst, &[0.0, 0.0], &[u_hi, 0.0], &Tolerances::default())
                .unwrap();
        assert!(v.is_infinite());
        let kappa = [inst.a_mat[(2, 0)], inst.a_mat[(3, 1)]];
        assert!(kappa[0] + kappa[1] >= inst.u_set.rhs[2]);
    }
}
