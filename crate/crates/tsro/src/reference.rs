//! Brute-force ground truth for desk-scale instances.
//!
//! The worst case over a bounded polyhedral U is attained at a vertex (the
//! inner value is convex in `u`), so exact answers follow from enumerating
//! every vertex: solve all `C(d+l, l)` active-set candidates, keep the
//! feasible ones, and take worst-case maxima / the master over the full
//! vertex list. Guarded by a candidate cap; per-vertex LPs run concurrently.

use crate::backend::MipOptions;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{DMat, Lu};
use crate::master::solve_master;
use crate::model::{
    second_stage_value, CutOrigin, ScenarioSet, TwoStageInstance, UncertaintyPolytope,
};
use itertools::Itertools;
use rayon::prelude::*;

/// Number of active-set candidates for a polytope: `C(d+l, l)`, saturating.
pub fn candidate_count(u_set: &UncertaintyPolytope) -> u128 {
    let q = (u_set.num_rows() + u_set.dim()) as u128;
    let l = u_set.dim() as u128;
    let mut acc: u128 = 1;
    for i in 0..l {
        acc = acc.saturating_mul(q - i);
        acc /= i + 1;
    }
    acc
}

/// Re-solve a vertex from its full active set, rows taken in content order.
/// Row content does not depend on the input row ordering, so the result is
/// bit-identical across permutations of D (unlike the per-combination solve,
/// whose pivoting order follows row positions).
fn canonical_vertex(u_set: &UncertaintyPolytope, u: &[f64], tol: &Tolerances) -> Option<Vec<f64>> {
    let l = u_set.dim();
    let mut act: Vec<(Vec<f64>, f64)> = Vec::new();
    let du = u_set.d_mat.matvec(u);
    for i in 0..u_set.num_rows() {
        if (du[i] - u_set.rhs[i]).abs() <= tol.feas * (1.0 + u_set.rhs[i].abs()) {
            act.push((u_set.d_mat.row(i).to_vec(), u_set.rhs[i]));
        }
    }
    for k in 0..l {
        if u[k].abs() <= tol.feas {
            let mut e = vec![0.0; l];
            e[k] = 1.0;
            act.push((e, 0.0));
        }
    }
    act.sort_by(|a, b| {
        a.0.iter()
            .chain(std::iter::once(&a.1))
            .zip(b.0.iter().chain(std::iter::once(&b.1)))
            .map(|(x, y)| x.partial_cmp(y).expect("finite row data"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Greedy maximal independent subset in content order, via row echelon.
    let mut echelon: Vec<Vec<f64>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    for (idx, (row, _)) in act.iter().enumerate() {
        if chosen.len() == l {
            break;
        }
        let mut red = row.clone();
        for e in &echelon {
            let lead = e.iter().position(|&v| v != 0.0).unwrap();
            let f = red[lead] / e[lead];
            if f != 0.0 {
                for k in 0..l {
                    red[k] -= f * e[k];
                }
            }
        }
        let norm = red.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let scale = row.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if norm > 1e-9 * scale {
            echelon.push(red);
            chosen.push(idx);
        }
    }
    if chosen.len() < l {
        return None;
    }
    let mat = DMat::from_rows(&chosen.iter().map(|&i| act[i].0.clone()).collect::<Vec<_>>());
    let rhs: Vec<f64> = chosen.iter().map(|&i| act[i].1).collect();
    Lu::factor(&mat, 1e-12).solve(&rhs)
}

/// All vertices of `{u ≥ 0, Du ≤ rhs}`, deduplicated and sorted
/// lexicographically (so the result is invariant to row permutations).
pub fn enumerate_vertices(
    u_set: &UncertaintyPolytope,
    tol: &Tolerances,
    candidate_cap: u64,
) -> Result<Vec<Vec<f64>>> {
    let l = u_set.dim();
    let d = u_set.num_rows();
    let cands = candidate_count(u_set);
    if cands > candidate_cap as u128 {
        return Err(Error::TooLargeForReference(format!(
            "{cands} active-set candidates exceed the cap of {candidate_cap}"
        )));
    }
    // Row catalogue: D rows with their rhs, then u_k ≥ 0 as (e_k, 0).
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for combo in (0..d + l).combinations(l) {
        let mut mat = DMat::zeros(l, l);
        let mut rhs = vec![0.0; l];
        for (row, &idx) in combo.iter().enumerate() {
            if idx < d {
                for k in 0..l {
                    mat[(row, k)] = u_set.d_mat[(idx, k)];
                }
                rhs[row] = u_set.rhs[idx];
            } else {
                mat[(row, idx - d)] = 1.0;
                rhs[row] = 0.0;
            }
        }
        let lu = Lu::factor(&mat, 1e-10);
        let Some(u0) = lu.solve(&rhs) else { continue };
        if !u_set.contains(&u0, tol.feas) {
            continue;
        }
        let u = canonical_vertex(u_set, &u0, tol).unwrap_or(u0);
        if !vertices
            .iter()
            .any(|v| v.iter().zip(&u).all(|(a, b)| (a - b).abs() <= tol.dup))
        {
            vertices.push(u);
        }
    }
    vertices.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.partial_cmp(y).expect("finite vertex coordinates"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(vertices)
}

/// Exact worst case for fixed `x`: `(max value, argmax vertex)`; the value is
/// `+∞` with a witness vertex as soon as any vertex has empty recourse.
pub fn exact_worst_case(
    inst: &TwoStageInstance,
    x: &[f64],
    tol: &Tolerances,
    candidate_cap: u64,
) -> Result<(f64, Vec<f64>)> {
    let vertices = enumerate_vertices(&inst.u_set, tol, candidate_cap)?;
    if vertices.is_empty() {
        return Err(Error::Internal("uncertainty set has no vertices".into()));
    }
    let values: Result<Vec<f64>> = vertices
        .par_iter()
        .map(|u| second_stage_value(inst, x, u, tol))
        .collect();
    let values = values?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v.is_infinite() && v > 0.0 {
            return Ok((f64::INFINITY, vertices[i].clone()));
        }
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok((best, vertices[arg].clone()))
}

/// True iff every U-vertex leaves feasible recourse at `x`.
pub fn reference_feasible(
    inst: &TwoStageInstance,
    x: &[f64],
    tol: &Tolerances,
    candidate_cap: u64,
) -> Result<bool> {
    let (v, _) = exact_worst_case(inst, x, tol, candidate_cap)?;
    Ok(v.is_finite())
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub worst_u: Vec<f64>,
    pub num_vertices: usize,
}

/// Exact solve: master over the complete vertex list, then an independent
/// worst-case recomputation at the winner as a self-check.
pub fn exact_solve(
    inst: &TwoStageInstance,
    tol: &Tolerances,
    candidate_cap: u64,
    mip: &MipOptions,
) -> Result<ExactSolution> {
    let vertices = enumerate_vertices(&inst.u_set, tol, candidate_cap)?;
    let mut scen = ScenarioSet::new();
    for u in &vertices {
        scen.add(u.clone(), CutOrigin::Reference, true, tol.dup);
    }
    let sol = solve_master(inst, &scen, tol, mip)?;
    let (check, worst_u) = exact_worst_case(inst, &sol.x, tol, candidate_cap)?;
    let scale = 1.0 + sol.objective.abs();
    if !check.is_finite() || (check - sol.objective).abs() > 1e-8 * scale {
        return Err(Error::Internal(format!(
            "exact solve self-check failed: master {} vs worst-case {}",
            sol.objective, check
        )));
    }
    Ok(ExactSolution {
        x: sol.x,
        value: sol.objective,
        worst_u,
        num_vertices: vertices.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{tiny1, tiny2};
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    const CAP: u64 = 1_000_000;

    #[test]
    fn interval_has_two_vertices() {
        let vs = enumerate_vertices(&tiny1().u_set, &tol(), CAP).unwrap();
        assert_eq!(vs, vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn simplex_has_three_vertices() {
        let u = UncertaintyPolytope {
            d_mat: DMat::from_rows(&[vec![1.0, 1.0]]),
            rhs: vec![1.0],
        };
        let vs = enumerate_vertices(&u, &tol(), CAP).unwrap();
        assert_eq!(
            vs,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]
        );
    }

    #[test]
    fn box_has_four_vertices_with_redundant_rows() {
        // 0 ≤ u ≤ (2,3) with the first cap repeated: dedup keeps 4.
        let u = UncertaintyPolytope {
            d_mat: DMat::from_rows(&[
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ]),
            rhs: vec![2.0, 3.0, 2.0],
        };
        let vs = enumerate_vertices(&u, &tol(), CAP).unwrap();
        assert_eq!(vs.len(), 4);
        assert!(vs.contains(&vec![2.0, 3.0]));
    }

    #[test]
    fn candidate_cap_enforced() {
        let u = UncertaintyPolytope::bounded_box(&[1.0; 4]);
        assert!(matches!(
            enumerate_vertices(&u, &tol(), 5),
            Err(Error::TooLargeForReference(_))
        ));
    }

    #[test]
    fn worst_case_tiny1() {
        let inst = tiny1();
        // value(x=1/2, u) = 1/2 + max(1/2 − u, 0): worst at u = 0 → 1.
        let (v, u) = exact_worst_case(&inst, &[0.5], &tol(), CAP).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn worst_case_tiny2_infeasible_with_witness() {
        let inst = tiny2();
        let (v, u) = exact_worst_case(&inst, &[0.0], &tol(), CAP).unwrap();
        assert_eq!(v, f64::INFINITY);
        assert!((u[0] - 1.0).abs() < 1e-9);
        assert!(inst.u_set.is_vertex(&u, 1e-7));
    }

    #[test]
    fn exact_solve_fixtures() {
        let s1 = exact_solve(&tiny1(), &tol(), CAP, &MipOptions::default()).unwrap();
        assert!((s1.value - 1.0).abs() < 1e-9);
        assert!(s1.x[0] >= -1e-9 && s1.x[0] <= 1.0 + 1e-9);
        assert_eq!(s1.num_vertices, 2);

        let s2 = exact_solve(&tiny2(), &tol(), CAP, &MipOptions::default()).unwrap();
        assert!((s2.value - 1.5).abs() < 1e-6);
        assert!((s2.x[0] - 1.0).abs() < 1e-9);
        assert!((s2.worst_u[0] - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// The vertex set must not depend on the order of the D rows.
        #[test]
        fn vertices_invariant_to_row_permutation(
            hi in prop::collection::vec(0.5f64..3.0, 2..4),
            budget_frac in 0.3f64..0.95,
            perm_seed in 0u64..100,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let l = hi.len();
            let budget: f64 = budget_frac * hi.iter().sum::<f64>();
            // Box rows + one budget row.
            let mut rows: Vec<(Vec<f64>, f64)> = (0..l)
                .map(|k| {
                    let mut r = vec![0.0; l];
                    r[k] = 1.0;
                    (r, hi[k])
                })
                .collect();
            rows.push((vec![1.0; l], budget));
            let base = UncertaintyPolytope {
                d_mat: DMat::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()),
                rhs: rows.iter().map(|r| r.1).collect(),
            };
            let mut shuffled = rows.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            shuffled.shuffle(&mut rng);
            let permuted = UncertaintyPolytope {
                d_mat: DMat::from_rows(&shuffled.iter().map(|r| r.0.clone()).collect::<Vec<_>>()),
                rhs: shuffled.iter().map(|r| r.1).collect(),
            };
            let a = enumerate_vertices(&base, &tol(), CAP).unwrap();
            let b = enumerate_vertices(&permuted, &tol(), CAP).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (u, v) in a.iter().zip(&b) {
                for (x, y) in u.iter().zip(v) {
                    prop_assert!((x - y).abs() <= 1e-7);
                }
            }
        }
    }
}
