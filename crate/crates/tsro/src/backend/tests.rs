use super::*;
use crate::config::Tolerances;
use proptest::prelude::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

#[test]
fn lp_basic_optimum_is_vertex() {
    // min x + 2y s.t. x + y >= 3, x,y >= 0 → (3,0), objective 3.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(1.0, 0.0, f64::INFINITY);
    let y = m.add_col(2.0, 0.0, f64::INFINITY);
    m.add_row(ConSense::Ge, 3.0, &[(x, 1.0), (y, 1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!(out.basic);
    assert!((out.objective - 3.0).abs() < 1e-9);
    assert!((out.primal[0] - 3.0).abs() < 1e-9);
    assert!(out.primal[1].abs() < 1e-9);
    // Shadow price of the >= row: objective rises 1 per unit of rhs.
    let duals = out.duals.unwrap();
    assert!((duals[0] - 1.0).abs() < 1e-9);
}

#[test]
fn lp_upper_bounds_and_equalities() {
    // min -x - y s.t. x + y = 4, 0 <= x <= 3, 0 <= y <= 3.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(-1.0, 0.0, 3.0);
    let y = m.add_col(-1.0, 0.0, 3.0);
    m.add_row(ConSense::Eq, 4.0, &[(x, 1.0), (y, 1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective + 4.0).abs() < 1e-9);
    assert!((out.primal[0] + out.primal[1] - 4.0).abs() < 1e-9);
}

#[test]
fn lp_free_variable() {
    // min y s.t. y >= x - 2, y >= -x, x free → min at x=1, y=-1.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY);
    let y = m.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
    m.add_row(ConSense::Ge, -2.0, &[(y, 1.0), (x, -1.0)]);
    m.add_row(ConSense::Ge, 0.0, &[(y, 1.0), (x, 1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective + 1.0).abs() < 1e-9);
    assert!((out.primal[0] - 1.0).abs() < 1e-9);
}

#[test]
fn lp_infeasible_detected() {
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(1.0, 0.0, 1.0);
    m.add_row(ConSense::Ge, 2.0, &[(x, 1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
}

#[test]
fn lp_unbounded_gives_ray() {
    // max x + y s.t. x - y <= 1, x,y >= 0.
    let mut m = LinearModel::new(Objective::Maximize);
    let x = m.add_col(1.0, 0.0, f64::INFINITY);
    let y = m.add_col(1.0, 0.0, f64::INFINITY);
    m.add_row(ConSense::Le, 1.0, &[(x, 1.0), (y, -1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Unbounded);
    let ray = out.ray.unwrap();
    // Ray must be a feasible recession direction improving the objective.
    assert!(ray[0] >= -1e-9 && ray[1] >= -1e-9);
    assert!(ray[0] - ray[1] <= 1e-9);
    assert!(ray[0] + ray[1] > 1e-9);
}

#[test]
fn lp_duals_satisfy_strong_duality() {
    // min 3x + 2y s.t. x + y >= 2, x + 3y >= 3, x,y >= 0.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(3.0, 0.0, f64::INFINITY);
    let y = m.add_col(2.0, 0.0, f64::INFINITY);
    m.add_row(ConSense::Ge, 2.0, &[(x, 1.0), (y, 1.0)]);
    m.add_row(ConSense::Ge, 3.0, &[(x, 1.0), (y, 3.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let duals = out.duals.clone().unwrap();
    // All bounds are at zero, so obj = b'y exactly.
    let dual_obj = 2.0 * duals[0] + 3.0 * duals[1];
    assert!((dual_obj - out.objective).abs() < 1e-8);
    assert!(duals.iter().all(|&d| d >= -1e-9));
}

#[test]
fn mip_rounds_up() {
    // min x s.t. 2x >= 3, x integer ≥ 0 → 2.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_int_col(1.0, 0.0, 10.0);
    m.add_row(ConSense::Ge, 3.0, &[(x, 2.0)]);
    let out = solve_mip(&m, &tol(), &MipOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.0).abs() < 1e-6);
    assert!((out.primal[0] - 2.0).abs() < 1e-6);
}

#[test]
fn mip_infeasible() {
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_int_col(1.0, 0.0, 1.0);
    m.add_row(ConSense::Ge, 1.5, &[(x, 1.0)]);
    m.add_row(ConSense::Le, 0.5, &[(x, 1.0)]);
    let out = solve_mip(&m, &tol(), &MipOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
}

#[test]
fn resolve_is_deterministic() {
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(1.0, 0.0, 10.0);
    let y = m.add_col(-2.0, 0.0, 10.0);
    let z = m.add_int_col(0.5, 0.0, 5.0);
    m.add_row(ConSense::Ge, 1.0, &[(x, 1.0), (y, 1.0), (z, 1.0)]);
    m.add_row(ConSense::Le, 8.0, &[(x, 2.0), (y, 1.0)]);
    let a = solve_mip(&m, &tol(), &MipOptions::default()).unwrap();
    let b = solve_mip(&m, &tol(), &MipOptions::default()).unwrap();
    assert_eq!(a.status, b.status);
    assert!((a.objective - b.objective).abs() < 1e-9);
    for (u, v) in a.primal.iter().zip(&b.primal) {
        assert!((u - v).abs() < 1e-9);
    }
    let c = solve_lp_twice_identical();
    assert!(c);
}

fn solve_lp_twice_identical() -> bool {
    let mut m = LinearModel::new(Objective::Maximize);
    let x = m.add_col(1.0, 0.0, 4.0);
    let y = m.add_col(1.5, 0.0, 4.0);
    m.add_row(ConSense::Le, 6.0, &[(x, 1.0), (y, 2.0)]);
    let a = solve_lp(&m, &tol()).unwrap();
    let b = solve_lp(&m, &tol()).unwrap();
    a.objective == b.objective && a.primal == b.primal
}

#[test]
fn lp_format_dump_mentions_all_parts() {
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_int_col(1.0, 0.0, 3.0);
    m.add_row(ConSense::Ge, 1.0, &[(x, 2.0)]);
    let dump = m.to_lp_format();
    assert!(dump.contains("Minimize"));
    assert!(dump.contains("Subject To"));
    assert!(dump.contains("Bounds"));
    assert!(dump.contains("General"));
}

#[test]
fn degenerate_lp_terminates() {
    // Many redundant rows through the same vertex; exercises Bland fallback.
    let mut m = LinearModel::new(Objective::Minimize);
    let x = m.add_col(1.0, 0.0, f64::INFINITY);
    let y = m.add_col(1.0, 0.0, f64::INFINITY);
    for k in 1..20 {
        let f = k as f64;
        m.add_row(ConSense::Ge, 0.0, &[(x, f), (y, -1.0)]);
        m.add_row(ConSense::Ge, 0.0, &[(x, -1.0), (y, f)]);
    }
    m.add_row(ConSense::Ge, 1.0, &[(x, 1.0), (y, 1.0)]);
    let out = solve_lp(&m, &tol()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!(out.objective > 0.9 && out.objective < 2.0 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random dense LPs: the simplex must agree with HiGHS on status and
    /// objective, and its optimum must satisfy primal feasibility.
    #[test]
    fn simplex_matches_independent_engine(
        n in 1usize..5,
        r in 1usize..6,
        seed in 0u64..1_000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = LinearModel::new(Objective::Minimize);
        for _ in 0..n {
            let cost = rng.random_range(-5.0..5.0);
            let ub = rng.random_range(0.5..10.0);
            m.add_col(cost, 0.0, ub);
        }
        for _ in 0..r {
            let coeffs: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, rng.random_range(-5.0..5.0)))
                .collect();
            let rhs = rng.random_range(-5.0..5.0);
            let sense = if rng.random_bool(0.5) { ConSense::Ge } else { ConSense::Le };
            m.add_row(sense, rhs, &coeffs);
        }
        let mine = solve_lp(&m, &tol()).unwrap();
        let theirs = super::mip::solve(&m, &MipOptions::default()).unwrap();
        prop_assert_eq!(mine.status, theirs.status);
        if mine.status == SolveStatus::Optimal {
            prop_assert!((mine.objective - theirs.objective).abs()
                <= 1e-6 * (1.0 + mine.objective.abs()));
            prop_assert!(m.max_violation(&mine.primal) <= 1e-7);
            prop_assert!(mine.basic);
        }
    }
}
