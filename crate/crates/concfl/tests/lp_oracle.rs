//! Independent check of the simplex solver: enumerate candidate vertices of
//! small box-bounded LPs with dense Gaussian elimination and confirm the
//! solver lands on the same optimum. The two implementations share no code,
//! so agreement across hundreds of random programs pins both down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use concfl::error::Error;
use concfl::lp::{check_point, solve_lp, LpModel, Relation};

struct RandomLp {
    model: LpModel,
    /// (coefficients, relation, rhs) rows including variable bounds, used
    /// for the oracle's feasibility checks.
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

/// Builds a feasible, bounded LP: variables live in a box and every extra
/// constraint is anchored at a random interior point so the box point stays
/// feasible.
fn random_lp(rng: &mut ChaCha8Rng) -> RandomLp {
    let n = rng.gen_range(1..=4);
    let mut model = LpModel::new();
    let mut uppers = Vec::new();
    for i in 0..n {
        let ub = rng.gen_range(0.5..3.0);
        model.add_variable(format!("x{i}"), 0.0, ub, rng.gen_range(-2.0..2.0));
        uppers.push(ub);
    }
    let anchor: Vec<f64> = uppers.iter().map(|&u| rng.gen_range(0.0..u)).collect();
    let m = rng.gen_range(0..=5);
    let mut rows = Vec::new();
    for c in 0..m {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let at_anchor: f64 = coeffs.iter().zip(&anchor).map(|(a, x)| a * x).sum();
        let (relation, rhs) = match rng.gen_range(0..3) {
            0 => (Relation::Le, at_anchor + rng.gen_range(0.0..1.0)),
            1 => (Relation::Ge, at_anchor - rng.gen_range(0.0..1.0)),
            _ => (Relation::Eq, at_anchor),
        };
        model.constraints.push(concfl::lp::LpConstraint {
            name: format!("c{c}"),
            coeffs: coeffs.iter().copied().enumerate().collect(),
            relation,
            rhs,
        });
        rows.push((coeffs, relation, rhs));
    }
    // Bounds join the row list so the oracle can treat them as candidate
    // active constraints.
    for i in 0..n {
        let mut lo = vec![0.0; n];
        lo[i] = 1.0;
        rows.push((lo.clone(), Relation::Ge, 0.0));
        let mut hi = vec![0.0; n];
        hi[i] = 1.0;
        rows.push((hi, Relation::Le, uppers[i]));
    }
    RandomLp { model, rows }
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| {
            a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum objective over all vertices: every choice of n active rows
/// yields a candidate point, kept when it satisfies the full row list.
fn vertex_enumeration_optimum(lp: &RandomLp) -> Option<f64> {
    let n = lp.model.variables.len();
    let rows = &lp.rows;
    let feasible = |x: &[f64]| {
        rows.iter().all(|(coeffs, rel, rhs)| {
            let lhs: f64 = coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            match rel {
                Relation::Le => lhs <= rhs + 1e-7,
                Relation::Ge => lhs >= rhs - 1e-7,
                Relation::Eq => (lhs - rhs).abs() <= 1e-7,
            }
        })
    };
    let objective = |x: &[f64]| -> f64 {
        lp.model
            .variables
            .iter()
            .zip(x)
            .map(|(v, xi)| v.objective * xi)
            .sum()
    };

    let mut best: Option<f64> = None;
    let mut picks = vec![0usize; n];
    fn walk(
        rows: &[(Vec<f64>, Relation, f64)],
        picks: &mut Vec<usize>,
        depth: usize,
        start: usize,
        on_full: &mut dyn FnMut(&[usize]),
    ) {
        if depth == picks.len() {
            on_full(picks);
            return;
        }
        for r in start..rows.len() {
            picks[depth] = r;
            walk(rows, picks, depth + 1, r + 1, on_full);
        }
    }
    let mut consider = |picks: &[usize]| {
        let a: Vec<Vec<f64>> = picks.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = picks.iter().map(|&r| rows[r].2).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let val = objective(&x);
                best = Some(match best {
                    Some(b) if b <= val => b,
                    _ => val,
                });
            }
        }
    };
    walk(rows, &mut picks, 0, 0, &mut consider);
    best
}

#[test]
fn simplex_agrees_with_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ee0);
    let mut solved = 0;
    for case in 0..300 {
        let lp = random_lp(&mut rng);
        let got = solve_lp(&lp.model).unwrap_or_else(|e| {
            panic!("case {case}: solver failed on a feasible bounded LP: {e}")
        });
        check_point(&lp.model, &got.values, 1e-7)
            .unwrap_or_else(|e| panic!("case {case}: solver point infeasible: {e}"));
        let want = vertex_enumeration_optimum(&lp)
            .unwrap_or_else(|| panic!("case {case}: oracle found no vertex"));
        assert!(
            (got.objective - want).abs() <= 1e-6 * (1.0 + want.abs()),
            "case {case}: solver {} vs vertex enumeration {want}",
            got.objective
        );
        solved += 1;
    }
    assert_eq!(solved, 300);
}

#[test]
fn infeasible_programs_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdead);
    for _ in 0..50 {
        let mut lp = random_lp(&mut rng);
        let n = lp.model.variables.len();
        let over: f64 = lp.model.variables.iter().map(|v| v.upper).sum::<f64>() + 1.0;
        lp.model.constraints.push(concfl::lp::LpConstraint {
            name: "impossible".into(),
            coeffs: (0..n).map(|i| (i, 1.0)).collect(),
            relation: Relation::Ge,
            rhs: over,
        });
        match solve_lp(&lp.model) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}

#[test]
fn unbounded_programs_are_reported() {
    let mut model = LpModel::new();
    model.add_variable("x".into(), 0.0, f64::INFINITY, -1.0);
    match solve_lp(&model) {
        Err(Error::Unbounded) => {}
        other => panic!("expected unboundedness, got {other:?}"),
    }
}
