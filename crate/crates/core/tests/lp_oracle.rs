use cascade_core::powerflow::lp::{LinearProgram, LpOutcome, Relation};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;

#[derive(Debug, Clone)]
/// Box-bounded, so never unbounded: minilp reports unbounded problems
/// inconsistently.
struct Lp {
    cost: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, u8, f64)>,
}

fn lp_strategy() -> impl Strategy<Value = Lp> {
    (2usize..6, 1usize..6).prop_flat_map(|(n, m)| {
        let cost = prop::collection::vec(-5i32..6, n);
        let upper = prop::collection::vec(1i32..10, n);
        let row = (prop::collection::vec(-4i32..5, n), 0u8..3, -10i32..20);
        (cost, upper, prop::collection::vec(row, m)).prop_map(|(cost, upper, rows)| Lp {
            cost: cost.into_iter().map(f64::from).collect(),
            upper: upper.into_iter().map(f64::from).collect(),
            rows: rows.into_iter().map(|(c, r, b)| (c.into_iter().map(f64::from).collect(), r, f64::from(b))).collect(),
        })
    })
}

fn ours(lp: &Lp) -> LpOutcome {
    let mut p = LinearProgram::new(lp.cost.len());
    for (j, (&c, u)) in lp.cost.iter().zip(&lp.upper).enumerate() {
        p.set_cost(j, c);
        p.set_bounds(j, 0.0, *u);
    }
    for (coeffs, rel, rhs) in &lp.rows {
        let rel = [Relation::Le, Relation::Ge, Relation::Eq][*rel as usize];
        p.add_row(coeffs.clone(), rel, *rhs);
    }
    p.solve().unwrap()
}

fn reference(lp: &Lp) -> Result<f64, minilp::Error> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> =
        lp.cost.iter().zip(&lp.upper).map(|(&c, u)| p.add_var(c, (0.0, *u))).collect();
    for (coeffs, rel, rhs) in &lp.rows {
        let terms: Vec<_> = vars.iter().zip(coeffs).map(|(&v, &a)| (v, a)).collect();
        let op = [ComparisonOp::Le, ComparisonOp::Ge, ComparisonOp::Eq][*rel as usize];
        p.add_constraint(terms.as_slice(), op, *rhs);
    }
    p.solve().map(|s| s.objective())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn simplex_agrees_with_minilp(lp in lp_strategy()) {
        match (ours(&lp), reference(&lp)) {
            (LpOutcome::Optimal { x, objective }, Ok(expected)) => {
                prop_assert!((objective - expected).abs() <= 1e-6 * expected.abs().max(1.0), "{objective} vs {expected}");
                for (coeffs, rel, rhs) in &lp.rows {
                    let lhs: f64 = coeffs.iter().zip(&x).map(|(a, v)| a * v).sum();
                    let ok = match rel { 0 => lhs <= rhs + 1e-6, 1 => lhs >= rhs - 1e-6, _ => (lhs - rhs).abs() <= 1e-6 };
                    prop_assert!(ok);
                }
            }
            (LpOutcome::Infeasible, Err(minilp::Error::Infeasible)) => {}
            (got, want) => prop_assert!(false, "ours {got:?}, minilp {want:?}"),
        }
    }
}
