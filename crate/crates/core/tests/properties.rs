use battery_poa::bernstein::BernsteinPoly;
use battery_poa::demand::{Demand, DemandPath, StepDemand};
use battery_poa::feasible::{FeasibleSet, Policy, ProjectOptions};
use battery_poa::poa::{poa_linear, PoaCase};
use battery_poa::prices::PriceFunction;
use battery_poa::solvers::{solve_cb_linear, solve_dcb_step, StepOptions};
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, z: f64, panels: usize) -> f64 {
    let h = z / panels as f64;
    let mut acc = f(0.0) + f(z);
    for i in 1..panels {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn price_strategy() -> impl Strategy<Value = PriceFunction> {
    prop_oneof![
        (0.1..5.0f64, 0.0..2.0f64).prop_map(|(a, b)| PriceFunction::linear(a, b).unwrap()),
        (0.1..5.0f64, 1..8u32).prop_map(|(a, d)| PriceFunction::monomial(a, d).unwrap()),
        (0.01..0.45f64).prop_map(|d| PriceFunction::counterexample(d).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cost_is_integrated_price(price in price_strategy(), z in 0.0..1.0f64) {
        let quad = simpson(|s| price.price(s).unwrap(), z, 10_000);
        let closed = price.cost(z).unwrap();
        prop_assert!((quad - closed).abs() <= 1e-8, "{quad} vs {closed}");
    }

    #[test]
    fn cost_is_midpoint_convex(price in price_strategy(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let mid = price.cost(0.5 * (a + b)).unwrap();
        prop_assert!(mid <= 0.5 * (price.cost(a).unwrap() + price.cost(b).unwrap()) + 1e-12);
    }

    #[test]
    fn linear_step_k_is_one_half(
        d1 in 0.0..1.0f64, d2 in 0.0..1.0f64, t1 in 0.05..0.95f64, a in 0.1..5.0f64, b in 0.0..2.0f64,
    ) {
        prop_assume!((d1 - d2).abs() > 1e-3);
        let step = StepDemand::new(d1, d2, t1).unwrap();
        let r = solve_dcb_step(&step, &PriceFunction::linear(a, b).unwrap(), &StepOptions::default()).unwrap();
        let Policy::ScalarK { k } = r.policy else { panic!("expected a scalar policy") };
        prop_assert!((k - 0.5).abs() <= 1e-6, "k = {k}");
    }

    #[test]
    fn centralized_welfare_is_nonnegative(values in prop::collection::vec(0.0..1.0f64, 2..12), power in 0.0..0.5f64) {
        let d: Demand = DemandPath::unit(values).unwrap().into();
        let set = FeasibleSet { power: Some(power), ..Default::default() };
        let r = solve_cb_linear(&d, &PriceFunction::linear(1.0, 0.0).unwrap(), &set, &ProjectOptions::default()).unwrap();
        prop_assert!(r.wel >= -1e-12);
    }

    #[test]
    fn finite_poa_is_at_least_one(d1 in 0.0..1.0f64, d2 in 0.0..1.0f64, t1 in 0.05..0.95f64, power in 0.001..1.0f64) {
        let d: Demand = StepDemand::new(d1, d2, t1).unwrap().into();
        let set = FeasibleSet { power: Some(power), ..Default::default() };
        let rep = poa_linear(&d, &set, 1.0, 0.0, &ProjectOptions::default()).unwrap();
        if rep.poa.case == PoaCase::Finite {
            prop_assert!(rep.poa.ratio() >= 1.0 - 1e-9);
            prop_assert!(rep.poa.ratio() <= 4.0 / 3.0 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_degree_shrinks_gap(price in price_strategy(), n in 1..64usize) {
        let source = |x: f64| price.price(x).unwrap();
        let (g1, _) = BernsteinPoly::from_price(&price, n).unwrap().sup_gap(source);
        let (g2, _) = BernsteinPoly::from_price(&price, 2 * n).unwrap().sup_gap(source);
        prop_assert!(g2 <= g1 + 1e-12, "gap({}) = {g1}, gap({}) = {g2}", n, 2 * n);
    }
}
