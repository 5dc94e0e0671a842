use fbs_unroll::{GrowthCase, Regularizer, RegularizerKind};
use ndarray::Array1;
use proptest::prelude::*;

fn reg_strategy() -> impl Strategy<Value = Regularizer> {
    (
        prop_oneof![
            Just(RegularizerKind::L1),
            Just(RegularizerKind::SquaredL2),
            Just(RegularizerKind::Zero)
        ],
        0.05f64..3.0,
    )
        .prop_map(|(k, s)| Regularizer::new(k, s).unwrap())
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_map(Array1::from)
}

fn dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|d| d * d).sum().sqrt()
}

/// `R(x) + |x - v|^2 / (2 rho)`
fn moreau_obj(r: &Regularizer, rho: f64, v: &Array1<f64>, x: &Array1<f64>) -> f64 {
    r.value(x.view()) + (x - v).mapv(|d| d * d).sum() / (2.0 * rho)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn prox_is_nonexpansive(r in reg_strategy(), rho in 0.0f64..4.0, v in vec_strategy(6), w in vec_strategy(6)) {
        let pv = r.prox(rho, v.view()).unwrap();
        let pw = r.prox(rho, w.view()).unwrap();
        prop_assert!(dist(&pv, &pw) <= dist(&v, &w) * (1.0 + 1e-15) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn prox_fixes_origin(r in reg_strategy(), rho in 0.0f64..10.0, n in 1usize..12) {
        let z = Array1::zeros(n);
        prop_assert_eq!(r.prox(rho, z.view()).unwrap(), z);
    }

    #[test]
    fn prox_residual_is_a_subgradient(
        r in reg_strategy(),
        rho in 0.01f64..3.0,
        v in vec_strategy(5),
        probes in prop::collection::vec(vec_strategy(5), 200),
    ) {
        let x = r.prox(rho, v.view()).unwrap();
        let g = (&v - &x) / rho;
        let rx = r.value(x.view());
        for z in &probes {
            let lhs = r.value(z.view());
            let rhs = rx + g.dot(&(z - &x));
            prop_assert!(lhs >= rhs - 1e-10, "R(z) = {lhs} < {rhs}");
        }
    }

    #[test]
    fn strong_convexity_gap_bound(
        r in reg_strategy(),
        rho in 0.05f64..3.0,
        drho in -0.04f64..1.0,
        v in vec_strategy(7),
    ) {
        let x = r.prox(rho, v.view()).unwrap();
        let xd = r.prox(rho + drho, v.view()).unwrap();
        let lhs = dist(&xd, &x).powi(2) / (2.0 * rho);
        let rhs = moreau_obj(&r, rho, &v, &xd) - moreau_obj(&r, rho, &v, &x);
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
    }

    #[test]
    fn subgradients_respect_growth_case(r in reg_strategy(), x in vec_strategy(9)) {
        let g = r.subgrad_select(x.view()).unwrap();
        let (gn, xn) = (g.mapv(|v| v * v).sum().sqrt(), x.mapv(|v| v * v).sum().sqrt());
        prop_assert!(r.growth_case(9).admits(gn, xn, 1e-12));
        prop_assert!(r.is_subgradient(x.view(), g.view(), 1e-12));
    }

    #[test]
    fn regularizers_are_midpoint_convex(r in reg_strategy(), x in vec_strategy(4), y in vec_strategy(4)) {
        let mid = (&x + &y) / 2.0;
        prop_assert!(r.value(mid.view()) <= (r.value(x.view()) + r.value(y.view())) / 2.0 + 1e-12);
    }
}

#[test]
fn continuity_gaps_shrink_with_drho() {
    let v = Array1::from(vec![1.3, -0.2, 0.9, -2.4, 0.05, 3.1]);
    for r in [Regularizer::l1(1.0), Regularizer::squared_l2(0.8)] {
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&d| r.prox_rho_continuity_gap(1.0, d, v.view()).unwrap())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[2] < 1e-2);
    }
}

#[test]
fn growth_cases_are_declared() {
    assert_eq!(Regularizer::l1(2.0).growth_case(4), GrowthCase::Bounded(4.0));
    assert_eq!(Regularizer::squared_l2(1.5).growth_case(4), GrowthCase::Linear(3.0));
}
