use kclg_core::local::{
    asym_polynomials, center_monomial, current, degree_one_gradient_g, h_function, verify_gradient_condition,
    verify_stationarity, ExactRates, LocalFunction, Part, PolynomialDecomposition, ThermoFunctions,
};
use kclg_core::rational::{pow, q, qi, Q};
use num_traits::Zero;

fn poly(terms: Vec<(Vec<i64>, Q)>) -> PolynomialDecomposition {
    PolynomialDecomposition::from_terms(terms)
}

fn densities() -> Vec<Q> {
    vec![q(1, 5), q(1, 3), q(1, 2), q(2, 3), q(4, 5), q(7, 11)]
}

#[test]
fn explicit_degree_parts_for_m2() {
    for rho in densities() {
        for b in [qi(1), q(-3, 4), q(5, 2)] {
            let p = asym_polynomials(2, &rho, &b).unwrap();
            let r2 = &rho * &rho;
            let p1 = poly(vec![
                (vec![0], -&b * (qi(2) * &r2 - &rho)),
                (vec![1], -&b * (qi(2) * &r2 - &rho)),
                (vec![-1], -&b * (&r2 - &rho)),
                (vec![2], -&b * (&r2 - &rho)),
            ]);
            let half = &rho - q(1, 2);
            let p2 = poly(vec![
                (vec![0, 1], -&b * qi(2) * &rho),
                (vec![-1, 1], -&b * &half),
                (vec![0, 2], -&b * &half),
                (vec![-1, 0], -&b * &half),
                (vec![1, 2], -&b * &half),
            ]);
            let p3 = poly(vec![(vec![-1, 0, 1], -b.clone()), (vec![0, 1, 2], -b.clone())]);
            assert_eq!(p.degree_part(1), p1, "P1 at rho = {rho}");
            assert_eq!(p.degree_part(2), p2, "P2 at rho = {rho}");
            assert_eq!(p.degree_part(3), p3, "P3 at rho = {rho}");
            assert_eq!(p.max_degree(), 3);
        }
    }
}

#[test]
fn grouped_centered_current_for_m2() {
    for rho in densities() {
        let b = q(2, 3);
        let c = -&b / qi(2);
        let mut t = Vec::new();
        t.push((vec![-1, 0, 1], &c * qi(2)));
        t.push((vec![0, 1, 2], &c * qi(2)));
        t.push((vec![0, 1], &c * qi(4) * &rho));
        for a in [-1, 2] {
            for d in [1, 0] {
                t.push((vec![a, d], &c * (qi(2) * &rho - qi(1))));
            }
        }
        let r2 = &rho * &rho;
        for s in [0, 1] {
            t.push((vec![s], &c * (qi(4) * &r2 - qi(2) * &rho)));
        }
        for s in [-1, 2] {
            t.push((vec![s], &c * (qi(2) * &r2 - qi(2) * &rho)));
        }
        assert_eq!(asym_polynomials(2, &rho, &b).unwrap(), poly(t));
    }
}

#[test]
fn centering_formula_coefficients() {
    let sets: [&[i64]; 5] = [&[3], &[-1, 4], &[0, 1, 5], &[-2, 0, 2, 9], &[-3, -1, 0, 1, 6]];
    for rho in densities() {
        for sites in sets {
            let k = sites.len();
            let p = center_monomial(sites, &rho).unwrap();
            let mut count = 0;
            for mask in 0u32..1 << k {
                let sub: Vec<i64> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| sites[i]).collect();
                assert_eq!(p.coefficient(&sub), pow(&rho, k - sub.len()));
                count += 1;
            }
            assert_eq!(p.terms().count(), count);
        }
    }
}

#[test]
fn h_for_m2_matches_closed_form() {
    let h = h_function(2).unwrap();
    let lit = LocalFunction::from_fn(-1, 3, |p| {
        let e = |x| qi(p.get(x) as i64);
        e(0) * e(1) + e(0) * e(-1) - e(-1) * e(1)
    })
    .unwrap();
    assert!(h.same_function(&lit).unwrap());
}

#[test]
fn gradient_condition_m2_to_m4() {
    for m in 2..=4 {
        assert!(verify_gradient_condition(m).unwrap(), "m = {m}");
    }
    assert!(verify_gradient_condition(5).is_err());
}

#[test]
fn symmetric_current_is_half_gradient_of_h() {
    for m in 2..=4 {
        let js = current(&ExactRates::symmetric(m), Part::Symmetric).unwrap();
        let h = h_function(m).unwrap();
        let grad = h.sub(&h.translate(1)).unwrap().scale(&q(1, 2));
        assert!(js.same_function(&grad).unwrap());
    }
}

#[test]
fn stationarity_width_eight() {
    let rhos = vec![q(1, 3), q(1, 2), q(3, 4)];
    for m in [2, 3] {
        for drift in [qi(0), q(1, 3), qi(-1)] {
            assert!(verify_stationarity(&ExactRates::new(m, drift), 8, &rhos).unwrap());
        }
        assert!(!verify_stationarity(&ExactRates::new(m, q(1, 2)).corrupted(), 8, &rhos).unwrap());
    }
}

#[test]
fn degree_one_part_general_formula() {
    for m in 2..=4usize {
        for rho in densities() {
            let b = q(3, 5);
            let p1 = asym_polynomials(m, &rho, &b).unwrap().degree_part(1);
            let mi = qi(m as i64);
            let lead = pow(&rho, m - 1);
            let mut t = Vec::new();
            for s in [0, 1] {
                t.push((vec![s], &b / qi(2) * &mi * &lead * (qi(1) - qi(2) * &rho)));
            }
            for k in 1..m as i64 {
                let c = &b / qi(2) * qi(2 * (m as i64 - k)) * &lead * (qi(1) - &rho);
                t.push((vec![-k], c.clone()));
                t.push((vec![1 + k], c));
            }
            assert_eq!(p1, poly(t), "m = {m}, rho = {rho}");
        }
    }
}

#[test]
fn degree_one_gradient_at_special_density() {
    for m in 2..=3usize {
        let mi = m as i64;
        let rho = q(mi, mi + 1);
        let b = q(7, 4);
        let g = degree_one_gradient_g(m, &rho, &b).unwrap();
        assert!(g.expectation(&rho).is_zero());
        let p1 = asym_polynomials(m, &rho, &b).unwrap().degree_part(1);
        let grad = g.sub(&g.translate(1)).unwrap();
        assert!(grad.same_function(&p1.to_local(&rho).unwrap()).unwrap());
        // the rewritten form −(b/m)(m/(m+1))^m Σ_k k(η̄(0) − η̄(k−m) + η̄(1) − η̄(m−k+1))
        let c = -&b / qi(mi) * pow(&rho, m);
        let mut t = Vec::new();
        for k in 1..mi {
            for (s, sign) in [(0, 1), (k - mi, -1), (1, 1), (mi - k + 1, -1)] {
                t.push((vec![s], &c * qi(k * sign)));
            }
        }
        assert_eq!(p1, poly(t), "m = {m}");
    }
}

#[test]
fn flux_curvature_at_two_thirds() {
    for b in [qi(1), q(-2, 5), qi(3)] {
        let t = ThermoFunctions::new(2, b.clone());
        assert_eq!(t.flux_second(&q(2, 3)), qi(-4) * &b);
        assert!(t.flux_prime(&q(2, 3)).is_zero());
    }
}

#[test]
fn mean_current_closed_form_m2() {
    for rho in densities() {
        let b = q(1, 4);
        let j = current(&ExactRates::new(2, b.clone()), Part::Full).unwrap();
        assert_eq!(j.expectation(&rho), qi(2) * &b * &rho * &rho * (qi(1) - &rho));
    }
}
