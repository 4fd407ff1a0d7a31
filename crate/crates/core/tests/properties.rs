//! Randomised properties over single- and two-component models.

use pdk_core::barrier::h;
use pdk_core::verify::{default_grid, hjb_check, log_grid};
use pdk_core::{b_star, JumpTerm, LevyModel, ProblemSpec, ScaleFunctions, ValueFunction, VariationClass};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    c: f64,
    sigma: f64,
    jumps: Vec<(f64, f64)>,
    q: f64,
    r: f64,
}

impl Case {
    fn spec(&self) -> ProblemSpec {
        let jumps = self.jumps.iter().map(|&(k, l)| JumpTerm::new(k, l)).collect();
        let model = LevyModel::new(self.c, self.sigma, jumps).unwrap();
        ProblemSpec::new(model, self.q, self.r).unwrap()
    }

    fn scales(&self) -> ScaleFunctions {
        ScaleFunctions::new(&self.spec()).unwrap()
    }
}

fn case() -> impl Strategy<Value = Case> {
    let sigma = prop_oneof![Just(0.0), 0.05..0.5f64];
    let jumps = prop_oneof![
        (0.1..2.0f64, 0.3..3.0f64).prop_map(|j| vec![j]),
        (0.1..1.5f64, 0.3..2.0f64, 0.1..1.5f64, 1.5..4.0f64)
            .prop_map(|(k1, l1, k2, ratio)| vec![(k1, l1), (k2, l1 * ratio)]),
    ];
    (0.3..4.0f64, sigma, jumps, 0.01..0.2f64, 0.1..2.0f64).prop_map(|(c, sigma, jumps, q, r)| Case {
        c,
        sigma,
        jumps,
        q,
        r,
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn laplace_transform_inverts_psi(case in case(), shift in 0.05..3.0f64) {
        let spec = case.spec();
        let sf = ScaleFunctions::new(&spec).unwrap();
        for basis in [&sf.q_basis, &sf.qr_basis] {
            let theta = basis.phi() + shift;
            let lt = basis.laplace_transform(theta).unwrap();
            let psi = spec.model.laplace_exponent(theta).unwrap();
            prop_assert!(close(lt, 1.0 / (psi - basis.rate_p), 1e-9), "{lt} vs {}", 1.0 / (psi - basis.rate_p));
        }
    }

    #[test]
    fn resolvent_convolution(case in case(), x in 0.05..5.0f64) {
        let sf = case.scales();
        let lhs = sf.qr_basis.w(x, 0) - sf.q_basis.w(x, 0);
        let rhs = case.r * sf.qr_basis.convolve(&sf.q_basis, x);
        prop_assert!(close(lhs, rhs, 1e-8), "{lhs} vs {rhs}");
    }

    #[test]
    fn basis_structure(case in case()) {
        let sf = case.scales();
        for basis in [&sf.q_basis, &sf.qr_basis] {
            prop_assert!(basis.coeffs[0] > 0.0);
            for (&theta, &a) in basis.roots.iter().zip(&basis.coeffs).skip(1) {
                prop_assert!(theta < 0.0);
                prop_assert!(a < 0.0, "coefficient {a} at root {theta}");
            }
            let sum: f64 = basis.coeffs.iter().sum();
            prop_assert!((sum - basis.w0).abs() < 1e-12 * (1.0 + basis.coeffs[0].abs()));
            let expected_w0 = if case.sigma > 0.0 { 0.0 } else { 1.0 / case.c };
            prop_assert!((basis.w0 - expected_w0).abs() < 1e-15);
            for x in log_grid(1e-3, 20.0, 40) {
                prop_assert!(basis.w(x, 1) > 0.0);
                prop_assert!(basis.w(x, 3) > 0.0, "W''' = {} at {x}", basis.w(x, 3));
            }
        }
    }

    #[test]
    fn h_shape_and_barrier_bounds(case in case()) {
        let sf = case.scales();
        let sol = b_star(&sf).unwrap();
        prop_assert!(sol.b_star >= 0.0 && sol.b_star <= sol.b_bar);
        prop_assert_eq!(sol.positive_criterion, sol.b_star > 0.0);
        // h decreases up to b̄ and increases after it
        let pts: Vec<f64> = log_grid(1e-3, 4.0 * sol.b_bar.max(1.0), 60);
        let hs: Vec<f64> = pts.iter().map(|&b| h(&sf, b).unwrap()).collect();
        for (w, p) in hs.windows(2).zip(pts.windows(2)) {
            let tol = 1e-10 * (1.0 + w[0].abs());
            if p[1] <= sol.b_bar {
                prop_assert!(w[1] <= w[0] + tol, "h rises before b̄ at {}", p[1]);
            } else if p[0] >= sol.b_bar {
                prop_assert!(w[1] >= w[0] - tol, "h falls after b̄ at {}", p[1]);
            }
        }
        if sol.b_star > 0.0 {
            prop_assert!(sol.smooth_fit_residual <= 1e-8);
        }
    }

    #[test]
    fn optimal_barrier_dominates(case in case(), frac in 0.0..2.5f64) {
        let sf = case.scales();
        let sol = b_star(&sf).unwrap();
        let other = frac * sol.b_bar.max(0.5);
        let best = ValueFunction::new(&sf, sol.b_star).unwrap();
        let alt = ValueFunction::new(&sf, other).unwrap();
        for i in 0..=40 {
            let x = i as f64 * 0.25;
            let (a, b) = (best.value(x), alt.value(x));
            prop_assert!(a >= b - 1e-8 * (1.0 + a.abs()), "v_b*({x}) = {a} < v_{other}({x}) = {b}");
        }
    }

    #[test]
    fn more_opportunities_pay_more(case in case(), factor in 1.1..4.0f64) {
        let low = case.scales();
        let high = Case { r: case.r * factor, ..case.clone() }.scales();
        let (sl, sh) = (b_star(&low).unwrap(), b_star(&high).unwrap());
        prop_assert!(sl.b_star <= sh.b_star + 1e-9, "b* fell from {} to {}", sl.b_star, sh.b_star);
        prop_assert!((sl.b_bar - sh.b_bar).abs() < 1e-9 * (1.0 + sl.b_bar));
        let (vl, vh) = (ValueFunction::new(&low, sl.b_star).unwrap(), ValueFunction::new(&high, sh.b_star).unwrap());
        for i in 0..=30 {
            let x = i as f64 / 3.0;
            prop_assert!(vh.value(x) >= vl.value(x) - 1e-9 * (1.0 + vl.value(x)));
        }
    }

    #[test]
    fn slopes_around_the_barrier(case in case()) {
        let sf = case.scales();
        let sol = b_star(&sf).unwrap();
        let v = ValueFunction::new(&sf, sol.b_star).unwrap();
        for x in log_grid(1e-3, 3.0 * sol.b_bar.max(1.0), 50) {
            if x == sol.b_star {
                continue;
            }
            let slope = v.derivative(x, 1).unwrap();
            if x < sol.b_star {
                prop_assert!(slope >= 1.0 - 1e-8, "v'({x}) = {slope} below b*");
            } else {
                prop_assert!(slope <= 1.0 + 1e-8, "v'({x}) = {slope} above b*");
            }
        }
    }

    #[test]
    fn smooth_at_the_optimal_barrier(case in case()) {
        let sf = case.scales();
        let sol = b_star(&sf).unwrap();
        prop_assume!(sol.b_star > 0.0);
        let v = ValueFunction::new(&sf, sol.b_star).unwrap();
        let (l1, r1) = v.derivative_one_sided(sol.b_star, 1);
        prop_assert!(close(l1, r1, 1e-10));
        if sf.spec.model.variation_class() == VariationClass::Bounded {
            let (l2, r2) = v.derivative_one_sided(sol.b_star, 2);
            prop_assert!((r2 - l2).abs() <= 1e-8 * (1.0 + l2.abs()), "v'' jump {}", r2 - l2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn random_models_certify(case in case()) {
        let sf = case.scales();
        let sol = b_star(&sf).unwrap();
        let report = hjb_check(&sf, &sol, &default_grid(sol.b_bar)).unwrap();
        prop_assert!(report.pass, "{case:?}: residual {} slack {} smoothness {}",
            report.max_generator_residual(), report.max_hjb_slack(), report.smoothness_jump);
    }
}
