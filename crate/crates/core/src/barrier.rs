//! Selection of the periodic barrier `b*` and the classical barrier `b̄`.
//!
//! `b*` is chosen by smooth fit: `r W^{(q)′}(b) = Φ(q+r) Z^{(q)′}(b, Φ(q+r))`.
//! Writing the difference with the damping factor `e^{−Φ(q+r) b}` gives
//!
//! ```text
//! h(b) = −r Σ_i a_i θ_i² e^{(θ_i − Φ(q+r)) b} / (Φ(q+r) − θ_i),
//! h′(b) = r e^{−Φ(q+r) b} W^{(q)″}(b),
//! ```
//!
//! so `h` falls on `(0, b̄)`, rises on `(b̄, ∞)` and tends to zero. A positive
//! root exists exactly when `h(0+) > 0`, otherwise `b* = 0`.

use serde::Serialize;

use crate::error::{PdkError, Result};
use crate::roots::bisect;
use crate::scale::ScaleFunctions;

const B_STAR_EPS: f64 = 1e-12;
const BISECT_ABS_TOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;
const B_BAR_START: f64 = 1e-6;

/// Outcome of the barrier selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSolution {
    pub b_star: f64,
    pub b_bar: f64,
    pub phi_q: f64,
    pub phi_qr: f64,
    pub h_at_zero: f64,
    pub positive_criterion: bool,
    /// `|rW′(b*) − Φ(q+r)Z′(b*)| / (rW′(b*))`; zero when `b* = 0`.
    pub smooth_fit_residual: f64,
    /// Set when the sign change of `W″` was not found below the search cap
    /// and `b̄` was pinned to the cap.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub b_bar_at_cap: bool,
}

/// `h(b)` for `b > 0`, evaluated in damped form.
pub fn h(sf: &ScaleFunctions, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(PdkError::domain(format!("h requires b > 0, got {b}")));
    }
    Ok(h_unchecked(sf, b))
}

fn h_unchecked(sf: &ScaleFunctions, b: f64) -> f64 {
    let big = sf.phi_qr();
    let r = sf.spec.r();
    let basis = &sf.q_basis;
    -r * basis
        .coeffs
        .iter()
        .zip(&basis.roots)
        .map(|(&a, &t)| a * t * t * ((t - big) * b).exp() / (big - t))
        .sum::<f64>()
}

/// `h(0+) = r (W^{(q)′}(0+) + Φ(q+r) W^{(q)}(0)) − Φ(q+r)²`.
pub fn h_at_zero(sf: &ScaleFunctions) -> f64 {
    let big = sf.phi_qr();
    let basis = &sf.q_basis;
    sf.spec.r() * (basis.w0_prime + big * basis.w0) - big * big
}

/// True iff the optimal periodic barrier is strictly positive.
pub fn positive_barrier_criterion(sf: &ScaleFunctions) -> bool {
    h_at_zero(sf) > 0.0
}

/// `b̄` together with a flag telling whether it was pinned to the search cap.
pub fn bar_b_detailed(sf: &ScaleFunctions) -> Result<(f64, bool)> {
    let basis = &sf.q_basis;
    let damp = basis.phi();
    // sign of W″ without overflow
    let w2 = |x: f64| basis.w_damped(x, 2, damp);
    // with zero drift and a Gaussian part W″(0+) = 0 and W‴(0+) > 0
    if basis.w0_second >= 0.0 {
        return Ok((0.0, false));
    }
    let cap = 1e3 * (1.0 / damp + 1.0);
    let mut lo = 0.0;
    let mut hi = B_BAR_START;
    while w2(hi) < 0.0 {
        if hi >= cap {
            return Ok((cap, true));
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    let root = bisect(w2, lo, hi, BISECT_ABS_TOL, BISECT_MAX_ITER)?;
    Ok((root, false))
}

/// The classical barrier `b̄`: the point where `W^{(q)″}` turns positive.
pub fn bar_b(sf: &ScaleFunctions) -> Result<f64> {
    bar_b_detailed(sf).map(|(b, _)| b)
}

/// Smooth-fit residual `|rW′(b) − Φ(q+r)Z′(b, Φ(q+r))| / (rW′(b))`.
pub fn smooth_fit_residual(sf: &ScaleFunctions, b: f64) -> f64 {
    let r = sf.spec.r();
    let lhs = r * sf.q_basis.w(b, 1);
    let (_, zp) = sf.z_phi(b);
    (lhs - sf.phi_qr() * zp).abs() / lhs.abs()
}

/// Computes `b*`, `b̄` and the diagnostics of the selection.
pub fn b_star(sf: &ScaleFunctions) -> Result<BarrierSolution> {
    let (b_bar, b_bar_at_cap) = bar_b_detailed(sf)?;
    let h0 = h_at_zero(sf);
    let positive = h0 > 0.0;
    let (b_star, residual) = if positive {
        if !(b_bar > 0.0) {
            return Err(PdkError::numerical("h(0+) > 0 but W'' has no sign change".to_string()));
        }
        let root = bisect(
            |b| h_unchecked(sf, b),
            B_STAR_EPS,
            b_bar,
            BISECT_ABS_TOL,
            BISECT_MAX_ITER,
        )?;
        (root, smooth_fit_residual(sf, root))
    } else {
        (0.0, 0.0)
    };
    Ok(BarrierSolution {
        b_star,
        b_bar,
        phi_q: sf.phi_q(),
        phi_qr: sf.phi_qr(),
        h_at_zero: h0,
        positive_criterion: positive,
        smooth_fit_residual: residual,
        b_bar_at_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{LevyModel, ProblemSpec};

    fn scales(c: f64, sigma: f64) -> ScaleFunctions {
        let model = LevyModel::single_exponential(c, sigma, 1.0, 1.0).unwrap();
        ScaleFunctions::new(&ProblemSpec::new(model, 0.05, 0.5).unwrap()).unwrap()
    }

    // Values frozen from the closed-form two-exponential oracle for Case 1′
    // (quadratic roots, a_i = 1/ψ′(θ_i)), evaluated at 30 digits.
    const CASE1P_H0: f64 = 0.05339448512052915;
    const CASE1P_B_BAR: f64 = 5.135054924486524;
    const CASE1P_B_STAR: f64 = 3.797618422927856;

    #[test]
    fn h_damped_form_matches_definition() {
        let sf = scales(1.5, 0.2);
        let big = sf.phi_qr();
        let r = 0.5;
        for &b in &[0.1, 1.0, 3.0, 8.0] {
            let (_, zp) = sf.z_phi(b);
            let direct = (-big * b).exp() * (r * sf.q_basis.w(b, 1) - big * zp);
            assert!((h(&sf, b).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn h_at_zero_case1p() {
        let sf = scales(1.5, 0.0);
        assert!((h_at_zero(&sf) - CASE1P_H0).abs() < 1e-12);
        // the limit of the damped sum agrees with the boundary formula
        assert!((h(&sf, 1e-12).unwrap() - CASE1P_H0).abs() < 1e-10);
    }

    #[test]
    fn criterion_per_case() {
        assert!(positive_barrier_criterion(&scales(1.5, 0.0)));
        assert!(!positive_barrier_criterion(&scales(1.15, 0.0)));
        assert!(positive_barrier_criterion(&scales(1.5, 0.2)));
        assert!(!positive_barrier_criterion(&scales(0.1, 0.2)));
        assert!(!positive_barrier_criterion(&scales(0.0, 0.2)));
        assert!(!positive_barrier_criterion(&scales(0.1, 0.0)));
    }

    #[test]
    fn case2p_h_starts_negative() {
        let sf = scales(1.15, 0.0);
        let h0 = h_at_zero(&sf);
        assert!((h0 - (0.7826317479557037 - 0.7867859276651301)).abs() < 1e-12);
    }

    #[test]
    fn unbounded_criterion_is_quadratic_in_phi() {
        let sf = scales(1.5, 0.2);
        let big = sf.phi_qr();
        let alt = 0.5 > 0.5 * 0.04 * big * big;
        assert_eq!(alt, positive_barrier_criterion(&sf));
        assert!((h_at_zero(&sf) - (0.5 * 2.0 / 0.04 - big * big)).abs() < 1e-10);
    }

    #[test]
    fn case1p_barriers_match_oracle() {
        let sf = scales(1.5, 0.0);
        let sol = b_star(&sf).unwrap();
        assert!((sol.b_bar - CASE1P_B_BAR).abs() < 1e-9);
        assert!((sol.b_star - CASE1P_B_STAR).abs() < 1e-9);
        assert!(sol.b_star < sol.b_bar);
        assert!(sol.smooth_fit_residual <= 1e-8);
    }

    #[test]
    fn b_bar_sign_bracket_case1() {
        let sf = scales(1.5, 0.2);
        let bb = bar_b(&sf).unwrap();
        assert!(bb > 0.0);
        assert!(sf.q_basis.w(bb - 1e-4, 2) < 0.0);
        assert!(sf.q_basis.w(bb + 1e-4, 2) > 0.0);
    }

    #[test]
    fn zero_barriers_for_case3() {
        for sigma in [0.2, 0.0] {
            let c = if sigma > 0.0 { 0.0 } else { 0.1 };
            let sol = b_star(&scales(c, sigma)).unwrap();
            assert_eq!(sol.b_star, 0.0);
            assert_eq!(sol.b_bar, 0.0);
        }
    }

    #[test]
    fn case2_zero_b_star_positive_b_bar() {
        for (c, sigma) in [(0.1, 0.2), (1.15, 0.0)] {
            let sol = b_star(&scales(c, sigma)).unwrap();
            assert_eq!(sol.b_star, 0.0);
            assert!(sol.b_bar > 0.0);
        }
    }

    #[test]
    fn h_vanishes_far_out() {
        for (c, sigma) in [(1.5, 0.2), (1.5, 0.0), (0.1, 0.2)] {
            let sf = scales(c, sigma);
            let b = 1e3 / sf.phi_qr();
            assert!(h(&sf, b).unwrap().abs() <= 1e-6);
        }
    }

    #[test]
    fn h_rejects_nonpositive_b() {
        assert!(h(&scales(1.5, 0.0), 0.0).is_err());
    }
}
