//! Expected NPV of dividends under a periodic barrier strategy.
//!
//! Below the barrier `v_b(x) = r W^{(q)}(x) / D` with
//! `D = Φ(q+r) Z^{(q)′}(b, Φ(q+r))`. Above the barrier the general formula
//!
//! ```text
//! v_b(x) = r [W^{(q)}(x) + r ∫₀^{x−b} W^{(q+r)}(x−b−y) W^{(q)}(y+b) dy
//!             − r W^{(q)}(b) W̄^{(q+r)}(x−b)] / D − r W̿^{(q+r)}(x−b)
//! ```
//!
//! collapses, once the convolution is expanded over both exponential bases,
//! to an exponential sum in `x − b` over the *negative* `(q+r)`-roots plus an
//! affine part. The `e^{θ_i x}` terms cancel through
//! `Σ_j α_j/(θ_i − β_j) = 1/(ψ(θ_i) − q − r) = −1/r`, and the
//! `e^{Φ(q+r)(x−b)}` term cancels against `W̿`; both are dropped exactly.

use crate::error::{PdkError, Result};
use crate::expsum::{ExpTerm, PiecewiseExp, Segment};
use crate::levy::VariationClass;
use crate::scale::ScaleFunctions;

/// `v_b` assembled once as a piecewise exponential sum.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    barrier_b: f64,
    denom: f64,
    variation: VariationClass,
    w_qr_0: f64,
    r: f64,
    w_q_prime_b: f64,
    f: PiecewiseExp,
}

impl ValueFunction {
    pub fn new(sf: &ScaleFunctions, b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(PdkError::domain(format!("barrier must be finite and >= 0, got {b}")));
        }
        let r = sf.spec.r();
        let big = sf.phi_qr();
        let qb = &sf.q_basis;
        let qrb = &sf.qr_basis;
        let s1: f64 = qrb.coeffs.iter().zip(&qrb.roots).map(|(a, t)| a / t).sum();
        let s2: f64 = qrb.coeffs.iter().zip(&qrb.roots).map(|(a, t)| a / (t * t)).sum();
        let tail_terms = |coef_of: &dyn Fn(f64, f64) -> f64| -> Vec<ExpTerm> {
            qrb.coeffs
                .iter()
                .zip(&qrb.roots)
                .skip(1)
                .map(|(&alpha, &beta)| ExpTerm {
                    coef: coef_of(alpha, beta),
                    rate: beta,
                })
                .collect()
        };

        let (denom, segments) = if b == 0.0 {
            let w0 = qb.w0;
            let denom = big * (big - r * w0);
            let k1 = r / denom;
            let terms = tail_terms(&|alpha, beta| k1 * alpha * (1.0 - r * w0 / beta) - r * alpha / (beta * beta));
            let c0 = k1 * r * w0 * s1 + r * s2;
            let segments = vec![
                Segment::zero(f64::NEG_INFINITY, 0.0),
                Segment {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    anchor: 0.0,
                    terms,
                    c0,
                    c1: r * s1,
                },
            ];
            (denom, segments)
        } else {
            let (_, zp) = sf.z_phi(b);
            let denom = big * zp;
            if !(denom > 0.0) {
                return Err(PdkError::numerical(format!(
                    "nonpositive normaliser Phi(q+r) Z'(b) = {denom} at b = {b}"
                )));
            }
            let wb = qb.w(b, 0);
            let terms = tail_terms(&|alpha, beta| {
                let conv: f64 = qb
                    .coeffs
                    .iter()
                    .zip(&qb.roots)
                    .map(|(&a, &t)| a * (t * b).exp() / (beta - t))
                    .sum();
                r * r * alpha * conv / denom - r * r * wb * alpha / (beta * denom) - r * alpha / (beta * beta)
            });
            let c0 = r * r * wb * s1 / denom + r * s2;
            let below = qb
                .coeffs
                .iter()
                .zip(&qb.roots)
                .map(|(&a, &t)| ExpTerm {
                    coef: r * a / denom,
                    rate: t,
                })
                .collect();
            let segments = vec![
                Segment::zero(f64::NEG_INFINITY, 0.0),
                Segment {
                    lo: 0.0,
                    hi: b,
                    anchor: 0.0,
                    terms: below,
                    c0: 0.0,
                    c1: 0.0,
                },
                Segment {
                    lo: b,
                    hi: f64::INFINITY,
                    anchor: b,
                    terms,
                    c0,
                    c1: r * s1,
                },
            ];
            (denom, segments)
        };
        Ok(ValueFunction {
            barrier_b: b,
            denom,
            variation: sf.spec.model.variation_class(),
            w_qr_0: qrb.w0,
            r,
            w_q_prime_b: qb.w(b, 1),
            f: PiecewiseExp::new(segments),
        })
    }

    pub fn barrier(&self) -> f64 {
        self.barrier_b
    }

    /// `Φ(q+r) Z^{(q)′}(b, Φ(q+r))`.
    pub fn normaliser(&self) -> f64 {
        self.denom
    }

    pub fn as_piecewise(&self) -> &PiecewiseExp {
        &self.f
    }

    /// `v_b(x)` for any real `x`.
    pub fn value(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    /// `(left, right)` limits of `v_b^{(order)}` at `x`.
    pub fn derivative_one_sided(&self, x: f64, order: u32) -> (f64, f64) {
        (self.f.derivative_left(x, order), self.f.derivative(x, order))
    }

    /// `v_b^{(order)}(x)` for `x > 0`, order 1 to 3.
    ///
    /// At `x = b` the derivative only exists when both one-sided limits
    /// agree; otherwise this is a domain error and
    /// [`derivative_one_sided`](Self::derivative_one_sided) should be used.
    pub fn derivative(&self, x: f64, order: u32) -> Result<f64> {
        if !(1..=3).contains(&order) {
            return Err(PdkError::domain(format!("derivative order must be 1..=3, got {order}")));
        }
        if !(x > 0.0) {
            return Err(PdkError::domain(format!("derivative requires x > 0, got {x}")));
        }
        if x == self.barrier_b {
            let (l, r) = self.derivative_one_sided(x, order);
            if (l - r).abs() > 1e-8 * (1.0 + l.abs().max(r.abs())) {
                return Err(PdkError::domain(format!(
                    "derivative of order {order} jumps at the barrier ({l} vs {r})"
                )));
            }
            return Ok(0.5 * (l + r));
        }
        Ok(self.f.derivative(x, order))
    }

    /// `v_b″(b+) − v_b″(b−)` read off the assembled segments.
    pub fn second_derivative_jump(&self) -> f64 {
        let (l, r) = self.derivative_one_sided(self.barrier_b, 2);
        r - l
    }

    /// Closed form of the same jump:
    /// `r W^{(q+r)}(0) (r W^{(q)′}(b) / D − 1)`.
    pub fn second_derivative_jump_formula(&self) -> f64 {
        match self.variation {
            VariationClass::Unbounded => 0.0,
            VariationClass::Bounded => self.r * self.w_qr_0 * (self.r * self.w_q_prime_b / self.denom - 1.0),
        }
    }
}

/// Value of continuous (classical) barrier reflection at `b̄`, the `r = ∞`
/// limit.
#[derive(Debug, Clone)]
pub struct ClassicalValue {
    b_bar: f64,
    f: PiecewiseExp,
}

impl ClassicalValue {
    pub fn new(sf: &ScaleFunctions, b_bar: f64) -> Result<Self> {
        if !(b_bar >= 0.0 && b_bar.is_finite()) {
            return Err(PdkError::domain(format!("classical barrier must be >= 0, got {b_bar}")));
        }
        let qb = &sf.q_basis;
        let slope = if b_bar == 0.0 { qb.w0_prime } else { qb.w(b_bar, 1) };
        let mut segments = vec![Segment::zero(f64::NEG_INFINITY, 0.0)];
        if b_bar > 0.0 {
            segments.push(Segment {
                lo: 0.0,
                hi: b_bar,
                anchor: 0.0,
                terms: qb
                    .coeffs
                    .iter()
                    .zip(&qb.roots)
                    .map(|(&a, &t)| ExpTerm {
                        coef: a / slope,
                        rate: t,
                    })
                    .collect(),
                c0: 0.0,
                c1: 0.0,
            });
        }
        let at_barrier = if b_bar == 0.0 { qb.w0 } else { qb.w(b_bar, 0) } / slope;
        segments.push(Segment::affine(b_bar, f64::INFINITY, b_bar, at_barrier, 1.0));
        Ok(ClassicalValue {
            b_bar,
            f: PiecewiseExp::new(segments),
        })
    }

    pub fn b_bar(&self) -> f64 {
        self.b_bar
    }

    pub fn value(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    pub fn as_piecewise(&self) -> &PiecewiseExp {
        &self.f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::b_star;
    use crate::levy::{LevyModel, ProblemSpec};
    use crate::quad::integrate;

    fn scales(c: f64, sigma: f64) -> ScaleFunctions {
        let model = LevyModel::single_exponential(c, sigma, 1.0, 1.0).unwrap();
        ScaleFunctions::new(&ProblemSpec::new(model, 0.05, 0.5).unwrap()).unwrap()
    }

    /// The defining formula with the convolution done by quadrature.
    fn value_by_quadrature(sf: &ScaleFunctions, b: f64, x: f64) -> f64 {
        let r = sf.spec.r();
        let (_, zp) = sf.z_phi(b);
        let d = sf.phi_qr() * zp;
        let qb = &sf.q_basis;
        let qrb = &sf.qr_basis;
        if x <= b {
            return r * qb.w(x, 0) / d;
        }
        let u = x - b;
        let conv = integrate(|y| qrb.w(u - y, 0) * qb.w(y + b, 0), 0.0, u, 1e-13);
        r * (qb.w(x, 0) + r * conv - r * qb.w(b, 0) * qrb.wbar(u)) / d - r * qrb.wbarbar(u)
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for (c, sigma) in [(1.5, 0.0), (1.5, 0.2), (0.1, 0.2)] {
            let sf = scales(c, sigma);
            for &b in &[0.0, 0.5, 2.0, 4.0] {
                let v = ValueFunction::new(&sf, b).unwrap();
                for &x in &[0.2, 1.0, 3.0, 6.0, 12.0] {
                    // the defining formula cancels terms of size W(x)
                    if sf.q_basis.w(x, 0) > 1e5 {
                        continue;
                    }
                    let exact = value_by_quadrature(&sf, b, x);
                    let got = v.value(x);
                    assert!(
                        (got - exact).abs() <= 1e-8 * exact.abs().max(1.0),
                        "c={c} s={sigma} b={b} x={x}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn value_below_zero_for_unbounded_variation() {
        let sf = scales(1.5, 0.2);
        let v = ValueFunction::new(&sf, 2.0).unwrap();
        assert_eq!(v.value(-1.0), 0.0);
        assert!(v.value(0.0).abs() < 1e-14);
    }

    #[test]
    fn case1p_value_at_zero() {
        let sf = scales(1.5, 0.0);
        let sol = b_star(&sf).unwrap();
        let v = ValueFunction::new(&sf, sol.b_star).unwrap();
        // W(0)/W'(b*) from the two-exponential oracle
        assert!((v.value(0.0) - 2.557834255429779).abs() < 1e-9);
    }

    #[test]
    fn slope_one_at_optimal_barrier() {
        let sf = scales(1.5, 0.0);
        let sol = b_star(&sf).unwrap();
        let v = ValueFunction::new(&sf, sol.b_star).unwrap();
        let (l, r) = v.derivative_one_sided(sol.b_star, 1);
        assert!((l - 1.0).abs() < 1e-8 && (r - 1.0).abs() < 1e-8);
        assert!(v.second_derivative_jump().abs() < 1e-8);
    }

    #[test]
    fn second_derivative_jump_matches_formula_off_optimum() {
        let sf = scales(1.5, 0.0);
        let v = ValueFunction::new(&sf, 1.0).unwrap();
        let formula = v.second_derivative_jump_formula();
        assert!(formula.abs() > 1e-3);
        let h = 1e-5;
        let right = (v.value(1.0 + 2.0 * h) - 2.0 * v.value(1.0 + h) + v.value(1.0)) / (h * h);
        let left = (v.value(1.0) - 2.0 * v.value(1.0 - h) + v.value(1.0 - 2.0 * h)) / (h * h);
        assert!((v.second_derivative_jump() - formula).abs() < 1e-8);
        assert!(((right - left) - formula).abs() < 1e-3);
        assert!(v.derivative(1.0, 2).is_err());
        assert!(v.derivative(1.0, 1).is_ok());
    }

    #[test]
    fn unbounded_variation_has_no_second_derivative_jump() {
        let sf = scales(1.5, 0.2);
        for &b in &[0.5, 2.0] {
            let v = ValueFunction::new(&sf, b).unwrap();
            assert!(v.second_derivative_jump().abs() < 1e-8);
            assert_eq!(v.second_derivative_jump_formula(), 0.0);
        }
    }

    #[test]
    fn derivative_argument_checks() {
        let sf = scales(1.5, 0.2);
        let v = ValueFunction::new(&sf, 2.0).unwrap();
        assert!(v.derivative(1.0, 4).is_err());
        assert!(v.derivative(-1.0, 1).is_err());
        assert!(ValueFunction::new(&sf, -0.1).is_err());
    }

    #[test]
    fn classical_value_continuity_and_slope() {
        let sf = scales(1.5, 0.0);
        let sol = b_star(&sf).unwrap();
        let cv = ClassicalValue::new(&sf, sol.b_bar).unwrap();
        let below = sf.q_basis.w(sol.b_bar, 0) / sf.q_basis.w(sol.b_bar, 1);
        assert!((cv.value(sol.b_bar) - below).abs() < 1e-12);
        assert!((cv.value(0.0) - 2.645845814225224).abs() < 1e-9);
        let d = cv.value(20.0) - 20.0;
        assert!((cv.value(30.0) - 30.0 - d).abs() < 1e-12);
    }

    #[test]
    fn classical_value_with_zero_barrier() {
        let sf = scales(0.0, 0.2);
        let cv = ClassicalValue::new(&sf, 0.0).unwrap();
        assert!((cv.value(1.5) - 1.5).abs() < 1e-12);
        let sf = scales(0.1, 0.0);
        let cv = ClassicalValue::new(&sf, 0.0).unwrap();
        let v0 = sf.q_basis.w0 / sf.q_basis.w0_prime;
        assert!((cv.value(2.0) - (v0 + 2.0)).abs() < 1e-12);
    }
}
