//! Closed-form scale functions for the hyperexponential model.
//!
//! Because ψ is rational, `1/(ψ(θ) − p)` is a proper rational function whose
//! poles are the real roots θ_i of `ψ(θ) = p`. Partial fractions give
//!
//! ```text
//! W^{(p)}(x) = Σ_i a_i e^{θ_i x},   a_i = 1/ψ′(θ_i),   x ≥ 0,
//! ```
//!
//! and `W^{(p)}(x) = 0` for `x < 0`. All roots are real and simple: one lies in
//! each gap between consecutive poles `−λ_i`, one in `(−min λ_i, 0)`, one is
//! `Φ(p) > 0`, and a Gaussian component adds one more below `−max λ_i`.

use serde::Serialize;

use crate::error::{PdkError, Result};
use crate::expsum::{ExpTerm, PiecewiseExp, Segment};
use crate::levy::{LevyModel, ProblemSpec, VariationClass};
use crate::roots::newton_bisect;

const ROOT_REL_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 500;
const DEGENERATE_GAP: f64 = 1e-9;

/// Exponential-sum representation of `W^{(p)}` for one rate `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleBasis {
    pub rate_p: f64,
    /// Roots of `ψ(θ) = p` in decreasing order; `roots[0] = Φ(p)`.
    pub roots: Vec<f64>,
    /// `coeffs[i] = 1/ψ′(roots[i])`.
    pub coeffs: Vec<f64>,
    /// `W^{(p)}(0)`.
    pub w0: f64,
    /// `W^{(p)′}(0+)`; never infinite for finitely many jumps.
    pub w0_prime: f64,
    /// `W^{(p)″}(0+)`.
    pub w0_second: f64,
}

/// Φ(p), the unique positive root of `ψ(θ) = p`.
pub fn phi(model: &LevyModel, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(PdkError::domain(format!("phi requires p > 0, got {p}")));
    }
    positive_root(model, p)
}

fn positive_root(model: &LevyModel, p: f64) -> Result<f64> {
    let mut up = 1.0;
    let mut grow = 0;
    while model.psi(up) <= p {
        up *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(PdkError::numerical(format!(
                "cannot bracket the positive root of psi = {p}"
            )));
        }
    }
    newton_bisect(
        |t| (model.psi(t) - p, model.psi_prime(t)),
        0.0,
        up,
        false,
        ROOT_REL_TOL,
        ROOT_MAX_ITER,
    )
}

/// Builds the basis of `W^{(p)}`.
pub fn build_basis(model: &LevyModel, p: f64) -> Result<ScaleBasis> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(PdkError::domain(format!("scale basis requires p > 0, got {p}")));
    }
    let mut poles: Vec<f64> = model.jump_terms().iter().map(|t| -t.lambda).collect();
    poles.sort_by(|a, b| b.total_cmp(a)); // −λ_(1) > −λ_(2) > …

    let f = |t: f64| (model.psi(t) - p, model.psi_prime(t));
    let mut roots = vec![positive_root(model, p)?];

    // ψ → +∞ just right of every pole and ψ(0) − p < 0.
    let mut hi = 0.0;
    for &pole in &poles {
        roots.push(newton_bisect(f, pole, hi, true, ROOT_REL_TOL, ROOT_MAX_ITER)?);
        hi = pole;
    }
    if model.sigma() > 0.0 {
        // ψ → +∞ as θ → −∞; left of the last pole (or of 0) ψ − p < 0.
        let mut step = 1.0;
        let mut lo = hi - step;
        while model.psi(lo) - p <= 0.0 {
            step *= 2.0;
            lo = hi - step;
            if step > 1e300 {
                return Err(PdkError::numerical("cannot bracket the Gaussian root"));
            }
        }
        roots.push(newton_bisect(f, lo, hi, true, ROOT_REL_TOL, ROOT_MAX_ITER)?);
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    for w in roots.windows(2) {
        let scale = w[0].abs().max(w[1].abs()).max(1.0);
        if (w[0] - w[1]).abs() < DEGENERATE_GAP * scale {
            return Err(PdkError::numerical(format!(
                "near-degenerate roots {} and {} of psi = {p}",
                w[0], w[1]
            )));
        }
    }
    let coeffs = roots.iter().map(|&t| 1.0 / model.psi_prime(t)).collect();

    // read off the expansion of 1/(ψ(θ) − p) in powers of 1/θ
    let (w0, w0_prime, w0_second) = match model.variation_class() {
        VariationClass::Unbounded => {
            let s2 = model.sigma() * model.sigma();
            (0.0, 2.0 / s2, -4.0 * model.drift() / (s2 * s2))
        }
        VariationClass::Bounded => {
            let c = model.drift();
            let a = (p + model.total_jump_rate()) / c;
            let kl: f64 = model.jump_terms().iter().map(|t| t.rate * t.lambda).sum();
            (1.0 / c, a / c, (a * a - kl / c) / c)
        }
    };
    Ok(ScaleBasis {
        rate_p: p,
        roots,
        coeffs,
        w0,
        w0_prime,
        w0_second,
    })
}

/// (e^z − 1 − z) without cancellation for small |z|.
fn exp_m1_minus_z(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        z2 * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0))))
    } else {
        z.exp_m1() - z
    }
}

/// `W̄`, `W̿`, `Z`, `Z̄` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Antiderivatives {
    pub wbar: f64,
    pub wbarbar: f64,
    pub z: f64,
    pub zbar: f64,
}

impl ScaleBasis {
    /// Φ(p).
    pub fn phi(&self) -> f64 {
        self.roots[0]
    }

    /// Φ′(p) = 1/ψ′(Φ(p)).
    pub fn phi_prime(&self) -> f64 {
        self.coeffs[0]
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coeffs.iter().copied().zip(self.roots.iter().copied())
    }

    /// `W^{(p)}` and its first three derivatives. Zero on `x < 0`; right
    /// limits at `x = 0`.
    pub fn w(&self, x: f64, order: u32) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let lead = self.phi();
        let s: f64 = self
            .terms()
            .map(|(a, t)| a * t.powi(order as i32) * ((t - lead) * x).exp())
            .sum();
        s * (lead * x).exp()
    }

    /// `e^{−damp·x} W^{(p)(order)}(x)` for `x ≥ 0`.
    pub fn w_damped(&self, x: f64, order: u32, damp: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.terms()
            .map(|(a, t)| a * t.powi(order as i32) * ((t - damp) * x).exp())
            .sum()
    }

    pub fn wbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.terms().map(|(a, t)| a * (t * x).exp_m1() / t).sum()
    }

    pub fn wbarbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.terms().map(|(a, t)| a * exp_m1_minus_z(t * x) / (t * t)).sum()
    }

    pub fn z(&self, x: f64) -> f64 {
        1.0 + self.rate_p * self.wbar(x)
    }

    pub fn zbar(&self, x: f64) -> f64 {
        x + self.rate_p * self.wbarbar(x)
    }

    pub fn antiderivatives(&self, x: f64) -> Antiderivatives {
        Antiderivatives {
            wbar: self.wbar(x),
            wbarbar: self.wbarbar(x),
            z: self.z(x),
            zbar: self.zbar(x),
        }
    }

    /// `W^{(p)}` as a piecewise exponential sum.
    pub fn w_fn(&self) -> PiecewiseExp {
        let terms = self.terms().map(|(a, t)| ExpTerm { coef: a, rate: t }).collect();
        PiecewiseExp::new(vec![
            Segment::zero(f64::NEG_INFINITY, 0.0),
            Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                anchor: 0.0,
                terms,
                c0: 0.0,
                c1: 0.0,
            },
        ])
    }

    pub fn wbar_fn(&self) -> PiecewiseExp {
        let terms = self.terms().map(|(a, t)| ExpTerm { coef: a / t, rate: t }).collect();
        let c0 = -self.terms().map(|(a, t)| a / t).sum::<f64>();
        PiecewiseExp::new(vec![
            Segment::zero(f64::NEG_INFINITY, 0.0),
            Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                anchor: 0.0,
                terms,
                c0,
                c1: 0.0,
            },
        ])
    }

    pub fn wbarbar_fn(&self) -> PiecewiseExp {
        let terms = self
            .terms()
            .map(|(a, t)| ExpTerm {
                coef: a / (t * t),
                rate: t,
            })
            .collect();
        let c0 = -self.terms().map(|(a, t)| a / (t * t)).sum::<f64>();
        let c1 = -self.terms().map(|(a, t)| a / t).sum::<f64>();
        PiecewiseExp::new(vec![
            Segment::zero(f64::NEG_INFINITY, 0.0),
            Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                anchor: 0.0,
                terms,
                c0,
                c1,
            },
        ])
    }

    pub fn z_fn(&self) -> PiecewiseExp {
        let p = self.rate_p;
        let terms = self
            .terms()
            .map(|(a, t)| ExpTerm {
                coef: p * a / t,
                rate: t,
            })
            .collect();
        let c0 = 1.0 - p * self.terms().map(|(a, t)| a / t).sum::<f64>();
        PiecewiseExp::new(vec![
            Segment::affine(f64::NEG_INFINITY, 0.0, 0.0, 1.0, 0.0),
            Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                anchor: 0.0,
                terms,
                c0,
                c1: 0.0,
            },
        ])
    }

    /// `∫₀^∞ e^{−θx} W^{(p)}(x) dx = Σ a_i / (θ − θ_i)` for `θ > Φ(p)`.
    pub fn laplace_transform(&self, theta: f64) -> Result<f64> {
        if !(theta > self.phi()) {
            return Err(PdkError::domain(format!(
                "Laplace transform needs theta > Phi(p) = {}, got {theta}",
                self.phi()
            )));
        }
        Ok(self.terms().map(|(a, t)| a / (theta - t)).sum())
    }

    /// `∫₀^x W_self(u) W_other(x − u) du` in closed form.
    pub fn convolve(&self, other: &ScaleBasis, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (a, s) in self.terms() {
            for (b, t) in other.terms() {
                let d = s - t;
                // (e^{sx} − e^{tx}) / (s − t), stable as s → t
                let term = if d == 0.0 {
                    x * (s * x).exp()
                } else if d > 0.0 {
                    -(s * x).exp() * (-d * x).exp_m1() / d
                } else {
                    (t * x).exp() * (d * x).exp_m1() / d
                };
                total += a * b * term;
            }
        }
        total
    }
}

/// Scale functions at the two rates a periodic dividend problem needs.
#[derive(Debug, Clone)]
pub struct ScaleFunctions {
    pub spec: ProblemSpec,
    /// Basis of `W^{(q)}`.
    pub q_basis: ScaleBasis,
    /// Basis of `W^{(q+r)}`.
    pub qr_basis: ScaleBasis,
}

impl ScaleFunctions {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let q_basis = build_basis(&spec.model, spec.q())?;
        let qr_basis = build_basis(&spec.model, spec.q() + spec.r())?;
        Ok(ScaleFunctions {
            spec: spec.clone(),
            q_basis,
            qr_basis,
        })
    }

    pub fn phi_q(&self) -> f64 {
        self.q_basis.phi()
    }

    pub fn phi_qr(&self) -> f64 {
        self.qr_basis.phi()
    }

    /// `Z^{(q)}(x, Φ(q+r))` and its derivative in `x`.
    ///
    /// For `x ≥ 0` this is `Σ_i r a_i e^{θ_i x}/(Φ(q+r) − θ_i)` over the
    /// `q`-basis; for `x < 0` it reduces to `e^{Φ(q+r) x}`.
    pub fn z_phi(&self, x: f64) -> (f64, f64) {
        let big = self.phi_qr();
        if x < 0.0 {
            let e = (big * x).exp();
            return (e, big * e);
        }
        let r = self.spec.r();
        let mut value = 0.0;
        let mut deriv = 0.0;
        for (&a, &t) in self.q_basis.coeffs.iter().zip(&self.q_basis.roots) {
            let w = r * a * (t * x).exp() / (big - t);
            value += w;
            deriv += w * t;
        }
        (value, deriv)
    }

    /// `e^{−Φ(q+r) x} Z^{(q)′}(x, Φ(q+r))` for `x ≥ 0`, without overflow.
    pub fn z_phi_prime_damped(&self, x: f64) -> f64 {
        let big = self.phi_qr();
        let r = self.spec.r();
        self.q_basis
            .coeffs
            .iter()
            .zip(&self.q_basis.roots)
            .map(|(&a, &t)| r * a * t * ((t - big) * x).exp() / (big - t))
            .sum()
    }

    /// Discounted two-sided exit transforms from `[0, b]` started at `x`:
    /// `(E_x[e^{−qτ_b⁺}; τ_b⁺ < τ_0⁻], E_x[e^{−qτ_0⁻}; τ_0⁻ < τ_b⁺])`.
    pub fn two_sided_exit(&self, x: f64, b: f64) -> Result<(f64, f64)> {
        if !(b > 0.0) {
            return Err(PdkError::domain(format!("upper level must be positive, got {b}")));
        }
        if !(0.0..=b).contains(&x) {
            return Err(PdkError::domain(format!("start {x} outside [0, {b}]")));
        }
        let w = &self.q_basis;
        let ratio = w.w(x, 0) / w.w(b, 0);
        let down = w.z(x) - w.z(b) * ratio;
        Ok((ratio, down))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::JumpTerm;

    fn case1p() -> LevyModel {
        LevyModel::single_exponential(1.5, 0.0, 1.0, 1.0).unwrap()
    }

    fn case1() -> LevyModel {
        LevyModel::single_exponential(1.5, 0.2, 1.0, 1.0).unwrap()
    }

    // Positive root of 1.5θ² + (0.5 − p)θ − p = 0 (Case 1′ with κ = λ = 1).
    fn quadratic_roots(p: f64) -> (f64, f64) {
        let (a, b, c) = (1.5, 0.5 - p, -p);
        let d = (b * b - 4.0 * a * c).sqrt();
        ((-b + d) / (2.0 * a), (-b - d) / (2.0 * a))
    }

    #[test]
    fn phi_matches_quadratic_formula() {
        for &p in &[0.05, 0.55, 2.0] {
            let (pos, _) = quadratic_roots(p);
            let got = phi(&case1p(), p).unwrap();
            assert!((got - pos).abs() < 1e-12, "p={p}: {got} vs {pos}");
        }
        assert!((phi(&case1p(), 0.05).unwrap() - 0.0862907813126304).abs() < 1e-13);
        assert!((phi(&case1p(), 0.55).unwrap() - 0.6224260615128749).abs() < 1e-13);
    }

    #[test]
    fn laplace_transform_by_quadrature() {
        for model in [case1(), case1p()] {
            let b = build_basis(&model, 0.05).unwrap();
            for k in [0.5, 1.0, 2.0, 5.0, 10.0] {
                let theta = b.phi() + k;
                let upper = 60.0 / k;
                let numeric = crate::quad::integrate(|x| (-theta * x).exp() * b.w(x, 0), 0.0, upper, 1e-14);
                let exact = 1.0 / (model.psi(theta) - 0.05);
                assert!((numeric - exact).abs() <= 1e-9 * exact.abs());
                assert!((b.laplace_transform(theta).unwrap() - exact).abs() <= 1e-12 * exact.abs());
            }
            assert!(b.laplace_transform(b.phi()).is_err());
        }
    }

    #[test]
    fn resolvent_convolution_identity() {
        for model in [case1(), case1p()] {
            let wq = build_basis(&model, 0.05).unwrap();
            let wqr = build_basis(&model, 0.55).unwrap();
            for x in [0.5, 1.0, 2.0, 5.0] {
                let lhs = wqr.w(x, 0) - wq.w(x, 0);
                let rhs = 0.5 * wqr.convolve(&wq, x);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs(), "{x}: {lhs} vs {rhs}");
                let numeric = crate::quad::integrate(|u| wqr.w(u, 0) * wq.w(x - u, 0), 0.0, x, 1e-14);
                assert!((numeric - wqr.convolve(&wq, x)).abs() <= 1e-10 * numeric.abs());
            }
        }
    }

    #[test]
    fn phi_rejects_nonpositive_rate() {
        assert!(matches!(phi(&case1p(), 0.0), Err(PdkError::Domain(_))));
        assert!(build_basis(&case1p(), -1.0).is_err());
    }

    #[test]
    fn case1p_basis_matches_symbolic_coefficients() {
        let b = build_basis(&case1p(), 0.05).unwrap();
        let (pos, neg) = quadratic_roots(0.05);
        assert_eq!(b.roots.len(), 2);
        assert!((b.roots[0] - pos).abs() < 1e-13);
        assert!((b.roots[1] - neg).abs() < 1e-13);
        assert!((b.coeffs[0] - 1.5324208802929504).abs() < 1e-12);
        assert!((b.coeffs[1] + 0.8657542136262837).abs() < 1e-12);
        let sum: f64 = b.coeffs.iter().sum();
        assert!((sum - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn root_counts_by_variation() {
        let three = LevyModel::new(
            0.9,
            0.0,
            vec![
                JumpTerm::new(0.3, 0.5),
                JumpTerm::new(0.4, 2.0),
                JumpTerm::new(0.2, 7.0),
            ],
        )
        .unwrap();
        assert_eq!(build_basis(&three, 0.1).unwrap().roots.len(), 4);
        assert_eq!(
            build_basis(&three.with_sigma(0.3).unwrap(), 0.1).unwrap().roots.len(),
            5
        );
        assert_eq!(build_basis(&case1(), 0.05).unwrap().roots.len(), 3);
    }

    #[test]
    fn unbounded_variation_starts_at_zero() {
        let b = build_basis(&case1(), 0.05).unwrap();
        let sum: f64 = b.coeffs.iter().sum();
        assert!(sum.abs() < 1e-10);
        let slope: f64 = b.coeffs.iter().zip(&b.roots).map(|(a, t)| a * t).sum();
        assert!((slope - 2.0 / 0.04).abs() < 1e-8 * 50.0);
    }

    #[test]
    fn w_boundary_values() {
        let b = build_basis(&case1p(), 0.05).unwrap();
        assert_eq!(b.w(-1.0, 0), 0.0);
        assert!((b.w(0.0, 1) - 1.05 / 2.25).abs() < 1e-12);
        assert!((b.w0_prime - 1.05 / 2.25).abs() < 1e-15);
        for model in [case1(), case1p()] {
            let b = build_basis(&model, 0.05).unwrap();
            let sum: f64 = b.coeffs.iter().zip(&b.roots).map(|(a, t)| a * t * t).sum();
            assert!(
                (sum - b.w0_second).abs() < 1e-8 * (1.0 + sum.abs()),
                "{sum} {}",
                b.w0_second
            );
        }
    }

    #[test]
    fn scaled_w_increases_to_phi_prime() {
        let b = build_basis(&case1p(), 0.05).unwrap();
        let mut prev = 0.0;
        for k in 0..60 {
            let x = 0.5 * k as f64;
            let v = b.w_damped(x, 0, b.phi());
            assert!(v >= prev);
            prev = v;
        }
        assert!((prev - 1.5324208802929504).abs() < 1e-4);
        assert!(prev <= b.phi_prime());
    }

    #[test]
    fn antiderivative_conventions_below_zero() {
        let b = build_basis(&case1p(), 0.05).unwrap();
        let a = b.antiderivatives(-2.0);
        assert_eq!((a.wbar, a.wbarbar, a.z, a.zbar), (0.0, 0.0, 1.0, -2.0));
        let a = b.antiderivatives(0.0);
        assert_eq!((a.wbar, a.wbarbar, a.z, a.zbar), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn piecewise_forms_agree_with_direct_evaluation() {
        let b = build_basis(&case1(), 0.55).unwrap();
        for &x in &[-1.0, 0.0, 0.3, 2.0, 7.5] {
            assert!((b.w_fn().eval(x) - b.w(x, 0)).abs() < 1e-12 * (1.0 + b.w(x, 0)));
            assert!((b.wbar_fn().eval(x) - b.wbar(x)).abs() < 1e-11 * (1.0 + b.wbar(x)));
            assert!((b.wbarbar_fn().eval(x) - b.wbarbar(x)).abs() < 1e-11 * (1.0 + b.wbarbar(x)));
            assert!((b.z_fn().eval(x) - b.z(x)).abs() < 1e-11 * b.z(x));
        }
    }

    #[test]
    fn z_phi_at_zero_is_one() {
        for model in [case1p(), case1()] {
            let spec = ProblemSpec::new(model, 0.05, 0.5).unwrap();
            let sf = ScaleFunctions::new(&spec).unwrap();
            let (v, d) = sf.z_phi(0.0);
            assert!((v - 1.0).abs() < 1e-12);
            let w0 = sf.q_basis.w0;
            assert!((d - (sf.phi_qr() - 0.5 * w0)).abs() < 1e-11);
        }
    }

    #[test]
    fn two_sided_exit_edges() {
        let spec = ProblemSpec::new(case1(), 0.05, 0.5).unwrap();
        let sf = ScaleFunctions::new(&spec).unwrap();
        let (up, down) = sf.two_sided_exit(2.0, 2.0).unwrap();
        assert!((up - 1.0).abs() < 1e-14 && down.abs() < 1e-12);
        let (up, down) = sf.two_sided_exit(0.0, 2.0).unwrap();
        assert!(up.abs() < 1e-12 && (down - 1.0).abs() < 1e-12);
        assert!(sf.two_sided_exit(1.0, 0.0).is_err());
        assert!(sf.two_sided_exit(3.0, 2.0).is_err());
    }
}
