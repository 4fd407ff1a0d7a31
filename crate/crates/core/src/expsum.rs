//! Piecewise exponential sums with an affine remainder.
//!
//! Every function the solver manipulates (scale functions, their
//! antiderivatives, `Z^{(q)}`, the barrier value functions) is, on each piece
//! of a finite partition of the real line, of the form
//!
//! ```text
//! f(x) = Σ_k a_k e^{ρ_k (x − s)} + c₀ + c₁ (x − s)
//! ```
//!
//! with a per-piece anchor `s`. Derivatives and the jump-part expectations
//! `∫₀^∞ f(x − u) λ e^{−λu} du` have closed forms on this class, so the
//! generator of the risk process can be applied exactly.

/// A single term `coef · e^{rate · (x − anchor)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coef: f64,
    pub rate: f64,
}

/// One piece `[lo, hi)` of a piecewise function.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub anchor: f64,
    pub terms: Vec<ExpTerm>,
    pub c0: f64,
    pub c1: f64,
}

impl Segment {
    pub fn zero(lo: f64, hi: f64) -> Self {
        Self::affine(lo, hi, 0.0, 0.0, 0.0)
    }

    pub fn affine(lo: f64, hi: f64, anchor: f64, c0: f64, c1: f64) -> Self {
        Segment {
            lo,
            hi,
            anchor,
            terms: Vec::new(),
            c0,
            c1,
        }
    }

    /// `order`-th derivative at `x`, ignoring the segment bounds.
    pub fn eval(&self, x: f64, order: u32) -> f64 {
        let t = x - self.anchor;
        let affine = match order {
            0 => self.c0 + self.c1 * t,
            1 => self.c1,
            _ => 0.0,
        };
        affine + self.exp_part(t, order)
    }

    /// Σ coef·rate^order·e^{rate t}, summed relative to the largest term in
    /// log space so that huge exponents with tiny coefficients stay finite.
    fn exp_part(&self, t: f64, order: u32) -> f64 {
        let logs = self.terms.iter().map(|e| {
            let c = e.coef * e.rate.powi(order as i32);
            (c.signum(), c.abs().ln() + e.rate * t)
        });
        let top = logs.clone().map(|(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let s: f64 = logs.map(|(sg, l)| sg * (l - top).exp()).sum();
        s * top.exp()
    }

    /// `e^{−damp·x} f^{(order)}(x)` with the damping folded into each exponent.
    pub fn eval_damped(&self, x: f64, order: u32, damp: f64) -> f64 {
        let t = x - self.anchor;
        let affine = match order {
            0 => self.c0 + self.c1 * t,
            1 => self.c1,
            _ => 0.0,
        };
        let exps: f64 = self
            .terms
            .iter()
            .map(|e| e.coef * e.rate.powi(order as i32) * (e.rate * t - damp * x).exp())
            .sum();
        exps + affine * (-damp * x).exp()
    }

    /// `∫ f(x − u) λ e^{−λu} du` over the `u` for which `x − u` lies in this
    /// segment.
    fn jump_integral(&self, x: f64, lambda: f64) -> f64 {
        let u1 = (x - self.hi).max(0.0);
        let u2 = x - self.lo;
        if !(u2 > u1) {
            return 0.0;
        }
        let mut total = 0.0;
        let e1 = (-lambda * u1).exp();
        let e2 = if u2.is_finite() { (-lambda * u2).exp() } else { 0.0 };
        if self.c0 != 0.0 || self.c1 != 0.0 {
            let m = self.c0 + self.c1 * (x - self.anchor);
            let mut part = m * (e1 - e2);
            if self.c1 != 0.0 {
                let tail = if u2.is_finite() { (u2 + 1.0 / lambda) * e2 } else { 0.0 };
                part -= self.c1 * ((u1 + 1.0 / lambda) * e1 - tail);
            }
            total += part;
        }
        for e in &self.terms {
            let k = lambda + e.rate;
            // integrand value at the end where it is largest, times
            // ∫ e^{−|k| s} ds over the span measured from that end
            let integrand_at = |u: f64| e.coef * lambda * (e.rate * (x - u - self.anchor) - lambda * u).exp();
            let part = if k >= 0.0 {
                let shape = if u2.is_finite() {
                    let span = u2 - u1;
                    if k == 0.0 {
                        span
                    } else {
                        -(-k * span).exp_m1() / k
                    }
                } else {
                    assert!(k > 0.0, "divergent jump integral: rate {} lambda {lambda}", e.rate);
                    1.0 / k
                };
                integrand_at(u1) * shape
            } else {
                assert!(
                    u2.is_finite(),
                    "divergent jump integral: rate {} lambda {lambda}",
                    e.rate
                );
                integrand_at(u2) * (k * (u2 - u1)).exp_m1() / k
            };
            total += part;
        }
        total
    }
}

/// A function on ℝ made of contiguous [`Segment`]s covering `(−∞, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExp {
    segments: Vec<Segment>,
}

impl PiecewiseExp {
    /// Segments must be sorted, contiguous, start at −∞ and end at +∞.
    pub fn new(segments: Vec<Segment>) -> Self {
        assert!(!segments.is_empty());
        assert_eq!(segments[0].lo, f64::NEG_INFINITY);
        assert_eq!(segments[segments.len() - 1].hi, f64::INFINITY);
        for w in segments.windows(2) {
            assert_eq!(w[0].hi, w[1].lo, "segments must be contiguous");
        }
        PiecewiseExp { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Interior breakpoints of the partition.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[1..].iter().map(|s| s.lo).collect()
    }

    fn segment_right(&self, x: f64) -> &Segment {
        self.segments
            .iter()
            .find(|s| x >= s.lo && x < s.hi)
            .unwrap_or(&self.segments[self.segments.len() - 1])
    }

    fn segment_left(&self, x: f64) -> &Segment {
        self.segments
            .iter()
            .find(|s| x > s.lo && x <= s.hi)
            .unwrap_or(&self.segments[0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segment_right(x).eval(x, 0)
    }

    /// Right derivative of the given order (the plain derivative away from
    /// breakpoints).
    pub fn derivative(&self, x: f64, order: u32) -> f64 {
        self.segment_right(x).eval(x, order)
    }

    /// Left derivative of the given order.
    pub fn derivative_left(&self, x: f64, order: u32) -> f64 {
        self.segment_left(x).eval(x, order)
    }

    pub fn eval_damped(&self, x: f64, order: u32, damp: f64) -> f64 {
        self.segment_right(x).eval_damped(x, order, damp)
    }

    /// `E f(x − J) = ∫₀^∞ f(x − u) λ e^{−λu} du` for an Exp(λ) jump `J`.
    pub fn jump_expectation(&self, x: f64, lambda: f64) -> f64 {
        self.segments.iter().map(|s| s.jump_integral(x, lambda)).sum()
    }
}
