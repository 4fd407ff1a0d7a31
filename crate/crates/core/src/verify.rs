//! Numerical certification of optimality.
//!
//! The generator of the risk process, for integrable jumps, is
//!
//! ```text
//! ℒf(x) = c f′(x) + (σ²/2) f″(x) + Σ_i κ_i ( E f(x − J_i) − f(x) ),   J_i ~ Exp(λ_i).
//! ```
//!
//! A barrier strategy is certified when its value `v` satisfies the HJB
//! inequality `(ℒ − q)v(x) + r max_{0≤l≤x} {l + v(x−l) − v(x)} ≤ 0` on the grid,
//! together with the slope and smoothness conditions that the verification
//! argument needs.

use serde::Serialize;
use serde_json::json;

use crate::barrier::BarrierSolution;
use crate::error::{PdkError, Result};
use crate::expsum::PiecewiseExp;
use crate::levy::{LevyModel, VariationClass};
use crate::quad::integrate_split;
use crate::scale::ScaleFunctions;
use crate::value::{ClassicalValue, ValueFunction};

pub const GENERATOR_TOL: f64 = 1e-6;
pub const HJB_TOL: f64 = 1e-6;
pub const ARGMAX_TOL: f64 = 1e-4;
pub const SLOPE_TOL: f64 = 1e-8;
pub const IMPROVEMENT_TOL: f64 = 1e-8;
pub const C2_JUMP_TOL: f64 = 1e-8;
pub const C3_JUMP_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-7;
const DEFAULT_QUAD_TOL: f64 = 1e-12;

/// A function on ℝ that the generator can be applied to.
pub trait Evaluable {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64, order: u32) -> f64;
    /// Points where `f` or a low derivative may be discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Exact representation, when one exists.
    fn as_piecewise(&self) -> Option<&PiecewiseExp> {
        None
    }
}

impl Evaluable for PiecewiseExp {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn derivative(&self, x: f64, order: u32) -> f64 {
        PiecewiseExp::derivative(self, x, order)
    }
    fn breakpoints(&self) -> Vec<f64> {
        PiecewiseExp::breakpoints(self)
    }
    fn as_piecewise(&self) -> Option<&PiecewiseExp> {
        Some(self)
    }
}

impl Evaluable for ValueFunction {
    fn value(&self, x: f64) -> f64 {
        ValueFunction::value(self, x)
    }
    fn derivative(&self, x: f64, order: u32) -> f64 {
        self.as_piecewise().derivative(x, order)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.as_piecewise().breakpoints()
    }
    fn as_piecewise(&self) -> Option<&PiecewiseExp> {
        Some(ValueFunction::as_piecewise(self))
    }
}

impl Evaluable for ClassicalValue {
    fn value(&self, x: f64) -> f64 {
        ClassicalValue::value(self, x)
    }
    fn derivative(&self, x: f64, order: u32) -> f64 {
        self.as_piecewise().derivative(x, order)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.as_piecewise().breakpoints()
    }
    fn as_piecewise(&self) -> Option<&PiecewiseExp> {
        Some(ClassicalValue::as_piecewise(self))
    }
}

/// Wraps closures for value and derivatives; the generator then falls back
/// to quadrature for the jump part.
pub struct FnEvaluable<F, D>
where
    F: Fn(f64) -> f64,
    D: Fn(f64, u32) -> f64,
{
    pub f: F,
    pub df: D,
    pub breaks: Vec<f64>,
}

impl<F, D> Evaluable for FnEvaluable<F, D>
where
    F: Fn(f64) -> f64,
    D: Fn(f64, u32) -> f64,
{
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn derivative(&self, x: f64, order: u32) -> f64 {
        (self.df)(x, order)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// `(ℒ − q) f(x)` for `x > 0`, exact for piecewise exponential sums and by
/// quadrature otherwise.
pub fn generator_apply(model: &LevyModel, q: f64, f: &dyn Evaluable, x: f64) -> Result<f64> {
    generator_with_scale(model, q, f, x).map(|(g, _)| g)
}

/// `(ℒ − q) f(x)` together with the summed magnitude of the terms it is made
/// of, the natural scale for judging cancellation error.
pub fn generator_with_scale(model: &LevyModel, q: f64, f: &dyn Evaluable, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(PdkError::domain(format!("generator needs x > 0, got {x}")));
    }
    match f.as_piecewise() {
        Some(pw) => {
            let expectations: Vec<f64> = model
                .jump_terms()
                .iter()
                .map(|t| pw.jump_expectation(x, t.lambda))
                .collect();
            Ok(assemble(model, q, f, x, &expectations))
        }
        None => {
            let g = generator_apply_quadrature(model, q, f, x, DEFAULT_QUAD_TOL)?;
            Ok((g, g.abs()))
        }
    }
}

fn assemble(model: &LevyModel, q: f64, f: &dyn Evaluable, x: f64, expectations: &[f64]) -> (f64, f64) {
    let fx = f.value(x);
    let mut parts = vec![model.drift() * f.derivative(x, 1), -q * fx];
    if model.variation_class() == VariationClass::Unbounded {
        parts.push(0.5 * model.sigma() * model.sigma() * f.derivative(x, 2));
    }
    for (t, e) in model.jump_terms().iter().zip(expectations) {
        parts.push(t.rate * e);
        parts.push(-t.rate * fx);
    }
    (parts.iter().sum(), parts.iter().map(|p| p.abs()).sum())
}

/// `(ℒ − q) f(x)` with the jump expectations computed by adaptive quadrature
/// to absolute tolerance `tol`, whatever the representation of `f`.
pub fn generator_apply_quadrature(model: &LevyModel, q: f64, f: &dyn Evaluable, x: f64, tol: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(PdkError::domain(format!("generator needs x > 0, got {x}")));
    }
    let mut expectations = Vec::with_capacity(model.jump_terms().len());
    for term in model.jump_terms() {
        let lambda = term.lambda;
        // E f(x − J) = ∫₀¹ f(x + ln(t)/λ) dt with t = e^{−λu}
        let breaks: Vec<f64> = f
            .breakpoints()
            .into_iter()
            .filter(|&y| y < x)
            .map(|y| (-lambda * (x - y)).exp())
            .collect();
        let integrand = |t: f64| f.value(x + t.ln() / lambda);
        let e = integrate_split(integrand, 0.0, 1.0, &breaks, tol);
        if !e.is_finite() {
            return Err(PdkError::domain(
                "function is not evaluable on the whole jump range".to_string(),
            ));
        }
        expectations.push(e);
    }
    let (out, _) = assemble(model, q, f, x, &expectations);
    if !out.is_finite() {
        return Err(PdkError::domain(format!("generator not finite at x = {x}")));
    }
    Ok(out)
}

/// Maximal residual of each generator identity on a grid, relative to
/// `1 +` the summed magnitude of the terms involved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub grid: Vec<f64>,
    /// `(ℒ − q) W^{(q)} = 0`
    pub w_q: f64,
    /// `(ℒ − q) Z^{(q)} = 0`
    pub z_q: f64,
    /// `(ℒ − q) W^{(q+r)} = r W^{(q+r)}`
    pub w_qr: f64,
    /// `(ℒ − q) W̄^{(q+r)} = 1 + r W̄^{(q+r)}`
    pub wbar_qr: f64,
    /// `(ℒ − q) W̿^{(q+r)}(y) = y + r W̿^{(q+r)}(y)`
    pub wbarbar_qr: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [self.w_q, self.z_q, self.w_qr, self.wbar_qr, self.wbarbar_qr]
            .into_iter()
            .fold(0.0, nan_max)
    }
}

/// `max` that lets a NaN through instead of discarding it.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

pub const IDENTITY_GRID: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Checks the harmonic identities of the scale functions on `grid`.
pub fn generator_identity_suite(sf: &ScaleFunctions, grid: &[f64]) -> Result<IdentityResiduals> {
    if let Some(&y) = grid.iter().find(|&&y| !(y > 0.0)) {
        return Err(PdkError::domain(format!("identities hold for y > 0 only, got {y}")));
    }
    let model = &sf.spec.model;
    let q = sf.spec.q();
    let r = sf.spec.r();
    let w_q = sf.q_basis.w_fn();
    let z_q = sf.q_basis.z_fn();
    let w_qr = sf.qr_basis.w_fn();
    let wbar_qr = sf.qr_basis.wbar_fn();
    let wbarbar_qr = sf.qr_basis.wbarbar_fn();
    let mut out = IdentityResiduals {
        grid: grid.to_vec(),
        w_q: 0.0,
        z_q: 0.0,
        w_qr: 0.0,
        wbar_qr: 0.0,
        wbarbar_qr: 0.0,
    };
    for &y in grid {
        let res = |f: &PiecewiseExp, rhs: f64| -> Result<f64> {
            let (g, scale) = generator_with_scale(model, q, f, y)?;
            Ok((g - rhs).abs() / (1.0 + scale + rhs.abs()))
        };
        out.w_q = nan_max(out.w_q, res(&w_q, 0.0)?);
        out.z_q = nan_max(out.z_q, res(&z_q, 0.0)?);
        out.w_qr = nan_max(out.w_qr, res(&w_qr, r * w_qr.eval(y))?);
        out.wbar_qr = nan_max(out.wbar_qr, res(&wbar_qr, 1.0 + r * wbar_qr.eval(y))?);
        out.wbarbar_qr = nan_max(out.wbarbar_qr, res(&wbarbar_qr, y + r * wbarbar_qr.eval(y))?);
    }
    Ok(out)
}

/// Default verification grid: 64 log-spaced points on `(1e-3, 4 max(b̄, 1))`.
pub fn default_grid(b_bar: f64) -> Vec<f64> {
    log_grid(1e-3, 4.0 * b_bar.max(1.0), 64)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `max_{0≤l≤x} {l + v(x−l) − v(x)}` by a coarse scan refined with golden
/// section search. Returns `(maximum, argmax)`.
pub fn scan_improvement(v: &ValueFunction, x: f64) -> (f64, f64) {
    const COARSE: usize = 512;
    let vx = v.value(x);
    let g = |l: f64| l + v.value(x - l) - vx;
    let step = x / COARSE as f64;
    let (mut best_l, mut best) = (0.0, g(0.0));
    for k in 1..=COARSE {
        let l = if k == COARSE { x } else { step * k as f64 };
        let val = g(l);
        if val > best {
            best = val;
            best_l = l;
        }
    }
    let (mut a, mut b) = ((best_l - step).max(0.0), (best_l + step).min(x));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a) <= 1e-12 * x.max(1.0) {
            break;
        }
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    let gm = g(mid);
    if gm > best {
        (gm, mid)
    } else {
        (best, best_l)
    }
}

/// Per-grid-point diagnostics of the HJB check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCheck {
    pub x: f64,
    pub v: f64,
    pub slope: f64,
    pub generator: f64,
    pub generator_residual: f64,
    pub max_term: f64,
    pub scan_max: f64,
    pub scan_argmax: f64,
    pub expected_argmax: f64,
    pub hjb_slack: f64,
    pub slope_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub barrier: f64,
    pub grid: Vec<f64>,
    pub generator_residuals: Vec<f64>,
    pub hjb_slack: Vec<f64>,
    pub slope_violations: Vec<f64>,
    pub smoothness_jump: f64,
    pub max_argmax_error: f64,
    pub pass: bool,
    pub details: Vec<PointCheck>,
}

impl VerificationReport {
    pub fn max_generator_residual(&self) -> f64 {
        self.generator_residuals.iter().copied().fold(0.0, nan_max)
    }

    pub fn max_hjb_slack(&self) -> f64 {
        self.hjb_slack.iter().copied().fold(f64::NEG_INFINITY, nan_max)
    }

    /// The report in its wire format.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "pass": self.pass,
            "max_generator_residual": self.max_generator_residual(),
            "max_hjb_slack": self.max_hjb_slack(),
            "smoothness_jump": self.smoothness_jump,
            "grid": self.grid,
            "details": self.details,
        })
    }
}

/// Checks the HJB inequality, the slope conditions and smoothness at the
/// barrier `solution.b_star` on `grid`.
pub fn hjb_check(sf: &ScaleFunctions, solution: &BarrierSolution, grid: &[f64]) -> Result<VerificationReport> {
    let b = solution.b_star;
    let v = ValueFunction::new(sf, b)?;
    let model = &sf.spec.model;
    let q = sf.spec.q();
    let r = sf.spec.r();
    let vb = v.value(b);

    let mut details = Vec::with_capacity(grid.len());
    for &x in grid {
        let vx = v.value(x);
        let gen = generator_apply(model, q, &v, x)?;
        let slope = v.as_piecewise().derivative(x, 1);
        let (generator_residual, structural, expected_argmax, slope_ok) = if x <= b {
            (gen.abs() / (1.0 + vx.abs()), 0.0, 0.0, slope >= 1.0 - SLOPE_TOL)
        } else {
            let improvement = (x - b) + vb - vx;
            (
                (gen + r * improvement).abs(),
                improvement,
                x - b,
                (-SLOPE_TOL..=1.0 + SLOPE_TOL).contains(&slope),
            )
        };
        let (scan_max, scan_argmax) = scan_improvement(&v, x);
        let max_term = structural.max(scan_max);
        details.push(PointCheck {
            x,
            v: vx,
            slope,
            generator: gen,
            generator_residual,
            max_term,
            scan_max,
            scan_argmax,
            expected_argmax,
            hjb_slack: gen + r * max_term,
            slope_ok,
        });
    }

    let smoothness_jump = if b > 0.0 {
        let order = match model.variation_class() {
            VariationClass::Bounded => 2,
            VariationClass::Unbounded => 3,
        };
        let (l, rr) = v.derivative_one_sided(b, order);
        (rr - l).abs()
    } else {
        0.0
    };
    let jump_tol = match model.variation_class() {
        VariationClass::Bounded => C2_JUMP_TOL,
        VariationClass::Unbounded => C3_JUMP_TOL,
    };

    let generator_residuals: Vec<f64> = details.iter().map(|d| d.generator_residual).collect();
    let hjb_slack: Vec<f64> = details.iter().map(|d| d.hjb_slack).collect();
    let slope_violations: Vec<f64> = details.iter().filter(|d| !d.slope_ok).map(|d| d.x).collect();
    // argmax is only identifiable where the improvement is not flat
    let max_argmax_error = details
        .iter()
        .map(|d| {
            if (d.scan_max - d.max_term).abs() <= IMPROVEMENT_TOL {
                (d.scan_argmax - d.expected_argmax).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, nan_max);

    let pass = generator_residuals.iter().all(|&e| e <= GENERATOR_TOL)
        && hjb_slack.iter().all(|&s| s <= HJB_TOL)
        && details.iter().all(|d| d.scan_max <= d.max_term + IMPROVEMENT_TOL)
        && max_argmax_error <= ARGMAX_TOL
        && slope_violations.is_empty()
        && smoothness_jump <= jump_tol;

    Ok(VerificationReport {
        barrier: b,
        grid: grid.to_vec(),
        generator_residuals,
        hjb_slack,
        slope_violations,
        smoothness_jump,
        max_argmax_error,
        pass,
        details,
    })
}
