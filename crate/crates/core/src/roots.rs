//! Bracketed scalar root finders.

use crate::error::{PdkError, Result};

/// Safeguarded Newton iteration on a sign-changing bracket.
///
/// `f` returns `(value, derivative)`. The endpoints may be poles of `f`; they
/// are never evaluated, so the sign of `f` just inside `lo` must be supplied.
/// Newton steps that leave the current bracket fall back to bisection.
pub fn newton_bisect<F>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    positive_at_lo: bool,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    if !(lo < hi) {
        return Err(PdkError::numerical(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if (fx > 0.0) == positive_at_lo {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = next.abs().max(1e-300);
        if (next - x).abs() <= rel_tol * scale || (hi - lo) <= rel_tol * scale {
            let (fy, y) = polish(&f, next, lo, hi);
            return Ok(if fy <= best.0 { y } else { best.1 });
        }
        x = next;
    }
    Err(PdkError::numerical(format!(
        "newton-bisection did not converge in {max_iter} iterations on [{lo}, {hi}]"
    )))
}

/// One more Newton step from a converged iterate, kept if it stays in the
/// closed bracket and lowers `|f|`. Returns `(|f|, point)`.
fn polish<F: Fn(f64) -> (f64, f64)>(f: &F, x: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (fx, dfx) = f(x);
    let y = x - fx / dfx;
    if y.is_finite() && y >= lo && y <= hi {
        let fy = f(y).0.abs();
        if fy < fx.abs() {
            return (fy, y);
        }
    }
    (fx.abs(), x)
}

/// Plain bisection for a continuous function with `f(lo)` and `f(hi)` of
/// opposite signs. Stops once the bracket is narrower than `abs_tol`.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, abs_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(PdkError::numerical(format!(
            "no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})"
        )));
    }
    let positive_at_lo = f_lo > 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= abs_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(PdkError::numerical(format!(
        "bisection did not converge in {max_iter} iterations"
    )))
}
