//! Parameter sweeps: `h` curves, dominance panels over suboptimal barriers,
//! and sensitivity of `(b*, v_{b*})` in `c`, `κ`, `λ` and `r`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{b_star, h, h_at_zero, BarrierSolution};
use crate::config::ProblemConfig;
use crate::error::{PdkError, Result};
use crate::scale::ScaleFunctions;
use crate::value::{ClassicalValue, ValueFunction};

/// `x` formatted like C's `%.12g`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    const DIGITS: i32 = 12;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x))
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Parses `lo:hi:n`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || PdkError::Config(format!("grid must be lo:hi:n, got '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

fn check_sorted(values: &[f64], what: &str) -> Result<()> {
    if values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| v.is_nan()) {
        return Err(PdkError::domain(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

fn csv_err(e: impl fmt::Display) -> PdkError {
    PdkError::Config(format!("cannot write CSV: {e}"))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// `x,v` rows of `v` on `x_grid`.
pub fn write_value_csv(path: &Path, v: &ValueFunction, x_grid: &[f64]) -> Result<()> {
    write_rows(
        path,
        &["x", "v"],
        x_grid.iter().map(|&x| vec![fmt_g(x), fmt_g(v.value(x))]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HPoint {
    pub b: f64,
    pub h: f64,
    pub is_bstar: bool,
    pub is_bbar: bool,
}

/// `h` on `b_grid`, with marker rows at `b*` and `b̄` merged in order.
/// At a zero barrier the marker carries `h(0+)`.
pub fn h_curve(sf: &ScaleFunctions, solution: &BarrierSolution, b_grid: &[f64]) -> Result<Vec<HPoint>> {
    check_sorted(b_grid, "b grid")?;
    if b_grid.first().is_some_and(|&b| !(b > 0.0)) {
        return Err(PdkError::domain("b grid must be positive".to_string()));
    }
    let at = |b: f64| -> Result<f64> {
        if b > 0.0 {
            h(sf, b)
        } else {
            Ok(h_at_zero(sf))
        }
    };
    let mut rows = Vec::with_capacity(b_grid.len() + 2);
    for &b in b_grid {
        rows.push(HPoint {
            b,
            h: at(b)?,
            is_bstar: false,
            is_bbar: false,
        });
    }
    let (bs, bb) = (solution.b_star, solution.b_bar);
    if bs == bb {
        rows.push(HPoint {
            b: bs,
            h: at(bs)?,
            is_bstar: true,
            is_bbar: true,
        });
    } else {
        rows.push(HPoint {
            b: bs,
            h: at(bs)?,
            is_bstar: true,
            is_bbar: false,
        });
        rows.push(HPoint {
            b: bb,
            h: at(bb)?,
            is_bstar: false,
            is_bbar: true,
        });
    }
    rows.sort_by(|a, b| a.b.total_cmp(&b.b));
    Ok(rows)
}

pub fn write_h_curve_csv(path: &Path, rows: &[HPoint]) -> Result<()> {
    write_rows(
        path,
        &["b", "h", "is_bstar", "is_bbar"],
        rows.iter()
            .map(|r| vec![fmt_g(r.b), fmt_g(r.h), r.is_bstar.to_string(), r.is_bbar.to_string()]),
    )
}

/// Default `b` grid for the `h` plots: 400 points on `(0, 20]`.
pub fn h_grid() -> Vec<f64> {
    (1..=400).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRow {
    pub x: f64,
    pub b: f64,
    pub v: f64,
}

/// Suboptimal barriers compared against `b*`:
/// `{0, b*/4, b*/2, 3b*/4, (b*+b̄)/2, b̄, b̄+(b̄−b*)/2}` when `b* > 0`,
/// `{b̄/2, b̄, 3b̄/2}` when only `b̄ > 0`, and `{1/3, 2/3, 1}` otherwise.
pub fn figure2_barriers(solution: &BarrierSolution) -> Vec<f64> {
    let (bs, bb) = (solution.b_star, solution.b_bar);
    if bs > 0.0 {
        vec![
            0.0,
            bs / 4.0,
            bs / 2.0,
            0.75 * bs,
            0.5 * (bs + bb),
            bb,
            bb + 0.5 * (bb - bs),
        ]
    } else if bb > 0.0 {
        vec![bb / 2.0, bb, 1.5 * bb]
    } else {
        vec![1.0 / 3.0, 2.0 / 3.0, 1.0]
    }
}

/// `x ∈ [0, 2 max(b̄, 1) + 2]`, 201 points.
pub fn figure2_x_grid(solution: &BarrierSolution) -> Vec<f64> {
    linspace(0.0, 2.0 * solution.b_bar.max(1.0) + 2.0, 201)
}

/// `v_b(x)` for every `b` in `b_list` (with `b*` added when missing) and
/// every `x`, ordered by `x` then by position in the list.
pub fn dominance_panel(sf: &ScaleFunctions, b_star: f64, b_list: &[f64], x_grid: &[f64]) -> Result<Vec<DominanceRow>> {
    let mut barriers = b_list.to_vec();
    if !barriers.contains(&b_star) {
        barriers.insert(0, b_star);
    }
    let values: Vec<ValueFunction> = barriers
        .iter()
        .map(|&b| ValueFunction::new(sf, b))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(x_grid.len() * barriers.len());
    for &x in x_grid {
        for (b, v) in barriers.iter().zip(&values) {
            rows.push(DominanceRow {
                x,
                b: *b,
                v: v.value(x),
            });
        }
    }
    Ok(rows)
}

/// `max_x (max_b v_b(x) − v_{b*}(x))`; nonpositive when `b*` dominates.
pub fn dominance_gap(rows: &[DominanceRow], b_star: f64) -> f64 {
    let mut gap = f64::NEG_INFINITY;
    for chunk in rows.chunk_by(|a, b| a.x == b.x) {
        let best = chunk.iter().map(|r| r.v).fold(f64::NEG_INFINITY, f64::max);
        if let Some(star) = chunk.iter().find(|r| r.b == b_star) {
            gap = gap.max(best - star.v);
        }
    }
    gap
}

pub fn write_dominance_csv(path: &Path, rows: &[DominanceRow]) -> Result<()> {
    write_rows(
        path,
        &["x", "b", "v"],
        rows.iter().map(|r| vec![fmt_g(r.x), fmt_g(r.b), fmt_g(r.v)]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    C,
    Kappa,
    Lambda,
    R,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::C => "c",
            SweepParam::Kappa => "kappa",
            SweepParam::Lambda => "lambda",
            SweepParam::R => "r",
        }
    }

    /// The grid of the published figure for this parameter.
    pub fn published_grid(self) -> Vec<f64> {
        let steps = |from: u32, to: u32, den: f64| (from..=to).map(move |k| k as f64 / den);
        match self {
            SweepParam::C => steps(10, 50, 10.0).collect(),
            SweepParam::Kappa => steps(1, 9, 1000.0)
                .chain(steps(1, 9, 100.0))
                .chain(steps(1, 30, 10.0))
                .collect(),
            SweepParam::Lambda => steps(1, 30, 10.0)
                .chain(steps(4, 9, 1.0))
                .chain((3..=20).map(|k| 5.0 * k as f64))
                .collect(),
            SweepParam::R => steps(1, 9, 1000.0)
                .chain(steps(1, 9, 100.0))
                .chain(steps(1, 9, 10.0))
                .chain(steps(1, 100, 1.0))
                .collect(),
        }
    }

    fn apply(self, base: &ProblemConfig, value: f64) -> Result<ProblemConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::C => cfg.c = value,
            SweepParam::R => cfg.r = value,
            SweepParam::Kappa | SweepParam::Lambda => {
                if cfg.jumps.len() != 1 {
                    return Err(PdkError::Config(format!(
                        "{} sweeps need a single jump component, config has {}",
                        self.name(),
                        cfg.jumps.len()
                    )));
                }
                if self == SweepParam::Kappa {
                    cfg.jumps[0].rate = value;
                } else {
                    cfg.jumps[0].lambda = value;
                }
            }
        }
        Ok(cfg)
    }
}

impl FromStr for SweepParam {
    type Err = PdkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(SweepParam::C),
            "kappa" => Ok(SweepParam::Kappa),
            "lambda" => Ok(SweepParam::Lambda),
            "r" => Ok(SweepParam::R),
            other => Err(PdkError::Config(format!(
                "unknown sweep parameter '{other}' (expected c, kappa, lambda or r)"
            ))),
        }
    }
}

/// Solved row of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowValues {
    pub b_star: f64,
    pub b_bar: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub value: f64,
    /// The reason when the row could not be computed.
    pub outcome: std::result::Result<RowValues, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub param: SweepParam,
    pub x_grid: Vec<f64>,
    pub rows: Vec<SensitivityRow>,
    /// Classical value `v̄` at `b̄`, the `r = ∞` limit; only for `r` sweeps.
    pub classical: Option<RowValues>,
}

/// Default `x` grid of the sensitivity plots: `[0, 10]`, 101 points.
pub fn sensitivity_x_grid() -> Vec<f64> {
    linspace(0.0, 10.0, 101)
}

fn solve_row(base: &ProblemConfig, param: SweepParam, value: f64, x_grid: &[f64]) -> Result<RowValues> {
    let spec = param.apply(base, value)?.to_spec()?;
    let sf = ScaleFunctions::new(&spec)?;
    let sol = b_star(&sf)?;
    let v = ValueFunction::new(&sf, sol.b_star)?;
    Ok(RowValues {
        b_star: sol.b_star,
        b_bar: sol.b_bar,
        v: x_grid.iter().map(|&x| v.value(x)).collect(),
    })
}

/// Solves the problem at each parameter value; a value that fails (invalid
/// model, numerical trouble) becomes a skipped row instead of aborting.
pub fn sensitivity(
    base: &ProblemConfig,
    param: SweepParam,
    values: &[f64],
    x_grid: &[f64],
) -> Result<SensitivityTable> {
    check_sorted(values, "sweep values")?;
    // a template the sweep cannot mutate is a caller error, not a row error
    param.apply(base, base.c)?;
    let rows = values
        .par_iter()
        .map(|&value| SensitivityRow {
            value,
            outcome: solve_row(base, param, value, x_grid).map_err(|e| e.to_string()),
        })
        .collect();
    let classical = if param == SweepParam::R {
        let sf = ScaleFunctions::new(&base.to_spec()?)?;
        let sol = b_star(&sf)?;
        let cv = ClassicalValue::new(&sf, sol.b_bar)?;
        Some(RowValues {
            b_star: sol.b_bar,
            b_bar: sol.b_bar,
            v: x_grid.iter().map(|&x| cv.value(x)).collect(),
        })
    } else {
        None
    };
    Ok(SensitivityTable {
        param,
        x_grid: x_grid.to_vec(),
        rows,
        classical,
    })
}

impl SensitivityTable {
    pub fn solved(&self) -> impl Iterator<Item = (f64, &RowValues)> + '_ {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|v| (r.value, v)))
    }

    pub fn skipped(&self) -> impl Iterator<Item = (f64, &str)> + '_ {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.value, e.as_str())))
    }

    pub fn b_star_column(&self) -> Vec<f64> {
        self.solved().map(|(_, r)| r.b_star).collect()
    }

    /// Largest violation of monotonicity of `v` in the parameter, over all
    /// consecutive solved rows and all `x`; nonpositive when monotone.
    pub fn v_monotonicity_violation(&self, increasing: bool) -> f64 {
        let rows: Vec<&RowValues> = self.solved().map(|(_, r)| r).collect();
        let sign = if increasing { 1.0 } else { -1.0 };
        rows.windows(2)
            .flat_map(|w| w[0].v.iter().zip(&w[1].v).map(move |(a, b)| sign * (a - b)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let name = self.param.name();
        let mut out = Vec::new();
        let mut push = |value: f64, r: &RowValues| {
            for (x, v) in self.x_grid.iter().zip(&r.v) {
                out.push(vec![
                    name.to_string(),
                    fmt_g(value),
                    fmt_g(r.b_star),
                    fmt_g(r.b_bar),
                    fmt_g(*x),
                    fmt_g(*v),
                ]);
            }
        };
        for (value, r) in self.solved() {
            push(value, r);
        }
        if let Some(c) = &self.classical {
            push(f64::INFINITY, c);
        }
        write_rows(path, &["param", "value", "b_star", "b_bar", "x", "v"], out)
    }

    /// One row per parameter value: the barriers, or the reason it was
    /// skipped.
    pub fn write_barriers_csv(&self, path: &Path) -> Result<()> {
        let name = self.param.name();
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| match &r.outcome {
                Ok(v) => vec![
                    name.to_string(),
                    fmt_g(r.value),
                    fmt_g(v.b_star),
                    fmt_g(v.b_bar),
                    "ok".to_string(),
                ],
                Err(e) => vec![
                    name.to_string(),
                    fmt_g(r.value),
                    String::new(),
                    String::new(),
                    format!("skipped: {e}"),
                ],
            })
            .collect();
        if let Some(c) = &self.classical {
            rows.push(vec![
                name.to_string(),
                fmt_g(f64::INFINITY),
                fmt_g(c.b_star),
                fmt_g(c.b_bar),
                "classical".to_string(),
            ]);
        }
        write_rows(path, &["param", "value", "b_star", "b_bar", "status"], rows)
    }
}

/// True when the sequence has both a strict rise and a strict fall.
pub fn is_not_monotone(column: &[f64], tol: f64) -> bool {
    let rise = column.windows(2).any(|w| w[1] > w[0] + tol);
    let fall = column.windows(2).any(|w| w[1] < w[0] - tol);
    rise && fall
}
