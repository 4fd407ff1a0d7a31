//! Monte Carlo simulation of the surplus under a periodic barrier strategy.
//!
//! Decision times form a rate-`r` Poisson stream. Between events (jumps and
//! decision times, sampled exactly as competing exponentials) the surplus
//! moves as `c t + σ B_t`. For `σ = 0` that motion is deterministic and the
//! whole path is exact. For `σ > 0` each inter-event interval is cut into
//! substeps of length at most `dt`; the Gaussian increment over each substep
//! is exact and ruin inside a substep is detected with the Brownian bridge
//! crossing probability `exp(−2ab / (σ² h))`.
//!
//! Path `i` draws from ChaCha8 stream `i` of the configured seed, and path
//! results are summed serially in index order, so estimates do not depend on
//! the number of worker threads.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::bar_b;
use crate::error::{PdkError, Result};
use crate::levy::{LevyModel, ProblemSpec, VariationClass};
use crate::scale::ScaleFunctions;
use crate::value::ClassicalValue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Paths are stopped at this time; the discarded tail is bounded by
    /// [`DividendEstimate::truncation_bound`].
    pub horizon_t: f64,
    /// Maximal substep for the diffusive part; ignored when `σ = 0`.
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    /// Horizon `ln(10⁴)/q`, so the discount factor at truncation is 1e-4.
    pub fn default_horizon(q: f64) -> f64 {
        1e4f64.ln() / q
    }

    pub fn new(spec: &ProblemSpec, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            n_paths,
            horizon_t: Self::default_horizon(spec.q()),
            dt: 1e-3,
            seed,
            antithetic: false,
        }
    }

    fn validate(&self, model: &LevyModel) -> Result<()> {
        if self.n_paths == 0 {
            return Err(PdkError::domain("n_paths must be positive".to_string()));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(PdkError::domain(format!(
                "antithetic sampling needs an even number of paths, got {}",
                self.n_paths
            )));
        }
        if !(self.horizon_t > 0.0) {
            return Err(PdkError::domain(format!(
                "horizon must be positive, got {}",
                self.horizon_t
            )));
        }
        if model.variation_class() == VariationClass::Unbounded && !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PdkError::domain(format!(
                "dt must be positive when sigma > 0, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DividendEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub ruin_fraction: f64,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Jump,
    DecisionPay,
    DecisionNopay,
    Ruin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEvent {
    pub time: f64,
    pub kind: EventKind,
    pub surplus_before: f64,
    pub surplus_after: f64,
    pub paid: f64,
}

/// One simulated path with its event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathLog {
    pub path_index: usize,
    pub events: Vec<PathEvent>,
    /// `Σ e^{−q t} paid`.
    pub discounted_dividends: f64,
    pub ruined: bool,
    pub end_time: f64,
    /// Sum of the upward moves of the continuous part; bounds what can ever
    /// be paid beyond the initial surplus.
    pub gross_gain: f64,
}

/// Uniform and Gaussian draws, mirrored for the antithetic partner.
struct Draws {
    rng: ChaCha8Rng,
    mirror: bool,
}

impl Draws {
    fn new(seed: u64, stream: u64, mirror: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Draws { rng, mirror }
    }

    fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        if self.mirror {
            1.0 - u
        } else {
            u
        }
    }

    fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        if self.mirror {
            -z
        } else {
            z
        }
    }
}

enum Motion {
    Survived { end: f64, gain: f64 },
    Ruined { after: f64, gain: f64 },
}

/// Continuous part of the motion between events.
struct Mover<'a> {
    model: &'a LevyModel,
    dt: f64,
}

enum Exit {
    Inside(f64),
    Up,
    Down,
}

impl Mover<'_> {
    fn drift_only(&self) -> bool {
        self.model.variation_class() == VariationClass::Bounded
    }

    fn substeps(&self, len: f64) -> (usize, f64) {
        let n = (len / self.dt).ceil().max(1.0) as usize;
        (n, len / n as f64)
    }

    fn advance(&self, x: f64, len: f64, draws: &mut Draws) -> Motion {
        let c = self.model.drift();
        if self.drift_only() {
            return Motion::Survived {
                end: x + c * len,
                gain: c * len,
            };
        }
        if x == 0.0 {
            // oscillation takes the path below zero at once
            return Motion::Ruined { after: 0.0, gain: 0.0 };
        }
        let s = self.model.sigma();
        let (n, h) = self.substeps(len);
        let (mut x, mut gain) = (x, 0.0);
        for k in 0..n {
            let x1 = x + c * h + s * h.sqrt() * draws.normal();
            gain += (x1 - x).max(0.0);
            if x1 < 0.0 {
                return Motion::Ruined {
                    after: (k + 1) as f64 * h,
                    gain,
                };
            }
            let bridge = (-2.0 * x * x1 / (s * s * h)).exp();
            if draws.uniform() < bridge {
                return Motion::Ruined {
                    after: (k as f64 + 0.5) * h,
                    gain,
                };
            }
            x = x1;
        }
        Motion::Survived { end: x, gain }
    }

    /// Motion over `len` stopped on leaving `[0, upper]`; returns the exit
    /// and the elapsed time.
    fn advance_two_sided(&self, x: f64, len: f64, upper: f64, draws: &mut Draws) -> (Exit, f64) {
        let c = self.model.drift();
        if self.drift_only() {
            let to_upper = (upper - x) / c;
            return if to_upper <= len {
                (Exit::Up, to_upper)
            } else {
                (Exit::Inside(x + c * len), len)
            };
        }
        if x == 0.0 {
            return (Exit::Down, 0.0);
        }
        let s = self.model.sigma();
        let (n, h) = self.substeps(len);
        let mut x = x;
        for k in 0..n {
            let x1 = x + c * h + s * h.sqrt() * draws.normal();
            let elapsed = (k + 1) as f64 * h;
            if x1 < 0.0 {
                return (Exit::Down, elapsed);
            }
            if x1 > upper {
                return (Exit::Up, elapsed);
            }
            let down = (-2.0 * x * x1 / (s * s * h)).exp();
            let up = (-2.0 * (upper - x) * (upper - x1) / (s * s * h)).exp();
            let u = draws.uniform();
            if u < down {
                return (Exit::Down, elapsed);
            }
            if u < down + (1.0 - down) * up {
                return (Exit::Up, elapsed);
            }
            x = x1;
        }
        (Exit::Inside(x), len)
    }
}

struct PathRun<'a> {
    spec: &'a ProblemSpec,
    b: f64,
    x0: f64,
    horizon: f64,
    mover: Mover<'a>,
}

impl PathRun<'_> {
    fn run(&self, draws: &mut Draws, mut log: Option<&mut Vec<PathEvent>>) -> (f64, bool, f64, f64) {
        let model = &self.spec.model;
        let (q, r) = (self.spec.q(), self.spec.r());
        let total_rate = r + model.total_jump_rate();
        let mut record = |e: PathEvent| {
            if let Some(l) = log.as_deref_mut() {
                l.push(e);
            }
        };
        if self.x0 < 0.0 {
            record(PathEvent {
                time: 0.0,
                kind: EventKind::Ruin,
                surplus_before: self.x0,
                surplus_after: self.x0,
                paid: 0.0,
            });
            return (0.0, true, 0.0, 0.0);
        }
        let (mut t, mut x, mut total, mut gross) = (0.0, self.x0, 0.0, 0.0);
        loop {
            let wait = draws.exponential(total_rate);
            let len = wait.min(self.horizon - t);
            match self.mover.advance(x, len, draws) {
                Motion::Ruined { after, gain } => {
                    gross += gain;
                    record(PathEvent {
                        time: t + after,
                        kind: EventKind::Ruin,
                        surplus_before: x,
                        surplus_after: 0.0,
                        paid: 0.0,
                    });
                    return (total, true, t + after, gross);
                }
                Motion::Survived { end, gain } => {
                    gross += gain;
                    x = end;
                }
            }
            if t + wait >= self.horizon {
                return (total, false, self.horizon, gross);
            }
            t += wait;
            let mut pick = draws.uniform() * total_rate;
            if pick < r {
                if x > self.b {
                    let paid = x - self.b;
                    total += (-q * t).exp() * paid;
                    record(PathEvent {
                        time: t,
                        kind: EventKind::DecisionPay,
                        surplus_before: x,
                        surplus_after: self.b,
                        paid,
                    });
                    x = self.b;
                } else {
                    record(PathEvent {
                        time: t,
                        kind: EventKind::DecisionNopay,
                        surplus_before: x,
                        surplus_after: x,
                        paid: 0.0,
                    });
                }
                continue;
            }
            pick -= r;
            let terms = model.jump_terms();
            let idx = terms
                .iter()
                .position(|term| {
                    let hit = pick < term.rate;
                    pick -= term.rate;
                    hit
                })
                .unwrap_or(terms.len() - 1);
            let size = draws.exponential(terms[idx].lambda);
            record(PathEvent {
                time: t,
                kind: EventKind::Jump,
                surplus_before: x,
                surplus_after: x - size,
                paid: 0.0,
            });
            x -= size;
            if x < 0.0 {
                record(PathEvent {
                    time: t,
                    kind: EventKind::Ruin,
                    surplus_before: x,
                    surplus_after: x,
                    paid: 0.0,
                });
                return (total, true, t, gross);
            }
        }
    }
}

fn check_barrier(b: f64) -> Result<()> {
    if !(b >= 0.0) {
        return Err(PdkError::domain(format!("barrier must be >= 0 (or +inf), got {b}")));
    }
    Ok(())
}

/// Upper bound on the expected discounted dividends lost by stopping at the
/// horizon: `e^{−qT} (v̄(b̄) + max(x0, b) + c/r + σ/√r)`.
fn truncation_bound(spec: &ProblemSpec, b: f64, x0: f64, horizon: f64) -> Result<f64> {
    if b.is_infinite() {
        return Ok(0.0);
    }
    let sf = ScaleFunctions::new(spec)?;
    let b_bar = bar_b(&sf)?;
    let top = ClassicalValue::new(&sf, b_bar)?.value(b_bar);
    let m = &spec.model;
    let slack = x0.max(b).max(0.0) + m.drift() / spec.r() + m.sigma() / spec.r().sqrt();
    Ok((-spec.q() * horizon).exp() * (top + slack))
}

fn draws_for(config: &SimConfig, path: usize) -> Draws {
    if config.antithetic {
        Draws::new(config.seed, (path / 2) as u64, path % 2 == 1)
    } else {
        Draws::new(config.seed, path as u64, false)
    }
}

/// Mean and standard error of per-path values, pairing neighbours when
/// antithetic.
fn summarise(values: &[f64], antithetic: bool) -> (f64, f64) {
    let units: Vec<f64> = if antithetic {
        values.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        values.to_vec()
    };
    let n = units.len() as f64;
    let mean = units.iter().sum::<f64>() / n;
    if units.len() < 2 {
        return (mean, 0.0);
    }
    let var = units.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates `v_b(x0)`; `b = +∞` gives the no-dividend baseline.
pub fn simulate_value(spec: &ProblemSpec, b: f64, x0: f64, config: &SimConfig) -> Result<DividendEstimate> {
    check_barrier(b)?;
    config.validate(&spec.model)?;
    if x0 < 0.0 {
        return Ok(DividendEstimate {
            mean: 0.0,
            std_error: 0.0,
            n_paths: config.n_paths,
            ruin_fraction: 1.0,
            truncation_bound: 0.0,
        });
    }
    let run = PathRun {
        spec,
        b,
        x0,
        horizon: config.horizon_t,
        mover: Mover {
            model: &spec.model,
            dt: config.dt,
        },
    };
    let results: Vec<(f64, bool)> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let (v, ruined, _, _) = run.run(&mut draws_for(config, i), None);
            (v, ruined)
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let ruined = results.iter().filter(|r| r.1).count();
    let (mean, std_error) = summarise(&values, config.antithetic);
    Ok(DividendEstimate {
        mean,
        std_error,
        n_paths: config.n_paths,
        ruin_fraction: ruined as f64 / config.n_paths as f64,
        truncation_bound: truncation_bound(spec, b, x0, config.horizon_t)?,
    })
}

/// Event log of path `path_index` under `config`, replaying exactly the
/// draws [`simulate_value`] uses for that path.
pub fn sample_path(spec: &ProblemSpec, b: f64, x0: f64, config: &SimConfig, path_index: usize) -> Result<PathLog> {
    check_barrier(b)?;
    config.validate(&spec.model)?;
    let run = PathRun {
        spec,
        b,
        x0,
        horizon: config.horizon_t,
        mover: Mover {
            model: &spec.model,
            dt: config.dt,
        },
    };
    let mut events = Vec::new();
    let (total, ruined, end_time, gross_gain) = run.run(&mut draws_for(config, path_index), Some(&mut events));
    Ok(PathLog {
        path_index,
        events,
        discounted_dividends: total,
        ruined,
        end_time,
        gross_gain,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates `(E[e^{−qτ_b⁺}; τ_b⁺ < τ_0⁻], E[e^{−qτ_0⁻}; τ_0⁻ < τ_b⁺])` from
/// `x0 ∈ [0, b]`.
pub fn simulate_exit(
    model: &LevyModel,
    q: f64,
    x0: f64,
    b: f64,
    config: &SimConfig,
) -> Result<(ExitEstimate, ExitEstimate)> {
    if !(0.0 <= x0 && x0 <= b && b.is_finite()) {
        return Err(PdkError::domain(format!("need 0 <= x0 <= b, got x0 = {x0}, b = {b}")));
    }
    if !(q > 0.0) {
        return Err(PdkError::domain(format!("q must be positive, got {q}")));
    }
    config.validate(model)?;
    let mover = Mover { model, dt: config.dt };
    let jump_rate = model.total_jump_rate();
    let one_path = |i: usize| -> (f64, f64) {
        if x0 == b {
            return (1.0, 0.0);
        }
        let mut draws = draws_for(config, i);
        let (mut t, mut x) = (0.0, x0);
        while t < config.horizon_t {
            let wait = draws.exponential(jump_rate);
            let len = wait.min(config.horizon_t - t);
            let (exit, elapsed) = mover.advance_two_sided(x, len, b, &mut draws);
            match exit {
                Exit::Up => return ((-q * (t + elapsed)).exp(), 0.0),
                Exit::Down => return (0.0, (-q * (t + elapsed)).exp()),
                Exit::Inside(end) => x = end,
            }
            t += wait;
            if t >= config.horizon_t {
                break;
            }
            let mut pick = draws.uniform() * jump_rate;
            let terms = model.jump_terms();
            let idx = terms
                .iter()
                .position(|term| {
                    let hit = pick < term.rate;
                    pick -= term.rate;
                    hit
                })
                .unwrap_or(terms.len() - 1);
            x -= draws.exponential(terms[idx].lambda);
            if x < 0.0 {
                return (0.0, (-q * t).exp());
            }
        }
        (0.0, 0.0)
    };
    let results: Vec<(f64, f64)> = (0..config.n_paths).into_par_iter().map(one_path).collect();
    let ups: Vec<f64> = results.iter().map(|r| r.0).collect();
    let downs: Vec<f64> = results.iter().map(|r| r.1).collect();
    let (um, us) = summarise(&ups, config.antithetic);
    let (dm, ds) = summarise(&downs, config.antithetic);
    Ok((
        ExitEstimate {
            mean: um,
            std_error: us,
        },
        ExitEstimate {
            mean: dm,
            std_error: ds,
        },
    ))
}
