//! Spectrally negative Lévy risk model: premium drift, Brownian noise and a
//! finite mixture of exponentially distributed downward jumps.
//!
//! ```text
//! X(t) = x + c t + σ B(t) − Σ_{n ≤ N(t)} Z_n
//! ψ(θ) = c θ + σ²θ²/2 − Σ_i κ_i θ / (λ_i + θ)
//! ```
//!
//! `κ_i` is the arrival rate of claims of type `i` and `λ_i` the parameter of
//! their exponential size law, so the Lévy measure is
//! `Π(dz) = Σ_i κ_i λ_i e^{λ_i z} dz` on `(−∞, 0)`. Its density is completely
//! monotone, which is what makes every scale function an exact exponential sum.

use serde::{Deserialize, Serialize};

use crate::error::{PdkError, Result};

/// One exponential component of the jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpTerm {
    /// Arrival rate κ_i of this claim type.
    pub rate: f64,
    /// Parameter λ_i of the exponential claim size (mean `1/λ_i`).
    pub lambda: f64,
}

impl JumpTerm {
    pub fn new(rate: f64, lambda: f64) -> Self {
        JumpTerm { rate, lambda }
    }
}

/// Path regularity of the risk process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationClass {
    Bounded,
    Unbounded,
}

/// A validated spectrally negative Lévy model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    drift_c: f64,
    sigma: f64,
    jump_terms: Vec<JumpTerm>,
}

/// Returns every invariant violated by the raw parameters. An empty list
/// means the parameters describe a valid model.
pub fn validate(drift_c: f64, sigma: f64, jump_terms: &[JumpTerm]) -> Vec<String> {
    let mut violations = Vec::new();
    if !drift_c.is_finite() {
        violations.push("drift must be finite".to_string());
    }
    if !sigma.is_finite() || sigma < 0.0 {
        violations.push("sigma must be finite and nonnegative".to_string());
    }
    if sigma == 0.0 && drift_c <= 0.0 {
        violations.push("drift must be positive when sigma=0".to_string());
    }
    for (i, term) in jump_terms.iter().enumerate() {
        if !(term.rate.is_finite() && term.rate > 0.0) {
            violations.push(format!("jump {i}: rate must be positive and finite"));
        }
        if !(term.lambda.is_finite() && term.lambda > 0.0) {
            violations.push(format!("jump {i}: lambda must be positive and finite"));
        }
    }
    let mut lambdas: Vec<f64> = jump_terms.iter().map(|t| t.lambda).collect();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    if lambdas.windows(2).any(|w| w[0] == w[1]) {
        violations.push("duplicate exponential parameters".to_string());
    }
    violations
}

impl LevyModel {
    /// Builds a model, rejecting any parameter set that [`validate`] flags.
    pub fn new(drift_c: f64, sigma: f64, jump_terms: Vec<JumpTerm>) -> Result<Self> {
        let violations = validate(drift_c, sigma, &jump_terms);
        if !violations.is_empty() {
            return Err(PdkError::InvalidModel(violations));
        }
        Ok(LevyModel {
            drift_c,
            sigma,
            jump_terms,
        })
    }

    /// Cramér–Lundberg model with a single exponential claim type.
    pub fn single_exponential(drift_c: f64, sigma: f64, kappa: f64, lambda: f64) -> Result<Self> {
        Self::new(drift_c, sigma, vec![JumpTerm::new(kappa, lambda)])
    }

    pub fn drift(&self) -> f64 {
        self.drift_c
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jump_terms(&self) -> &[JumpTerm] {
        &self.jump_terms
    }

    /// Total claim arrival rate κ = Π(−∞, 0).
    pub fn total_jump_rate(&self) -> f64 {
        self.jump_terms.iter().map(|t| t.rate).sum()
    }

    pub fn variation_class(&self) -> VariationClass {
        if self.sigma > 0.0 {
            VariationClass::Unbounded
        } else {
            VariationClass::Bounded
        }
    }

    /// Smallest jump parameter; ψ is analytic on `(−min λ_i, ∞)`.
    pub fn min_lambda(&self) -> Option<f64> {
        self.jump_terms.iter().map(|t| t.lambda).reduce(f64::min)
    }

    /// ψ(θ). Defined for every θ except the poles `θ = −λ_i`.
    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        if self.jump_terms.iter().any(|t| t.lambda + theta == 0.0) {
            return Err(PdkError::domain(format!(
                "laplace exponent has a pole at theta = {theta}"
            )));
        }
        Ok(self.psi(theta))
    }

    /// ψ(θ) without the pole check. Returns ±inf at a pole.
    pub(crate) fn psi(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .jump_terms
            .iter()
            .map(|t| t.rate * theta / (t.lambda + theta))
            .sum();
        self.drift_c * theta + 0.5 * self.sigma * self.sigma * theta * theta - jumps
    }

    /// ψ′(θ).
    pub fn psi_prime(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .jump_terms
            .iter()
            .map(|t| {
                let d = t.lambda + theta;
                t.rate * t.lambda / (d * d)
            })
            .sum();
        self.drift_c + self.sigma * self.sigma * theta - jumps
    }

    /// ψ″(θ).
    pub fn psi_second(&self, theta: f64) -> f64 {
        let jumps: f64 = self
            .jump_terms
            .iter()
            .map(|t| {
                let d = t.lambda + theta;
                2.0 * t.rate * t.lambda / (d * d * d)
            })
            .sum();
        self.sigma * self.sigma + jumps
    }

    /// Mean drift E[X(1)] − X(0) = ψ′(0).
    pub fn mean_drift(&self) -> f64 {
        self.psi_prime(0.0)
    }

    /// Copy of this model with a different drift, re-validated.
    pub fn with_drift(&self, drift_c: f64) -> Result<Self> {
        Self::new(drift_c, self.sigma, self.jump_terms.clone())
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.drift_c, sigma, self.jump_terms.clone())
    }

    pub fn with_jumps(&self, jump_terms: Vec<JumpTerm>) -> Result<Self> {
        Self::new(self.drift_c, self.sigma, jump_terms)
    }
}

/// A model together with the discount rate `q` and the Poisson rate `r` of
/// dividend decision times.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub model: LevyModel,
    q: f64,
    r: f64,
}

impl ProblemSpec {
    pub fn new(model: LevyModel, q: f64, r: f64) -> Result<Self> {
        let mut violations = Vec::new();
        if !(q.is_finite() && q > 0.0) {
            violations.push("discount rate q must be positive".to_string());
        }
        if !(r.is_finite() && r > 0.0) {
            violations.push("observation rate r must be positive".to_string());
        }
        if !violations.is_empty() {
            return Err(PdkError::InvalidModel(violations));
        }
        Ok(ProblemSpec { model, q, r })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.model.clone(), self.q, r)
    }

    pub fn with_model(&self, model: LevyModel) -> Result<Self> {
        Self::new(model, self.q, self.r)
    }
}
