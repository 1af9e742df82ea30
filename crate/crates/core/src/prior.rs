//! Exponential-family sparsifying priors
//! `π(θ) = λ c₁(α) exp(−λ^α c₂(α) Σ|θᵢ|^α)`.
//!
//! The constants make every member a unit-variance density scaled by `1/λ`,
//! so `α = 2` is exactly `N(0, 1/λ²)` per coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special::gamma;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: f64,
    pub lambda: f64,
}

impl PriorSpec {
    /// `lambda = 0` is accepted and means a flat prior.
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let spec = Self { alpha, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(domain(format!("prior exponent alpha = {} outside (0, 2]", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(domain(format!("prior multiplier lambda = {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// Per-coordinate density.
    pub fn density(&self, theta: f64) -> Result<f64> {
        let (c1, c2) = prior_constants(self.alpha)?;
        Ok(self.lambda * c1 * (-self.lambda.powf(self.alpha) * c2 * theta.abs().powf(self.alpha)).exp())
    }

    /// `log π(θ)` summed over coordinates, normalization included.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let (c1, c2) = prior_constants(self.alpha)?;
        let rate = self.lambda.powf(self.alpha) * c2;
        let penalty: f64 = theta.iter().map(|t| t.abs().powf(self.alpha)).sum();
        Ok(theta.len() as f64 * (self.lambda * c1).ln() - rate * penalty)
    }

    /// `∇ log π(θ)`. At `θᵢ = 0` the zero subgradient is used.
    pub fn score(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; theta.len()];
        self.add_score(theta, &mut out);
        out
    }

    /// `out += ∇ log π(θ)`.
    pub fn add_score(&self, theta: &[f64], out: &mut [f64]) {
        if self.lambda == 0.0 {
            return;
        }
        let (_, c2) = prior_constants(self.alpha).expect("validated alpha");
        let scale = self.lambda.powf(self.alpha) * c2 * self.alpha;
        let a1 = self.alpha - 1.0;
        for (o, &t) in out.iter_mut().zip(theta) {
            if t == 0.0 {
                continue;
            }
            let mag = if a1 == 0.0 { 1.0 } else { t.abs().powf(a1) };
            *o -= scale * mag * t.signum();
        }
    }
}

/// `(c₁(α), c₂(α))`.
pub fn prior_constants(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(domain(format!("alpha = {alpha} must be positive")));
    }
    let g1 = gamma(1.0 / alpha);
    let g3 = gamma(3.0 / alpha);
    let c1 = alpha * g3.sqrt() / (2.0 * g1.powf(1.5));
    let c2 = (g3 / g1).powf(alpha / 2.0);
    Ok((c1, c2))
}

/// Composite trapezoid rule on `[a, b]` with `n` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn gaussian_constants() {
        let (c1, c2) = prior_constants(2.0).unwrap();
        assert!((c1 - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((c2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn laplace_constants() {
        let (c1, c2) = prior_constants(1.0).unwrap();
        assert!((c1 - SQRT_2 / 2.0).abs() < 1e-12);
        assert!((c2 - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn constants_reject_nonpositive_alpha() {
        assert!(prior_constants(0.0).is_err());
        assert!(prior_constants(-1.0).is_err());
        assert!(PriorSpec::new(2.5, 1.0).is_err());
        assert!(PriorSpec::new(1.0, -0.1).is_err());
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let p = PriorSpec::new(2.0, 1.0).unwrap();
        let mass = trapezoid(|t| p.density(t).unwrap(), -10.0, 10.0, 20_000);
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn score_examples() {
        let g = PriorSpec::new(2.0, 1.0).unwrap();
        assert!((g.score(&[3.0])[0] + 3.0).abs() < 1e-12);
        let l = PriorSpec::new(1.0, 2.0).unwrap();
        assert!((l.score(&[-1.0])[0] - 2.0 * SQRT_2).abs() < 1e-12);
        for alpha in [0.25, 0.5, 1.0, 2.0] {
            assert_eq!(PriorSpec::new(alpha, 1.0).unwrap().score(&[0.0]), vec![0.0]);
        }
    }

    #[test]
    fn flat_prior_has_zero_score() {
        let p = PriorSpec::new(0.5, 0.0).unwrap();
        assert_eq!(p.score(&[1.0, -2.0]), vec![0.0, 0.0]);
    }
}
