//! β-exponential repulsive kernels `κ(a, b) = exp(−|a − b|^β / (γβ))`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};

/// Smallest bandwidth the adaptive rule will return.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    Fixed,
    MedianAdaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub beta: f64,
    /// Used as-is for [`BandwidthRule::Fixed`]; ignored otherwise.
    pub gamma: f64,
    pub bandwidth_rule: BandwidthRule,
}

impl KernelSpec {
    pub fn fixed(beta: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            beta,
            gamma,
            bandwidth_rule: BandwidthRule::Fixed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn median_adaptive(beta: f64) -> Result<Self> {
        let spec = Self {
            beta,
            gamma: 1.0,
            bandwidth_rule: BandwidthRule::MedianAdaptive,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta != 1.0 && self.beta != 2.0 {
            return Err(domain(format!("kernel exponent beta = {} must be 1 or 2", self.beta)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(domain(format!("kernel bandwidth gamma = {} must be > 0", self.gamma)));
        }
        Ok(())
    }

    /// The bandwidth to use for the current particle cloud.
    pub fn resolve(&self, particles: &[Vec<f64>]) -> Kernel {
        let gamma = match self.bandwidth_rule {
            BandwidthRule::Fixed => self.gamma,
            BandwidthRule::MedianAdaptive => {
                median_bandwidth(median_pairwise_distance(particles), particles.len())
            }
        };
        Kernel {
            beta: self.beta,
            gamma,
        }
    }
}

/// A kernel with a concrete bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    pub beta: f64,
    pub gamma: f64,
}

impl Kernel {
    #[inline]
    fn pow_beta(&self, d: f64) -> f64 {
        if self.beta == 2.0 {
            d * d
        } else {
            d.abs()
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len(a, b)?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| self.pow_beta(x - y)).sum();
        (-s / (self.gamma * self.beta)).exp()
    }

    /// `∇ₐ κ(a, b) = (1/γ)|b − a|^{β−1} sign(b − a) κ(a, b)`; exactly zero
    /// when `a == b`.
    pub fn grad(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_len(a, b)?;
        let k = self.eval_unchecked(a, b);
        Ok(a.iter().zip(b).map(|(&x, &y)| self.grad_coord(y - x, k)).collect())
    }

    /// One coordinate of the gradient given `d = b − a` and `κ(a, b)`.
    #[inline]
    pub(crate) fn grad_coord(&self, d: f64, k: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        let mag = if self.beta == 2.0 { d.abs() } else { 1.0 };
        mag * d.signum() * k / self.gamma
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape(format!("kernel arguments have lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    Kernel {
        beta: spec.beta,
        gamma: spec.gamma,
    }
    .eval(a, b)
}

pub fn kernel_grad(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    Kernel {
        beta: spec.beta,
        gamma: spec.gamma,
    }
    .grad(a, b)
}

/// `γ = sqrt(½ d̄ / log(N + 1))`, floored at [`BANDWIDTH_FLOOR`].
///
/// A lone particle has no pairwise distances, so [`KernelSpec::resolve`]
/// feeds a zero median and lands on the floor.
pub fn median_bandwidth(median_distance: f64, n_particles: usize) -> f64 {
    if n_particles == 0 {
        return BANDWIDTH_FLOOR;
    }
    let g = (0.5 * median_distance / (n_particles as f64 + 1.0).ln()).sqrt();
    if g.is_finite() {
        g.max(BANDWIDTH_FLOOR)
    } else {
        BANDWIDTH_FLOOR
    }
}

/// Median Euclidean distance over all unordered particle pairs (lower
/// median for an even count). Zero for fewer than two particles.
pub fn median_pairwise_distance(particles: &[Vec<f64>]) -> f64 {
    let n = particles.len();
    if n < 2 {
        return 0.0;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            d.push(euclidean(&particles[a], &particles[b]));
        }
    }
    let mid = (d.len() - 1) / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Silverman's rule `(4/(d+2))^{1/(d+4)} n^{−1/(d+4)} σ̂`, with σ̂ the mean
/// per-coordinate sample standard deviation.
pub fn silverman_bandwidth(particles: &[Vec<f64>]) -> f64 {
    let n = particles.len();
    let d = particles.first().map_or(0, Vec::len);
    if n < 2 || d == 0 {
        return BANDWIDTH_FLOOR;
    }
    let mut sigma = 0.0;
    for j in 0..d {
        let mean = particles.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        let var = particles.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        sigma += var.sqrt();
    }
    sigma /= d as f64;
    let df = d as f64;
    let g = (4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * (n as f64).powf(-1.0 / (df + 4.0)) * sigma;
    g.max(BANDWIDTH_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(beta: f64, gamma: f64) -> Kernel {
        Kernel { beta, gamma }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(k(2.0, 1.0).eval(&[0.3, 4.0], &[0.3, 4.0]).unwrap(), 1.0);
        let v = k(2.0, 1.0).eval(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let v = k(1.0, 2.0).eval(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn grad_examples() {
        assert_eq!(k(2.0, 1.0).grad(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let g = k(2.0, 1.0).grad(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((g[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
        let g = k(1.0, 1.0).grad(&[0.0], &[0.5]).unwrap();
        assert!((g[0] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(k(2.0, 1.0).eval(&[1.0], &[1.0, 2.0]).is_err());
        assert!(k(2.0, 1.0).grad(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::fixed(3.0, 1.0).is_err());
        assert!(KernelSpec::fixed(2.0, 0.0).is_err());
        assert!(KernelSpec::fixed(1.0, 0.5).is_ok());
    }

    #[test]
    fn median_bandwidth_examples() {
        let g = median_bandwidth(2.0 * 11f64.ln(), 10);
        assert!((g - 1.0).abs() < 1e-14);
        assert_eq!(median_bandwidth(0.0, 10), BANDWIDTH_FLOOR);
        let g = median_bandwidth(8.0, 1);
        assert!((g - (4.0 / 2f64.ln()).sqrt()).abs() < 1e-14);
        assert!((g - 2.402).abs() < 1e-3);
        let single = KernelSpec::median_adaptive(2.0).unwrap().resolve(&[vec![1.0, 2.0]]);
        assert_eq!(single.gamma, BANDWIDTH_FLOOR);
    }

    #[test]
    fn median_of_pairs() {
        let p = vec![vec![0.0], vec![1.0], vec![3.0]];
        // pairs: 1, 3, 2
        assert_eq!(median_pairwise_distance(&p), 2.0);
        assert_eq!(median_pairwise_distance(&p[..1]), 0.0);
    }

    #[test]
    fn silverman_is_positive() {
        let p = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        assert!(silverman_bandwidth(&p) > 0.0);
    }
}
