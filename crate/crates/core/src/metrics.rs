//! Ensemble evaluation: Gaussian Bhattacharyya distance, one-dimensional
//! Wasserstein-1 distances of pushforward samples, and sparsity.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{domain, shape, Result};
use crate::likelihood::Pushforward;
use crate::net::{Architecture, LayeredNet};

const COVARIANCE_JITTER: f64 = 1e-10;

/// Mean and covariance of a (possibly empirical) Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(shape(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(domain("covariance is not symmetric"));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    /// Sample mean and `1/(N−1)` sample covariance (zero for one sample).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().ok_or_else(|| shape("no samples"))?.len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(shape("samples have different lengths"));
        }
        let mut mean = DVector::zeros(d);
        for s in samples {
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        if n > 1 {
            for s in samples {
                let r = DVector::from_column_slice(s) - &mean;
                cov += &r * r.transpose();
            }
            cov /= (n - 1) as f64;
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Restriction to the listed coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.dim()) {
            return Err(shape(format!("coordinate {bad} out of range")));
        }
        Ok(Self {
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]),
        })
    }
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let c = m
        .clone()
        .cholesky()
        .ok_or_else(|| domain("covariance is singular or indefinite after regularization"))?;
    let ld = 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((ld, c))
}

/// `(1/8) Δμᵀ Σ̄⁻¹ Δμ + ½ log(det Σ̄ / sqrt(det Σ₁ det Σ₂))`, `Σ̄ = (Σ₁+Σ₂)/2`.
/// Every covariance gets `1e-10·I` added first.
pub fn bhattacharyya(g1: &GaussianSummary, g2: &GaussianSummary) -> Result<f64> {
    let d = g1.dim();
    if g2.dim() != d {
        return Err(shape(format!("dimensions {d} and {} differ", g2.dim())));
    }
    let jitter = DMatrix::identity(d, d) * COVARIANCE_JITTER;
    let s1 = &g1.cov + &jitter;
    let s2 = &g2.cov + &jitter;
    let sbar = (&s1 + &s2) * 0.5;
    let (ld_bar, chol) = log_det_spd(&sbar)?;
    let (ld1, _) = log_det_spd(&s1)?;
    let (ld2, _) = log_det_spd(&s2)?;
    let dm = &g1.mean - &g2.mean;
    let maha = dm.dot(&chol.solve(&dm));
    Ok(0.125 * maha + 0.5 * (ld_bar - 0.5 * (ld1 + ld2)))
}

/// `∫ |F_a(x) − F_b(x)| dx` for the empirical CDFs of two sample sets.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(shape("wasserstein1 needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(domain("wasserstein1 samples must be finite"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut x = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(total)
}

/// Per-point and summed distances between model and reference pushforwards.
#[derive(Clone, Debug, PartialEq)]
pub struct W1Profile {
    pub per_point: Vec<f64>,
    pub sum: f64,
}

/// `predictions[point][particle][component]` against
/// `reference[point][replica][component]`: component-wise W1, averaged over
/// components per point, summed over points.
pub fn pushforward_w1(predictions: &[Vec<Vec<f64>>], reference: &[Vec<Vec<f64>>]) -> Result<W1Profile> {
    if predictions.len() != reference.len() {
        return Err(shape(format!(
            "{} prediction points but {} reference points",
            predictions.len(),
            reference.len()
        )));
    }
    let per_point = predictions
        .par_iter()
        .zip(reference)
        .map(|(p, r)| {
            let dim = p.first().ok_or_else(|| shape("no model samples"))?.len();
            if p.iter().chain(r).any(|s| s.len() != dim) {
                return Err(shape("samples disagree on output width"));
            }
            let mut acc = 0.0;
            for c in 0..dim {
                let a: Vec<f64> = p.iter().map(|s| s[c]).collect();
                let b: Vec<f64> = r.iter().map(|s| s[c]).collect();
                acc += wasserstein1(&a, &b)?;
            }
            Ok(acc / dim.max(1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let sum = per_point.iter().sum();
    Ok(W1Profile { per_point, sum })
}

/// Pushforward samples `[point][particle][component]` of flat particles.
pub fn ensemble_predictions<M: Pushforward>(
    model: &M,
    arch: &Architecture,
    particles: &[Vec<f64>],
    points: &[M::Point],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_particle = particles
        .par_iter()
        .map(|p| {
            let net = LayeredNet::from_params(arch, p)?;
            model.predict(&net, points)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..points.len())
        .map(|i| per_particle.iter().map(|pp| pp[i].clone()).collect())
        .collect())
}

/// Centered moving average; the window shrinks at the ends.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean over particles of `Σ_{j ∈ coords} |θ_j|`.
pub fn sparsity_l1(particles: &[Vec<f64>], coords: &[usize]) -> Result<f64> {
    if particles.is_empty() {
        return Err(shape("no particles"));
    }
    let mut total = 0.0;
    for p in particles {
        for &j in coords {
            total += p.get(j).ok_or_else(|| shape(format!("coordinate {j} out of range")))?.abs();
        }
    }
    Ok(total / particles.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(m: f64, v: f64) -> GaussianSummary {
        GaussianSummary::new(vec![m], vec![vec![v]]).unwrap()
    }

    #[test]
    fn bhattacharyya_examples() {
        assert!(bhattacharyya(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap().abs() < 1e-12);
        assert!((bhattacharyya(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 0.125).abs() < 1e-9);
        let d = bhattacharyya(&g1(0.0, 1.0), &g1(0.0, 4.0)).unwrap();
        assert!((d - 0.5 * (2.5f64 / 2.0).ln()).abs() < 1e-9);
        assert!((d - 0.11157).abs() < 1e-5);
    }

    #[test]
    fn bhattacharyya_errors() {
        assert!(bhattacharyya(&g1(0.0, 1.0), &GaussianSummary::from_samples(&[vec![0.0, 0.0]]).unwrap()).is_err());
        assert!(GaussianSummary::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
        let neg = g1(0.0, -1.0);
        assert!(bhattacharyya(&neg, &neg).is_err());
    }

    #[test]
    fn sample_covariance_and_marginal() {
        let g = GaussianSummary::from_samples(&[vec![0.0, 1.0, 5.0], vec![2.0, 3.0, 5.0]]).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 2.0, 5.0]);
        assert_eq!(g.cov[(0, 0)], 2.0);
        assert_eq!(g.cov[(0, 1)], 2.0);
        let m = g.marginal(&[0, 2]).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 5.0]);
        assert_eq!(m.cov[(1, 1)], 0.0);
        assert!(g.marginal(&[3]).is_err());
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(wasserstein1(&[], &[1.0]).is_err());
    }

    #[test]
    fn w1_unequal_sizes() {
        // F_a jumps to 1 at 0; F_b is 1/2 on [0, 2)
        assert!((wasserstein1(&[0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((wasserstein1(&[0.0, 0.0, 3.0], &[1.0]).unwrap() - (2.0 / 3.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn w1_homogeneous() {
        let a = [0.3, -1.2, 4.0];
        let b = [1.0, 0.5];
        let d = wasserstein1(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let b2: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        assert!((wasserstein1(&a2, &b2).unwrap() - 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn pushforward_identical_is_zero() {
        let p = vec![vec![vec![1.0, 2.0]; 3]; 4];
        let r = pushforward_w1(&p, &p).unwrap();
        assert_eq!(r.sum, 0.0);
        assert_eq!(r.per_point.len(), 4);
        let q = vec![vec![vec![1.0, 4.0]; 3]; 4];
        let r = pushforward_w1(&p, &q).unwrap();
        assert_eq!(r.per_point, vec![1.0; 4]);
        assert_eq!(r.sum, 4.0);
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_l1(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -3.0]], &[2]).unwrap(), 2.0);
        assert_eq!(sparsity_l1(&[vec![5.0, 0.0]], &[1]).unwrap(), 0.0);
        assert!(sparsity_l1(&[vec![5.0]], &[1]).is_err());
    }

    #[test]
    fn moving_average_edges() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 3), vec![1.5, 2.0, 3.0, 3.5]);
        assert_eq!(moving_average(&[7.0], 11), vec![7.0]);
    }
}
