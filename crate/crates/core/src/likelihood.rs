//! Likelihood targets: a synthetic multivariate normal and Gaussian-noise
//! regression through a network pushforward.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{domain, shape, Result};
use crate::mechanics::{invariant_derivatives, invariants, from_voigt, to_voigt, REFERENCE_INVARIANTS};
use crate::net::{Architecture, LayeredNet};

/// How a particle's flat parameter vector is interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLayout {
    /// A bare vector (the MVN demo).
    Flat(usize),
    Net(Architecture),
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        match self {
            ParamLayout::Flat(n) => *n,
            ParamLayout::Net(a) => a.num_params(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nonneg_coordinates(&self) -> Vec<bool> {
        match self {
            ParamLayout::Flat(n) => vec![false; *n],
            ParamLayout::Net(a) => a.nonneg_coordinates(),
        }
    }

    pub fn arch(&self) -> Option<&Architecture> {
        match self {
            ParamLayout::Flat(_) => None,
            ParamLayout::Net(a) => Some(a),
        }
    }

    /// Number of coordinates counted as weights with `|θ| > threshold`.
    pub fn active_count(&self, theta: &[f64], threshold: f64) -> usize {
        match self {
            ParamLayout::Flat(_) => theta.iter().filter(|t| t.abs() > threshold).count(),
            ParamLayout::Net(a) => theta
                .iter()
                .zip(a.weight_coordinates())
                .filter(|(t, w)| *w && t.abs() > threshold)
                .count(),
        }
    }
}

/// Score and data misfit of one particle.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `∇θ log π(D | θ)`.
    pub score: Vec<f64>,
    /// Mean squared data residual (or the target's analogue).
    pub mse: f64,
}

/// Anything the Stein engine can drive particles toward.
pub trait Target: Sync {
    fn evaluate(&self, layout: &ParamLayout, theta: &[f64]) -> Result<Evaluation>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvnTarget {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl MvnTarget {
    pub fn new(mean: Vec<f64>, precision: Vec<Vec<f64>>) -> Result<Self> {
        let n = mean.len();
        if precision.len() != n || precision.iter().any(|r| r.len() != n) {
            return Err(shape(format!("precision must be {n}x{n}")));
        }
        let p = DMatrix::from_fn(n, n, |i, j| precision[i][j]);
        if (&p - p.transpose()).amax() > 1e-12 {
            return Err(domain("precision matrix is not symmetric"));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            precision: p,
        })
    }

    /// `μ = (1, 2, 3)` with a weakly identified third coordinate.
    pub fn demo() -> Self {
        Self::new(
            vec![1.0, 2.0, 3.0],
            vec![
                vec![2.0, 1.0, 0.0],
                vec![1.0, 2.0, 0.0],
                vec![0.0, 0.0, 0.0025],
            ],
        )
        .expect("demo target is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `Σ = precision⁻¹`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        self.precision
            .clone()
            .try_inverse()
            .ok_or_else(|| domain("precision matrix is singular"))
    }

    /// `−Σ⁻¹(θ − μ)`.
    pub fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(shape(format!("theta has {} components, target has {}", theta.len(), self.dim())));
        }
        let d = DVector::from_column_slice(theta) - &self.mean;
        Ok((-(&self.precision * d)).iter().copied().collect())
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(shape("dimension mismatch"));
        }
        let d = DVector::from_column_slice(theta) - &self.mean;
        Ok(-0.5 * d.dot(&(&self.precision * &d)))
    }
}

impl Target for MvnTarget {
    fn evaluate(&self, _layout: &ParamLayout, theta: &[f64]) -> Result<Evaluation> {
        let score = self.score(theta)?;
        // Mahalanobis distance per dimension stands in for a data misfit.
        let mse = -2.0 * self.log_density(theta)? / self.dim() as f64;
        Ok(Evaluation { score, mse })
    }
}

/// The map `x ↦ ŷ(x; θ)` a regression target is built on.
pub trait Pushforward: Sync {
    /// Per-sample data precomputed once from the raw input row.
    type Point: Sync + Send;

    fn prepare(&self, x: &[f64]) -> Result<Self::Point>;
    fn output_dim(&self, arch: &Architecture) -> usize;
    fn predict(&self, net: &LayeredNet, points: &[Self::Point]) -> Result<Vec<Vec<f64>>>;
    /// `∂/∂θ Σⱼ upstreamⱼ · ŷ(xⱼ; θ)` in flat layout order.
    fn pullback(&self, net: &LayeredNet, points: &[Self::Point], upstream: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// `ŷ = NN(x)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DirectNet;

impl Pushforward for DirectNet {
    type Point = Vec<f64>;

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    fn output_dim(&self, arch: &Architecture) -> usize {
        arch.output_dim()
    }

    fn predict(&self, net: &LayeredNet, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        points.iter().map(|x| net.forward(x)).collect()
    }

    fn pullback(&self, net: &LayeredNet, points: &[Vec<f64>], upstream: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; net.arch().num_params()];
        for (x, u) in points.iter().zip(upstream) {
            let g = net.grad_params(x, u)?;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok(grad)
    }
}

/// Strain (Voigt row) ↦ stress (Voigt row) through the normalized network
/// potential on the strain invariants.
#[derive(Clone, Copy, Debug, Default)]
pub struct StressModel;

/// Invariants and their strain derivatives (Voigt rows) at one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainFeatures {
    pub invariants: [f64; 3],
    pub derivatives: [[f64; 6]; 3],
}

const REFERENCE_WEIGHTS: [f64; 3] = [2.0, 4.0, 2.0];

impl StressModel {
    fn reference_gradient(net: &LayeredNet) -> Result<Vec<f64>> {
        net.input_gradient(&REFERENCE_INVARIANTS)
    }

    fn check(net: &LayeredNet) -> Result<()> {
        let a = net.arch();
        if a.input_dim() != 3 || a.output_dim() != 1 {
            return Err(shape(format!(
                "stress model needs a 3-input scalar network, got {}",
                net
            )));
        }
        Ok(())
    }
}

impl Pushforward for StressModel {
    type Point = StrainFeatures;

    fn prepare(&self, x: &[f64]) -> Result<StrainFeatures> {
        if x.len() != 6 {
            return Err(shape(format!("strain rows need 6 Voigt components, got {}", x.len())));
        }
        let e = from_voigt(x);
        let inv = invariants(&e)?;
        let d = invariant_derivatives(&e)?;
        Ok(StrainFeatures {
            invariants: inv,
            derivatives: [to_voigt(&d[0]), to_voigt(&d[1]), to_voigt(&d[2])],
        })
    }

    fn output_dim(&self, _arch: &Architecture) -> usize {
        6
    }

    fn predict(&self, net: &LayeredNet, points: &[StrainFeatures]) -> Result<Vec<Vec<f64>>> {
        Self::check(net)?;
        let g_ref = Self::reference_gradient(net)?;
        let n: f64 = g_ref.iter().zip(REFERENCE_WEIGHTS).map(|(g, w)| g * w).sum();
        points
            .iter()
            .map(|p| {
                let g = net.input_gradient(&p.invariants)?;
                let d3 = g[2] - n / (2.0 * p.invariants[2].sqrt());
                let dphi = [g[0], g[1], d3];
                Ok((0..6)
                    .map(|c| (0..3).map(|i| dphi[i] * p.derivatives[i][c]).sum())
                    .collect())
            })
            .collect()
    }

    fn pullback(&self, net: &LayeredNet, points: &[StrainFeatures], upstream: &[Vec<f64>]) -> Result<Vec<f64>> {
        Self::check(net)?;
        let mut grad = vec![0.0; net.arch().num_params()];
        let mut ref_weight = 0.0;
        for (p, u) in points.iter().zip(upstream) {
            // Σ_c u_c S_c = v · ∇NN(I) − w · (m · ∇NN(ref))
            let v: Vec<f64> = (0..3)
                .map(|i| (0..6).map(|c| u[c] * p.derivatives[i][c]).sum())
                .collect();
            ref_weight += v[2] / (2.0 * p.invariants[2].sqrt());
            net.accumulate_tangent_grad(&p.invariants, &v, &[0.0], &[1.0], &mut grad);
        }
        if ref_weight != 0.0 {
            net.accumulate_tangent_grad(&REFERENCE_INVARIANTS, &REFERENCE_WEIGHTS, &[0.0], &[-ref_weight], &mut grad);
        }
        Ok(grad)
    }
}

/// Gaussian-noise regression `log π(D|θ) = −(1/2σ²) Σᵢ |yᵢ − ŷ(xᵢ; θ)|²`.
pub struct RegressionTarget<M: Pushforward> {
    model: M,
    dataset: Dataset,
    points: Vec<M::Point>,
    noise_var: f64,
}

impl<M: Pushforward> RegressionTarget<M> {
    pub fn new(model: M, dataset: Dataset, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(domain(format!("noise variance {noise_var} must be > 0")));
        }
        if dataset.is_empty() {
            return Err(domain("regression dataset is empty"));
        }
        let points = dataset
            .inputs
            .iter()
            .map(|x| model.prepare(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            dataset,
            points,
            noise_var,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn points(&self) -> &[M::Point] {
        &self.points
    }

    fn check_net(&self, net: &LayeredNet) -> Result<()> {
        let out = self.model.output_dim(net.arch());
        if out != self.dataset.output_dim() {
            return Err(shape(format!(
                "model produces {out} outputs, dataset has {}",
                self.dataset.output_dim()
            )));
        }
        Ok(())
    }

    fn residuals(&self, net: &LayeredNet) -> Result<Vec<Vec<f64>>> {
        self.check_net(net)?;
        let pred = self.model.predict(net, &self.points)?;
        Ok(pred
            .iter()
            .zip(&self.dataset.outputs)
            .map(|(p, y)| p.iter().zip(y).map(|(a, b)| a - b).collect())
            .collect())
    }

    pub fn log_likelihood(&self, net: &LayeredNet) -> Result<f64> {
        let r = self.residuals(net)?;
        let sse: f64 = r.iter().flatten().map(|v| v * v).sum();
        Ok(-sse / (2.0 * self.noise_var))
    }

    pub fn score(&self, net: &LayeredNet) -> Result<Vec<f64>> {
        Ok(self.evaluate_net(net)?.score)
    }

    pub fn mse(&self, net: &LayeredNet) -> Result<f64> {
        let r = self.residuals(net)?;
        let n = r.iter().map(Vec::len).sum::<usize>().max(1);
        Ok(r.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64)
    }

    pub fn evaluate_net(&self, net: &LayeredNet) -> Result<Evaluation> {
        let r = self.residuals(net)?;
        let n = r.iter().map(Vec::len).sum::<usize>().max(1);
        let mse = r.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        let upstream: Vec<Vec<f64>> = r
            .iter()
            .map(|row| row.iter().map(|v| -v / self.noise_var).collect())
            .collect();
        let score = self.model.pullback(net, &self.points, &upstream)?;
        Ok(Evaluation { score, mse })
    }
}

impl<M: Pushforward> Target for RegressionTarget<M> {
    fn evaluate(&self, layout: &ParamLayout, theta: &[f64]) -> Result<Evaluation> {
        let arch = layout
            .arch()
            .ok_or_else(|| shape("regression targets need a network layout"))?;
        let net = LayeredNet::from_params(arch, theta)?;
        self.evaluate_net(&net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Architecture};

    #[test]
    fn mvn_score_examples() {
        let t = MvnTarget::demo();
        assert_eq!(t.score(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(t.score(&[2.0, 2.0, 3.0]).unwrap(), vec![-2.0, -1.0, 0.0]);
        let s = t.score(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(&s[..2], &[0.0, 0.0]);
        assert!((s[2] + 0.0025).abs() < 1e-15);
        assert!(t.score(&[1.0]).is_err());
    }

    #[test]
    fn mvn_rejects_asymmetric_precision() {
        assert!(MvnTarget::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
    }

    fn linear_net(a: f64) -> LayeredNet {
        let arch = Architecture {
            layer_widths: vec![1, 1],
            activations: vec![Activation::Identity],
            nonneg_mask: vec![false],
            biases: false,
        };
        LayeredNet::from_params(&arch, &[a]).unwrap()
    }

    fn scalar_data(x: f64, y: f64) -> Dataset {
        Dataset::new(vec!["x".into()], vec!["y".into()], vec![vec![x]], vec![vec![y]], 0.0).unwrap()
    }

    #[test]
    fn regression_values() {
        let net = linear_net(2.0);
        // perfect fit
        let t = RegressionTarget::new(DirectNet, scalar_data(1.5, 3.0), 1.0).unwrap();
        assert_eq!(t.log_likelihood(&net).unwrap(), 0.0);
        assert_eq!(t.score(&net).unwrap(), vec![0.0]);
        // residual 2
        let t = RegressionTarget::new(DirectNet, scalar_data(1.0, 4.0), 1.0).unwrap();
        assert_eq!(t.log_likelihood(&net).unwrap(), -2.0);
        let t2 = RegressionTarget::new(DirectNet, scalar_data(1.0, 4.0), 2.0).unwrap();
        assert_eq!(t2.log_likelihood(&net).unwrap(), -1.0);
    }

    #[test]
    fn linear_model_score_is_residual_times_input() {
        // ŷ = θ·a with a = 3, y = 10, θ = 2: residual y − ŷ = 4
        let t = RegressionTarget::new(DirectNet, scalar_data(3.0, 10.0), 0.5).unwrap();
        let s = t.score(&linear_net(2.0)).unwrap();
        assert_eq!(s, vec![4.0 / 0.5 * 3.0]);
    }

    #[test]
    fn invalid_regression_targets() {
        assert!(RegressionTarget::new(DirectNet, scalar_data(1.0, 1.0), 0.0).is_err());
        let empty = Dataset::new(vec!["x".into()], vec!["y".into()], vec![], vec![], 0.0).unwrap();
        assert!(RegressionTarget::new(DirectNet, empty, 1.0).is_err());
        let t = RegressionTarget::new(DirectNet, scalar_data(1.0, 1.0), 1.0).unwrap();
        let wide = Architecture::softplus_chain(&[1, 2], vec![false], false).unwrap();
        let net = LayeredNet::zeros(wide).unwrap();
        assert!(t.score(&net).is_err());
    }

    #[test]
    fn flat_layout_active_count() {
        let l = ParamLayout::Flat(3);
        assert_eq!(l.active_count(&[0.0, 1e-4, -2.0], 1e-3), 1);
    }
}
