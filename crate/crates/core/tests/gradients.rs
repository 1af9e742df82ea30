use csvgd::likelihood::{ParamLayout, Pushforward, RegressionTarget, StressModel, Target};
use csvgd::mechanics::{generate_data, DataSpec, TruthModel};
use csvgd::net::{Architecture, LayeredNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-3;

/// Fourth-order central difference of `f` along coordinate `j`.
fn diff(f: impl Fn(&[f64]) -> f64, x: &[f64], j: usize) -> f64 {
    let at = |k: f64| {
        let mut y = x.to_vec();
        y[j] += k * H;
        f(&y)
    };
    (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * H)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_net(arch: &Architecture, rng: &mut ChaCha8Rng, scale: f64) -> LayeredNet {
    let mask = arch.nonneg_coordinates();
    let params: Vec<f64> = mask
        .iter()
        .map(|&nonneg| {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            if nonneg {
                v.abs()
            } else {
                v
            }
        })
        .collect();
    LayeredNet::from_params(arch, &params).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arch = Architecture::softplus_chain(&[3, 8, 8, 1], vec![false; 3], true).unwrap();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..6 {
        let net = random_net(&arch, &mut rng, 0.7);
        let theta = net.flatten().values;
        let x = random_vec(&mut rng, 3);
        let g = net.grad_params(&x, &[1.0]).unwrap();
        let f = |t: &[f64]| LayeredNet::from_params(&arch, t).unwrap().forward(&x).unwrap()[0];
        for j in 0..theta.len() {
            worst = worst.max(rel_err(g[j], diff(f, &theta, j)));
            checked += 1;
        }
    }
    assert!(checked >= 500, "{checked}");
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let arch = Architecture::softplus_chain(&[3, 8, 8, 2], vec![false; 3], true).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let net = random_net(&arch, &mut rng, 0.7);
        let x = random_vec(&mut rng, 3);
        let jac = net.grad_input(&x).unwrap();
        for i in 0..3 {
            for o in 0..2 {
                let fd = diff(|y| net.forward(y).unwrap()[o], &x, i);
                worst = worst.max(rel_err(jac[o][i], fd));
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn tangent_gradient_matches_differences_of_directional_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let arch = Architecture::icnn(&[3, 8, 8, 1]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let net = random_net(&arch, &mut rng, 0.5);
        let theta = net.flatten().values;
        let x = random_vec(&mut rng, 3);
        let v = random_vec(&mut rng, 3);
        let mut g = vec![0.0; theta.len()];
        net.tangent_grad_params(&x, &v, &[0.3], &[1.0], &mut g).unwrap();
        let objective = |t: &[f64]| {
            let n = LayeredNet::from_params(&arch, t).unwrap();
            let (y, dy) = n.jvp(&x, &v).unwrap();
            0.3 * y[0] + dy[0]
        };
        for j in 0..theta.len() {
            worst = worst.max(rel_err(g[j], diff(objective, &theta, j)));
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn jvp_matches_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let arch = Architecture::softplus_chain(&[3, 5, 2], vec![false, true], true).unwrap();
    let net = random_net(&arch, &mut rng, 1.0);
    let x = random_vec(&mut rng, 3);
    let v = random_vec(&mut rng, 3);
    let (y, dy) = net.jvp(&x, &v).unwrap();
    assert_eq!(y, net.forward(&x).unwrap());
    let jac = net.grad_input(&x).unwrap();
    for o in 0..2 {
        let expect: f64 = (0..3).map(|i| jac[o][i] * v[i]).sum();
        assert!((dy[o] - expect).abs() < 1e-12);
    }
}

#[test]
fn stress_likelihood_score_matches_differences() {
    let spec = DataSpec {
        n_train: 6,
        n_test: 3,
        ..DataSpec::default()
    };
    let data = generate_data(&TruthModel::default(), &spec, 3).unwrap();
    let target = RegressionTarget::new(StressModel, data.train, 0.01).unwrap();
    let arch = Architecture::icnn(&[3, 6, 5, 1]).unwrap();
    let layout = ParamLayout::Net(arch.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let net = random_net(&arch, &mut rng, 0.4);
    let theta = net.flatten().values;
    let score = target.score(&net).unwrap();
    let eval = target.evaluate(&layout, &theta).unwrap();
    assert_eq!(eval.score, score);
    let mut worst: f64 = 0.0;
    let ll = |t: &[f64]| target.log_likelihood(&LayeredNet::from_params(&arch, t).unwrap()).unwrap();
    for j in 0..theta.len() {
        worst = worst.max(rel_err(score[j], diff(ll, &theta, j)));
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
    // the prepared-point path and the raw input agree
    let pts = target.points();
    assert_eq!(
        StressModel.predict(&net, &pts[..1]).unwrap(),
        StressModel.predict(&net, &[StressModel.prepare(&target.dataset().inputs[0]).unwrap()]).unwrap()
    );
}
