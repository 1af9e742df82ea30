use csvgd::likelihood::{Pushforward, StressModel};
use csvgd::mechanics::{
    cycle_work, invariants, stress_from_potential, test_path_strain, to_voigt, NormalizedNnPotential, Potential,
    TruthModel,
};
use csvgd::net::Architecture;
use csvgd::svgd::Ensemble;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let v = rng.gen_range(-scale..scale);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn energy(p: &impl Potential, e: &Matrix3<f64>) -> f64 {
    p.value(invariants(e).unwrap()).unwrap()
}

/// `S_ij = ∂Ψ/∂E_ij`; off-diagonal entries move symmetrically, so the
/// difference quotient sees `S_ij + S_ji`.
fn fd_stress(p: &impl Potential, e: &Matrix3<f64>, h: f64) -> Matrix3<f64> {
    let mut s = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut d = Matrix3::zeros();
            d[(i, j)] = h;
            d[(j, i)] = h;
            let at = |k: f64| energy(p, &(e + d * k));
            let q = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
            let v = if i == j { q } else { q / 2.0 };
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

#[test]
fn random_icnn_particles_are_stress_free_at_reference() {
    let arch = Architecture::icnn(&[3, 30, 30, 1]).unwrap();
    let ens = Ensemble::init_network(&arch, 100, 2024).unwrap();
    let zero = StressModel.prepare(&to_voigt(&Matrix3::zeros())).unwrap();
    let mut worst: f64 = 0.0;
    for p in &ens.particles {
        let net = csvgd::net::LayeredNet::from_params(&arch, p).unwrap();
        let s = StressModel.predict(&net, std::slice::from_ref(&zero)).unwrap();
        let norm = s[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(norm);
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn truth_stress_matches_energy_differences() {
    let truth = TruthModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let e = random_sym(&mut rng, 0.2);
        let s = stress_from_potential(&truth, &e).unwrap();
        let fd = fd_stress(&truth, &e, 1e-4);
        worst = worst.max((s - fd).amax() / s.amax().max(1e-6));
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn network_stress_matches_energy_differences() {
    let arch = Architecture::icnn(&[3, 8, 8, 1]).unwrap();
    let ens = Ensemble::init_network(&arch, 5, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for p in &ens.particles {
        let net = csvgd::net::LayeredNet::from_params(&arch, p).unwrap();
        let pot = NormalizedNnPotential::new(&net).unwrap();
        let e = random_sym(&mut rng, 0.2);
        let s = stress_from_potential(&pot, &e).unwrap();
        let fd = fd_stress(&pot, &e, 1e-4);
        assert!((s - fd).amax() <= 1e-6 * s.amax().max(1e-6), "{s} vs {fd}");
        let pred = StressModel.predict(&net, &[StressModel.prepare(&to_voigt(&e)).unwrap()]).unwrap();
        let voigt = to_voigt(&s);
        for (a, b) in pred[0].iter().zip(voigt) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }
}

#[test]
fn closed_strain_cycles_do_no_work() {
    let truth = TruthModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let arch = Architecture::icnn(&[3, 8, 8, 1]).unwrap();
    let ens = Ensemble::init_network(&arch, 3, 7).unwrap();
    for k in 0..5 {
        let center = random_sym(&mut rng, 0.1);
        let a = random_sym(&mut rng, 0.08);
        let b = random_sym(&mut rng, 0.08);
        let w = cycle_work(&truth, &center, &a, &b, 512).unwrap();
        assert!(w.abs() < 1e-6, "truth cycle {k}: {w}");
        let net = csvgd::net::LayeredNet::from_params(&arch, &ens.particles[k % 3]).unwrap();
        let w = cycle_work(&NormalizedNnPotential::new(&net).unwrap(), &center, &a, &b, 512).unwrap();
        assert!(w.abs() < 1e-6, "network cycle {k}: {w}");
    }
}

#[test]
fn test_path_is_uniaxial_with_lateral_contraction() {
    let e = test_path_strain(0.21).unwrap();
    // F = diag(1+δ, √(1+δ), √(1+δ)), E = (FᵀF − I)/2
    assert!((e[(0, 0)] - 0.5 * (1.21f64.powi(2) - 1.0)).abs() < 1e-12);
    assert!((e[(1, 1)] - 0.5 * 0.21).abs() < 1e-12);
    assert!((e[(2, 2)] - 0.5 * 0.21).abs() < 1e-12);
    assert_eq!(e[(0, 1)], 0.0);
}
