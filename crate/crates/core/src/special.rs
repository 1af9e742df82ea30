//! Gamma function via the Lanczos approximation (g = 7, nine coefficients).

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn known_values() {
        assert!(rel(gamma(0.5), PI.sqrt()) < 1e-12);
        assert!(rel(gamma(1.0), 1.0) < 1e-12);
        assert!(rel(gamma(3.0), 2.0) < 1e-12);
        assert!(rel(gamma(1.5), PI.sqrt() / 2.0) < 1e-12);
    }

    #[test]
    fn factorials_up_to_thirty() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            // Γ(n + 1) = n!
            fact *= n as f64;
            assert!(rel(gamma(n as f64 + 1.0), fact) < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn recurrence_on_fine_grid() {
        // Γ(x + 1) = x Γ(x) on [0.1, 29]
        let mut x = 0.1;
        while x < 29.0 {
            assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-10, "x = {x}");
            x += 0.037;
        }
    }
}
