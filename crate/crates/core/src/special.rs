//! Gamma and zeta functions, and the normalization constants of the fractional operators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Euler's Gamma function (Lanczos, g = 7, with reflection below 1/2).
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Parameter("gamma of NaN".into()));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::GammaPole(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    // Exact factorials keep small integer arguments exact.
    if x == x.floor() && x <= 23.0 {
        return (1..x as u64).map(|k| k as f64).product();
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Bernoulli numbers `B_2, B_4, ..., B_22`.
const BERNOULLI: [f64; 11] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
];

/// Hurwitz zeta `sum_{k>=0} (k + a)^-s` (analytically continued for `s < 1`), `a > 0`, `s != 1`.
pub fn hurwitz_zeta(s: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("Hurwitz zeta needs a > 0, got {a}")));
    }
    if s == 1.0 || !s.is_finite() {
        return Err(Error::Parameter(format!("Hurwitz zeta is undefined at s = {s}")));
    }
    const K: usize = 16;
    let mut sum = 0.0;
    for k in (0..K).rev() {
        sum += (a + k as f64).powf(-s);
    }
    // Euler-Maclaurin tail.
    let x = a + K as f64;
    let xs = x.powf(-s);
    sum += x * xs / (s - 1.0) + 0.5 * xs;
    let mut rising = s; // s (s+1) ... (s+2j-2)
    let mut fact = 2.0; // (2j)!
    let mut xp = xs / x; // x^(-s-2j+1)
    for (j, b) in BERNOULLI.iter().enumerate() {
        let term = b / fact * rising * xp;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        let m = 2.0 * (j as f64 + 1.0);
        rising *= (s + m - 1.0) * (s + m);
        fact *= (m + 1.0) * (m + 2.0);
        xp /= x * x;
    }
    Ok(sum)
}

/// Riemann zeta for real `s != 1`.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    hurwitz_zeta(s, 1.0)
}

/// Dirichlet beta `sum_k (-1)^k (2k+1)^-s`.
pub fn dirichlet_beta(s: f64) -> Result<f64> {
    Ok(4f64.powf(-s) * (hurwitz_zeta(s, 0.25)? - hurwitz_zeta(s, 0.75)?))
}

/// Epstein zeta of the integer lattice, `sum_{j != 0} |j|^-s`, analytically continued.
pub fn lattice_zeta(n: usize, s: f64) -> Result<f64> {
    match n {
        1 => Ok(2.0 * riemann_zeta(s)?),
        2 => Ok(4.0 * riemann_zeta(s / 2.0)? * dirichlet_beta(s / 2.0)?),
        _ => Err(Error::Unsupported(format!("lattice zeta in dimension {n}"))),
    }
}

/// Normalization constants for dimension `n` and order `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracConstants {
    pub alpha: f64,
    pub n: usize,
    /// Constant of the fractional gradient and divergence.
    pub mu: f64,
    /// Constant of the fractional Laplacian; negative.
    pub nu: f64,
    /// Constant of the Riesz transform kernel.
    pub riesz_c: f64,
    /// Volume of the unit ball.
    pub omega_n: f64,
}

impl FracConstants {
    /// Surface measure of the unit sphere, `n * omega_n`.
    pub fn sphere(&self) -> f64 {
        self.n as f64 * self.omega_n
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn constants(n: usize, alpha: f64) -> Result<FracConstants> {
    check_alpha(alpha)?;
    if n != 1 && n != 2 {
        return Err(Error::Parameter(format!("dimension must be 1 or 2, got {n}")));
    }
    let nf = n as f64;
    let pre = 2f64.powf(alpha) * PI.powf(-nf / 2.0);
    let mu = pre * gamma((nf + alpha + 1.0) / 2.0)? / gamma((1.0 - alpha) / 2.0)?;
    let nu = pre * gamma((nf + alpha) / 2.0)? / gamma(-alpha / 2.0)?;
    let riesz_c = PI.powf(-(nf + 1.0) / 2.0) * gamma((nf + 1.0) / 2.0)?;
    let omega_n = PI.powf(nf / 2.0) / gamma((nf + 2.0) / 2.0)?;
    Ok(FracConstants { alpha, n, mu, nu, riesz_c, omega_n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(5.0).unwrap(), 24.0);
        assert_eq!(gamma(1.0).unwrap(), 1.0);
        assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) <= 1e-14);
        assert!(rel(gamma(-0.5).unwrap(), -2.0 * PI.sqrt()) <= 1e-13);
        // Gamma(20) = 19!
        assert!(rel(gamma(20.0).unwrap(), 121_645_100_408_832_000.0) <= 1e-15);
        assert!(matches!(gamma(0.0), Err(Error::GammaPole(_))));
        assert!(matches!(gamma(-3.0), Err(Error::GammaPole(_))));
    }

    #[test]
    fn gamma_half_integers_on_range() {
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!), and reflection for negative half-integers.
        let mut exact = PI.sqrt();
        for k in 0..19 {
            let x = k as f64 + 0.5;
            assert!(rel(gamma(x).unwrap(), exact) <= 1e-13, "x = {x}");
            exact *= x;
        }
        let mut exact = PI.sqrt();
        for k in 1..6 {
            let x = 0.5 - k as f64;
            exact /= x;
            assert!(rel(gamma(x).unwrap(), exact) <= 1e-13, "x = {x}");
        }
    }

    #[test]
    fn zeta_values() {
        assert!(rel(riemann_zeta(2.0).unwrap(), PI * PI / 6.0) <= 1e-14);
        assert!(rel(riemann_zeta(4.0).unwrap(), PI.powi(4) / 90.0) <= 1e-14);
        assert!(rel(riemann_zeta(0.0).unwrap(), -0.5) <= 1e-14);
        assert!(rel(riemann_zeta(-1.0).unwrap(), -1.0 / 12.0) <= 1e-13);
        assert!(rel(riemann_zeta(0.5).unwrap(), -1.460_354_508_809_586_8) <= 1e-13);
        assert!(rel(dirichlet_beta(2.0).unwrap(), 0.915_965_594_177_219) <= 1e-14);
        assert!(rel(dirichlet_beta(0.0).unwrap(), 0.5) <= 1e-13);
        // Hurwitz at a = 1/2: (2^s - 1) zeta(s).
        let s = 1.7;
        let lhs = hurwitz_zeta(s, 0.5).unwrap();
        assert!(rel(lhs, (2f64.powf(s) - 1.0) * riemann_zeta(s).unwrap()) <= 1e-13);
    }

    #[test]
    fn lattice_zeta_converges_to_direct_sum() {
        // s = 4 in 2D: direct sum converges quickly enough to compare.
        let mut direct = 0.0;
        let m = 400i64;
        for i in -m..=m {
            for j in -m..=m {
                if i != 0 || j != 0 {
                    direct += ((i * i + j * j) as f64).powf(-2.0);
                }
            }
        }
        assert!(rel(lattice_zeta(2, 4.0).unwrap(), direct) <= 1e-5);
    }

    #[test]
    fn constants_one_half() {
        let c = constants(1, 0.5).unwrap();
        let expected = (2.0 / PI).sqrt() / 4.0;
        assert!(rel(c.mu, expected) <= 1e-14);
        assert!(rel(c.nu, -expected) <= 1e-14);
        assert!(rel(c.riesz_c, 1.0 / PI) <= 1e-15);
        assert!(rel(c.omega_n, 2.0) <= 1e-14);
        let c2 = constants(2, 0.5).unwrap();
        assert!(rel(c2.omega_n, PI) <= 1e-15);
        assert!(constants(1, 1.0).is_err());
        assert!(constants(1, 0.0).is_err());
    }

    #[test]
    fn nu_is_negative() {
        for n in 1..=2 {
            for k in 1..10 {
                let c = constants(n, k as f64 / 10.0).unwrap();
                assert!(c.nu < 0.0 && c.mu > 0.0);
            }
        }
    }
}
