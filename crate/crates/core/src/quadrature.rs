//! One-dimensional quadrature rules used for kernel tails and reference integrals.

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the three-term recurrence).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[order - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre over `panels` equal panels.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum();
        total += 0.5 * h * s;
    }
    total
}

/// Tanh-sinh (double exponential) quadrature on `[a, b]`. Handles integrable
/// endpoint singularities; the integrand is never evaluated at the endpoints.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    tanh_sinh_gaps(|x, _, _| f(x), a, b, tol)
}

/// Tanh-sinh where the integrand also receives the exact distances to both
/// endpoints, so singular factors like `|x - a|^-s` keep full precision
/// even when `x` rounds onto an endpoint.
pub fn tanh_sinh_gaps<F: Fn(f64, f64, f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let width = b - a;
    let half = 0.5 * width;
    let tmax = 6.5;
    // Pair of nodes at +-t: distance `gap` from each endpoint.
    let pair = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let c = s.cosh();
        let weight = FRAC_PI_2 * t.cosh() / (c * c);
        let gap = half / (s.exp() * c);
        if !(weight > 0.0) || !(gap > 0.0) {
            return 0.0;
        }
        let far = width - gap;
        weight * half * (f(b - gap, far, gap) + f(a + gap, gap, far))
    };
    let mut h = 1.0;
    let mut sum = FRAC_PI_2 * half * f(a + half, half, half);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        sum += pair(k as f64 * h);
        k += 1;
    }
    let mut estimate = h * sum;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= tmax {
            sum += pair(k as f64 * h);
            k += 2;
        }
        let next = h * sum;
        if (next - estimate).abs() <= tol * next.abs().max(1e-300) {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let v = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-14);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        let v = tanh_sinh_gaps(|_, _, r| r.powf(-0.7), 0.0, 1.0, 1e-14);
        assert!((v - 1.0 / 0.3).abs() < 1e-10, "{v}");
        let v = tanh_sinh(|x| x.exp(), -1.0, 2.0, 1e-14);
        assert!((v - (2f64.exp() - (-1f64).exp())).abs() < 1e-13);
    }
}
