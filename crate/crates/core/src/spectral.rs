//! Fourier-multiplier operators on the periodic box.
//!
//! Frequencies are `xi_k = k / L` with `k` in `{-N/2, ..., N/2 - 1}`; index
//! `N/2` carries the negative Nyquist frequency. Symbols are applied to the
//! full complex spectrum and the real part of the inverse transform is kept,
//! which symmetrizes every multiplier; odd symbols therefore vanish on the
//! Nyquist modes.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::special::check_alpha;

#[derive(Clone)]
pub struct SpectralOperators {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed frequency `k / L` per index, per axis.
    freqs: [Vec<f64>; 2],
}

impl std::fmt::Debug for SpectralOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperators").field("grid", &self.grid).finish()
    }
}

type Spectrum = Vec<Complex64>;

impl SpectralOperators {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis = |a: usize| -> Vec<f64> {
            if a >= grid.dim() {
                return Vec::new();
            }
            let l = grid.length(a);
            (0..n)
                .map(|k| if k < n / 2 { k as f64 / l } else { (k as f64 - n as f64) / l })
                .collect()
        };
        SpectralOperators { grid: grid.clone(), forward, inverse, freqs: [axis(0), axis(1)] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        fft.process(data);
        if self.grid.dim() == 2 {
            let mut t = transpose(data, n);
            fft.process(&mut t);
            data.copy_from_slice(&transpose(&t, n));
        }
    }

    fn forward(&self, u: &[f64]) -> Spectrum {
        let mut c: Spectrum = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut c, &self.forward);
        c
    }

    fn inverse_real(&self, mut c: Spectrum) -> Vec<f64> {
        self.transform(&mut c, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        c.iter().map(|z| z.re * scale).collect()
    }

    /// Frequency vector at flat index `k`.
    fn xi(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.grid.multi_index(k);
        if self.grid.dim() == 1 {
            [self.freqs[0][i], 0.0]
        } else {
            [self.freqs[0][i], self.freqs[1][j]]
        }
    }

    fn apply<S: Fn([f64; 2]) -> Complex64>(&self, hat: &Spectrum, symbol: S) -> Vec<f64> {
        let out: Spectrum = hat.iter().enumerate().map(|(k, z)| z * symbol(self.xi(k))).collect();
        self.inverse_real(out)
    }

    fn check_scalar(&self, f: &GridField) -> Result<()> {
        self.grid.check_same(f.grid())?;
        f.require_scalar()
    }

    fn check_vector(&self, f: &GridField) -> Result<()> {
        self.grid.check_same(f.grid())?;
        f.require_vector()
    }

    fn scalar(&self, data: Vec<f64>) -> GridField {
        GridField::from_parts(&self.grid, 1, data)
    }

    fn vector(&self, parts: Vec<Vec<f64>>) -> GridField {
        let k = parts.len();
        GridField::from_parts(&self.grid, k, parts.concat())
    }

    /// Multiplier `|2 pi xi|^order` for any `order > 0`.
    pub fn laplacian_power(&self, f: &GridField, order: f64) -> Result<GridField> {
        self.check_scalar(f)?;
        if !(order > 0.0) || !order.is_finite() {
            return Err(Error::Parameter(format!("order must be positive, got {order}")));
        }
        let hat = self.forward(f.data());
        Ok(self.scalar(self.apply(&hat, |xi| Complex64::new(radial(xi, order), 0.0))))
    }

    /// Real radial multiplier `m(|2 pi xi|)`.
    pub fn radial_multiplier<M: Fn(f64) -> f64>(&self, f: &GridField, m: M) -> Result<GridField> {
        self.check_scalar(f)?;
        let hat = self.forward(f.data());
        Ok(self.scalar(self.apply(&hat, |xi| Complex64::new(m(2.0 * PI * norm(xi)), 0.0))))
    }

    /// `(-Delta)^(alpha/2)`, symbol `|2 pi xi|^alpha`.
    pub fn laplacian(&self, f: &GridField, alpha: f64) -> Result<GridField> {
        check_alpha(alpha)?;
        self.laplacian_power(f, alpha)
    }

    /// Fractional gradient, symbol `2 pi i xi_j |2 pi xi|^(alpha - 1)`.
    pub fn gradient(&self, f: &GridField, alpha: f64) -> Result<GridField> {
        check_alpha(alpha)?;
        self.check_scalar(f)?;
        let hat = self.forward(f.data());
        let parts = (0..self.grid.dim())
            .map(|j| self.apply(&hat, |xi| grad_symbol(xi, j, alpha)))
            .collect();
        Ok(self.vector(parts))
    }

    /// Fractional divergence, the negative adjoint of [`Self::gradient`].
    pub fn divergence(&self, phi: &GridField, alpha: f64) -> Result<GridField> {
        check_alpha(alpha)?;
        self.check_vector(phi)?;
        let m = self.grid.len();
        let mut acc: Spectrum = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..self.grid.dim() {
            let hat = self.forward(phi.component(j));
            for (k, (a, z)) in acc.iter_mut().zip(&hat).enumerate() {
                *a += z * grad_symbol(self.xi(k), j, alpha);
            }
        }
        Ok(self.scalar(self.inverse_real(acc)))
    }

    /// Riesz transform, symbol `i xi_j / |xi|`, zero at `xi = 0`.
    pub fn riesz(&self, f: &GridField) -> Result<GridField> {
        self.check_scalar(f)?;
        let hat = self.forward(f.data());
        let parts = (0..self.grid.dim()).map(|j| self.apply(&hat, |xi| riesz_symbol(xi, j))).collect();
        Ok(self.vector(parts))
    }

    /// `sum_j R_j u_j` for a vector field `u`.
    pub fn riesz_divergence(&self, u: &GridField) -> Result<GridField> {
        self.check_vector(u)?;
        let m = self.grid.len();
        let mut acc: Spectrum = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..self.grid.dim() {
            let hat = self.forward(u.component(j));
            for (k, (a, z)) in acc.iter_mut().zip(&hat).enumerate() {
                *a += z * riesz_symbol(self.xi(k), j);
            }
        }
        Ok(self.scalar(self.inverse_real(acc)))
    }

    /// Commutator `[R, b] u = R(b u) - b R(u)`.
    pub fn commutator(&self, b: &GridField, u: &GridField) -> Result<GridField> {
        self.check_scalar(b)?;
        self.check_scalar(u)?;
        let ru = self.riesz(u)?;
        self.riesz(&b.mul(u)?)?.sub(&ru.mul(b)?)
    }

    /// `H_alpha(f, g) = L(fg) - g L f - f L g` with `L = (-Delta)^(alpha/2)`.
    pub fn h_alpha(&self, f: &GridField, g: &GridField, alpha: f64) -> Result<GridField> {
        self.check_scalar(f)?;
        self.check_scalar(g)?;
        let lfg = self.laplacian(&f.mul(g)?, alpha)?;
        let lf = self.laplacian(f, alpha)?;
        let lg = self.laplacian(g, alpha)?;
        let data = (0..self.grid.len())
            .map(|i| lfg.data()[i] - (g.data()[i] * lf.data()[i] + f.data()[i] * lg.data()[i]))
            .collect();
        Ok(self.scalar(data))
    }

    /// Non-local gradient through the Leibniz rearrangement `grad(fg) - g grad f - f grad g`.
    pub fn nl_gradient(&self, f: &GridField, g: &GridField, alpha: f64) -> Result<GridField> {
        self.check_scalar(f)?;
        self.check_scalar(g)?;
        let gfg = self.gradient(&f.mul(g)?, alpha)?;
        let gf = self.gradient(f, alpha)?;
        let gg = self.gradient(g, alpha)?;
        let m = self.grid.len();
        let (fv, gv) = (f.data(), g.data());
        let data = (0..self.grid.dim() * m)
            .map(|i| {
                let p = i % m;
                gfg.data()[i] - (gv[p] * gf.data()[i] + fv[p] * gg.data()[i])
            })
            .collect();
        Ok(GridField::from_parts(&self.grid, self.grid.dim(), data))
    }

    /// Non-local gradient through `R H_alpha(f, g) + [R, g] L f + [R, f] L g`.
    pub fn nl_gradient_decomposition(&self, f: &GridField, g: &GridField, alpha: f64) -> Result<GridField> {
        let h = self.h_alpha(f, g, alpha)?;
        let lf = self.laplacian(f, alpha)?;
        let lg = self.laplacian(g, alpha)?;
        self.riesz(&h)?.add(&self.commutator(g, &lf)?)?.add(&self.commutator(f, &lg)?)
    }

    /// Non-local divergence `div(f phi) - f div(phi) - phi . grad(f)`.
    pub fn nl_divergence(&self, f: &GridField, phi: &GridField, alpha: f64) -> Result<GridField> {
        self.check_scalar(f)?;
        self.check_vector(phi)?;
        let dfp = self.divergence(&phi.mul(f)?, alpha)?;
        let dp = self.divergence(phi, alpha)?;
        let gf = self.gradient(f, alpha)?;
        let pg = phi.dot(&gf)?;
        let data = (0..self.grid.len())
            .map(|i| dfp.data()[i] - f.data()[i] * dp.data()[i] - pg.data()[i])
            .collect();
        Ok(self.scalar(data))
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = data[i * n + j];
        }
    }
    out
}

fn norm(xi: [f64; 2]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1]).sqrt()
}

fn radial(xi: [f64; 2], order: f64) -> f64 {
    let r = norm(xi);
    if r == 0.0 {
        0.0
    } else {
        (2.0 * PI * r).powf(order)
    }
}

fn grad_symbol(xi: [f64; 2], j: usize, alpha: f64) -> Complex64 {
    let r = norm(xi);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, 2.0 * PI * xi[j] * (2.0 * PI * r).powf(alpha - 1.0))
}

fn riesz_symbol(xi: [f64; 2], j: usize) -> Complex64 {
    let r = norm(xi);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, xi[j] / r)
}

pub fn frac_laplacian_spec(f: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(f.grid()).laplacian(f, alpha)
}

pub fn frac_gradient_spec(f: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(f.grid()).gradient(f, alpha)
}

pub fn frac_divergence_spec(phi: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(phi.grid()).divergence(phi, alpha)
}

pub fn riesz(f: &GridField) -> Result<GridField> {
    SpectralOperators::new(f.grid()).riesz(f)
}

pub fn riesz_commutator(f: &GridField, g: &GridField) -> Result<GridField> {
    SpectralOperators::new(f.grid()).commutator(f, g)
}

pub fn h_alpha(f: &GridField, g: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(f.grid()).h_alpha(f, g, alpha)
}

pub fn nl_gradient_spec(f: &GridField, g: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(f.grid()).nl_gradient(f, g, alpha)
}

pub fn nl_divergence_spec(f: &GridField, phi: &GridField, alpha: f64) -> Result<GridField> {
    SpectralOperators::new(f.grid()).nl_divergence(f, phi, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, sample, FieldSpec};

    fn unit(dim: usize, n: usize) -> Grid {
        Grid::cube(dim, 0.0, 1.0, n).unwrap()
    }

    #[test]
    fn plane_waves_are_eigenfunctions() {
        let g = unit(1, 64);
        let c = sample(&FieldSpec::plane_wave(&[1.0], 0.0), &g).unwrap();
        let s = sample(&FieldSpec::plane_wave(&[1.0], -PI / 2.0), &g).unwrap();
        let ops = SpectralOperators::new(&g);
        let eig = (2.0 * PI).sqrt();
        assert!((eig - 2.5066).abs() < 1e-4);
        let lc = ops.laplacian(&c, 0.5).unwrap();
        assert!(lc.sub(&c.scale(eig)).unwrap().max_abs() <= 1e-12 * eig);
        let gs = ops.gradient(&s, 0.5).unwrap();
        assert!(gs.sub(&c.scale(eig)).unwrap().max_abs() <= 1e-12 * eig);
    }

    #[test]
    fn every_lattice_frequency_is_an_eigenfunction_in_2d() {
        let g = unit(2, 16);
        let ops = SpectralOperators::new(&g);
        for k0 in -7..8 {
            for k1 in [-3, 0, 5] {
                if k0 == 0 && k1 == 0 {
                    continue;
                }
                let w = sample(&FieldSpec::plane_wave(&[k0 as f64, k1 as f64], 0.3), &g).unwrap();
                let lam = (2.0 * PI * ((k0 * k0 + k1 * k1) as f64).sqrt()).powf(0.7);
                let lw = ops.laplacian(&w, 0.7).unwrap();
                assert!(lw.sub(&w.scale(lam)).unwrap().max_abs() <= 1e-12 * lam);
            }
        }
    }

    #[test]
    fn constants_vanish() {
        let g = unit(2, 16);
        let ops = SpectralOperators::new(&g);
        let c = sample(&FieldSpec::constant(2.0), &g).unwrap();
        assert!(ops.laplacian(&c, 0.5).unwrap().max_abs() <= 1e-15);
        assert!(ops.gradient(&c, 0.5).unwrap().max_abs() <= 1e-15);
        assert!(ops.riesz(&c).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn composition_and_adjointness() {
        let g = unit(2, 32);
        let ops = SpectralOperators::new(&g);
        let f = sample(&FieldSpec::random_smooth(5, 6, 2.0), &g).unwrap();
        let a = ops.laplacian(&ops.laplacian(&f, 0.3).unwrap(), 0.4).unwrap();
        let b = ops.laplacian(&f, 0.7).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * b.max_abs());

        let phi = GridField::stack(&[
            sample(&FieldSpec::random_smooth(6, 6, 2.0), &g).unwrap(),
            sample(&FieldSpec::random_smooth(7, 6, 2.0), &g).unwrap(),
        ])
        .unwrap();
        let lhs = inner_product(&f, &ops.divergence(&phi, 0.6).unwrap()).unwrap();
        let rhs = inner_product(&phi, &ops.gradient(&f, 0.6).unwrap()).unwrap();
        assert!((lhs + rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn riesz_squares_and_factorization() {
        let g = unit(2, 32);
        let ops = SpectralOperators::new(&g);
        let f = sample(&FieldSpec::random_smooth(11, 6, 2.0), &g).unwrap();
        let zero_mean = f.map(|v| v - f.mean());
        let rr = ops.riesz_divergence(&ops.riesz(&f).unwrap()).unwrap();
        assert!(rr.add(&zero_mean).unwrap().max_abs() <= 1e-12 * zero_mean.max_abs());
        let a = ops.riesz(&ops.laplacian(&f, 0.5).unwrap()).unwrap();
        let b = ops.gradient(&f, 0.5).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * b.max_abs());
    }

    #[test]
    fn decomposition_matches_rearrangement() {
        let g = unit(1, 128);
        let ops = SpectralOperators::new(&g);
        let f = sample(&FieldSpec::random_smooth(1, 8, 2.0), &g).unwrap();
        let h = sample(&FieldSpec::random_smooth(2, 8, 2.0), &g).unwrap();
        let a = ops.nl_gradient(&f, &h, 0.5).unwrap();
        let b = ops.nl_gradient_decomposition(&f, &h, 0.5).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * a.max_abs());
        let c = sample(&FieldSpec::constant(3.0), &g).unwrap();
        assert!(ops.h_alpha(&f, &c, 0.5).unwrap().max_abs() <= 1e-12 * f.max_abs());
        assert!(ops.commutator(&c, &h).unwrap().max_abs() <= 1e-12 * h.max_abs());
        assert_eq!(ops.h_alpha(&f, &h, 0.5).unwrap(), ops.h_alpha(&h, &f, 0.5).unwrap());
    }

    #[test]
    fn laplacian_squared_order_is_minus_div_grad() {
        let g = unit(2, 32);
        let ops = SpectralOperators::new(&g);
        // Smooth enough that the Nyquist content, where odd symbols vanish, is negligible.
        let f = sample(&FieldSpec::random_smooth(3, 6, 3.0), &g).unwrap();
        let a = ops.laplacian_power(&f, 1.2).unwrap();
        let b = ops.divergence(&ops.gradient(&f, 0.6).unwrap(), 0.6).unwrap();
        assert!(a.add(&b).unwrap().max_abs() <= 1e-10 * a.max_abs());
    }
}
