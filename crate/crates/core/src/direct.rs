//! Direct lattice quadrature of the pointwise singular-integral operators.
//!
//! Every operator is a weighted sum over grid shifts `h` of increments
//! `u(x + h) - u(x)`, using one shared set of kernel weights. Because the
//! quadrature nodes are identical for all operators, the Leibniz rule,
//! duality and swapping identities hold node by node up to roundoff.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::lattice::{KernelRange, KernelWeights, Lattice};
use crate::special::{constants, lattice_zeta, FracConstants};

/// Treatment of the excluded `h = 0` cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularCellRule {
    /// Leave the cell out. Keeps every discrete identity exact.
    #[default]
    Skip,
    /// Subtract the lattice-sum defect of the leading Taylor term, estimated
    /// with centered differences. Raises the convergence order from `1 - alpha`
    /// to `2 - alpha` or better for smooth fields.
    LipschitzExtrapolate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectConfig {
    /// `None` sums over all periodic images; `Some(R)` keeps images with `|h| <= R`.
    pub cutoff_radius: Option<f64>,
    pub singular_cell_rule: SingularCellRule,
    pub parallel: bool,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig { cutoff_radius: None, singular_cell_rule: SingularCellRule::Skip, parallel: true }
    }
}

impl DirectConfig {
    pub fn extrapolated() -> Self {
        DirectConfig { singular_cell_rule: SingularCellRule::LipschitzExtrapolate, ..Default::default() }
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Output points handed to one rayon task.
const CHUNK: usize = 64;

/// Four-lane accumulation of `term` over `0..len` in a fixed order: lane `l`
/// takes the indices `i = l mod 4` below the last multiple of four, then the
/// tail is added. A macro so the term is always expanded in place.
macro_rules! lanes {
    ($len:expr, |$i:ident| $term:expr) => {{
        let len = $len;
        let body = len / 4 * 4;
        let mut acc = [0.0f64; 4];
        let mut k = 0;
        while k < body {
            for (l, a) in acc.iter_mut().enumerate() {
                let $i = k + l;
                *a += $term;
            }
            k += 4;
        }
        let mut tail = 0.0f64;
        for $i in body..len {
            tail += $term;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }};
}

/// Two sums over the same run, sharing the loads; `$term` yields a pair.
macro_rules! lanes2 {
    ($len:expr, |$i:ident| $term:expr) => {{
        let len = $len;
        let body = len / 4 * 4;
        let (mut a, mut b) = ([0.0f64; 4], [0.0f64; 4]);
        let mut k = 0;
        while k < body {
            for l in 0..4 {
                let $i = k + l;
                let (p, q) = $term;
                a[l] += p;
                b[l] += q;
            }
            k += 4;
        }
        let (mut ta, mut tb) = (0.0f64, 0.0f64);
        for $i in body..len {
            let (p, q) = $term;
            ta += p;
            tb += q;
        }
        [(a[0] + a[1]) + (a[2] + a[3]) + ta, (b[0] + b[1]) + (b[2] + b[3]) + tb]
    }};
}

/// A field with its rows doubled (so runs never wrap) and its reflection.
struct Extended<'a> {
    base: &'a [f64],
    fwd: Vec<f64>,
    rev: Vec<f64>,
}

/// Values of one field along a run of shifts: `fwd[i] = u(x + k_i)`,
/// `rev[i] = u(x - k_i)`, `at = u(x)`.
#[derive(Clone, Copy)]
struct Run<'a> {
    fwd: &'a [f64],
    rev: &'a [f64],
    at: f64,
}

impl<'a> Extended<'a> {
    fn run(&self, x: usize, yf: usize, yr: usize, len: usize) -> Run<'_> {
        Run { fwd: &self.fwd[yf..yf + len], rev: &self.rev[yr..yr + len], at: self.base[x] }
    }
}

// Run kernels. Each takes slices of one common length as parameters, which
// lets the compiler drop the bounds checks and vectorize the lanes.

fn odd_sum(w: &[f64], u: Run) -> f64 {
    let n = w.len();
    let (a, b) = (&u.fwd[..n], &u.rev[..n]);
    lanes!(n, |i| w[i] * (a[i] - b[i]))
}

fn odd_sum2(w0: &[f64], w1: &[f64], u: Run) -> [f64; 2] {
    let n = w0.len();
    let (w1, a, b) = (&w1[..n], &u.fwd[..n], &u.rev[..n]);
    lanes2!(n, |i| {
        let d = a[i] - b[i];
        (w0[i] * d, w1[i] * d)
    })
}

fn odd_dot(w0: &[f64], w1: &[f64], p: Run, q: Run) -> f64 {
    let n = w0.len();
    let (w1, pa, pb, qa, qb) = (&w1[..n], &p.fwd[..n], &p.rev[..n], &q.fwd[..n], &q.rev[..n]);
    lanes!(n, |i| w0[i] * (pa[i] - pb[i]) + w1[i] * (qa[i] - qb[i]))
}

fn even_sum(w: &[f64], u: Run) -> f64 {
    let n = w.len();
    let (a, b, x) = (&u.fwd[..n], &u.rev[..n], u.at);
    lanes!(n, |i| w[i] * ((a[i] - x) + (b[i] - x)))
}

fn even_abs(w: &[f64], u: Run) -> f64 {
    let n = w.len();
    let (a, b, x) = (&u.fwd[..n], &u.rev[..n], u.at);
    lanes!(n, |i| w[i] * ((a[i] - x).abs() + (b[i] - x).abs()))
}

fn even_hypot(w: &[f64], u: Run, v: Run) -> f64 {
    let n = w.len();
    let (ua, ub, va, vb) = (&u.fwd[..n], &u.rev[..n], &v.fwd[..n], &v.rev[..n]);
    let (ux, vx) = (u.at, v.at);
    lanes!(n, |i| w[i] * ((ua[i] - ux).hypot(va[i] - vx) + (ub[i] - ux).hypot(vb[i] - vx)))
}

fn even_abs_product(w: &[f64], u: Run, v: Run) -> f64 {
    let n = w.len();
    let (ua, ub, va, vb) = (&u.fwd[..n], &u.rev[..n], &v.fwd[..n], &v.rev[..n]);
    let (ux, vx) = (u.at, v.at);
    lanes!(n, |i| w[i] * ((ua[i] - ux).abs() * (va[i] - vx).abs() + (ub[i] - ux).abs() * (vb[i] - vx).abs()))
}

/// `sum w (du dv)(k) - (du dv)(-k)`.
fn odd_product(w: &[f64], u: Run, v: Run) -> f64 {
    let n = w.len();
    let (ua, ub, va, vb) = (&u.fwd[..n], &u.rev[..n], &v.fwd[..n], &v.rev[..n]);
    let (ux, vx) = (u.at, v.at);
    lanes!(n, |i| w[i] * ((ua[i] - ux) * (va[i] - vx) - (ub[i] - ux) * (vb[i] - vx)))
}

fn odd_product2(w0: &[f64], w1: &[f64], u: Run, v: Run) -> [f64; 2] {
    let n = w0.len();
    let (w1, ua, ub, va, vb) = (&w1[..n], &u.fwd[..n], &u.rev[..n], &v.fwd[..n], &v.rev[..n]);
    let (ux, vx) = (u.at, v.at);
    lanes2!(n, |i| {
        let d = (ua[i] - ux) * (va[i] - vx) - (ub[i] - ux) * (vb[i] - vx);
        (w0[i] * d, w1[i] * d)
    })
}

fn odd_product_dot(w0: &[f64], w1: &[f64], u: Run, p: Run, q: Run) -> f64 {
    let n = w0.len();
    let (w1, ua, ub) = (&w1[..n], &u.fwd[..n], &u.rev[..n]);
    let (pa, pb, qa, qb) = (&p.fwd[..n], &p.rev[..n], &q.fwd[..n], &q.rev[..n]);
    let (ux, px, qx) = (u.at, p.at, q.at);
    lanes!(n, |i| {
        (ua[i] - ux) * (w0[i] * (pa[i] - px) + w1[i] * (qa[i] - qx))
            - (ub[i] - ux) * (w0[i] * (pb[i] - px) + w1[i] * (qb[i] - qx))
    })
}

/// Precomputed direct operators for one grid, order and configuration.
#[derive(Clone, Debug)]
pub struct DirectOperators {
    grid: Grid,
    consts: FracConstants,
    cfg: DirectConfig,
    lattice: Lattice,
    weights: Arc<KernelWeights>,
    grad_defect: f64,
    lap_defect: f64,
}

impl DirectOperators {
    pub fn new(grid: &Grid, alpha: f64, cfg: &DirectConfig) -> Result<Self> {
        let consts = constants(grid.dim(), alpha)?;
        let range = match cfg.cutoff_radius {
            None => KernelRange::Periodic,
            Some(r) => KernelRange::Ball(r),
        };
        let lattice = Lattice::new(grid, range)?;
        let n = grid.dim() as f64;
        let weights = lattice.weights(n + alpha)?;
        let (grad_defect, lap_defect) = match cfg.singular_cell_rule {
            SingularCellRule::Skip => (0.0, 0.0),
            SingularCellRule::LipschitzExtrapolate => {
                if !grid.is_isotropic() {
                    return Err(Error::Unsupported(
                        "lipschitz_extrapolate needs equal spacing on every axis".into(),
                    ));
                }
                let h = grid.spacing(0);
                let g = lattice_zeta(grid.dim(), n + alpha - 1.0)? / n;
                let l = lattice_zeta(grid.dim(), n + alpha - 2.0)? / (2.0 * n);
                (h.powf(1.0 - alpha) * g, h.powf(2.0 - alpha) * l)
            }
        };
        Ok(DirectOperators { grid: grid.clone(), consts, cfg: cfg.clone(), lattice, weights, grad_defect, lap_defect })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn constants(&self) -> &FracConstants {
        &self.consts
    }

    pub fn alpha(&self) -> f64 {
        self.consts.alpha
    }

    pub fn config(&self) -> &DirectConfig {
        &self.cfg
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Weights of the kernel `|h|^-(n+alpha)` (even) and `h |h|^-(n+alpha+1)` (odd).
    pub fn weights(&self) -> &KernelWeights {
        &self.weights
    }

    fn check(&self, f: &GridField) -> Result<()> {
        self.grid.check_same(f.grid())
    }

    /// Columns `[c0, c1)` of each weight row in the half lattice: one shift
    /// from every pair `{k, -k}` with `k != -k`.
    fn half_rows(&self) -> Vec<(usize, usize, usize)> {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            return vec![(0, 1, n / 2)];
        }
        let mut rows = vec![(0, 1, n / 2)];
        rows.extend((1..n / 2).map(|r| (r, 0, n)));
        rows.push((n / 2, 1, n / 2));
        rows
    }

    /// Nonzero shifts with `k = -k`.
    fn self_mirrored(&self) -> Vec<usize> {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            vec![n / 2]
        } else {
            vec![n / 2, (n / 2) * n, (n / 2) * n + n / 2]
        }
    }

    fn extended<'a>(&self, u: &'a [f64]) -> Extended<'a> {
        let n = self.grid.n();
        let rows = if self.grid.dim() == 1 { 1 } else { n };
        let mut fwd = Vec::with_capacity(2 * u.len());
        let mut rev = Vec::with_capacity(2 * u.len());
        for r in 0..rows {
            let rr = (rows - r) % rows;
            for c in 0..2 * n {
                fwd.push(u[r * n + c % n]);
                rev.push(u[rr * n + (n - c % n) % n]);
            }
        }
        Extended { base: u, fwd, rev }
    }

    /// Runs `seg(x, k0, yf, yr, len)` over the half lattice for each output
    /// point and accumulates the runs in a fixed order. `k0` indexes the
    /// weights at shift `k`, `yf` the extended arrays at `x + k` and `yr` the
    /// reflected extended arrays at `-x + k`, which hold the values at `x - k`.
    fn sweep<const C: usize, S>(&self, seg: S) -> Vec<[f64; C]>
    where
        S: Fn(usize, usize, usize, usize, usize) -> [f64; C] + Sync,
    {
        let n = self.grid.n();
        let dim = self.grid.dim();
        let half = self.half_rows();
        let point = |x: usize| -> [f64; C] {
            let mut total = [0.0; C];
            let (xi, xj) = if dim == 1 { (0, x) } else { (x / n, x % n) };
            let (ri, rj) = ((n - xi) % n, (n - xj) % n);
            for &(si, c0, c1) in &half {
                let (fi, bi) = if dim == 1 { (0, 0) } else { ((xi + si) % n, (ri + si) % n) };
                let part = seg(x, si * n + c0, fi * 2 * n + xj + c0, bi * 2 * n + rj + c0, c1 - c0);
                for c in 0..C {
                    total[c] += part[c];
                }
            }
            total
        };
        let mut out = vec![[0.0; C]; self.grid.len()];
        let fill = |(ci, chunk): (usize, &mut [[f64; C]])| {
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = point(ci * CHUNK + i);
            }
        };
        if self.cfg.parallel {
            out.par_chunks_mut(CHUNK).enumerate().for_each(fill);
        } else {
            out.chunks_mut(CHUNK).enumerate().for_each(fill);
        }
        out
    }

    /// Adds `sum_k w[k] term(x, x + k)` over the self-mirrored shifts.
    fn add_self_mirrored<F: Fn(usize, usize) -> f64>(&self, rows: &mut [[f64; 1]], w: &[f64], term: F) {
        let shifts = self.self_mirrored();
        let n = self.grid.n();
        for (x, r) in rows.iter_mut().enumerate() {
            for &k in &shifts {
                let [a, b] = self.grid.multi_index(k);
                let y = if self.grid.dim() == 1 {
                    (x + a) % n
                } else {
                    ((x / n + a) % n) * n + (x % n + b) % n
                };
                r[0] += w[k] * term(x, y);
            }
        }
    }

    fn component_major<const C: usize>(&self, rows: Vec<[f64; C]>, comps: usize, scale: f64) -> Vec<f64> {
        let m = self.grid.len();
        let mut data = vec![0.0; comps * m];
        for (i, r) in rows.iter().enumerate() {
            for c in 0..comps {
                data[c * m + i] = scale * r[c];
            }
        }
        data
    }

    /// Centered difference along `axis`, periodic.
    fn centered(&self, u: &[f64], axis: usize) -> Vec<f64> {
        let n = self.grid.n();
        let h2 = 2.0 * self.grid.spacing(axis);
        (0..u.len())
            .map(|x| {
                let [i, j] = self.grid.multi_index(x);
                let (p, m) = if self.grid.dim() == 1 {
                    ((i + 1) % n, (i + n - 1) % n)
                } else if axis == 0 {
                    (((i + 1) % n) * n + j, ((i + n - 1) % n) * n + j)
                } else {
                    (i * n + (j + 1) % n, i * n + (j + n - 1) % n)
                };
                (u[p] - u[m]) / h2
            })
            .collect()
    }

    fn discrete_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let dim = self.grid.dim();
        (0..u.len())
            .map(|x| {
                let [i, j] = self.grid.multi_index(x);
                let mut s = 0.0;
                for axis in 0..dim {
                    let h = self.grid.spacing(axis);
                    let (p, m) = if dim == 1 {
                        ((i + 1) % n, (i + n - 1) % n)
                    } else if axis == 0 {
                        (((i + 1) % n) * n + j, ((i + n - 1) % n) * n + j)
                    } else {
                        (i * n + (j + 1) % n, i * n + (j + n - 1) % n)
                    };
                    s += (u[p] - 2.0 * u[x] + u[m]) / (h * h);
                }
                s
            })
            .collect()
    }

    /// Fractional gradient of a scalar field.
    pub fn gradient(&self, f: &GridField) -> Result<GridField> {
        self.check(f)?;
        f.require_scalar()?;
        let u = f.data();
        let e = self.extended(u);
        let w = &self.weights.odd;
        let dim = self.grid.dim();
        let rows = if dim == 1 {
            self.sweep::<1, _>(|x, k, yf, yr, len| [odd_sum(&w[0][k..k + len], e.run(x, yf, yr, len))])
                .into_iter()
                .map(|r| [r[0], 0.0])
                .collect()
        } else {
            self.sweep::<2, _>(|x, k, yf, yr, len| odd_sum2(&w[0][k..k + len], &w[1][k..k + len], e.run(x, yf, yr, len)))
        };
        let mut data = self.component_major(rows, dim, self.consts.mu);
        if self.grad_defect != 0.0 {
            let m = self.grid.len();
            for c in 0..dim {
                let d = self.centered(u, c);
                for i in 0..m {
                    data[c * m + i] -= self.consts.mu * self.grad_defect * d[i];
                }
            }
        }
        Ok(GridField::from_parts(&self.grid, dim, data))
    }

    /// Fractional divergence of a vector field.
    pub fn divergence(&self, phi: &GridField) -> Result<GridField> {
        self.check(phi)?;
        phi.require_vector()?;
        let w = &self.weights.odd;
        let rows = if self.grid.dim() == 1 {
            let p = self.extended(phi.component(0));
            self.sweep::<1, _>(|x, k, yf, yr, len| [odd_sum(&w[0][k..k + len], p.run(x, yf, yr, len))])
        } else {
            let (p, q) = (self.extended(phi.component(0)), self.extended(phi.component(1)));
            self.sweep::<1, _>(|x, k, yf, yr, len| {
                [odd_dot(&w[0][k..k + len], &w[1][k..k + len], p.run(x, yf, yr, len), q.run(x, yf, yr, len))]
            })
        };
        let mut data = self.component_major(rows, 1, self.consts.mu);
        if self.grad_defect != 0.0 {
            for c in 0..self.grid.dim() {
                let d = self.centered(phi.component(c), c);
                for (o, di) in data.iter_mut().zip(d) {
                    *o -= self.consts.mu * self.grad_defect * di;
                }
            }
        }
        Ok(GridField::from_parts(&self.grid, 1, data))
    }

    /// Fractional Laplacian `(-Delta)^(alpha/2)`.
    pub fn laplacian(&self, f: &GridField) -> Result<GridField> {
        self.check(f)?;
        f.require_scalar()?;
        let u = f.data();
        let e = self.extended(u);
        let w = &self.weights.even;
        let mut rows = self.sweep::<1, _>(|x, k, yf, yr, len| [even_sum(&w[k..k + len], e.run(x, yf, yr, len))]);
        self.add_self_mirrored(&mut rows, w, |x, y| u[y] - u[x]);
        let mut data = self.component_major(rows, 1, self.consts.nu);
        if self.lap_defect != 0.0 {
            let d = self.discrete_laplacian(u);
            for (o, di) in data.iter_mut().zip(d) {
                *o -= self.consts.nu * self.lap_defect * di;
            }
        }
        if let Some(r) = self.cfg.cutoff_radius {
            let tail = self.consts.sphere() * r.powf(-self.consts.alpha) / self.consts.alpha;
            for (o, ux) in data.iter_mut().zip(u) {
                *o -= self.consts.nu * tail * ux;
            }
        }
        Ok(GridField::from_parts(&self.grid, 1, data))
    }

    /// Non-local gradient of the pair `(f, g)`.
    pub fn nl_gradient(&self, f: &GridField, g: &GridField) -> Result<GridField> {
        self.check(f)?;
        self.check(g)?;
        f.require_scalar()?;
        g.require_scalar()?;
        let (u, v) = (self.extended(f.data()), self.extended(g.data()));
        let w = &self.weights.odd;
        let dim = self.grid.dim();
        let rows = if dim == 1 {
            self.sweep::<1, _>(|x, k, yf, yr, len| {
                [odd_product(&w[0][k..k + len], u.run(x, yf, yr, len), v.run(x, yf, yr, len))]
            })
            .into_iter()
            .map(|r| [r[0], 0.0])
            .collect()
        } else {
            self.sweep::<2, _>(|x, k, yf, yr, len| {
                odd_product2(&w[0][k..k + len], &w[1][k..k + len], u.run(x, yf, yr, len), v.run(x, yf, yr, len))
            })
        };
        Ok(GridField::from_parts(&self.grid, dim, self.component_major(rows, dim, self.consts.mu)))
    }

    /// Non-local divergence of the pair `(f, phi)`.
    pub fn nl_divergence(&self, f: &GridField, phi: &GridField) -> Result<GridField> {
        self.check(f)?;
        self.check(phi)?;
        f.require_scalar()?;
        phi.require_vector()?;
        let u = self.extended(f.data());
        let w = &self.weights.odd;
        let rows = if self.grid.dim() == 1 {
            let p = self.extended(phi.component(0));
            self.sweep::<1, _>(|x, k, yf, yr, len| {
                [odd_product(&w[0][k..k + len], u.run(x, yf, yr, len), p.run(x, yf, yr, len))]
            })
        } else {
            let (p, q) = (self.extended(phi.component(0)), self.extended(phi.component(1)));
            self.sweep::<1, _>(|x, k, yf, yr, len| {
                let (ru, rp, rq) = (u.run(x, yf, yr, len), p.run(x, yf, yr, len), q.run(x, yf, yr, len));
                [odd_product_dot(&w[0][k..k + len], &w[1][k..k + len], ru, rp, rq)]
            })
        };
        Ok(GridField::from_parts(&self.grid, 1, self.component_major(rows, 1, self.consts.mu)))
    }

    /// `sum_h |f(x+h) - f(x)| / |h|^(n+alpha)`.
    pub fn cal_d(&self, f: &GridField) -> Result<GridField> {
        self.check(f)?;
        let w = &self.weights.even;
        let comps = f.components();
        if comps > 2 {
            return Err(Error::InvalidField(format!("cal_d takes at most 2 components, got {comps}")));
        }
        let rows = if comps == 1 {
            let u = f.component(0);
            let e = self.extended(u);
            let mut rows = self.sweep::<1, _>(|x, k, yf, yr, len| [even_abs(&w[k..k + len], e.run(x, yf, yr, len))]);
            self.add_self_mirrored(&mut rows, w, |x, y| (u[y] - u[x]).abs());
            rows
        } else {
            let (u, v) = (f.component(0), f.component(1));
            let (eu, ev) = (self.extended(u), self.extended(v));
            let mut rows = self.sweep::<1, _>(|x, k, yf, yr, len| {
                [even_hypot(&w[k..k + len], eu.run(x, yf, yr, len), ev.run(x, yf, yr, len))]
            });
            self.add_self_mirrored(&mut rows, w, |x, y| (u[y] - u[x]).hypot(v[y] - v[x]));
            rows
        };
        Ok(GridField::from_parts(&self.grid, 1, self.component_major(rows, 1, 1.0)))
    }

    /// `sum_h |f(x+h) - f(x)| |g(x+h) - g(x)| / |h|^(n+alpha)`.
    pub fn cal_d_nl(&self, f: &GridField, g: &GridField) -> Result<GridField> {
        self.check(f)?;
        self.check(g)?;
        f.require_scalar()?;
        g.require_scalar()?;
        let (u, v) = (f.data(), g.data());
        let (eu, ev) = (self.extended(u), self.extended(v));
        let w = &self.weights.even;
        let mut rows = self.sweep::<1, _>(|x, k, yf, yr, len| {
            [even_abs_product(&w[k..k + len], eu.run(x, yf, yr, len), ev.run(x, yf, yr, len))]
        });
        self.add_self_mirrored(&mut rows, w, |x, y| (u[y] - u[x]).abs() * (v[y] - v[x]).abs());
        Ok(GridField::from_parts(&self.grid, 1, self.component_major(rows, 1, 1.0)))
    }
}

pub fn frac_gradient(f: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.gradient(f)
}

pub fn frac_divergence(phi: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(phi.grid(), alpha, cfg)?.divergence(phi)
}

pub fn frac_laplacian(f: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.laplacian(f)
}

pub fn nl_gradient(f: &GridField, g: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.nl_gradient(f, g)
}

pub fn nl_divergence(f: &GridField, phi: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.nl_divergence(f, phi)
}

pub fn cal_d(f: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.cal_d(f)
}

pub fn cal_d_nl(f: &GridField, g: &GridField, alpha: f64, cfg: &DirectConfig) -> Result<GridField> {
    DirectOperators::new(f.grid(), alpha, cfg)?.cal_d_nl(f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, FieldSpec};

    fn line(n: usize) -> Grid {
        Grid::cube(1, -1.0, 1.0, n).unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        for dim in 1..=2 {
            let g = Grid::cube(dim, -1.0, 1.0, 16).unwrap();
            let ops = DirectOperators::new(&g, 0.5, &DirectConfig::extrapolated()).unwrap();
            let c = sample(&FieldSpec::constant(3.0), &g).unwrap();
            assert!(ops.gradient(&c).unwrap().max_abs() <= 1e-14 * 3.0);
            assert!(ops.laplacian(&c).unwrap().max_abs() <= 1e-14 * 3.0);
            assert_eq!(ops.cal_d(&c).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn gradient_matches_naive_double_loop() {
        let g = Grid::cube(2, -1.0, 1.0, 8).unwrap();
        let f = sample(&FieldSpec::random_smooth(4, 3, 2.0), &g).unwrap();
        let ops = DirectOperators::new(&g, 0.4, &DirectConfig::default()).unwrap();
        let grad = ops.gradient(&f).unwrap();
        let w = ops.weights();
        let n = 8;
        for x in 0..64 {
            let (xi, xj) = (x / n, x % n);
            let mut s = [0.0; 2];
            for k in 0..64 {
                let y = ((xi + k / n) % n) * n + (xj + k % n) % n;
                for c in 0..2 {
                    s[c] += w.odd[c][k] * (f.data()[y] - f.data()[x]);
                }
            }
            for c in 0..2 {
                let got = grad.component(c)[x];
                assert!((got - ops.constants().mu * s[c]).abs() <= 1e-12 * s[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn even_field_has_zero_gradient_at_center() {
        let g = line(256);
        let f = sample(&FieldSpec::gaussian(&[0.0], 0.2, 1.0), &g).unwrap();
        let grad = frac_gradient(&f, 0.5, &DirectConfig::default()).unwrap();
        assert!(grad.data()[128].abs() <= 1e-12);
    }

    #[test]
    fn divergence_equals_gradient_in_1d() {
        let g = line(64);
        let f = sample(&FieldSpec::bump(&[0.1], 0.6, 1.0), &g).unwrap();
        for cfg in [DirectConfig::default(), DirectConfig::extrapolated()] {
            let a = frac_gradient(&f, 0.3, &cfg).unwrap();
            let b = frac_divergence(&f, 0.3, &cfg).unwrap();
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn divergence_of_first_axis_field_in_2d() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let u = sample(&FieldSpec::bump(&[0.2, -0.1], 0.7, 1.0), &g).unwrap();
        let phi = GridField::stack(&[u.clone(), GridField::zeros(&g, 1)]).unwrap();
        let ops = DirectOperators::new(&g, 0.6, &DirectConfig::default()).unwrap();
        let div = ops.divergence(&phi).unwrap();
        let grad = ops.gradient(&u).unwrap();
        for (a, b) in div.data().iter().zip(grad.component(0)) {
            assert!((a - b).abs() <= 1e-13 * grad.max_abs());
        }
    }

    #[test]
    fn laplacian_is_positive_at_a_strict_maximum() {
        let g = line(128);
        let f = sample(&FieldSpec::gaussian(&[0.0], 0.2, 1.0), &g).unwrap();
        for cfg in [DirectConfig::default(), DirectConfig::extrapolated()] {
            let lap = frac_laplacian(&f, 0.5, &cfg).unwrap();
            assert!(lap.data()[64] > 0.0);
        }
    }

    #[test]
    fn pointwise_bounds_by_cal_d() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let f = sample(&FieldSpec::random_smooth(1, 3, 2.0), &g).unwrap();
        let h = sample(&FieldSpec::random_smooth(2, 3, 2.0), &g).unwrap();
        let ops = DirectOperators::new(&g, 0.5, &DirectConfig::default()).unwrap();
        let c = *ops.constants();
        let lap = ops.laplacian(&f).unwrap();
        let d = ops.cal_d(&f).unwrap();
        let nl = ops.nl_gradient(&f, &h).unwrap().magnitude();
        let dnl = ops.cal_d_nl(&f, &h).unwrap();
        for i in 0..g.len() {
            assert!(lap.data()[i].abs() <= -c.nu * d.data()[i] * (1.0 + 1e-12));
            assert!(nl[i] <= c.mu * dnl.data()[i] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn nl_gradient_symmetric_and_matches_square_rule() {
        let g = line(128);
        let f = sample(&FieldSpec::bump(&[0.1], 0.5, 1.0), &g).unwrap();
        let h = sample(&FieldSpec::bump(&[-0.2], 0.6, 2.0), &g).unwrap();
        let ops = DirectOperators::new(&g, 0.5, &DirectConfig::default()).unwrap();
        assert_eq!(ops.nl_gradient(&f, &h).unwrap(), ops.nl_gradient(&h, &f).unwrap());
        let nl = ops.nl_gradient(&f, &f).unwrap();
        let sq = ops.gradient(&f.mul(&f).unwrap()).unwrap();
        let df = ops.gradient(&f).unwrap().mul(&f).unwrap();
        let scale = nl.max_abs() + sq.max_abs() + 2.0 * df.max_abs();
        let resid = sq.axpy(-2.0, &df).unwrap().sub(&nl).unwrap();
        assert!(resid.max_abs() <= 1e-12 * scale);
        let zero = ops.nl_gradient(&f, &sample(&FieldSpec::constant(2.0), &g).unwrap()).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let f = sample(&FieldSpec::random_smooth(9, 4, 2.0), &g).unwrap();
        let par = frac_gradient(&f, 0.5, &DirectConfig::extrapolated()).unwrap();
        let ser = frac_gradient(&f, 0.5, &DirectConfig::extrapolated().serial()).unwrap();
        assert_eq!(par.data(), ser.data());
    }

    /// Periodic closed form for the gradient of an interval indicator.
    fn indicator_gradient_exact(x: f64, a: f64, b: f64, period: f64, alpha: f64, mu: f64) -> f64 {
        use crate::special::hurwitz_zeta;
        let images = |c: f64| {
            let t = (c / period).rem_euclid(1.0);
            period.powf(-alpha) * (hurwitz_zeta(alpha, t).unwrap() + hurwitz_zeta(alpha, 1.0 - t).unwrap())
        };
        mu / alpha * (images(a - x) - images(b - x))
    }

    #[test]
    fn indicator_gradient_approaches_closed_form() {
        let alpha = 0.5;
        let mu = constants(1, alpha).unwrap().mu;
        // On the real line the value at x = -1 is 2 mu (1 - 2^-1/2) = 0.11684.
        let free = mu / alpha * (1.0 - 2f64.powf(-0.5));
        assert!((free - 0.116_84).abs() < 1e-5);
        let exact = indicator_gradient_exact(-1.0, 0.0, 1.0, 8.0, alpha, mu);
        let mut prev = f64::INFINITY;
        for n in [256, 512, 1024] {
            let g = Grid::cube(1, -4.0, 4.0, n).unwrap();
            let chi = sample(&FieldSpec::interval(0.0, 1.0), &g).unwrap();
            let grad = frac_gradient(&chi, alpha, &DirectConfig::default()).unwrap();
            let err = (grad.data()[3 * n / 8] - exact).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 2e-2 * exact.abs(), "{prev}");
    }

    #[test]
    fn ball_cutoff_agrees_with_periodic_when_support_is_small() {
        // With supports far from the box boundary and R large, the ball
        // operator approximates the free-space gradient, which differs from
        // the periodic one only through distant images.
        let g = Grid::cube(1, -4.0, 4.0, 256).unwrap();
        let f = sample(&FieldSpec::bump(&[0.0], 0.5, 1.0), &g).unwrap();
        let cfg = DirectConfig { cutoff_radius: Some(3.9), ..Default::default() };
        let ball = frac_gradient(&f, 0.5, &cfg).unwrap();
        let per = frac_gradient(&f, 0.5, &DirectConfig::default()).unwrap();
        let diff = ball.sub(&per).unwrap().max_abs();
        assert!(diff < 2e-2 * per.max_abs(), "{diff}");
    }
}
