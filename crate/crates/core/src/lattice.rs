//! Lattice offsets and kernel weights for the direct quadrature.
//!
//! A weight is attached to every torus shift `j` of the grid. In periodic mode
//! it is the kernel summed over all periodic images of the displacement,
//! `h^n sum_m k(jh + mL)`; in ball mode only images with `|jh + mL| <= R`
//! contribute. Odd weights are exactly antisymmetric under `j -> -j`, which is
//! what makes the discrete duality and swapping identities hold to roundoff.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::composite_gauss;
use crate::special::hurwitz_zeta;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

/// Which offsets enter the quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelRange {
    /// All periodic images (operators on the torus).
    Periodic,
    /// Images within a ball of the given radius.
    Ball(f64),
}

#[derive(Clone, Debug)]
pub struct Lattice {
    grid: Grid,
    range: KernelRange,
}

// Image sums are split with a Gaussian-smoothed step: images inside the
// transition are summed exactly against `chi`, the rest is replaced by its
// continuum integral. The Poisson-summation error of the replacement decays
// like `exp(-(pi w / L)^2)`.
const SPLIT_CENTER: f64 = 12.0;
const SPLIT_WIDTH: f64 = 1.5;
const SPLIT_REACH: f64 = 6.0;
const SPLIT_FLOOR: f64 = 8.0;

fn cutoff(r: f64, r0: f64, w: f64) -> f64 {
    0.5 * libm::erfc((r - r0) / w)
}

/// Periodized even kernel `sum_m |h + mL|^-s` by a smoothly split image sum
/// plus the continuum remainder. Valid for `s > dim`.
#[cfg(test)]
fn periodized_even_cutoff(dim: usize, h: [f64; 2], lengths: [f64; 2], s: f64) -> f64 {
    image_sums(dim, h, lengths, s, continuum_tail(dim, lengths, s)).0
}

/// Continuum part of the even image sum, independent of the displacement.
fn continuum_tail(dim: usize, lengths: [f64; 2], s: f64) -> f64 {
    let lmax = lengths[..dim].iter().cloned().fold(0.0, f64::max);
    let (r0, w) = (SPLIT_CENTER * lmax, SPLIT_WIDTH * lmax);
    let rmax = r0 + SPLIT_REACH * w;
    let nf = dim as f64;
    let sphere = if dim == 1 { 2.0 } else { 2.0 * PI };
    let cell: f64 = lengths[..dim].iter().product();
    let rmin = r0 - SPLIT_FLOOR * w;
    let tail = composite_gauss(|r| r.powf(nf - 1.0 - s) * (1.0 - cutoff(r, r0, w)), rmin, rmax, 96, 10)
        + rmax.powf(nf - s) / (s - nf);
    sphere / cell * tail
}

/// Returns `(sum_m |y|^-s, sum_m y |y|^-s-1)` over images `y = h + mL`.
fn image_sums(dim: usize, h: [f64; 2], lengths: [f64; 2], s: f64, tail: f64) -> (f64, [f64; 2]) {
    let lmax = lengths[..dim].iter().cloned().fold(0.0, f64::max);
    let (r0, w) = (SPLIT_CENTER * lmax, SPLIT_WIDTH * lmax);
    let rmax = r0 + SPLIT_REACH * w;
    let mut even = 0.0;
    let mut odd = [0.0; 2];
    let reach = [
        (rmax / lengths[0]).ceil() as i64 + 1,
        if dim == 2 { (rmax / lengths[1]).ceil() as i64 + 1 } else { 0 },
    ];
    for m0 in -reach[0]..=reach[0] {
        for m1 in -reach[1]..=reach[1] {
            let y = [h[0] + m0 as f64 * lengths[0], h[1] + m1 as f64 * lengths[1]];
            let r2 = y[0] * y[0] + y[1] * y[1];
            if r2 >= rmax * rmax || r2 == 0.0 {
                continue;
            }
            let r = r2.sqrt();
            let k = cutoff(r, r0, w) * r.powf(-s);
            even += k;
            odd[0] += k * y[0] / r;
            odd[1] += k * y[1] / r;
        }
    }
    (even + tail, odd)
}

impl Lattice {
    pub fn new(grid: &Grid, range: KernelRange) -> Result<Self> {
        if let KernelRange::Ball(r) = range {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Parameter(format!("cutoff radius must be positive, got {r}")));
            }
        }
        Ok(Lattice { grid: grid.clone(), range })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn range(&self) -> KernelRange {
        self.range
    }

    /// Number of shifts, including the zero shift (whose weight is always 0).
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn shift(&self, k: usize) -> [usize; 2] {
        self.grid.multi_index(k)
    }

    /// Index of the shift `-j`.
    pub fn mirror(&self, k: usize) -> usize {
        let n = self.grid.n();
        let [a, b] = self.shift(k);
        let neg = |v: usize| (n - v) % n;
        if self.grid.dim() == 1 {
            neg(a)
        } else {
            neg(a) * n + neg(b)
        }
    }

    /// Minimum-image displacement of shift `k` (shift `N/2` maps to `+L/2`).
    pub fn displacement(&self, k: usize) -> [f64; 2] {
        let n = self.grid.n();
        let s = self.shift(k);
        let mut d = [0.0; 2];
        for a in 0..self.grid.dim() {
            let signed = if s[a] <= n / 2 { s[a] as f64 } else { s[a] as f64 - n as f64 };
            d[a] = signed * self.grid.spacing(a);
        }
        d
    }

    pub fn distance(&self, k: usize) -> f64 {
        let d = self.displacement(k);
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    fn lengths(&self) -> [f64; 2] {
        [self.grid.length(0), if self.grid.dim() == 2 { self.grid.length(1) } else { 1.0 }]
    }

    /// Raw `(even, odd)` kernel sums for shift `k` before the cell volume factor.
    fn class_sums(&self, k: usize, s: f64, tail: f64) -> Result<(f64, [f64; 2])> {
        let dim = self.grid.dim();
        let h = self.displacement(k);
        let lengths = self.lengths();
        match self.range {
            KernelRange::Periodic if dim == 1 => {
                let l = lengths[0];
                let a = self.shift(k)[0] as f64 / self.grid.n() as f64;
                let p = hurwitz_zeta(s, a)?;
                let q = hurwitz_zeta(s, 1.0 - a)?;
                let ls = l.powf(-s);
                Ok((ls * (p + q), [ls * (p - q), 0.0]))
            }
            KernelRange::Periodic => {
                if s <= dim as f64 {
                    return Err(Error::Parameter(format!("kernel exponent {s} is not integrable at infinity")));
                }
                Ok(image_sums(dim, h, lengths, s, tail))
            }
            KernelRange::Ball(radius) => {
                let mut even = 0.0;
                let mut odd = [0.0; 2];
                let reach0 = (radius / lengths[0]).ceil() as i64 + 1;
                let reach1 = if dim == 2 { (radius / lengths[1]).ceil() as i64 + 1 } else { 0 };
                for m0 in -reach0..=reach0 {
                    for m1 in -reach1..=reach1 {
                        let y = [h[0] + m0 as f64 * lengths[0], h[1] + m1 as f64 * lengths[1]];
                        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                        if r > radius || r == 0.0 {
                            continue;
                        }
                        let w = r.powf(-s);
                        even += w;
                        odd[0] += w * y[0] / r;
                        odd[1] += w * y[1] / r;
                    }
                }
                Ok((even, odd))
            }
        }
    }

    /// Dense even weights `h^n sum_images |y|^-s`; zero at the zero shift.
    pub fn even_weights(&self, s: f64) -> Result<Vec<f64>> {
        Ok(self.weights(s)?.even.clone())
    }

    /// Dense odd weights `h^n sum_images y |y|^-s-1`, one array per component.
    pub fn odd_weights(&self, s: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self.weights(s)?.odd.clone())
    }

    /// Even and odd weights for kernel exponent `s`. Recently used weight
    /// sets are cached process-wide, since building them dominates the cost of
    /// setting up operators on small grids.
    pub fn weights(&self, s: f64) -> Result<Arc<KernelWeights>> {
        let key = CacheKey::new(self, s);
        let cache = WEIGHT_CACHE.get_or_init(|| Mutex::new(Vec::new()));
        if let Some(hit) = cache.lock().expect("weight cache poisoned").iter().find(|(k, _)| *k == key) {
            return Ok(hit.1.clone());
        }
        let w = Arc::new(self.compute_weights(s)?);
        let mut guard = cache.lock().expect("weight cache poisoned");
        if guard.len() >= CACHE_SLOTS {
            guard.remove(0);
        }
        guard.push((key, w.clone()));
        Ok(w)
    }

    fn compute_weights(&self, s: f64) -> Result<KernelWeights> {
        let dim = self.grid.dim();
        let cell = self.grid.cell_volume();
        let len = self.len();
        let tail = match self.range {
            KernelRange::Periodic if dim == 2 => continuum_tail(dim, self.lengths(), s),
            _ => 0.0,
        };
        // Each class is evaluated once, at its lower-indexed member.
        let sums: Vec<(f64, [f64; 2])> = (0..len)
            .into_par_iter()
            .map(|k| {
                if k == 0 || self.mirror(k) < k {
                    Ok((0.0, [0.0; 2]))
                } else {
                    self.class_sums(k, s, tail)
                }
            })
            .collect::<Result<_>>()?;
        let mut even = vec![0.0; len];
        let mut odd = vec![vec![0.0; len]; dim];
        for k in 1..len {
            let m = self.mirror(k);
            if m < k {
                even[k] = even[m];
                for c in odd.iter_mut() {
                    c[k] = -c[m];
                }
                continue;
            }
            even[k] = cell * sums[k].0;
            if m != k {
                // Self-mirrored shifts carry no odd weight.
                for (c, w) in odd.iter_mut().enumerate() {
                    w[k] = cell * sums[k].1[c];
                }
            }
        }
        Ok(KernelWeights { exponent: s, even, odd })
    }
}

const CACHE_SLOTS: usize = 12;

#[derive(PartialEq)]
struct CacheKey {
    dim: usize,
    n: usize,
    bits: [u64; 6],
}

impl CacheKey {
    fn new(lat: &Lattice, s: f64) -> Self {
        let g = &lat.grid;
        let hi1 = if g.dim() == 2 { g.hi()[1] - g.lo()[1] } else { 0.0 };
        let radius = match lat.range {
            KernelRange::Periodic => -1.0,
            KernelRange::Ball(r) => r,
        };
        CacheKey {
            dim: g.dim(),
            n: g.n(),
            bits: [s, g.lo()[0], g.hi()[0], g.length(0), hi1, radius].map(f64::to_bits),
        }
    }
}

type WeightCache = Mutex<Vec<(CacheKey, Arc<KernelWeights>)>>;
static WEIGHT_CACHE: OnceLock<WeightCache> = OnceLock::new();

/// Dense kernel weights over all shifts of a lattice.
#[derive(Clone, Debug)]
pub struct KernelWeights {
    pub exponent: f64,
    pub even: Vec<f64>,
    pub odd: Vec<Vec<f64>>,
}
