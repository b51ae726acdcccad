//! Discrete Besov, Sobolev-Slobodeckij and BMO seminorms.
//!
//! Shift integrals are replaced by sums over grid shifts with the same
//! periodized lattice weights the direct operators use, so the discrete
//! Minkowski-type bounds between `calD`, `calD_NL` and these seminorms hold
//! exactly up to roundoff. Two one-sided corrections are reported separately:
//! the excluded cell around `h = 0`, bounded through the discrete gradient,
//! and (with a cutoff radius) the shifts beyond it.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::direct::DirectOperators;
use crate::error::{Error, Result};
use crate::grid::{lp_norm_slice, Grid, GridField};
use crate::lattice::{KernelRange, Lattice};
use crate::report::{Margin, VerificationReport};
use crate::special::{check_alpha, constants};
use crate::util::pairwise_sum;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BesovConfig {
    /// `None` sums shifts over the whole torus; `Some(H)` only `|h| <= H`.
    pub cutoff_radius: Option<f64>,
}

/// A seminorm value with its one-sided corrections; `total()` is an upper bound
/// for the continuous seminorm of the grid interpolant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormResult {
    pub value: f64,
    pub inner_correction: f64,
    pub tail_bound: f64,
}

impl SeminormResult {
    pub fn total(&self) -> f64 {
        self.value + self.inner_correction + self.tail_bound
    }
}

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Parameter(format!("{name} must be >= 1, got {p}")));
    }
    Ok(())
}

fn range_of(cfg: &BesovConfig) -> KernelRange {
    match cfg.cutoff_radius {
        None => KernelRange::Periodic,
        Some(r) => KernelRange::Ball(r),
    }
}

/// `|u(x + h_k) - u(x)|` at every node.
fn increments(u: &GridField, k: usize, out: &mut [f64]) {
    let grid = u.grid();
    let n = grid.n();
    let [si, sj] = grid.multi_index(k);
    let rows = if grid.dim() == 1 { 1 } else { n };
    let (si, sj) = if grid.dim() == 1 { (0, si) } else { (si, sj) };
    let comps: Vec<&[f64]> = (0..u.components()).map(|c| u.component(c)).collect();
    for xi in 0..rows {
        let yi = (xi + si) % n;
        for xj in 0..n {
            let x = xi * n + xj;
            let y = yi * n + (xj + sj) % n;
            out[x] = if comps.len() == 1 {
                (comps[0][y] - comps[0][x]).abs()
            } else {
                (comps[0][y] - comps[0][x]).hypot(comps[1][y] - comps[1][x])
            };
        }
    }
}

/// `||tau_h u - u||_p` for every shift class; shifts that carry no weight get 0.
fn shift_norms(u: &GridField, p: f64, active: &[bool]) -> Vec<f64> {
    let grid = u.grid();
    let cell = grid.cell_volume();
    let lat = Lattice::new(grid, KernelRange::Periodic).expect("periodic lattice");
    let m = grid.len();
    let half: Vec<f64> = (0..m)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, k| {
                if !active[k] || lat.mirror(k) < k {
                    return 0.0;
                }
                increments(u, k, buf);
                lp_norm_slice(buf, p, cell)
            },
        )
        .collect();
    (0..m).map(|k| half[k.min(lat.mirror(k))]).collect()
}

/// `L^p` norm of the discrete gradient (Frobenius magnitude per node).
fn gradient_norm(u: &GridField, p: f64) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let dim = grid.dim();
    let m = grid.len();
    let mag: Vec<f64> = (0..m)
        .map(|x| {
            let [i, j] = grid.multi_index(x);
            let mut s = 0.0;
            for c in 0..u.components() {
                let v = u.component(c);
                for axis in 0..dim {
                    let (pp, mm) = if dim == 1 {
                        ((i + 1) % n, (i + n - 1) % n)
                    } else if axis == 0 {
                        (((i + 1) % n) * n + j, ((i + n - 1) % n) * n + j)
                    } else {
                        (i * n + (j + 1) % n, i * n + (j + n - 1) % n)
                    };
                    let d = (v[pp] - v[mm]) / (2.0 * grid.spacing(axis));
                    s += d * d;
                }
            }
            s.sqrt()
        })
        .collect();
    lp_norm_slice(&mag, p, grid.cell_volume())
}

/// Radius of the ball with the volume of one cell.
fn inner_radius(grid: &Grid, omega_n: f64) -> f64 {
    (grid.cell_volume() / omega_n).powf(1.0 / grid.dim() as f64)
}

/// Increment of `(V^q + extra)^(1/q)` over `V`.
fn lifted(value: f64, extra_q: f64, q: f64) -> f64 {
    if extra_q <= 0.0 {
        return 0.0;
    }
    (value.powf(q) + extra_q).powf(1.0 / q) - value
}

/// `[u]_{B^alpha_{p,q}}` on the grid. `q = f64::INFINITY` takes the supremum
/// over shifts with the minimum-image distance.
pub fn besov_seminorm(u: &GridField, alpha: f64, p: f64, q: f64) -> Result<SeminormResult> {
    besov_seminorm_with(u, alpha, p, q, &BesovConfig::default())
}

pub fn besov_seminorm_with(u: &GridField, alpha: f64, p: f64, q: f64, cfg: &BesovConfig) -> Result<SeminormResult> {
    check_alpha(alpha)?;
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    let grid = u.grid();
    let consts = constants(grid.dim(), alpha)?;
    let nf = grid.dim() as f64;
    let lat = Lattice::new(grid, range_of(cfg))?;
    let unorm = lp_norm_slice(&u.magnitude(), p, grid.cell_volume());
    let grad = gradient_norm(u, p);
    let delta = inner_radius(grid, consts.omega_n);
    let sphere = nf * consts.omega_n;

    if q.is_infinite() {
        // Shifts with at least one image inside the cutoff ball.
        let active: Vec<bool> = (0..lat.len())
            .map(|k| k != 0 && cfg.cutoff_radius.is_none_or(|r| lat.distance(k) <= r))
            .collect();
        let norms = shift_norms(u, p, &active);
        let value = (0..lat.len())
            .filter(|&k| active[k])
            .map(|k| norms[k] / lat.distance(k).powf(alpha))
            .fold(0.0, f64::max);
        let inner = (grad * delta.powf(1.0 - alpha) - value).max(0.0);
        let tail = match cfg.cutoff_radius {
            Some(r) => (2.0 * unorm * r.powf(-alpha) - value).max(0.0),
            None => 0.0,
        };
        return Ok(SeminormResult { value, inner_correction: inner, tail_bound: tail });
    }

    let w = lat.weights(nf + q * alpha)?;
    let active: Vec<bool> = w.even.iter().map(|&x| x != 0.0).collect();
    let norms = shift_norms(u, p, &active);
    let terms: Vec<f64> = w.even.iter().zip(&norms).map(|(wk, s)| wk * s.powf(q)).collect();
    let value = pairwise_sum(&terms).powf(1.0 / q);
    let inner_q = grad.powf(q) * sphere * delta.powf(q * (1.0 - alpha)) / (q * (1.0 - alpha));
    let tail_q = match cfg.cutoff_radius {
        Some(r) => (2.0 * unorm).powf(q) * sphere * r.powf(-q * alpha) / (q * alpha),
        None => 0.0,
    };
    Ok(SeminormResult { value, inner_correction: lifted(value, inner_q, q), tail_bound: lifted(value, tail_q, q) })
}

/// Sobolev-Slobodeckij `[u]_{W^{alpha,p}}` as an explicit double sum over
/// node pairs (outer sum over `x`).
pub fn sobolev_frac_seminorm(u: &GridField, alpha: f64, p: f64) -> Result<SeminormResult> {
    sobolev_frac_seminorm_with(u, alpha, p, &BesovConfig::default())
}

pub fn sobolev_frac_seminorm_with(u: &GridField, alpha: f64, p: f64, cfg: &BesovConfig) -> Result<SeminormResult> {
    check_alpha(alpha)?;
    check_exponent("p", p)?;
    if p.is_infinite() {
        return Err(Error::Parameter("the Sobolev-Slobodeckij seminorm needs finite p".into()));
    }
    let grid = u.grid();
    let consts = constants(grid.dim(), alpha)?;
    let nf = grid.dim() as f64;
    let lat = Lattice::new(grid, range_of(cfg))?;
    let w = lat.weights(nf + p * alpha)?;
    let n = grid.n();
    let comps: Vec<&[f64]> = (0..u.components()).map(|c| u.component(c)).collect();
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let [xi, xj] = grid.multi_index(x);
            let terms: Vec<f64> = (0..lat.len())
                .map(|k| {
                    let wk = w.even[k];
                    if wk == 0.0 {
                        return 0.0;
                    }
                    let [si, sj] = grid.multi_index(k);
                    let y = if grid.dim() == 1 { (xi + si) % n } else { ((xi + si) % n) * n + (xj + sj) % n };
                    let d = if comps.len() == 1 {
                        (comps[0][y] - comps[0][x]).abs()
                    } else {
                        (comps[0][y] - comps[0][x]).hypot(comps[1][y] - comps[1][x])
                    };
                    wk * d.powf(p)
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let value = (grid.cell_volume() * pairwise_sum(&rows)).powf(1.0 / p);
    let sphere = nf * consts.omega_n;
    let delta = inner_radius(grid, consts.omega_n);
    let grad = gradient_norm(u, p);
    let inner_p = grad.powf(p) * sphere * delta.powf(p * (1.0 - alpha)) / (p * (1.0 - alpha));
    let tail_p = match cfg.cutoff_radius {
        Some(r) => {
            let unorm = lp_norm_slice(&u.magnitude(), p, grid.cell_volume());
            (2.0 * unorm).powf(p) * sphere * r.powf(-p * alpha) / (p * alpha)
        }
        None => 0.0,
    };
    Ok(SeminormResult { value, inner_correction: lifted(value, inner_p, p), tail_bound: lifted(value, tail_p, p) })
}

/// Supremum of the mean oscillation over periodic dyadic cubes of side
/// `2^k` cells, `k >= 1`, at every grid position.
pub fn bmo_seminorm(u: &GridField) -> Result<f64> {
    u.require_scalar()?;
    let grid = u.grid();
    let n = grid.n();
    let dim = grid.dim();
    let v = u.data();
    let at = |i: usize, j: usize| if dim == 1 { v[i % n] } else { v[(i % n) * n + j % n] };
    let mut best = 0.0_f64;
    let mut side = 2;
    while side <= n {
        let s = side;
        let osc = (0..grid.len())
            .into_par_iter()
            .map(|x| {
                let [i0, j0] = grid.multi_index(x);
                let cols = if dim == 1 { 1 } else { s };
                let mut sum = 0.0;
                for a in 0..s {
                    for b in 0..cols {
                        sum += at(i0 + a, j0 + b);
                    }
                }
                let count = (s * cols) as f64;
                let mean = sum / count;
                let mut dev = 0.0;
                for a in 0..s {
                    for b in 0..cols {
                        dev += (at(i0 + a, j0 + b) - mean).abs();
                    }
                }
                dev / count
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(osc);
        side *= 2;
    }
    Ok(best)
}

/// Exponents for the bilinear bounds: `alpha = beta + gamma`,
/// `1/p + 1/q = 1/r` and `1/s + 1/t = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

impl Exponents {
    /// `beta = gamma = alpha / 2`, `s = t = 2`.
    pub fn balanced(alpha: f64, p: f64, q: f64) -> Self {
        let r = 1.0 / (inv(p) + inv(q));
        Exponents { alpha, beta: alpha / 2.0, gamma: alpha / 2.0, p, q, r, s: 2.0, t: 2.0 }
    }

    pub fn with_st(mut self, s: f64, t: f64) -> Self {
        self.s = s;
        self.t = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_alpha(self.beta)?;
        check_alpha(self.gamma)?;
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r), ("s", self.s), ("t", self.t)] {
            check_exponent(name, v)?;
        }
        let bad = |what: &str| Err(Error::Parameter(format!("exponent relation violated: {what}")));
        if (self.beta + self.gamma - self.alpha).abs() > 1e-12 {
            return bad("alpha = beta + gamma");
        }
        if (inv(self.p) + inv(self.q) - inv(self.r)).abs() > 1e-12 {
            return bad("1/p + 1/q = 1/r");
        }
        if (inv(self.s) + inv(self.t) - 1.0).abs() > 1e-12 {
            return bad("1/s + 1/t = 1");
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "p={} q={} r={} s={} t={}",
            fmt_exp(self.p),
            fmt_exp(self.q),
            fmt_exp(self.r),
            fmt_exp(self.s),
            fmt_exp(self.t)
        )
    }
}

pub(crate) fn fmt_exp(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// Discrete `||calD_NL(f, g)||_r` against its three upper bounds, and
/// `||calD f||_p`, `||calD g||_q`, `||calD(fg)||_r` against theirs:
///
/// * `||calD f||_p <= [f]_{B^alpha_{p,1}}`;
/// * `||calD_NL(f, g)||_r <= [f]_{B^beta_{p,s}} [g]_{B^gamma_{q,t}}`;
/// * `||calD_NL(f, g)||_r <= 2 ||f||_p [g]_{B^alpha_{q,1}}` and the mirrored bound;
/// * `||calD(fg)||_r <= [f]_{B^alpha_{p,1}} ||g||_q + ||f||_p [g]_{B^alpha_{q,1}}`.
///
/// Margins are `rhs - lhs`; the scale is the largest right-hand side.
pub fn verify_minkowski_bounds(f: &GridField, g: &GridField, e: &Exponents, tolerance: f64) -> Result<VerificationReport> {
    let start = Instant::now();
    e.validate()?;
    f.check_compatible(g)?;
    f.require_scalar()?;
    let grid = f.grid().clone();
    let ops = DirectOperators::new(&grid, e.alpha, &Default::default())?;
    let cell = grid.cell_volume();
    let norm = |h: &GridField, p: f64| lp_norm_slice(&h.magnitude(), p, cell);
    let besov = |h: &GridField, a: f64, p: f64, q: f64| besov_seminorm(h, a, p, q).map(|r| r.value);

    let nl = norm(&ops.cal_d_nl(f, g)?, e.r);
    let bf = besov(f, e.alpha, e.p, 1.0)?;
    let bg = besov(g, e.alpha, e.q, 1.0)?;
    let margins = vec![
        Margin::new("calD f", norm(&ops.cal_d(f)?, e.p), bf),
        Margin::new("calD g", norm(&ops.cal_d(g)?, e.q), bg),
        Margin::new("calD_NL Besov x Besov", nl, besov(f, e.beta, e.p, e.s)? * besov(g, e.gamma, e.q, e.t)?),
        Margin::new("calD_NL Lebesgue x Besov", nl, 2.0 * norm(f, e.p) * bg),
        Margin::new("calD_NL Besov x Lebesgue", nl, 2.0 * norm(g, e.q) * bf),
        Margin::new("calD product rule", norm(&ops.cal_d(&f.mul(g)?)?, e.r), bf * norm(g, e.q) + norm(f, e.p) * bg),
    ];
    let scale = margins.iter().map(|m| m.rhs.abs()).fold(0.0, f64::max);
    let mut report = VerificationReport::new("minkowski", &grid, e.alpha, "direct");
    for (k, v) in [("beta", e.beta), ("gamma", e.gamma), ("p", e.p), ("q", e.q), ("r", e.r), ("s", e.s), ("t", e.t)] {
        report = report.exponent(k, v);
    }
    Ok(report.margins(margins, scale, tolerance).finish(start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, FieldSpec};
    use crate::special::hurwitz_zeta;

    fn grid1(n: usize) -> Grid {
        Grid::cube(1, 0.0, 1.0, n).unwrap()
    }

    #[test]
    fn constants_have_zero_seminorms() {
        let g = grid1(32);
        let u = sample(&FieldSpec::constant(3.0), &g).unwrap();
        for q in [1.0, 2.0, f64::INFINITY] {
            let r = besov_seminorm(&u, 0.4, 2.0, q).unwrap();
            assert_eq!(r.value, 0.0);
            assert_eq!(r.total(), 0.0);
        }
        assert_eq!(bmo_seminorm(&u).unwrap(), 0.0);
    }

    #[test]
    fn sobolev_equals_besov_pp() {
        let g = Grid::cube(2, 0.0, 1.0, 16).unwrap();
        let u = sample(&FieldSpec::random_smooth(4, 3, 2.0), &g).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let b = besov_seminorm(&u, 0.6, p, p).unwrap();
            let s = sobolev_frac_seminorm(&u, 0.6, p).unwrap();
            assert!((b.value - s.value).abs() <= 1e-12 * b.value, "p={p}: {} vs {}", b.value, s.value);
            assert!((b.inner_correction - s.inner_correction).abs() <= 1e-12 * b.value);
        }
    }

    #[test]
    fn besov_of_plane_wave_matches_series() {
        // For u = sin(2 pi x) on the unit torus, ||tau_h u - u||_2 = sqrt(2) |sin(pi h)|,
        // so [u]_{B^a_{2,2}}^2 = sum_k W_k 2 sin^2(pi h_k) with W the lattice weights.
        let n = 64;
        let g = grid1(n);
        let u = sample(&FieldSpec::plane_wave(&[1.0], 0.0), &g).unwrap();
        let a = 0.3;
        let lat = Lattice::new(&g, KernelRange::Periodic).unwrap();
        let w = lat.even_weights(1.0 + 2.0 * a).unwrap();
        let h = 1.0 / n as f64;
        let expect: f64 = (1..n)
            .map(|k| w[k] * 2.0 * (std::f64::consts::PI * k as f64 * h).sin().powi(2))
            .sum::<f64>()
            .sqrt();
        let got = besov_seminorm(&u, a, 2.0, 2.0).unwrap().value;
        assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn refinement_approaches_continuum_value() {
        // Continuum value: int_0^1 2 sin^2(pi h) sum_m |h + m|^(-1-2a) dh.
        let a = 0.3;
        let s = 1.0 + 2.0 * a;
        let exact = crate::quadrature::tanh_sinh_gaps(
            |_, d0, d1| {
                if d0.min(d1) < 1e-100 {
                    return 0.0;
                }
                let w = hurwitz_zeta(s, d0).unwrap() + hurwitz_zeta(s, d1).unwrap();
                2.0 * (std::f64::consts::PI * d0.min(d1)).sin().powi(2) * w
            },
            0.0,
            1.0,
            1e-12,
        )
        .sqrt();
        let mut last = f64::INFINITY;
        for n in [64, 256, 1024] {
            let u = sample(&FieldSpec::plane_wave(&[1.0], 0.0), &grid1(n)).unwrap();
            let r = besov_seminorm(&u, a, 2.0, 2.0).unwrap();
            let err = (r.value - exact).abs() / exact;
            assert!(err < last, "n={n}: {err}");
            assert!(r.total() >= exact, "n={n}: {} < {exact}", r.total());
            last = err;
        }
        assert!(last < 1e-2, "{last}");
    }

    #[test]
    fn minkowski_bounds_hold_on_smooth_pair() {
        let g = grid1(64);
        let f = sample(&FieldSpec::random_smooth(1, 5, 2.0), &g).unwrap();
        let h = sample(&FieldSpec::random_smooth(2, 5, 2.0), &g).unwrap();
        for (p, q) in [(2.0, 2.0), (4.0, 4.0), (f64::INFINITY, 2.0), (3.0, 6.0)] {
            for (s, t) in [(2.0, 2.0), (1.0, f64::INFINITY), (f64::INFINITY, 1.0)] {
                let e = Exponents::balanced(0.5, p, q).with_st(s, t);
                let r = verify_minkowski_bounds(&f, &h, &e, 1e-8).unwrap();
                assert!(r.pass, "{}: {:?}", e.label(), r.failed_checks());
            }
        }
    }

    #[test]
    fn exponent_relations_are_validated() {
        let mut e = Exponents::balanced(0.5, 2.0, 2.0);
        assert_eq!(e.r, 1.0);
        e.validate().unwrap();
        e.r = 2.0;
        assert!(e.validate().is_err());
        assert!(Exponents::balanced(0.5, 2.0, 2.0).with_st(2.0, 3.0).validate().is_err());
    }

    #[test]
    fn cutoff_tail_bounds_missing_shifts() {
        let g = grid1(64);
        let u = sample(&FieldSpec::random_smooth(9, 4, 2.0), &g).unwrap();
        let full = besov_seminorm(&u, 0.5, 2.0, 1.0).unwrap();
        let cut = besov_seminorm_with(&u, 0.5, 2.0, 1.0, &BesovConfig { cutoff_radius: Some(0.2) }).unwrap();
        assert!(cut.value < full.value);
        assert!(cut.value + cut.tail_bound >= full.value);
    }

    #[test]
    fn bmo_of_indicator_is_at_most_half() {
        let g = Grid::cube(1, -1.0, 1.0, 64).unwrap();
        let u = sample(&FieldSpec::interval(-0.3, 0.4), &g).unwrap();
        let b = bmo_seminorm(&u).unwrap();
        assert!(b > 0.4 && b <= 0.5, "{b}");
    }
}
