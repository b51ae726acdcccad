//! Uniform periodic grids, sampled fields, test-function generators and the
//! discrete integration primitives every operator builds on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::pairwise_sum;

/// A uniform periodic lattice `x_j = lo + j h`, `j in {0..N-1}^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} box corners per side, got lo={} hi={}",
                lo.len(),
                hi.len()
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        let mut l = [0.0; 2];
        let mut h = [0.0; 2];
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite() && hi[a] > lo[a]) {
                return Err(Error::InvalidGrid(format!(
                    "degenerate box on axis {a}: [{}, {}]",
                    lo[a], hi[a]
                )));
            }
            l[a] = lo[a];
            h[a] = hi[a];
        }
        Ok(Grid { dim, lo: l, hi: h, n })
    }

    /// Same box on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Grid::new(dim, &vec![lo; dim], &vec![hi; dim], n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length(axis) / self.n as f64
    }

    /// Total number of nodes, `N^n`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.length(a)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| self.length(a).powi(2)).sum::<f64>().sqrt()
    }

    /// True when every axis has the same spacing.
    pub fn is_isotropic(&self) -> bool {
        (0..self.dim).all(|a| (self.spacing(a) - self.spacing(0)).abs() <= 1e-14 * self.spacing(0))
    }

    /// Coordinates of the node with flat (row-major) index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let mut p = [0.0; 2];
        if self.dim == 1 {
            p[0] = self.lo[0] + idx as f64 * self.spacing(0);
        } else {
            let (i, j) = (idx / self.n, idx % self.n);
            p[0] = self.lo[0] + i as f64 * self.spacing(0);
            p[1] = self.lo[1] + j as f64 * self.spacing(1);
        }
        p
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// A grid over the same box with a different resolution.
    pub fn with_n(&self, n: usize) -> Result<Grid> {
        Grid::new(self.dim, self.lo(), self.hi(), n)
    }
}

/// Construct a grid; the free-function form of [`Grid::new`].
pub fn make_grid(dim: usize, lo: &[f64], hi: &[f64], n: usize) -> Result<Grid> {
    Grid::new(dim, lo, hi, n)
}

/// A scalar (`components == 1`) or vector (`components == dim`) field sampled
/// on a grid. Vector data is component-major: `[component][point]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    components: usize,
    data: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        if components != 1 && components != grid.dim() {
            return Err(Error::InvalidField(format!(
                "component count must be 1 or {}, got {components}",
                grid.dim()
            )));
        }
        let expected = components * grid.len();
        if data.len() != expected {
            return Err(Error::InvalidField(format!(
                "data length {} does not match components*N^n = {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {i}")));
        }
        Ok(GridField { grid, components, data })
    }

    pub fn scalar(grid: Grid, data: Vec<f64>) -> Result<Self> {
        GridField::new(grid, 1, data)
    }

    pub fn vector(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let k = grid.dim();
        GridField::new(grid, k, data)
    }

    pub fn zeros(grid: &Grid, components: usize) -> Self {
        let data = vec![0.0; components * grid.len()];
        GridField { grid: grid.clone(), components, data }
    }

    /// Internal constructor for operator outputs known to be well-formed.
    pub(crate) fn from_parts(grid: &Grid, components: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), components * grid.len());
        GridField { grid: grid.clone(), components, data }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: &Grid, f: F) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        GridField { grid: grid.clone(), components: 1, data }
    }

    /// Stack scalar fields into a vector field.
    pub fn stack(parts: &[GridField]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidField("cannot stack zero fields".into()))?;
        let mut data = Vec::with_capacity(parts.len() * first.grid.len());
        for p in parts {
            p.grid.check_same(&first.grid)?;
            p.require_scalar()?;
            data.extend_from_slice(&p.data);
        }
        GridField::new(first.grid.clone(), parts.len(), data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[c * m..(c + 1) * m]
    }

    /// One component as a scalar field.
    pub fn component_field(&self, c: usize) -> GridField {
        GridField::from_parts(&self.grid, 1, self.component(c).to_vec())
    }

    pub fn require_scalar(&self) -> Result<()> {
        if self.components == 1 {
            Ok(())
        } else {
            Err(Error::InvalidField(format!(
                "expected a scalar field, got {} components",
                self.components
            )))
        }
    }

    pub fn require_vector(&self) -> Result<()> {
        if self.components == self.grid.dim() {
            Ok(())
        } else {
            Err(Error::InvalidField(format!(
                "expected a {}-vector field, got {} components",
                self.grid.dim(),
                self.components
            )))
        }
    }

    pub fn check_compatible(&self, other: &GridField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.components != other.components {
            return Err(Error::GridMismatch(format!(
                "component counts differ: {} vs {}",
                self.components, other.components
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField::from_parts(&self.grid, self.components, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> GridField {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridField) -> Result<GridField> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect();
        Ok(GridField::from_parts(&self.grid, self.components, data))
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.axpy(-1.0, other)
    }

    /// Pointwise product with a scalar field; `self` may be scalar or vector.
    pub fn mul(&self, s: &GridField) -> Result<GridField> {
        self.grid.check_same(&s.grid)?;
        s.require_scalar()?;
        let m = self.grid.len();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v * s.data[i % m])
            .collect();
        Ok(GridField::from_parts(&self.grid, self.components, data))
    }

    /// Pointwise dot product of two vector fields (or product of scalars).
    pub fn dot(&self, other: &GridField) -> Result<GridField> {
        self.check_compatible(other)?;
        let m = self.grid.len();
        let mut out = vec![0.0; m];
        for c in 0..self.components {
            for ((o, a), b) in out.iter_mut().zip(self.component(c)).zip(other.component(c)) {
                *o += a * b;
            }
        }
        Ok(GridField::from_parts(&self.grid, 1, out))
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        let m = self.grid.len();
        if self.components == 1 {
            return self.data.iter().map(|v| v.abs()).collect();
        }
        (0..m)
            .map(|i| (0..self.components).map(|c| self.data[c * m + i].powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        crate::util::max_abs(&self.data)
    }

    pub fn integrate(&self) -> Result<f64> {
        integrate(self)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FieldFile::from(self)).expect("field serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<GridField> {
        let raw: FieldFile = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// On-disk field layout.
#[derive(Serialize, Deserialize)]
pub(crate) struct FieldFile {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    #[serde(rename = "N")]
    n: usize,
    components: usize,
    data: Vec<f64>,
}

impl From<&GridField> for FieldFile {
    fn from(f: &GridField) -> Self {
        FieldFile {
            dim: f.grid.dim,
            lo: f.grid.lo().to_vec(),
            hi: f.grid.hi().to_vec(),
            n: f.grid.n,
            components: f.components,
            data: f.data.clone(),
        }
    }
}

impl TryFrom<FieldFile> for GridField {
    type Error = Error;
    fn try_from(raw: FieldFile) -> Result<GridField> {
        let grid = Grid::new(raw.dim, &raw.lo, &raw.hi, raw.n)?;
        GridField::new(grid, raw.components, raw.data)
    }
}

/// Rectangle rule `h^n sum_j f(x_j)`.
pub fn integrate(f: &GridField) -> Result<f64> {
    f.require_scalar()?;
    Ok(f.grid.cell_volume() * pairwise_sum(&f.data))
}

/// Discrete `L^p` norm with Euclidean pointwise magnitude; `p = f64::INFINITY` is the max norm.
pub fn lp_norm(f: &GridField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Parameter(format!("L^p exponent must be >= 1, got {p}")));
    }
    let mag = f.magnitude();
    Ok(lp_norm_slice(&mag, p, f.grid.cell_volume()))
}

pub(crate) fn lp_norm_slice(mag: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        return crate::util::max_abs(mag);
    }
    let scale = crate::util::max_abs(mag);
    if scale == 0.0 {
        return 0.0;
    }
    // Scaled to avoid overflow for large p.
    let powered: Vec<f64> = if p == 1.0 {
        mag.iter().map(|v| v.abs()).collect()
    } else if p == 2.0 {
        mag.iter().map(|v| (v / scale) * (v / scale)).collect()
    } else {
        mag.iter().map(|v| (v.abs() / scale).powf(p)).collect()
    };
    let s = pairwise_sum(&powered) * cell;
    if p == 1.0 {
        s
    } else {
        scale * s.powf(1.0 / p)
    }
}

/// `h^n sum_j f(x_j) . g(x_j)`.
pub fn inner_product(f: &GridField, g: &GridField) -> Result<f64> {
    f.check_compatible(g)?;
    let m = f.grid.len();
    let terms: Vec<f64> = (0..m)
        .map(|i| (0..f.components).map(|c| f.data[c * m + i] * g.data[c * m + i]).sum())
        .collect();
    Ok(f.grid.cell_volume() * pairwise_sum(&terms))
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_decay() -> f64 {
    3.0
}

/// Shape of an indicator: an interval (1D) or a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndicatorShape {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Built-in test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    /// `amplitude * exp(1 - 1/(1 - |x-c|^2/r^2))` inside the ball, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    /// `cos(2 pi sum_i k_i (x_i - lo_i)/L_i + phase)`.
    PlaneWave {
        k: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    Indicator(IndicatorShape),
    /// Truncated real Fourier series over the box with coefficients bounded by `|k|^-decay`.
    RandomSmooth {
        seed: u64,
        modes: usize,
        #[serde(default = "default_decay")]
        decay: f64,
    },
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        FieldSpec::Constant { value }
    }

    pub fn gaussian(center: &[f64], sigma: f64, amplitude: f64) -> Self {
        FieldSpec::Gaussian { center: center.to_vec(), sigma, amplitude }
    }

    pub fn bump(center: &[f64], radius: f64, amplitude: f64) -> Self {
        FieldSpec::Bump { center: center.to_vec(), radius, amplitude }
    }

    pub fn plane_wave(k: &[f64], phase: f64) -> Self {
        FieldSpec::PlaneWave { k: k.to_vec(), phase }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        FieldSpec::Indicator(IndicatorShape::Interval { a, b })
    }

    pub fn ball(center: &[f64], radius: f64) -> Self {
        FieldSpec::Indicator(IndicatorShape::Ball { center: center.to_vec(), radius })
    }

    pub fn random_smooth(seed: u64, modes: usize, decay: f64) -> Self {
        FieldSpec::RandomSmooth { seed, modes, decay }
    }
}

fn check_center(center: &[f64], grid: &Grid) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::InvalidField(format!(
            "center has {} coordinates on a {}-dimensional grid",
            center.len(),
            grid.dim()
        )));
    }
    Ok(())
}

fn check_ball_inside(center: &[f64], radius: f64, grid: &Grid) -> Result<()> {
    check_center(center, grid)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidField(format!("radius must be positive, got {radius}")));
    }
    for a in 0..grid.dim() {
        if center[a] - radius < grid.lo()[a] || center[a] + radius > grid.hi()[a] {
            return Err(Error::InvalidField(format!(
                "support of radius {radius} around {center:?} leaves the box on axis {a}"
            )));
        }
    }
    Ok(())
}

fn dist2(p: [f64; 2], c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(a, ca)| (p[a] - ca).powi(2)).sum()
}

/// The smooth compactly supported bump profile on `rho = |x - c|/r`.
pub fn bump_profile(rho2: f64) -> f64 {
    if rho2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho2)).exp()
    }
}

/// Evaluate a field spec at the grid nodes.
pub fn sample(spec: &FieldSpec, grid: &Grid) -> Result<GridField> {
    match spec {
        FieldSpec::Constant { value } => {
            if !value.is_finite() {
                return Err(Error::InvalidField("constant must be finite".into()));
            }
            Ok(GridField::from_fn(grid, |_| *value))
        }
        FieldSpec::Gaussian { center, sigma, amplitude } => {
            check_center(center, grid)?;
            if !(*sigma > 0.0) {
                return Err(Error::InvalidField(format!("sigma must be positive, got {sigma}")));
            }
            let s2 = 2.0 * sigma * sigma;
            Ok(GridField::from_fn(grid, |p| amplitude * (-dist2(p, center) / s2).exp()))
        }
        FieldSpec::Bump { center, radius, amplitude } => {
            check_ball_inside(center, *radius, grid)?;
            let r2 = radius * radius;
            Ok(GridField::from_fn(grid, |p| amplitude * bump_profile(dist2(p, center) / r2)))
        }
        FieldSpec::PlaneWave { k, phase } => {
            check_center(k, grid)?;
            let two_pi = 2.0 * std::f64::consts::PI;
            Ok(GridField::from_fn(grid, |p| {
                let arg: f64 = (0..grid.dim())
                    .map(|a| k[a] * (p[a] - grid.lo()[a]) / grid.length(a))
                    .sum();
                (two_pi * arg + phase).cos()
            }))
        }
        FieldSpec::Indicator(IndicatorShape::Interval { a, b }) => {
            if grid.dim() != 1 {
                return Err(Error::InvalidField("interval indicators are one-dimensional".into()));
            }
            if !(a < b) || *a < grid.lo()[0] || *b > grid.hi()[0] {
                return Err(Error::InvalidField(format!(
                    "interval ({a}, {b}) must be nonempty and inside the box"
                )));
            }
            Ok(GridField::from_fn(grid, |p| indicator_value(p[0] - a, b - p[0])))
        }
        FieldSpec::Indicator(IndicatorShape::Ball { center, radius }) => {
            check_ball_inside(center, *radius, grid)?;
            let r2 = radius * radius;
            Ok(GridField::from_fn(grid, |p| indicator_value(r2 - dist2(p, center), 1.0)))
        }
        FieldSpec::RandomSmooth { seed, modes, decay } => Ok(random_smooth(grid, *seed, *modes, *decay)),
    }
}

/// Indicator of `{d0 > 0, d1 > 0}`; nodes on the boundary get the precise
/// representative 1/2.
fn indicator_value(d0: f64, d1: f64) -> f64 {
    if d0 > 0.0 && d1 > 0.0 {
        1.0
    } else if d0 >= 0.0 && d1 >= 0.0 {
        0.5
    } else {
        0.0
    }
}

/// Frequencies of the real Fourier basis used by `random_smooth`, in a fixed order.
fn half_lattice(dim: usize, modes: usize) -> Vec<[i64; 2]> {
    let m = modes as i64;
    let mut out = Vec::new();
    if dim == 1 {
        for k in 1..=m {
            out.push([k, 0]);
        }
    } else {
        for k0 in 0..=m {
            for k1 in -m..=m {
                if k0 > 0 || k1 > 0 {
                    out.push([k0, k1]);
                }
            }
        }
    }
    out
}

fn random_smooth(grid: &Grid, seed: u64, modes: usize, decay: f64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let terms: Vec<([i64; 2], f64, f64)> = half_lattice(dim, modes)
        .into_iter()
        .map(|k| {
            let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            let w = norm.powf(-decay);
            (k, w * rng.gen_range(-1.0..1.0), w * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    GridField::from_fn(grid, |p| {
        let t: Vec<f64> = (0..dim).map(|a| (p[a] - grid.lo()[a]) / grid.length(a)).collect();
        terms
            .iter()
            .map(|(k, a, b)| {
                let arg = two_pi * (0..dim).map(|i| k[i] as f64 * t[i]).sum::<f64>();
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    })
}
