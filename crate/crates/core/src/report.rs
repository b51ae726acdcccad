//! Verification reports: residuals, inequality margins, refinement tables and
//! the pass/fail verdict derived from them.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridField};
use crate::util::pairwise_sum;

/// Smallest scale used to form relative residuals.
pub const SCALE_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl From<&Grid> for GridMeta {
    fn from(g: &Grid) -> Self {
        GridMeta { dim: g.dim(), n: g.n(), lo: g.lo().to_vec(), hi: g.hi().to_vec() }
    }
}

/// Absolute and relative norms of a residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub l1_rel: f64,
    pub l2_rel: f64,
    pub linf_rel: f64,
}

impl Residuals {
    /// Norms of a residual field, relative to `scale`.
    pub fn of_field(r: &GridField, scale: f64) -> Self {
        let mag = r.magnitude();
        let cell = r.grid().cell_volume();
        let l1 = cell * pairwise_sum(&mag);
        let sq: Vec<f64> = mag.iter().map(|v| v * v).collect();
        let l2 = (cell * pairwise_sum(&sq)).sqrt();
        let linf = crate::util::max_abs(&mag);
        Residuals::from_norms(l1, l2, linf, scale)
    }

    /// A scalar residual (all three norms coincide).
    pub fn of_scalar(r: f64, scale: f64) -> Self {
        Residuals::from_norms(r.abs(), r.abs(), r.abs(), scale)
    }

    pub fn from_norms(l1: f64, l2: f64, linf: f64, scale: f64) -> Self {
        let s = scale.max(SCALE_FLOOR);
        Residuals { l1, l2, linf, l1_rel: l1 / s, l2_rel: l2 / s, linf_rel: linf / s }
    }

    /// Componentwise maximum, for aggregating several cases.
    pub fn max(&self, o: &Residuals) -> Residuals {
        Residuals {
            l1: self.l1.max(o.l1),
            l2: self.l2.max(o.l2),
            linf: self.linf.max(o.linf),
            l1_rel: self.l1_rel.max(o.l1_rel),
            l2_rel: self.l2_rel.max(o.l2_rel),
            linf_rel: self.linf_rel.max(o.linf_rel),
        }
    }
}

/// One inequality `lhs <= rhs`, with `margin = rhs - lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl Margin {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Margin { name: name.into(), lhs, rhs, margin: rhs - lhs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// A named acceptance condition on a recorded number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, bound: Bound::AtMost, limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, bound: Bound::AtLeast, limit }
    }

    pub fn holds(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.limit,
            Bound::AtLeast => self.value >= self.limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub grid: GridMeta,
    pub alpha: f64,
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub exponents: BTreeMap<String, f64>,
    pub residuals: Residuals,
    /// Normalization used for relative residuals and margin tolerances.
    pub scale: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub margins: Vec<Margin>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub refinement: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Excluded from the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>, grid: &Grid, alpha: f64, backend: impl Into<String>) -> Self {
        VerificationReport {
            suite: suite.into(),
            grid: GridMeta::from(grid),
            alpha,
            backend: backend.into(),
            seed: None,
            exponents: BTreeMap::new(),
            residuals: Residuals::default(),
            scale: 0.0,
            tolerance: 0.0,
            margins: Vec::new(),
            refinement: Vec::new(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            pass: true,
            wall_time: Duration::ZERO,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn exponent(mut self, name: &str, value: f64) -> Self {
        self.exponents.insert(name.to_string(), value);
        self
    }

    /// Records a residual and the check `linf_rel <= tolerance`.
    pub fn residual(mut self, residuals: Residuals, scale: f64, tolerance: f64) -> Self {
        self.residuals = residuals;
        self.scale = scale;
        self.tolerance = tolerance;
        self.checks.push(Check::at_most("relative residual (Linf)", residuals.linf_rel, tolerance));
        self
    }

    /// Records inequality margins and the check `min margin >= -tolerance * scale`.
    pub fn margins(mut self, margins: Vec<Margin>, scale: f64, tolerance: f64) -> Self {
        let worst = margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min);
        self.scale = scale;
        self.tolerance = tolerance;
        if !margins.is_empty() {
            self.checks.push(Check::at_least("minimum margin", worst, -tolerance * scale));
        }
        self.margins = margins;
        self
    }

    pub fn check(mut self, check: Check) -> Self {
        self.checks.push(check);
        self
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn refinement(mut self, table: Vec<(usize, f64)>) -> Self {
        self.refinement = table;
        self
    }

    /// Sets `pass` from the recorded checks.
    pub fn finish(mut self, wall_time: Duration) -> Self {
        self.pass = evaluate(&self.checks);
        self.wall_time = wall_time;
        self
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.holds()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// The verdict as a pure function of the checks.
pub fn evaluate(checks: &[Check]) -> bool {
    checks.iter().all(Check::holds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_checks() {
        let g = Grid::cube(1, 0.0, 1.0, 8).unwrap();
        let r = VerificationReport::new("t", &g, 0.5, "direct")
            .residual(Residuals::of_scalar(1e-13, 1.0), 1.0, 1e-12)
            .finish(Duration::ZERO);
        assert!(r.pass);
        let r = VerificationReport::new("t", &g, 0.5, "direct")
            .margins(vec![Margin::new("m", 2.0, 1.0)], 1.0, 1e-8)
            .finish(Duration::ZERO);
        assert!(!r.pass);
        assert_eq!(r.failed_checks().len(), 1);
    }

    #[test]
    fn wall_time_is_not_serialized() {
        let g = Grid::cube(1, 0.0, 1.0, 8).unwrap();
        let a = VerificationReport::new("t", &g, 0.5, "direct").finish(Duration::from_millis(3));
        let b = VerificationReport::new("t", &g, 0.5, "direct").finish(Duration::from_millis(9));
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_json().contains("\"N\": 8"));
    }
}
