pub mod error;
pub mod grid;
pub mod lattice;
pub mod quadrature;
pub mod report;
pub mod special;
mod util;
pub mod besov;
pub mod direct;
pub mod spectral;
pub mod identities;
pub mod pde;

pub use besov::{besov_seminorm, bmo_seminorm, sobolev_frac_seminorm, BesovConfig, Exponents, SeminormResult};
pub use direct::{DirectConfig, DirectOperators};
pub use error::{Error, Result};
pub use grid::{inner_product, sample, FieldSpec, Grid, GridField, IndicatorShape};
pub use identities::{run_suite, Backend, Operators, SuiteConfig, SUITES};
pub use pde::{solve, EllipticProblem, MaskSpec, ProblemFile, SolveOptions, SolveReport};
pub use report::{Check, Margin, Residuals, VerificationReport};
pub use special::{constants, FracConstants};
pub use spectral::SpectralOperators;
