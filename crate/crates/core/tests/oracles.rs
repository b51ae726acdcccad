//! Independent cross-checks between the two operator backends.

use fracfield::identities::{bump_corpus, bump_vector};
use fracfield::{DirectConfig, DirectOperators, Grid, SpectralOperators};

/// The solver applies the NL divergence spectrally through the Leibniz
/// rearrangement; it has to agree with the direct quadrature.
#[test]
fn solver_nl_divergence_matches_direct_quadrature() {
    let mut errors = Vec::new();
    for n in [128, 256, 512] {
        let grid = Grid::cube(1, -1.0, 1.0, n).unwrap();
        let f = bump_corpus(&grid, 8, 1).unwrap().remove(0);
        let b = bump_vector(&grid, 8).unwrap();
        let spectral = SpectralOperators::new(&grid).nl_divergence(&f, &b, 0.5).unwrap();
        let direct = DirectOperators::new(&grid, 0.5, &DirectConfig::extrapolated()).unwrap().nl_divergence(&f, &b).unwrap();
        errors.push(spectral.sub(&direct).unwrap().max_abs() / direct.max_abs());
    }
    assert!(errors[2] <= 1e-2, "{errors:?}");
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn laplacian_backends_agree_in_2d() {
    let grid = Grid::cube(2, -1.0, 1.0, 64).unwrap();
    let f = bump_corpus(&grid, 3, 1).unwrap().remove(0);
    let spectral = SpectralOperators::new(&grid).laplacian(&f, 0.5).unwrap();
    let direct = DirectOperators::new(&grid, 0.5, &DirectConfig::extrapolated()).unwrap().laplacian(&f).unwrap();
    let err = spectral.sub(&direct).unwrap().max_abs() / direct.max_abs();
    assert!(err <= 2e-2, "{err}");
}
