//! Property tests on random grid data.

use fracfield::pde::{solve, EllipticProblem, MaskSpec, SolveOptions};
use fracfield::{besov_seminorm, inner_product, DirectConfig, DirectOperators, Grid, GridField, SpectralOperators};
use proptest::prelude::*;

fn grid1(n: usize) -> Grid {
    Grid::cube(1, -1.0, 1.0, n).unwrap()
}

fn field(grid: &Grid, data: Vec<f64>) -> GridField {
    GridField::scalar(grid.clone(), data).unwrap()
}

fn data(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn alpha() -> impl Strategy<Value = f64> {
    0.1f64..0.9
}

fn rolled(v: &[f64], s: usize) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| v[(i + s) % n]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn direct_duality_on_arbitrary_data(a in alpha(), u in data(32), v in data(32)) {
        let g = grid1(32);
        let ops = DirectOperators::new(&g, a, &DirectConfig::default()).unwrap();
        let f = field(&g, u);
        let phi = field(&g, v);
        let lhs = inner_product(&ops.gradient(&f).unwrap(), &phi).unwrap();
        let rhs = -inner_product(&f, &ops.divergence(&phi).unwrap()).unwrap();
        let scale = f.lp_norm(2.0).unwrap() * phi.lp_norm(2.0).unwrap() + 1e-300;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn gradient_is_linear_and_kills_constants(a in alpha(), u in data(32), v in data(32), c in -3.0f64..3.0, k in -5.0f64..5.0) {
        let g = grid1(32);
        let ops = DirectOperators::new(&g, a, &DirectConfig::default()).unwrap();
        let (f, h) = (field(&g, u), field(&g, v));
        let combo = ops.gradient(&f.scale(c).add(&h).unwrap()).unwrap();
        let split = ops.gradient(&f).unwrap().scale(c).add(&ops.gradient(&h).unwrap()).unwrap();
        let err = combo.sub(&split).unwrap().max_abs();
        prop_assert!(err <= 1e-12 * (1.0 + split.max_abs()));
        let constant = ops.gradient(&field(&g, vec![k; 32])).unwrap();
        prop_assert!(constant.max_abs() == 0.0);
    }

    #[test]
    fn parallel_and_serial_are_bitwise_equal(a in alpha(), u in data(256)) {
        let g = Grid::cube(2, 0.0, 1.0, 16).unwrap();
        let f = field(&g, u);
        let par = DirectOperators::new(&g, a, &DirectConfig::default()).unwrap();
        let ser = DirectOperators::new(&g, a, &DirectConfig::default().serial()).unwrap();
        let x = par.gradient(&f).unwrap();
        let y = ser.gradient(&f).unwrap();
        prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        let x = par.laplacian(&f).unwrap();
        let y = ser.laplacian(&f).unwrap();
        prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn spectral_gradient_commutes_with_translation(a in alpha(), u in data(32), s in 0usize..32) {
        let g = grid1(32);
        let ops = SpectralOperators::new(&g);
        let shifted = ops.gradient(&field(&g, rolled(&u, s)), a).unwrap();
        let base = ops.gradient(&field(&g, u), a).unwrap();
        let expect = rolled(base.data(), s);
        let err = shifted.data().iter().zip(&expect).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * (1.0 + base.max_abs()));
    }

    #[test]
    fn riesz_transform_is_a_contraction(u in data(64)) {
        let g = grid1(64);
        let f = field(&g, u);
        let r = SpectralOperators::new(&g).riesz(&f).unwrap();
        prop_assert!(r.lp_norm(2.0).unwrap() <= f.lp_norm(2.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn besov_is_homogeneous_and_translation_invariant(a in alpha(), u in data(32), c in -4.0f64..4.0, s in 0usize..32) {
        let g = grid1(32);
        let base = besov_seminorm(&field(&g, u.clone()), a, 2.0, 2.0).unwrap().value;
        let scaled = besov_seminorm(&field(&g, u.iter().map(|x| c * x).collect()), a, 2.0, 2.0).unwrap().value;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
        let moved = besov_seminorm(&field(&g, rolled(&u, s)), a, 2.0, 2.0).unwrap().value;
        prop_assert!((moved - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn besov_triangle_inequality(a in alpha(), u in data(32), v in data(32), p in prop::sample::select(vec![1.5, 2.0, 4.0, f64::INFINITY])) {
        let g = grid1(32);
        let (f, h) = (field(&g, u), field(&g, v));
        let q = 2.0;
        let sum = besov_seminorm(&f.add(&h).unwrap(), a, p, q).unwrap().value;
        let parts = besov_seminorm(&f, a, p, q).unwrap().value + besov_seminorm(&h, a, p, q).unwrap().value;
        prop_assert!(sum <= parts * (1.0 + 1e-12));
    }

    #[test]
    fn field_json_round_trip(u in data(16)) {
        let g = Grid::new(1, &[-0.5], &[2.0], 16).unwrap();
        let f = field(&g, u);
        let back = GridField::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solution_vanishes_off_the_mask(a in 0.3f64..0.7, rhs in data(64), lo in 0.1f64..0.3, width in 0.2f64..0.5) {
        let g = Grid::cube(1, 0.0, 1.0, 64).unwrap();
        let f = field(&g, rhs);
        let problem = EllipticProblem::fractional_laplacian(&g, a, MaskSpec::Interval([lo, lo + width]), 1.0, f).unwrap();
        let rep = solve(&problem, &SolveOptions::default()).unwrap();
        prop_assert!(rep.converged);
        let u = rep.solution();
        for (i, inside) in problem.mask.iter().enumerate() {
            if !inside {
                prop_assert_eq!(u.data()[i], 0.0);
            }
        }
    }
}
