//! Acceptance run: every criterion at its stated tolerance and time budget.
//! Prints one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use fracfield::identities::*;
use fracfield::pde::{check_energy, generic_problem, verify_bvp, MaskSpec};
use fracfield::{DirectConfig, DirectOperators, Error, FieldSpec, Grid, IndicatorShape, VerificationReport};

struct Outcome {
    ok: bool,
    detail: String,
}

fn all_pass(reports: &[VerificationReport]) -> Outcome {
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} seed {:?}: {:?}", r.suite, r.seed, r.failed_checks()))
        .collect();
    let worst = reports.iter().map(|r| r.residuals.linf_rel).fold(0.0, f64::max);
    Outcome { ok: failed.is_empty(), detail: if failed.is_empty() { format!("worst rel residual {worst:.2e}") } else { failed.join("; ") } }
}

fn run(label: &str, budget_s: u64, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= Duration::from_secs(budget_s);
    let ok = out.ok && in_time;
    println!(
        "[{}] {label}: {} ({:.2}s of {budget_s}s)",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    ok
}

fn suite(name: &str, cfg: &SuiteConfig) -> VerificationReport {
    run_suite(name, cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn c1_leibniz() -> Outcome {
    let mut reports = Vec::new();
    for dim in [1, 2] {
        for seed in 0..10 {
            let cfg = SuiteConfig { dim, n: 128, seed, backend: Backend::Direct, ..Default::default() };
            let r = suite("leibniz", &cfg);
            reports.push(r);
        }
    }
    let mut o = all_pass(&reports);
    let worst = reports.iter().map(|r| r.residuals.linf_rel).fold(0.0, f64::max);
    o.ok &= worst <= 1e-12;
    o
}

fn c2_duality() -> Outcome {
    let mut reports = Vec::new();
    for backend in [Backend::Spectral, Backend::Direct] {
        let tol = if backend == Backend::Spectral { 1e-12 } else { 1e-10 };
        for seed in 0..10 {
            for name in ["duality", "nl-duality"] {
                let cfg = SuiteConfig { dim: 1, n: 128, seed, backend, ..Default::default() };
                let r = suite(name, &cfg);
                assert!(r.tolerance <= tol);
                reports.push(r);
            }
        }
    }
    all_pass(&reports)
}

fn c3_swap_zero_mean() -> Outcome {
    let mut reports = Vec::new();
    for backend in [Backend::Spectral, Backend::Direct] {
        for seed in 0..10 {
            for name in ["swap", "zero-mean"] {
                let cfg = SuiteConfig { dim: 1, n: 128, seed, backend, ..Default::default() };
                reports.push(suite(name, &cfg));
            }
        }
    }
    let mut o = all_pass(&reports);
    o.ok &= reports.iter().all(|r| r.residuals.linf_rel <= 1e-10);
    o
}

fn c4_cross_backend() -> Outcome {
    let grid = Grid::cube(1, -1.0, 1.0, 512).unwrap();
    let f = FieldSpec::gaussian(&[0.0], 0.1, 1.0);
    let mut reports = Vec::new();
    let mut detail = Vec::new();
    for alpha in [0.3, 0.5, 0.7] {
        let r = verify_cross_backend(&f, &grid, alpha, &[128, 256, 512], 1e-3).unwrap();
        detail.push(format!("alpha {alpha}: diff {:.2e}, order {:.2}", r.residuals.linf_rel, observed_order(&r.refinement)));
        reports.push(r);
    }
    let o = all_pass(&reports);
    Outcome { ok: o.ok, detail: if o.ok { detail.join(", ") } else { o.detail } }
}

fn c5_decomposition() -> Outcome {
    let cfg = SuiteConfig { dim: 1, n: 256, seed: 3, ..Default::default() };
    let r = suite("decomposition", &cfg);
    let finest = r.refinement.last().map(|t| t.1).unwrap_or(f64::INFINITY);
    Outcome {
        ok: r.pass && r.residuals.linf_rel <= 1e-10 && finest <= 1e-2,
        detail: format!("algebraic {:.2e}, spectral vs direct {:?}", r.residuals.linf_rel, r.refinement),
    }
}

fn c6_riesz() -> Outcome {
    let mut reports = Vec::new();
    for dim in [1, 2] {
        for alpha in [0.3, 0.5, 0.8] {
            let cfg = SuiteConfig { dim, n: 64, alpha, seed: 5, ..Default::default() };
            reports.push(suite("riesz", &cfg));
        }
    }
    all_pass(&reports)
}

fn c7_inequalities() -> Outcome {
    let mut reports = Vec::new();
    for seed in 0..50 {
        let cfg = SuiteConfig { dim: 1, n: 64, seed, alpha: [0.3, 0.5, 0.7][seed as usize % 3], ..Default::default() };
        reports.push(suite("minkowski", &cfg));
        reports.push(suite("nl-bound", &cfg));
    }
    for seed in 0..3 {
        let cfg = SuiteConfig { dim: 2, n: 16, seed, ..Default::default() };
        reports.push(suite("minkowski", &cfg));
        reports.push(suite("nl-bound", &cfg));
    }
    let margins: usize = reports.iter().map(|r| r.margins.len()).sum();
    let o = all_pass(&reports);
    Outcome { ok: o.ok, detail: if o.ok { format!("{margins} margins, none violated") } else { o.detail } }
}

fn c8_kpv_crw() -> Outcome {
    let cfg = SuiteConfig { n: 128, trials: 20, p: 2.0, alpha: 0.5, seed: 11, ..Default::default() };
    let kpv = suite("kpv", &cfg);
    let crw = suite("crw", &cfg);
    let refused = ["kpv", "crw"].iter().all(|s| match run_suite(s, &SuiteConfig { p: 1.0, ..cfg.clone() }) {
        Err(Error::Unsupported(msg)) => msg.contains("open"),
        _ => false,
    });
    let o = all_pass(&[kpv.clone(), crw.clone()]);
    Outcome {
        ok: o.ok && refused,
        detail: format!(
            "kpv drift {:.3}, crw drift {:.3}, p=1 refused: {refused}",
            kpv.metrics.get("drift (Linf form)").copied().unwrap_or(f64::NAN),
            crw.metrics.get("drift (Linf form)").copied().unwrap_or(f64::NAN)
        ),
    }
}

fn c9_gauss_green() -> Outcome {
    let mut reports = Vec::new();
    for seed in 0..5 {
        for backend in [Backend::Direct, Backend::Spectral] {
            let cfg = SuiteConfig { dim: 1, n: 128, seed, backend, ..Default::default() };
            reports.push(suite("gauss-green", &cfg));
        }
    }
    let smooth_ok = reports.iter().all(|r| r.pass && r.residuals.linf_rel <= 1e-10);
    let base = Grid::cube(1, -2.0, 2.0, 1024).unwrap();
    let f = FieldSpec::gaussian(&[0.25], 0.3, 1.0);
    let set = verify_gauss_green_set(&f, &IndicatorShape::Interval { a: 0.0, b: 1.0 }, &base, 0.5, &[128, 256, 512, 1024], 5e-2).unwrap();
    let finest = set.refinement.last().map(|t| t.1).unwrap_or(f64::INFINITY);
    let decreasing = set.refinement.windows(2).all(|w| w[1].1 < w[0].1);
    Outcome {
        ok: smooth_ok && set.pass && finest <= 5e-2 && decreasing,
        detail: format!("smooth pairs ok: {smooth_ok}, indicator table {:?}", set.refinement),
    }
}

fn c10_bvp() -> Outcome {
    let r = verify_bvp(0.5, 1.0, &[64, 128, 256], 1e-10).unwrap();
    let err = r.refinement.last().map(|t| t.1).unwrap_or(f64::INFINITY);
    Outcome {
        ok: r.pass && err <= 1e-2,
        detail: format!(
            "L2 errors {:?}, residual {:.1e}, iterations {}, full-mask {:.1e}",
            r.refinement,
            r.metrics["solver relative residual (worst)"],
            r.metrics["iterations (worst)"],
            r.metrics["full-mask oracle error"]
        ),
    }
}

fn c11_energy() -> Outcome {
    let mut reports = Vec::new();
    let cases = [(1, 128, MaskSpec::Interval([0.25, 0.75])), (2, 32, MaskSpec::Disk { center: vec![0.5, 0.5], r: 0.3 })];
    for (dim, n, mask) in cases {
        let grid = Grid::cube(dim, 0.0, 1.0, n).unwrap();
        let p = generic_problem(&grid, 0.5, mask, 1.0, 21).unwrap();
        reports.push(check_energy(&p, 100, 21).unwrap());
    }
    let worst = reports
        .iter()
        .map(|r| r.margins.iter().map(|m| m.margin / r.scale).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    let o = all_pass(&reports);
    Outcome { ok: o.ok, detail: if o.ok { format!("200 pairs, worst scaled margin {worst:.3e}") } else { o.detail } }
}

fn c12_determinism() -> Outcome {
    let mut same = true;
    for (name, cfg) in [
        ("leibniz", SuiteConfig { dim: 2, n: 32, seed: 9, ..Default::default() }),
        ("minkowski", SuiteConfig { n: 64, seed: 9, ..Default::default() }),
        ("kpv", SuiteConfig { n: 64, trials: 10, seed: 9, ..Default::default() }),
        ("energy", SuiteConfig { n: 64, trials: 10, seed: 9, ..Default::default() }),
    ] {
        let a = suite(name, &cfg).to_json();
        let b = suite(name, &cfg).to_json();
        let serial = suite(name, &SuiteConfig { parallel: false, ..cfg.clone() }).to_json();
        same &= a == b && a == serial;
    }
    let grid = Grid::cube(2, -1.0, 1.0, 64).unwrap();
    let f = bump_corpus(&grid, 4, 1).unwrap().remove(0);
    let par = DirectOperators::new(&grid, 0.5, &DirectConfig::default()).unwrap().gradient(&f).unwrap();
    let ser = DirectOperators::new(&grid, 0.5, &DirectConfig::default().serial()).unwrap().gradient(&f).unwrap();
    let bits = par.data().iter().zip(ser.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    Outcome { ok: same && bits, detail: format!("reports identical: {same}, parallel/serial bitwise equal: {bits}") }
}

#[test]
fn acceptance() {
    let results = [
        run("1 discrete Leibniz (direct, 1D+2D, N=128)", 30, c1_leibniz),
        run("2 duality and NL duality", 10, c2_duality),
        run("3 swap and zero mean", 10, c3_swap_zero_mean),
        run("4 cross-backend gradient of a Gaussian", 60, c4_cross_backend),
        run("5 NL decomposition", 60, c5_decomposition),
        run("6 Riesz identities", 5, c6_riesz),
        run("7 inequality suites (50 seeds)", 120, c7_inequalities),
        run("8 KPV/CRW ratio studies", 120, c8_kpv_crw),
        run("9 Gauss-Green", 60, c9_gauss_green),
        run("10 BVP manufactured solution", 60, c10_bvp),
        run("11 energy estimates", 60, c11_energy),
        run("12 determinism", 120, c12_determinism),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
