use delaystab_core::charfun::{self, RootOptions, RootStatus};
use delaystab_core::distributions::DelayDistribution;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_mixture<R: Rng>(rng: &mut R) -> DelayDistribution {
    let n = rng.gen_range(1..=3);
    let atoms: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..4.0), rng.gen_range(0.1..1.0)))
        .collect();
    DelayDistribution::discrete(atoms).unwrap()
}

/// Winding number by uniform sampling of the rectangle boundary, independent
/// of the adaptive walker. `None` when the sampling is too coarse to trust.
fn brute_force_count(a: f64, d: &DelayDistribution) -> Option<usize> {
    let r = a.abs() + 1.5;
    let corners = [
        Complex64::new(0.0, -r),
        Complex64::new(r, -r),
        Complex64::new(r, r),
        Complex64::new(0.0, r),
    ];
    let per_edge = 40_000;
    let f = |z: Complex64| z + a + d.laplace(z).unwrap();
    let mut total = 0.0;
    let mut prev = f(corners[0]);
    for k in 0..4 {
        let (s, e) = (corners[k], corners[(k + 1) % 4]);
        for i in 1..=per_edge {
            let z = s + (e - s) * (i as f64 / per_edge as f64);
            let v = f(z);
            let step = (v / prev).arg();
            if step.abs() > 1.0 {
                return None;
            }
            total += step;
            prev = v;
        }
    }
    Some((total / std::f64::consts::TAU).round() as usize)
}

#[test]
fn count_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    while compared < 50 {
        let d = small_mixture(&mut rng);
        let a = rng.gen_range(-1.5..1.5);
        let Some(expected) = brute_force_count(a, &d) else {
            continue;
        };
        let got = charfun::unstable_count(a, &d).unwrap();
        assert_eq!(got, expected, "a = {a}, {d}");
        compared += 1;
    }
}

#[test]
fn leading_root_residual_and_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let d = small_mixture(&mut rng);
        let a = rng.gen_range(-1.5..1.5);
        let report = charfun::count_unstable_roots(a, &d).unwrap();
        let root = report.leading_root;
        let residual = charfun::char_value(a, &d, root).unwrap().value.norm();
        assert!(residual < 1e-10, "a = {a}, {d}: residual {residual:e}");
        assert!(root.im >= 0.0);
        if root.re.abs() > 1e-9 {
            assert_eq!(
                report.unstable_count == 0,
                root.re < 0.0,
                "a = {a}, {d}: {root}"
            );
        }
    }
}

#[test]
fn rational_kernels_leading_root_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let a = rng.gen_range(-3.0..3.0);
        let mean = rng.gen_range(0.05..10.0);
        let d = if rng.gen_bool(0.3) {
            DelayDistribution::exponential(mean).unwrap()
        } else {
            DelayDistribution::gamma(rng.gen_range(2..8), mean).unwrap()
        };
        let root = charfun::leading_root(a, &d).unwrap();
        if root.re.abs() > 1e-9 {
            let count = charfun::unstable_count(a, &d).unwrap();
            assert_eq!(count == 0, root.re < 0.0, "a = {a}, {d}: {root}");
        }
    }
}

#[test]
fn root_status_agrees_with_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let opts = RootOptions::default();
    for _ in 0..60 {
        let d = small_mixture(&mut rng);
        let a = rng.gen_range(-1.5..1.5);
        let summary = charfun::root_status(a, &d, &opts).unwrap();
        let count = charfun::unstable_count(a, &d).unwrap();
        match summary.status {
            RootStatus::Unstable => assert_eq!(summary.unstable_count, count),
            RootStatus::Stable => assert_eq!(count, 0),
            RootStatus::Marginal => {}
        }
    }
}

#[test]
fn leading_root_converges_under_discretization() {
    for (a, d) in [
        (0.0, DelayDistribution::exponential(1.0).unwrap()),
        (-0.3, DelayDistribution::gamma(3, 2.0).unwrap()),
        (0.2, DelayDistribution::gamma(2, 1.0).unwrap()),
    ] {
        let exact = charfun::leading_root(a, &d).unwrap();
        let errors: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&n| (charfun::leading_root(a, &d.discretize(n)).unwrap() - exact).norm())
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "{d}: errors {errors:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugate_symmetry(
        a in -2.0f64..2.0,
        re in -0.5f64..3.0,
        im in -5.0f64..5.0,
        delays in prop::collection::vec((0.0f64..5.0, 0.1f64..1.0), 1..5),
        mean in 0.2f64..4.0,
    ) {
        let lam = Complex64::new(re, im);
        let kernels = [
            DelayDistribution::discrete(delays).unwrap(),
            DelayDistribution::exponential(mean).unwrap(),
            DelayDistribution::gamma(3, mean).unwrap(),
            DelayDistribution::uniform(0.1, 0.1 + mean).unwrap(),
        ];
        for d in kernels.iter().filter(|d| re > d.convergence_abscissa()) {
            let v = charfun::char_value(a, d, lam).unwrap().value;
            let w = charfun::char_value(a, d, lam.conj()).unwrap().value;
            prop_assert!((v.conj() - w).norm() <= 1e-13 * (1.0 + v.norm()));
        }
    }
}
