use delaystab_core::charfun;
use delaystab_core::criteria::{self, VerdictStatus};
use delaystab_core::distributions::DelayDistribution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mixture<R: Rng>(rng: &mut R, max_atoms: usize) -> DelayDistribution {
    let n = rng.gen_range(1..=max_atoms);
    let atoms: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..6.0), rng.gen_range(0.05..1.0)))
        .collect();
    DelayDistribution::discrete(atoms).unwrap()
}

fn ground_truth(a: f64, b: f64, d: &DelayDistribution) -> usize {
    let (a_n, scaled) = criteria::normalize(a, b, d).unwrap();
    charfun::unstable_count(a_n, &scaled).unwrap()
}

#[test]
fn verdicts_agree_with_root_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut decided = 0;
    for _ in 0..500 {
        let b = rng.gen_range(0.2..3.0);
        let a = b * rng.gen_range(-1.4..1.4);
        let d = random_mixture(&mut rng, 10);
        let count = ground_truth(a, b, &d);

        let region = criteria::classify_region(a, b, d.mean()).unwrap();
        match region.status {
            VerdictStatus::Stable => assert_eq!(count, 0, "a={a} b={b} {d}"),
            VerdictStatus::Unstable => assert!(count > 0, "a={a} b={b} {d}"),
            _ => {}
        }

        if a.abs() < b {
            let (a_n, scaled) = criteria::normalize(a, b, &d).unwrap();
            if let Some(v) = criteria::sufficient_test(a_n, &scaled).unwrap() {
                assert_eq!(v.status, VerdictStatus::Stable);
                assert_eq!(count, 0, "sufficient test, a={a} b={b} {d}");
                decided += 1;
            }
            if count > 0 {
                let crossings = criteria::hopf_crossings(a_n, &scaled).unwrap();
                assert!(
                    !crossings.is_empty(),
                    "no crossing for unstable a={a} b={b} {d}"
                );
            }
        }
    }
    assert!(decided > 50, "sufficient test decided only {decided} cases");
}

#[test]
fn dirac_verdict_agrees_with_root_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..300 {
        let b = rng.gen_range(0.2..3.0);
        let a = b * rng.gen_range(-1.4..1.4);
        let e = rng.gen_range(0.0..5.0);
        let verdict = criteria::hayes_verdict(a, b, e).unwrap();
        let count = ground_truth(a, b, &DelayDistribution::dirac(e).unwrap());
        match verdict.status {
            VerdictStatus::Stable => assert_eq!(count, 0, "a={a} b={b} E={e}"),
            VerdictStatus::Unstable => assert!(count > 0, "a={a} b={b} E={e}"),
            other => panic!("unexpected {other:?} at a={a} b={b} E={e}"),
        }
    }
}

#[test]
fn bound_is_not_vacuous_above_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut unstable = 0;
    for _ in 0..200 {
        let a = rng.gen_range(-0.9..0.9);
        let bound = criteria::universal_bound(a, 1.0).unwrap();
        let d = random_mixture(&mut rng, 4)
            .scale_to_mean(1.5 * bound)
            .unwrap();
        if charfun::unstable_count(a, &d).unwrap() > 0 {
            unstable += 1;
        }
    }
    assert!(unstable > 0);
}

#[test]
fn sufficient_test_and_roots_for_continuous_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let a = rng.gen_range(-0.95..0.95);
        let mean = rng.gen_range(0.1..10.0);
        let width = rng.gen_range(0.0..1.0) * mean;
        let kernels = [
            DelayDistribution::exponential(mean).unwrap(),
            DelayDistribution::gamma(rng.gen_range(1..6), mean).unwrap(),
            DelayDistribution::uniform(mean - width, mean + width).unwrap(),
        ];
        for d in &kernels {
            let count = charfun::unstable_count(a, d).unwrap();
            if criteria::sufficient_test(a, d).unwrap().is_some() {
                assert_eq!(count, 0, "a={a} {d}");
            }
            if count > 0 {
                assert!(
                    !criteria::hopf_crossings(a, d).unwrap().is_empty(),
                    "a={a} {d}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stable_below_universal_bound(
        a in -0.99f64..0.99,
        atoms in prop::collection::vec((0.0f64..10.0, 0.05f64..1.0), 1..8),
        frac in 0.05f64..0.99,
    ) {
        let bound = criteria::universal_bound(a, 1.0).unwrap();
        let d = DelayDistribution::discrete(atoms).unwrap().scale_to_mean(frac * bound).unwrap();
        prop_assert_eq!(charfun::unstable_count(a, &d).unwrap(), 0);
        prop_assert!(criteria::sufficient_test(a, &d).unwrap().is_some());
    }

    #[test]
    fn dirac_flips_across_bound(a in -0.99f64..0.99, b in 0.1f64..5.0) {
        let a = a * b;
        let bound = criteria::universal_bound(a, b).unwrap();
        let below = criteria::hayes_verdict(a, b, bound * (1.0 - 1e-6)).unwrap();
        let above = criteria::hayes_verdict(a, b, bound * (1.0 + 1e-6)).unwrap();
        prop_assert_eq!(below.status, VerdictStatus::Stable);
        prop_assert_eq!(above.status, VerdictStatus::Unstable);
    }
}
