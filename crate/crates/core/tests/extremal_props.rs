use delaystab_core::criteria;
use delaystab_core::distributions::{DelayDistribution, DiscreteMixture};
use delaystab_core::extremal;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// `(C, S)` of `(1 - p) δ(u) + p δ(v)` at unit frequency, `p` fixed by the mean `t`.
fn pair_moments(u: f64, v: f64, t: f64) -> (f64, f64) {
    let p = (t - u) / (v - u);
    (
        (1.0 - p) * u.cos() + p * v.cos(),
        (1.0 - p) * u.sin() + p * v.sin(),
    )
}

/// Upper delay `v ∈ (t, π]` giving cosine moment `c` for a fixed lower delay.
fn solve_upper(u: f64, t: f64, c: f64) -> Option<f64> {
    let g = |v: f64| pair_moments(u, v, t).0 - c;
    let n = 64;
    let mut lo = t + 1e-9;
    let mut g_lo = g(lo);
    for k in 1..=n {
        let hi = t + (PI - t) * k as f64 / n as f64;
        let g_hi = g(hi);
        if g_lo * g_hi <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if (g(m) > 0.0) == (g_lo > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        lo = hi;
        g_lo = g_hi;
    }
    None
}

#[test]
fn extremal_pair_dominates_admissible_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut cases = 0;
    while cases < 200 {
        let t = rng.gen_range(0.2..2.8);
        let u = rng.gen_range(0.0..t);
        let v = rng.gen_range(t..PI);
        let (c, s) = pair_moments(u, v, t);
        let pair = extremal::extremal_two_delay(c, 1.0, t).unwrap();
        if c > t.cos() {
            // chord meets the cosine before t: no admissible (0, τ) pair
            assert!(pair.degenerate);
            continue;
        }
        cases += 1;
        assert!(!pair.degenerate);
        assert!((pair.preserved_mean - t).abs() < 1e-12);
        assert!((pair.preserved_c - c).abs() < 1e-10);
        assert!(
            pair.s_star >= s - 1e-12,
            "t={t} u={u} v={v}: {} < {s}",
            pair.s_star
        );

        let mut admissible = 0;
        while admissible < 10_000 {
            let u2 = rng.gen_range(0.0..t);
            let Some(v2) = solve_upper(u2, t, c) else {
                continue;
            };
            let (c2, s2) = pair_moments(u2, v2, t);
            assert!((c2 - c).abs() < 1e-9);
            assert!(
                s2 <= pair.s_star + 1e-9,
                "t={t} c={c}: ({u2}, {v2}) gives {s2} > {}",
                pair.s_star
            );
            admissible += 1;
        }
    }
}

fn random_atoms<R: Rng>(rng: &mut R) -> Vec<(f64, f64)> {
    let n = rng.gen_range(2..=8);
    (0..n)
        .map(|_| (rng.gen_range(0.0..5.0), rng.gen_range(0.05..1.0)))
        .collect()
}

#[test]
fn reduction_preserves_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut reductions = 0;
    let mut with_steps = 0;
    for _ in 0..2000 {
        let a = rng.gen_range(-0.95..0.0);
        let bound = criteria::universal_bound(a, 1.0).unwrap();
        let raw = random_atoms(&mut rng);
        let w: f64 = raw.iter().map(|x| x.1).sum();
        let m: f64 = raw.iter().map(|x| x.0 * x.1).sum::<f64>() / w;
        if m == 0.0 {
            continue;
        }
        let scale = rng.gen_range(0.3..0.99) * bound / m;
        let mix = DiscreteMixture::new(raw.iter().map(|&(d, p)| (d * scale, p / w))).unwrap();
        let dist = DelayDistribution::from_mixture(mix.clone());
        for omega in criteria::crossing_frequencies(a, &dist, 2048).unwrap() {
            if omega <= 0.0 {
                continue;
            }
            let red = extremal::reduce_to_extremal_traced(&mix, omega, a, 1e-8).unwrap();
            let e = mix.mean();
            let c0 = dist.trig_moments(omega).c_value;
            let s0 = dist.trig_moments(omega).s_value;
            let mut s_prev = s0;
            for step in &red.steps {
                let mean: f64 = step.atoms.iter().map(|x| x.delay * x.weight).sum();
                let c: f64 = step
                    .atoms
                    .iter()
                    .map(|x| x.weight * (omega * x.delay).cos())
                    .sum();
                let s: f64 = step
                    .atoms
                    .iter()
                    .map(|x| x.weight * (omega * x.delay).sin())
                    .sum();
                assert!(
                    (mean - e).abs() < 1e-12 * (1.0 + e),
                    "mean drift {mean} vs {e}"
                );
                assert!((c - c0).abs() < 1e-10, "cosine drift {c} vs {c0}");
                assert!(step.new_delay <= step.replaced.1 + 1e-12);
                assert!(s >= s_prev - 1e-10, "sine moment decreased");
                s_prev = s;
            }
            assert!(red.pair.tau2 <= mix.max_delay() + 1e-12);
            assert!(red.pair.s_star >= s0 - 1e-10);
            assert!(
                red.pair.s_star < omega,
                "S* = {} at ω = {omega}",
                red.pair.s_star
            );
            reductions += 1;
            with_steps += usize::from(!red.steps.is_empty());
        }
    }
    assert!(reductions >= 100, "only {reductions} reductions");
    assert!(
        with_steps >= 20,
        "only {with_steps} reductions took a pairwise step"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn two_delay_bound_holds(a in -0.99f64..0.99, p in 0.01f64..=1.0, frac in 0.01f64..0.999) {
        let bound = criteria::universal_bound(a, 1.0).unwrap();
        let r = frac * bound / p;
        prop_assert!(extremal::s_star_bound_check(a, p, r).unwrap());
    }

    #[test]
    fn slope_inequality_is_nonnegative(z in 1e-6f64..=PI) {
        prop_assert!(extremal::slope_inequality(z) >= -1e-15);
    }
}
