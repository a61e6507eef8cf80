use delaystab_core::distributions::DelayDistribution;
use num_complex::Complex64;
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = DelayDistribution> {
    prop_oneof![
        (0.0f64..10.0).prop_map(|d| DelayDistribution::dirac(d).unwrap()),
        prop::collection::vec((0.0f64..10.0, 0.01f64..1.0), 1..8)
            .prop_map(|atoms| DelayDistribution::discrete(atoms).unwrap()),
        (0.05f64..10.0).prop_map(|m| DelayDistribution::exponential(m).unwrap()),
        (1u32..8, 0.05f64..10.0).prop_map(|(k, m)| DelayDistribution::gamma(k, m).unwrap()),
        (0.0f64..5.0, 0.01f64..5.0)
            .prop_map(|(lo, w)| DelayDistribution::uniform(lo, lo + w).unwrap()),
    ]
}

/// Composite Simpson rule for `∫ f` on `[lo, hi]` with `n` panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn json_and_toml_round_trip(d in kernel()) {
        prop_assert_eq!(&DelayDistribution::from_json_str(&d.to_json_string()).unwrap(), &d);
        prop_assert_eq!(&DelayDistribution::from_toml_str(&d.to_toml_string()).unwrap(), &d);
    }

    #[test]
    fn rescaling_sets_the_mean(d in kernel(), target in 0.0f64..20.0) {
        prop_assume!(d.mean() > 0.0);
        let scaled = d.scale_to_mean(target).unwrap();
        prop_assert!((scaled.mean() - target).abs() <= 1e-12 * (1.0 + target));
    }

    #[test]
    fn discretization_keeps_the_mean(d in kernel(), n in 1usize..300) {
        let disc = d.discretize(n);
        prop_assert!((disc.mean() - d.mean()).abs() <= 1e-10 * (1.0 + d.mean()));
    }

    #[test]
    fn trig_moments_lie_in_the_unit_disc(d in kernel(), omega in 0.0f64..50.0) {
        let m = d.trig_moments(omega);
        prop_assert!(m.c_value.hypot(m.s_value) <= 1.0 + 1e-12);
        prop_assert!((d.trig_moments(0.0).c_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_moment_above_the_chord(d in kernel(), omega in 0.0f64..50.0) {
        let c = delaystab_core::extremal::chord_constant();
        prop_assert!(d.trig_moments(omega).c_value >= 1.0 - c * omega * d.mean() - 1e-12);
    }

    #[test]
    fn laplace_at_zero_is_one(d in kernel()) {
        let v = d.laplace(Complex64::new(0.0, 0.0)).unwrap();
        prop_assert!((v - 1.0).norm() < 1e-12);
    }
}

#[test]
fn continuous_trig_moments_match_quadrature() {
    let kernels = [
        DelayDistribution::exponential(1.3).unwrap(),
        DelayDistribution::gamma(2, 0.7).unwrap(),
        DelayDistribution::gamma(5, 3.0).unwrap(),
        DelayDistribution::uniform(0.4, 2.9).unwrap(),
    ];
    for d in &kernels {
        let hi = d.tail_cutoff(1e-15);
        let lo = match d.kind() {
            delaystab_core::distributions::DistributionKind::Uniform { lower, .. } => *lower,
            _ => 0.0,
        };
        for omega in [0.1, 0.9, 2.5, 7.0] {
            let m = d.trig_moments(omega);
            let density = |t: f64| d.density(t).unwrap();
            let c = simpson(|t| density(t) * (omega * t).cos(), lo, hi, 200_000);
            let s = simpson(|t| density(t) * (omega * t).sin(), lo, hi, 200_000);
            assert!(
                (m.c_value - c).abs() < 1e-9,
                "{d} at {omega}: {} vs {c}",
                m.c_value
            );
            assert!(
                (m.s_value - s).abs() < 1e-9,
                "{d} at {omega}: {} vs {s}",
                m.s_value
            );
        }
    }
}
