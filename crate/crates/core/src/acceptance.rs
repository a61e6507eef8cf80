//! Reproducible end-to-end checks of the library against known results.
//!
//! Each check returns a [`CriterionOutcome`] rather than panicking, so the
//! same code backs the test suite and the `selftest` command.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{self, BoundaryTrace};
use crate::charfun;
use crate::criteria::universal_bound;
use crate::distributions::{DelayDistribution, DiscreteMixture};
use crate::extremal;
use crate::simulator::{self, History};

pub const DEFAULT_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(serialize_with = "seconds")]
    pub elapsed: Duration,
}

fn seconds<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl std::fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{:>2}] {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed<F>(id: u32, name: &'static str, limit: Option<Duration>, check: F) -> CriterionOutcome
where
    F: FnOnce() -> Result<String, String>,
{
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!(
                "; runtime {:.2} s over {:.0} s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ));
        }
    }
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed,
    }
}

/// A random delay distribution: mixtures of up to ten atoms, exponential,
/// gamma and uniform kernels, each with probability one quarter.
pub fn random_distribution<R: Rng>(rng: &mut R) -> DelayDistribution {
    match rng.gen_range(0..4) {
        0 => {
            let n = rng.gen_range(1..=10);
            let atoms: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let delay = if rng.gen_bool(0.15) {
                        0.0
                    } else {
                        rng.gen_range(0.0..5.0)
                    };
                    (delay, rng.gen_range(0.05..1.0))
                })
                .collect();
            let mix = DiscreteMixture::new(atoms).expect("valid atoms");
            if mix.mean() > 0.0 {
                DelayDistribution::from_mixture(mix)
            } else {
                DelayDistribution::dirac(1.0).expect("valid delay")
            }
        }
        1 => DelayDistribution::exponential(rng.gen_range(0.2..3.0)).expect("valid mean"),
        2 => DelayDistribution::gamma(rng.gen_range(1..=8), rng.gen_range(0.2..3.0))
            .expect("valid gamma"),
        _ => {
            let lower = rng.gen_range(0.0..2.0);
            let width = rng.gen_range(0.05..3.0);
            DelayDistribution::uniform(lower, lower + width).expect("valid support")
        }
    }
}

fn gamma_two() -> DelayDistribution {
    DelayDistribution::gamma(2, 1.0).expect("valid gamma")
}

/// Largest `a` over the Hopf branches of a trace.
pub fn max_boundary_a(trace: &BoundaryTrace) -> Option<f64> {
    trace
        .hopf_branches()
        .flat_map(|b| b.points.iter().map(|p| p.a))
        .max_by(f64::total_cmp)
}

/// Values of `E` at which the Hopf branches cross the vertical line `a`.
pub fn boundary_crossings_at(trace: &BoundaryTrace, a: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for branch in trace.hopf_branches() {
        for w in branch.points.windows(2) {
            let (p, q) = (w[0], w[1]);
            if (p.a - a) * (q.a - a) < 0.0 || (q.a == a && p.a != a) {
                let s = (a - p.a) / (q.a - p.a);
                out.push(p.e + s * (q.e - p.e));
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

pub fn criterion_1_gamma_boundary() -> CriterionOutcome {
    timed(
        1,
        "gamma kernel boundary and its largest a",
        Some(Duration::from_secs(5)),
        || {
            let trace =
                boundary::trace_boundary(&gamma_two(), 100.0, 4000).map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for b in trace.hopf_branches() {
                for p in &b.points {
                    let w = p.u * p.u / 4.0;
                    let a = (w - 1.0) / ((1.0 + w) * (1.0 + w));
                    let e = (1.0 + w) * (1.0 + w);
                    worst = worst.max((p.a - a).abs()).max((p.e - e).abs() / e);
                }
            }
            let a_hat = max_boundary_a(&trace).ok_or("no boundary traced")?;
            let detail = format!(
                "max a = {a_hat:.6} (expected 0.1216 ± 1e-3), parametrization error {worst:.1e}"
            );
            if worst < 1e-9 && (a_hat - 0.1216).abs() <= 1e-3 {
                Ok(detail)
            } else {
                Err(detail)
            }
        },
    )
}

pub fn criterion_2_exponential_boundary() -> CriterionOutcome {
    timed(
        2,
        "exponential boundary E = -1/a",
        Some(Duration::from_secs(5)),
        || {
            let d = DelayDistribution::exponential(1.0).expect("valid mean");
            let trace = boundary::trace_boundary(&d, 100.0, 4000).map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            let mut count = 0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for b in trace.hopf_branches() {
                for p in b.points.iter().filter(|p| (-0.9..=-0.1).contains(&p.a)) {
                    worst = worst.max((p.e + 1.0 / p.a).abs() / p.e);
                    count += 1;
                    lo = lo.min(p.a);
                    hi = hi.max(p.a);
                }
            }
            let detail = format!(
                "{count} points on a in [{lo:.3}, {hi:.3}], max relative error {worst:.1e}"
            );
            if count > 10 && lo < -0.89 && hi > -0.11 && worst < 1e-6 {
                Ok(detail)
            } else {
                Err(detail)
            }
        },
    )
}

pub fn criterion_3_extremal_example() -> CriterionOutcome {
    timed(3, "extremal pair of the two-delay example", None, || {
        let omega = 1.0;
        let mix = DiscreteMixture::new([(0.2 / omega, 0.37), (2.0 / omega, 0.63)])
            .map_err(|e| e.to_string())?;
        let pair = extremal::reduce_to_extremal(&mix, omega, -0.1).map_err(|e| e.to_string())?;
        let v = pair.tau2 * omega;
        let t = pair.preserved_mean * omega;
        let detail = format!(
            "v* = {v:.4}, p1* = {:.4}, p2* = {:.4}, T = {t:.12}",
            pair.p1, pair.p2
        );
        let ok = (v - 1.76).abs() <= 0.01
            && (pair.p1 - 0.24).abs() <= 0.01
            && (pair.p2 - 0.76).abs() <= 0.01
            && (t - 1.334).abs() <= 1e-10;
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn criterion_4_hayes_sharpness() -> CriterionOutcome {
    timed(
        4,
        "single-delay bound is sharp",
        Some(Duration::from_secs(10)),
        || {
            let mut lines = Vec::new();
            let mut ok = true;
            for a in [-0.9, -0.5, 0.0, 0.5, 0.9] {
                let bound = universal_bound(a, 1.0).map_err(|e| e.to_string())?;
                let mut parts = Vec::new();
                for (factor, want_negative) in [(0.999, true), (1.001, false)] {
                    let d = DelayDistribution::dirac(factor * bound).map_err(|e| e.to_string())?;
                    let root = charfun::leading_root(a, &d).map_err(|e| e.to_string())?;
                    let residual = charfun::char_value(a, &d, root)
                        .map_err(|e| e.to_string())?
                        .value
                        .norm();
                    let sign_ok = if want_negative {
                        root.re < 0.0
                    } else {
                        root.re > 0.0
                    };
                    ok &= sign_ok && residual < 1e-10;
                    parts.push(format!("{:+.2e}", root.re));
                }
                lines.push(format!("a={a}: {}", parts.join("/")));
            }
            let detail = lines.join(", ");
            if ok {
                Ok(detail)
            } else {
                Err(detail)
            }
        },
    )
}

pub fn criterion_5_universal_bound(seed: u64) -> CriterionOutcome {
    timed(
        5,
        "every kernel below the universal bound is stable",
        Some(Duration::from_secs(120)),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cases: Vec<(f64, DelayDistribution)> = (0..1000)
                .map(|_| {
                    let d = random_distribution(&mut rng);
                    let a = rng.gen_range(-0.95..0.95);
                    (a, d)
                })
                .collect();
            let failures: Vec<String> = cases
                .par_iter()
                .filter_map(|(a, d)| {
                    let bound = universal_bound(*a, 1.0).expect("|a| < 1");
                    let scaled = match d.scale_to_mean(0.99 * bound) {
                        Ok(s) => s,
                        Err(e) => return Some(format!("{d}: {e}")),
                    };
                    match charfun::unstable_count(*a, &scaled) {
                        Ok(0) => None,
                        Ok(n) => Some(format!("a = {a}, {scaled}: {n} unstable roots")),
                        Err(e) => Some(format!("a = {a}, {scaled}: {e}")),
                    }
                })
                .collect();
            if failures.is_empty() {
                Ok("1000 of 1000 cases stable".into())
            } else {
                Err(format!(
                    "{} failures, first: {}",
                    failures.len(),
                    failures[0]
                ))
            }
        },
    )
}

pub fn criterion_6_two_delay_asymptote() -> CriterionOutcome {
    timed(6, "two-delay boundary asymptote a = 2p - 1", None, || {
        let p = 0.6;
        let d = DelayDistribution::discrete([(0.0, 1.0 - p), (1.0 / p, p)])
            .map_err(|e| e.to_string())?;
        let asymptote = boundary::asymptote_two_delay(p).map_err(|e| e.to_string())?;
        let trace = boundary::trace_boundary(&d, 100.0, 4000).map_err(|e| e.to_string())?;
        let first = trace.hopf_branches().next().ok_or("no boundary traced")?;
        let far: Vec<f64> = first
            .points
            .iter()
            .filter(|q| q.e > 1e3)
            .map(|q| q.a)
            .collect();
        let worst = far
            .iter()
            .map(|a| (a - asymptote).abs())
            .fold(0.0, f64::max);
        let detail = format!(
            "{} points with E > 1e3, max |a - {asymptote:.1}| = {worst:.2e}",
            far.len()
        );
        if !far.is_empty() && worst < 0.01 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Principal branch `W0(-1)`, the leading root of `λ + e^{-λ} = 0`.
pub const LAMBERT_ROOT: (f64, f64) = (-0.318_131_505_204_764_1, 1.337_235_701_430_689_4);

pub fn criterion_7_leading_root() -> CriterionOutcome {
    timed(7, "leading root of the unit delay", None, || {
        let d = DelayDistribution::dirac(1.0).map_err(|e| e.to_string())?;
        let root = charfun::leading_root(0.0, &d).map_err(|e| e.to_string())?;
        let err = (root - Complex64::new(LAMBERT_ROOT.0, LAMBERT_ROOT.1)).norm();
        let detail = format!("root {:.10} {:+.10}i, error {err:.1e}", root.re, root.im);
        if err < 1e-4 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// A random case for the simulator comparison with a clearly signed
/// leading root.
pub fn random_simulation_case<R: Rng>(rng: &mut R) -> (f64, DelayDistribution, Complex64) {
    loop {
        let shape = random_distribution(rng);
        let a = rng.gen_range(-0.9..0.9);
        let e = rng.gen_range(0.3..4.0);
        let Ok(d) = shape.scale_to_mean(e) else {
            continue;
        };
        let Ok(root) = charfun::leading_root(a, &d) else {
            continue;
        };
        if root.re.abs() > 0.05 && root.re < 1.0 {
            return (a, d, root);
        }
    }
}

/// Horizon long enough for the leading mode to dominate the last third and
/// to leave at least six extrema there, short enough that the trace stays
/// within floating point range.
pub fn simulation_horizon(dist: &DelayDistribution, root: Complex64) -> f64 {
    let mut t = simulator::default_horizon(dist).max(45.0 / root.re.abs());
    if root.im > 1e-9 {
        t = t.max(18.0 * std::f64::consts::PI / root.im);
    }
    t.min(500.0 / root.re.abs()).min(2000.0)
}

pub fn criterion_8_simulation(seed: u64) -> CriterionOutcome {
    timed(
        8,
        "simulated decay rates match leading roots",
        Some(Duration::from_secs(120)),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(8));
            let cases: Vec<_> = (0..20).map(|_| random_simulation_case(&mut rng)).collect();
            let results: Vec<Result<f64, String>> = cases
                .par_iter()
                .map(|(a, d, root)| {
                    let t_end = simulation_horizon(d, *root);
                    let trace = simulator::simulate(
                        *a,
                        1.0,
                        d,
                        &History::default(),
                        t_end,
                        simulator::default_dt(d),
                    )
                    .map_err(|e| format!("{d}: {e}"))?;
                    let rate = simulator::decay_rate(&trace).map_err(|e| format!("{d}: {e}"))?;
                    Ok((rate - root.re).abs() / root.re.abs())
                })
                .collect();
            let mut worst: f64 = 0.0;
            let mut failures = Vec::new();
            for (r, (a, d, root)) in results.iter().zip(&cases) {
                match r {
                    Ok(rel) => {
                        worst = worst.max(*rel);
                        if *rel >= 0.05 {
                            failures.push(format!(
                                "a = {a}, {d}: Re = {:.4}, relative error {rel:.3}",
                                root.re
                            ));
                        }
                    }
                    Err(e) => failures.push(e.clone()),
                }
            }
            if failures.is_empty() {
                Ok(format!("20 cases, worst relative error {worst:.2e}"))
            } else {
                Err(format!(
                    "{} failures, first: {}",
                    failures.len(),
                    failures[0]
                ))
            }
        },
    )
}

pub fn criterion_9_reversion() -> CriterionOutcome {
    timed(9, "gamma kernel reverts to stability", None, || {
        use crate::charfun::RootStatus;
        let a = 0.05;
        let d = gamma_two();
        let trace = boundary::trace_boundary(&d, 100.0, 4000).map_err(|e| e.to_string())?;
        let traced = boundary_crossings_at(&trace, a);
        let grid: Vec<f64> = {
            let (lo, hi, n) = (0.5f64, 1000.0f64, 400);
            (0..n)
                .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
                .collect()
        };
        let chart = boundary::chart(&d, &[a], &grid).map_err(|e| e.to_string())?;
        let mut statuses = Vec::new();
        for cell in &chart.cells {
            statuses.push(
                cell.status()
                    .ok_or_else(|| format!("cell E = {} failed", cell.e))?,
            );
        }
        let mut sequence = vec![statuses[0]];
        let mut transitions = Vec::new();
        for j in 1..statuses.len() {
            if statuses[j] != statuses[j - 1] {
                sequence.push(statuses[j]);
                transitions.push(j);
            }
        }
        let names: Vec<&str> = sequence
            .iter()
            .map(|s| match s {
                RootStatus::Stable => "stable",
                RootStatus::Unstable => "unstable",
                RootStatus::Marginal => "marginal",
            })
            .collect();
        let pattern_ok = sequence == [RootStatus::Stable, RootStatus::Unstable, RootStatus::Stable];
        let mut match_ok = pattern_ok && traced.len() == 2;
        if match_ok {
            for (k, &j) in transitions.iter().enumerate() {
                // the change happens between cells j-1 and j; allow one more cell
                let lo = grid[j.saturating_sub(2)];
                let hi = grid[(j + 1).min(grid.len() - 1)];
                match_ok &= traced[k] >= lo && traced[k] <= hi;
            }
        }
        let detail = format!(
            "sequence {}, chart transitions near E = [{}], traced E = [{}]",
            names.join(" -> "),
            transitions
                .iter()
                .map(|&j| format!("{:.3}", grid[j]))
                .collect::<Vec<_>>()
                .join(", "),
            traced
                .iter()
                .map(|e| format!("{e:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        if match_ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn criterion_10_inequalities(seed: u64) -> CriterionOutcome {
    timed(10, "slope inequality and chord constant", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(10));
        let pi = std::f64::consts::PI;
        let mut bad = 0usize;
        for i in 0..100_000 {
            let z = if i == 0 {
                pi
            } else {
                pi * (1.0 - rng.gen::<f64>())
            };
            if !(extremal::slope_inequality(z) > 0.0) {
                bad += 1;
            }
        }
        let c = extremal::chord_constant();
        let mut chord_bad = 0usize;
        for i in 0..=100_000 {
            let t = 20.0 * i as f64 / 100_000.0;
            if t.cos() < 1.0 - c * t - 1e-12 {
                chord_bad += 1;
            }
        }
        let detail = format!(
            "{bad} of 100000 samples violate the slope inequality; c = {c:.6}; {chord_bad} chord violations"
        );
        if bad == 0 && chord_bad == 0 && (c - 0.725).abs() <= 1e-3 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Runs every criterion in order.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    vec![
        criterion_1_gamma_boundary(),
        criterion_2_exponential_boundary(),
        criterion_3_extremal_example(),
        criterion_4_hayes_sharpness(),
        criterion_5_universal_bound(seed),
        criterion_6_two_delay_asymptote(),
        criterion_7_leading_root(),
        criterion_8_simulation(seed),
        criterion_9_reversion(),
        criterion_10_inequalities(seed),
    ]
}
