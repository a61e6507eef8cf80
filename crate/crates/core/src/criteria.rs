//! Closed-form and semi-analytic stability verdicts.
//!
//! Everything here works in the normalized form `b = 1`: a problem with
//! feedback gain `b > 0` becomes `(a/b, η(·/b))` after the time change
//! `t → bt`, see [`normalize`].

use num_complex::Complex64;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::charfun::{self, CharError, RootOptions, MARGINAL_TOLERANCE};
use crate::distributions::{DelayDistribution, DistributionError};

/// Default number of grid intervals for locating zeros of `C(ω) + a`.
pub const DEFAULT_GRID: usize = 2048;

/// Relative tolerance for the equality case of the Hayes bound.
const HAYES_EQUALITY: f64 = 1e-12;

/// Zeros of `C + a` are located to this width.
const ZERO_TOLERANCE: f64 = 1e-12;

/// `|S(ω) - ω|` below this counts as a tie.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("mean delay must be finite and nonnegative, got {0}")]
    InvalidMean(f64),
    #[error("bound requires b > |a|, got a = {a}, b = {b}")]
    BoundNotApplicable { a: f64, b: f64 },
    #[error("normalized coefficient must satisfy |a| < 1, got {0}")]
    CoefficientOutOfRange(f64),
    #[error("feedback gain must be positive to rescale, got {0}")]
    NonPositiveGain(f64),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Roots(#[from] CharError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Stable,
    Unstable,
    Marginal,
    DistributionDependent,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Stable => "stable",
            VerdictStatus::Unstable => "unstable",
            VerdictStatus::Marginal => "marginal",
            VerdictStatus::DistributionDependent => "distribution_dependent",
        }
    }
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evidence attached to a verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Witness {
    /// A characteristic root on or right of the imaginary axis.
    LeadingRoot(Complex64),
    /// A frequency with `C(ω_s) + a = 0` and `S(ω_s) ≥ ω_s`.
    OmegaS(f64),
    /// `f(0) = a + b ≤ 0`, which forces a nonnegative real root.
    CharAtZero(f64),
}

impl Serialize for Witness {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        match self {
            Witness::LeadingRoot(z) => map.serialize_entry("leading_root", &[z.re, z.im])?,
            Witness::OmegaS(w) => map.serialize_entry("omega_s", w)?,
            Witness::CharAtZero(v) => map.serialize_entry("char_at_zero", v)?,
        }
        map.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub status: VerdictStatus,
    pub witness: Option<Witness>,
    /// Mean-delay threshold the verdict was measured against, if any.
    pub bound_used: Option<f64>,
}

impl StabilityVerdict {
    fn new(status: VerdictStatus, witness: Option<Witness>, bound_used: Option<f64>) -> Self {
        Self {
            status,
            witness,
            bound_used,
        }
    }
}

fn check_mean(e: f64) -> Result<(), CriteriaError> {
    if !e.is_finite() || e < 0.0 {
        return Err(CriteriaError::InvalidMean(e));
    }
    Ok(())
}

/// Rescales `(a, b, η)` to the `b = 1` form `(a/b, η_{bE})`.
pub fn normalize(
    a: f64,
    b: f64,
    dist: &DelayDistribution,
) -> Result<(f64, DelayDistribution), CriteriaError> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(CriteriaError::NonPositiveGain(b));
    }
    Ok((a / b, dist.scale_to_mean(b * dist.mean())?))
}

/// Mean delay `arccos(-a/b) / sqrt(b² - a²)` below which every distribution
/// is stable.
pub fn universal_bound(a: f64, b: f64) -> Result<f64, CriteriaError> {
    if !(b > a.abs()) || !b.is_finite() {
        return Err(CriteriaError::BoundNotApplicable { a, b });
    }
    Ok((-a / b).clamp(-1.0, 1.0).acos() / (b * b - a * a).sqrt())
}

/// Positive real root of `λ + a + b e^{-λE}` when `a + b < 0`.
fn positive_real_root(a: f64, b: f64, e: f64) -> f64 {
    let h = |x: f64| x + a + b * (-x * e).exp();
    // h(0) = a + b < 0 and h(x) ≥ x + a - |b|
    let mut lo = 0.0;
    let mut hi = (a.abs() + b.abs()).max(1e-300);
    while h(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Nonzero real root of `λ - b + b e^{-λE}` for `bE > 1`; it is positive.
fn zero_line_companion_root(b: f64, e: f64) -> f64 {
    // λ - b + b e^{-λE} = λ (1 - bE φ1(λE)), φ1 decreasing from 1 to 0
    let g = |x: f64| 1.0 - b * e * crate::special::phi1(Complex64::new(x * e, 0.0)).re;
    let (mut lo, mut hi) = (0.0, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Verdict for a single discrete delay, `ẋ = -a x - b x(t - E)`.
pub fn hayes_verdict(a: f64, b: f64, e: f64) -> Result<StabilityVerdict, CriteriaError> {
    use VerdictStatus::*;
    check_mean(e)?;
    if b == 0.0 {
        return Ok(if a > 0.0 {
            StabilityVerdict::new(Stable, None, None)
        } else if a == 0.0 {
            StabilityVerdict::new(
                Marginal,
                Some(Witness::LeadingRoot(Complex64::new(0.0, 0.0))),
                None,
            )
        } else {
            StabilityVerdict::new(
                Unstable,
                Some(Witness::LeadingRoot(Complex64::new(-a, 0.0))),
                None,
            )
        });
    }
    let sum = a + b;
    if sum < 0.0 {
        let root = positive_real_root(a, b, e);
        return Ok(StabilityVerdict::new(
            Unstable,
            Some(Witness::LeadingRoot(Complex64::new(root, 0.0))),
            None,
        ));
    }
    if sum == 0.0 {
        if b > 0.0 && b * e > 1.0 {
            let root = zero_line_companion_root(b, e);
            return Ok(StabilityVerdict::new(
                Unstable,
                Some(Witness::LeadingRoot(Complex64::new(root, 0.0))),
                None,
            ));
        }
        return Ok(StabilityVerdict::new(
            Marginal,
            Some(Witness::LeadingRoot(Complex64::new(0.0, 0.0))),
            None,
        ));
    }
    if a >= b.abs() {
        return Ok(StabilityVerdict::new(Stable, None, None));
    }
    // remaining case: b > |a|
    let bound = universal_bound(a, b)?;
    let omega = (b * b - a * a).sqrt();
    if (e - bound).abs() <= HAYES_EQUALITY * bound {
        return Ok(StabilityVerdict::new(
            Marginal,
            Some(Witness::LeadingRoot(Complex64::new(0.0, omega))),
            Some(bound),
        ));
    }
    if e < bound {
        return Ok(StabilityVerdict::new(Stable, None, Some(bound)));
    }
    // crossing frequency of the normalized problem
    let omega_s = (-a / b).acos() / (b * e);
    Ok(StabilityVerdict::new(
        Unstable,
        Some(Witness::OmegaS(omega_s)),
        Some(bound),
    ))
}

/// Verdict from the mean delay alone, valid for every distribution.
pub fn classify_region(a: f64, b: f64, e: f64) -> Result<StabilityVerdict, CriteriaError> {
    use VerdictStatus::*;
    check_mean(e)?;
    if b == 0.0 {
        return hayes_verdict(a, b, e);
    }
    if a <= -b {
        return Ok(StabilityVerdict::new(
            Unstable,
            Some(Witness::CharAtZero(a + b)),
            None,
        ));
    }
    if a >= b.abs() {
        return Ok(StabilityVerdict::new(Stable, None, None));
    }
    let bound = universal_bound(a, b)?;
    let status = if e < bound {
        Stable
    } else {
        DistributionDependent
    };
    Ok(StabilityVerdict::new(status, None, Some(bound)))
}

/// Grid resolution for `C(ω) + a` on `[0, ω_c]`: atoms far out make the
/// moments oscillate faster than the default grid resolves.
fn grid_size(dist: &DelayDistribution, omega_c: f64, minimum: usize) -> usize {
    let end = dist.support_end();
    if end.is_finite() {
        let periods = omega_c * end / std::f64::consts::TAU;
        minimum.max((periods * 32.0).ceil() as usize)
    } else {
        minimum
    }
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64, mut g_lo: f64) -> f64 {
    while hi - lo > ZERO_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes `|g|` on `[lo, hi]` by golden-section search.
fn golden_min<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (g(x1).abs(), g(x2).abs());
    while hi - lo > ZERO_TOLERANCE {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = g(x1).abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = g(x2).abs();
        }
    }
    let x = 0.5 * (lo + hi);
    (x, g(x).abs())
}

/// All zeros of `C(ω) + a` on `[0, ω_c]`, ascending.
pub fn crossing_frequencies(
    a: f64,
    dist: &DelayDistribution,
    grid: usize,
) -> Result<Vec<f64>, CriteriaError> {
    if !(a.abs() < 1.0) {
        return Err(CriteriaError::CoefficientOutOfRange(a));
    }
    let omega_c = (1.0 - a * a).sqrt();
    let n = grid_size(dist, omega_c, grid.max(2));
    let g = |w: f64| dist.trig_moments(w).c_value + a;
    let xs: Vec<f64> = (0..=n).map(|i| omega_c * i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&w| g(w)).collect();
    let mut zeros = Vec::new();
    for i in 0..n {
        let (g0, g1) = (gs[i], gs[i + 1]);
        if g0 == 0.0 {
            zeros.push(xs[i]);
        } else if g1 != 0.0 && (g0 > 0.0) != (g1 > 0.0) {
            zeros.push(bisect(g, xs[i], xs[i + 1], g0));
        } else if i > 0 && g1 != 0.0 && (gs[i - 1] > 0.0) == (g0 > 0.0) && (g0 > 0.0) == (g1 > 0.0)
        {
            // tangential touch: |g| has a discrete local minimum here
            if g0.abs() <= gs[i - 1].abs() && g0.abs() <= g1.abs() {
                let (w, m) = golden_min(g, xs[i - 1], xs[i + 1]);
                if m < 1e-10 {
                    zeros.push(w);
                }
            }
        }
    }
    // a zero sitting on ω_c need not change sign inside the interval
    if gs[n].abs() < ZERO_TOLERANCE {
        zeros.push(xs[n]);
    }
    zeros.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    Ok(zeros)
}

/// Frequencies in `[0, ω_c]` with `C(ω) + a = 0` and `S(ω) ≥ ω`.
pub fn hopf_crossings(a: f64, dist: &DelayDistribution) -> Result<Vec<f64>, CriteriaError> {
    hopf_crossings_with(a, dist, DEFAULT_GRID)
}

pub fn hopf_crossings_with(
    a: f64,
    dist: &DelayDistribution,
    grid: usize,
) -> Result<Vec<f64>, CriteriaError> {
    Ok(crossing_frequencies(a, dist, grid)?
        .into_iter()
        .filter(|&w| dist.trig_moments(w).s_value >= w - TIE_TOLERANCE)
        .collect())
}

/// Sufficient stability test: stable when `C(ω) + a` has no zero on
/// `[0, ω_c]`, or `S(ω) < ω` at every zero. `None` means no verdict.
pub fn sufficient_test(
    a: f64,
    dist: &DelayDistribution,
) -> Result<Option<StabilityVerdict>, CriteriaError> {
    sufficient_test_with(a, dist, DEFAULT_GRID)
}

pub fn sufficient_test_with(
    a: f64,
    dist: &DelayDistribution,
    grid: usize,
) -> Result<Option<StabilityVerdict>, CriteriaError> {
    if hopf_crossings_with(a, dist, grid)?.is_empty() {
        Ok(Some(StabilityVerdict::new(
            VerdictStatus::Stable,
            None,
            None,
        )))
    } else {
        Ok(None)
    }
}

/// Exact verdict for a given distribution from its characteristic roots.
///
/// `b > 0` is reduced to the normalized form; `b ≤ 0` has no distribution
/// dependence and uses [`classify_region`].
pub fn root_verdict(
    a: f64,
    b: f64,
    dist: &DelayDistribution,
    opts: &RootOptions,
) -> Result<StabilityVerdict, CriteriaError> {
    if b <= 0.0 {
        return classify_region(a, b, dist.mean());
    }
    let (a_n, scaled) = normalize(a, b, dist)?;
    let report = charfun::count_unstable_roots_with(a_n, &scaled, opts)?;
    // witness reported in the original time scale
    let root = report.leading_root * b;
    let status = if report.unstable_count > 0 {
        VerdictStatus::Unstable
    } else if report.leading_root.re.abs() <= opts.marginal_tol {
        VerdictStatus::Marginal
    } else {
        VerdictStatus::Stable
    };
    let bound = universal_bound(a, b).ok();
    Ok(StabilityVerdict::new(
        status,
        Some(Witness::LeadingRoot(root)),
        bound,
    ))
}

/// [`root_verdict`] with default tolerances.
pub fn exact_verdict(
    a: f64,
    b: f64,
    dist: &DelayDistribution,
) -> Result<StabilityVerdict, CriteriaError> {
    root_verdict(
        a,
        b,
        dist,
        &RootOptions {
            marginal_tol: MARGINAL_TOLERANCE,
            ..RootOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn status(v: Result<StabilityVerdict, CriteriaError>) -> VerdictStatus {
        v.unwrap().status
    }

    #[test]
    fn hayes_examples() {
        assert_eq!(status(hayes_verdict(0.0, 1.0, 1.5)), VerdictStatus::Stable);
        let v = hayes_verdict(0.0, 1.0, FRAC_PI_2).unwrap();
        assert_eq!(v.status, VerdictStatus::Marginal);
        assert_eq!(
            v.witness,
            Some(Witness::LeadingRoot(Complex64::new(0.0, 1.0)))
        );
        let v = hayes_verdict(-1.0, 1.0, 1.0).unwrap();
        assert_eq!(v.status, VerdictStatus::Marginal);
        assert_eq!(
            v.witness,
            Some(Witness::LeadingRoot(Complex64::new(0.0, 0.0)))
        );
    }

    #[test]
    fn hayes_unstable_witnesses_are_roots() {
        let v = hayes_verdict(-1.2, 1.0, 1.0).unwrap();
        let Some(Witness::LeadingRoot(z)) = v.witness else {
            panic!("expected a root witness")
        };
        assert!(z.re > 0.0);
        assert!((z.re - 1.2 + (-z.re).exp()).abs() < 1e-13);

        let v = hayes_verdict(-1.0, 1.0, 2.0).unwrap();
        assert_eq!(v.status, VerdictStatus::Unstable);
        let Some(Witness::LeadingRoot(z)) = v.witness else {
            panic!("expected a root witness")
        };
        assert!(z.re > 0.0 && (z.re - 1.0 + (-2.0 * z.re).exp()).abs() < 1e-13);

        let v = hayes_verdict(0.0, 1.0, 2.0).unwrap();
        let Some(Witness::OmegaS(w)) = v.witness else {
            panic!("expected a crossing frequency")
        };
        assert!((w - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn hayes_degenerate_gains() {
        assert_eq!(status(hayes_verdict(0.5, 0.0, 3.0)), VerdictStatus::Stable);
        assert_eq!(
            status(hayes_verdict(0.0, 0.0, 3.0)),
            VerdictStatus::Marginal
        );
        assert_eq!(
            status(hayes_verdict(-0.5, 0.0, 3.0)),
            VerdictStatus::Unstable
        );
        assert_eq!(
            status(hayes_verdict(1.0, -1.0, 3.0)),
            VerdictStatus::Marginal
        );
        assert_eq!(
            status(hayes_verdict(2.0, -1.0, 30.0)),
            VerdictStatus::Stable
        );
        assert_eq!(status(hayes_verdict(1.0, 1.0, 30.0)), VerdictStatus::Stable);
        assert!(hayes_verdict(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn universal_bound_examples() {
        assert!((universal_bound(0.0, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((universal_bound(-1.0 + 1e-9, 1.0).unwrap() - 1.0).abs() < 1e-4);
        assert!((universal_bound(0.5, 1.0).unwrap() - 2.418_399_152_312_290_5).abs() < 1e-14);
        assert!(universal_bound(1.0, 1.0).is_err());
        assert!(universal_bound(0.0, -1.0).is_err());
    }

    #[test]
    fn region_examples() {
        assert_eq!(
            status(classify_region(1.5, 1.0, 10.0)),
            VerdictStatus::Stable
        );
        assert_eq!(
            status(classify_region(0.0, 1.0, 2.0)),
            VerdictStatus::DistributionDependent
        );
        let v = classify_region(-2.0, 1.0, 0.1).unwrap();
        assert_eq!(v.status, VerdictStatus::Unstable);
        assert_eq!(v.witness, Some(Witness::CharAtZero(-1.0)));
        assert_eq!(
            status(classify_region(0.0, 1.0, 1.5)),
            VerdictStatus::Stable
        );
        assert_eq!(
            status(classify_region(1.0, 0.0, 1.5)),
            VerdictStatus::Stable
        );
    }

    #[test]
    fn sufficient_test_examples() {
        let d = DelayDistribution::dirac(0.5).unwrap();
        let v = sufficient_test(0.2, &d).unwrap().unwrap();
        assert_eq!(v.status, VerdictStatus::Stable);
        let e = DelayDistribution::exponential(1.0).unwrap();
        assert_eq!(
            sufficient_test(0.0, &e).unwrap().unwrap().status,
            VerdictStatus::Stable
        );
        let d2 = DelayDistribution::dirac(2.0).unwrap();
        assert!(sufficient_test(0.0, &d2).unwrap().is_none());
        assert!(sufficient_test(1.0, &d2).is_err());
    }

    #[test]
    fn hopf_crossing_examples() {
        let d1 = DelayDistribution::dirac(1.0).unwrap();
        assert!(hopf_crossings(0.0, &d1).unwrap().is_empty());
        let d2 = DelayDistribution::dirac(2.0).unwrap();
        let w = hopf_crossings(0.0, &d2).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[0] - FRAC_PI_4).abs() < 1e-11);
        let e = DelayDistribution::exponential(1.0).unwrap();
        assert!(hopf_crossings(0.5, &e).unwrap().is_empty());
    }

    #[test]
    fn tie_gives_no_verdict() {
        // at the Hayes bound the crossing has S(ω_s) = ω_s exactly
        let d = DelayDistribution::dirac(FRAC_PI_2).unwrap();
        assert!(sufficient_test(0.0, &d).unwrap().is_none());
    }

    #[test]
    fn tangential_zero_is_found() {
        // C(ω) = (1 + cos 4ω) / 2 touches zero at ω = π/4 without changing sign
        let d = DelayDistribution::discrete([(0.0, 0.5), (4.0, 0.5)]).unwrap();
        let zeros = crossing_frequencies(0.0, &d, DEFAULT_GRID).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0] - FRAC_PI_4).abs() < 1e-5);
    }

    #[test]
    fn root_verdict_rescales_time() {
        // b = 2, Dirac(1) is the normalized Dirac(2): unstable at a = 0
        let d = DelayDistribution::dirac(1.0).unwrap();
        let v = exact_verdict(0.0, 2.0, &d).unwrap();
        assert_eq!(v.status, VerdictStatus::Unstable);
        let v = exact_verdict(0.0, 1.0, &d).unwrap();
        assert_eq!(v.status, VerdictStatus::Stable);
        let v = exact_verdict(-2.0, -1.0, &d).unwrap();
        assert_eq!(v.status, VerdictStatus::Unstable);
    }

    #[test]
    fn verdict_json() {
        let v = hayes_verdict(0.0, 1.0, 2.0).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(
            json,
            format!(
                r#"{{"status":"unstable","witness":{{"omega_s":{}}},"bound_used":{}}}"#,
                FRAC_PI_4, FRAC_PI_2
            )
        );
    }
}
