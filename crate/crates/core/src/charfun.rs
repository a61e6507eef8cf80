//! The characteristic function `f(λ) = λ + a + ∫ e^{-λτ} dη(τ)` and its roots.
//!
//! Roots are counted with the argument principle on rectangles. The step
//! along each edge is chosen from a bound on `|f''|` so that `f` provably
//! moves by less than half its modulus between samples; the phase increment
//! of every step is then below `π/6` and the accumulated winding number is
//! exact. A root sitting on the contour is detected as `|f|` dropping to the
//! rounding floor.
//!
//! Any root with `Re λ ≥ σ` satisfies `|λ| ≤ |a| + L(σ)` where `L(σ)` is the
//! transform at the real point `σ`, which bounds every rectangle used here.

use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::distributions::{DelayDistribution, DistributionError, DistributionKind};

/// Roots with `|Re λ|` below this are reported as marginal.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Largest `|a|` accepted by the root counter.
pub const MAX_ABS_COEFFICIENT: f64 = 10.0;

/// Left-edge shifts tried in turn when the contour runs through a root.
const EDGE_SHIFTS: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-5, 1e-4];

const STEP_BUDGET: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("|a| = {0} is outside the supported range |a| <= 10")]
    CoefficientOutOfRange(f64),
    #[error("no imaginary-axis root is possible for |a| = {0} > 1")]
    NoCrossingRange(f64),
    #[error("contour still passes through a root after {0} retries")]
    ContourThroughRoot(usize),
    #[error("winding number {0} is not close to an integer")]
    NonIntegerWinding(f64),
    #[error("contour step budget exhausted")]
    StepBudget,
    #[error("no characteristic root found with real part above {0}")]
    NoRootFound(f64),
    #[error("root refinement stalled with residual {0:e}")]
    RefinementFailed(f64),
}

/// Tolerances of the root finder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// `|Re λ|` below which a root is marginal.
    pub marginal_tol: f64,
    /// Target residual `|f(λ)|` of the refined leading root.
    pub newton_tol: f64,
    /// Final width of the real-part bracket.
    pub re_resolution: f64,
    /// Final width of the imaginary-part bracket before Newton polishing.
    pub im_resolution: f64,
    /// Extra room between the root bound and the contour.
    pub margin: f64,
    pub max_retries: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            marginal_tol: MARGINAL_TOLERANCE,
            newton_tol: 1e-12,
            re_resolution: 1e-10,
            im_resolution: 1e-4,
            margin: 0.5,
            max_retries: EDGE_SHIFTS.len() - 1,
        }
    }
}

/// Value of the characteristic function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSample {
    pub lambda: Complex64,
    pub value: Complex64,
    pub a: f64,
}

/// Outcome of counting right-half-plane roots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootReport {
    pub unstable_count: usize,
    /// Rightmost root, with `Im ≥ 0`.
    pub leading_root: Complex64,
    /// Half-width of the contour used for the count.
    pub contour_bound: f64,
}

impl Serialize for RootReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RootReport", 3)?;
        s.serialize_field("unstable_count", &self.unstable_count)?;
        s.serialize_field(
            "leading_root",
            &[self.leading_root.re, self.leading_root.im],
        )?;
        s.serialize_field("contour_bound", &self.contour_bound)?;
        s.end()
    }
}

/// Stability read off the roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RootStatus {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootSummary {
    pub status: RootStatus,
    pub unstable_count: usize,
}

/// `λ + a + L(λ)` for a fixed coefficient and distribution.
#[derive(Debug, Clone, Copy)]
pub struct Characteristic<'a> {
    a: f64,
    dist: &'a DelayDistribution,
}

impl<'a> Characteristic<'a> {
    pub fn new(a: f64, dist: &'a DelayDistribution) -> Self {
        Self { a, dist }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn value(&self, lambda: Complex64) -> Result<Complex64, DistributionError> {
        Ok(lambda + self.a + self.dist.laplace(lambda)?)
    }

    /// `(f(λ), f'(λ))`.
    pub fn value_and_derivative(
        &self,
        lambda: Complex64,
    ) -> Result<(Complex64, Complex64), DistributionError> {
        let (l, m) = self.dist.transform_pair(lambda)?;
        Ok((lambda + self.a + l, 1.0 - m))
    }

    pub fn second_derivative(&self, lambda: Complex64) -> Result<Complex64, DistributionError> {
        self.dist.second_moment_transform(lambda)
    }

    /// `|a| + sup_{Re λ ≥ σ} |L(λ)|`: no root with `Re λ ≥ σ` lies farther out.
    fn root_radius(&self, sigma: f64) -> Result<f64, DistributionError> {
        Ok(self.a.abs() + self.dist.laplace(Complex64::new(sigma, 0.0))?.re)
    }

    /// `sup_{Re λ ≥ σ} |f''(λ)|`.
    fn curvature_bound(&self, sigma: f64) -> Result<f64, DistributionError> {
        Ok(self
            .dist
            .second_moment_transform(Complex64::new(sigma, 0.0))?
            .re)
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

#[derive(Debug)]
enum WalkError {
    OnContour,
    Budget,
    NonInteger(f64),
    Domain(DistributionError),
}

impl From<DistributionError> for WalkError {
    fn from(e: DistributionError) -> Self {
        WalkError::Domain(e)
    }
}

impl From<WalkError> for CharError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::OnContour => CharError::ContourThroughRoot(0),
            WalkError::Budget => CharError::StepBudget,
            WalkError::NonInteger(w) => CharError::NonIntegerWinding(w),
            WalkError::Domain(d) => CharError::Distribution(d),
        }
    }
}

/// Number of zeros of `f` inside `rect` (counterclockwise argument principle).
fn winding_count(ch: &Characteristic, rect: Rect) -> Result<usize, WalkError> {
    let k2_left = ch.curvature_bound(rect.x0)?;
    let k2_right = ch.curvature_bound(rect.x1)?;
    let scale =
        ch.root_radius(rect.x0)? + rect.x1.abs().max(rect.y0.abs()).max(rect.y1.abs()) + 1.0;
    let noise = 64.0 * f64::EPSILON * scale;

    let corners = [
        Complex64::new(rect.x0, rect.y0),
        Complex64::new(rect.x1, rect.y0),
        Complex64::new(rect.x1, rect.y1),
        Complex64::new(rect.x0, rect.y1),
    ];
    let mut budget = STEP_BUDGET;
    let mut total_phase = 0.0;
    let mut previous: Option<Complex64> = None;

    for edge in 0..4 {
        let start = corners[edge];
        let end = corners[(edge + 1) % 4];
        let length = (end - start).norm();
        if length == 0.0 {
            continue;
        }
        let dir = (end - start) / length;
        let mut t = 0.0;
        loop {
            let z = if t >= length { end } else { start + dir * t };
            let (f, fp) = ch.value_and_derivative(z)?;
            let modulus = f.norm();
            if modulus < noise || !modulus.is_finite() {
                return Err(WalkError::OnContour);
            }
            if let Some(prev) = previous {
                total_phase += (f / prev).arg();
            }
            previous = Some(f);
            if t >= length {
                break;
            }
            // |f''| bound on the segment ahead: moving left needs the bound at
            // the left edge, otherwise the current abscissa suffices.
            let k2 = match edge {
                0 => ch.curvature_bound(z.re)?,
                1 => k2_right,
                _ => k2_left,
            };
            let slope = fp.norm();
            // largest h with slope*h + k2*h^2/2 <= |f|/2
            let h = modulus / (slope + (slope * slope + k2 * modulus).sqrt());
            t = (t + h).min(length);
            budget = budget.checked_sub(1).ok_or(WalkError::Budget)?;
        }
    }
    let winding = total_phase / std::f64::consts::TAU;
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.05 || rounded < 0.0 {
        return Err(WalkError::NonInteger(winding));
    }
    Ok(rounded as usize)
}

/// Rectangle enclosing every root with `Re λ ≥ sigma`.
fn half_plane_rect(
    ch: &Characteristic,
    sigma: f64,
    bound_sigma: f64,
    margin: f64,
) -> Result<Rect, DistributionError> {
    let radius = ch.root_radius(bound_sigma)? + margin;
    Ok(Rect {
        x0: sigma,
        x1: radius.max(sigma + margin),
        y0: -radius,
        y1: radius,
    })
}

/// Counts roots with `Re λ > sigma`, nudging the left edge to the right when
/// it runs through a root. Returns the count, the shift used and the bound.
fn count_right_of(
    ch: &Characteristic,
    sigma: f64,
    opts: &RootOptions,
) -> Result<(usize, f64, f64), CharError> {
    let retries = opts.max_retries.min(EDGE_SHIFTS.len() - 1);
    for (attempt, shift) in EDGE_SHIFTS.iter().take(retries + 1).enumerate() {
        let margin = opts.margin * (1.0 + 0.1 * attempt as f64);
        let rect = half_plane_rect(ch, sigma + shift, sigma + shift, margin)?;
        match winding_count(ch, rect) {
            Ok(n) => return Ok((n, *shift, rect.y1)),
            Err(WalkError::OnContour) => {
                log::debug!("contour through a root at sigma={sigma}, shift {shift}");
                continue;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(CharError::ContourThroughRoot(retries))
}

fn check_coefficient(a: f64) -> Result<(), CharError> {
    if !a.is_finite() || a.abs() > MAX_ABS_COEFFICIENT {
        return Err(CharError::CoefficientOutOfRange(a));
    }
    Ok(())
}

/// Evaluates the characteristic function.
pub fn char_value(
    a: f64,
    dist: &DelayDistribution,
    lambda: Complex64,
) -> Result<CharacteristicSample, CharError> {
    let value = Characteristic::new(a, dist).value(lambda)?;
    Ok(CharacteristicSample { lambda, value, a })
}

/// Frequency cap `ω_c = sqrt(1 - a²)` for imaginary-axis roots.
pub fn omega_cap(a: f64) -> Result<f64, CharError> {
    if !(a.abs() <= 1.0) {
        return Err(CharError::NoCrossingRange(a));
    }
    Ok((1.0 - a * a).max(0.0).sqrt())
}

/// Counts roots with `Re λ > 0` and locates the leading root.
pub fn count_unstable_roots(a: f64, dist: &DelayDistribution) -> Result<RootReport, CharError> {
    count_unstable_roots_with(a, dist, &RootOptions::default())
}

pub fn count_unstable_roots_with(
    a: f64,
    dist: &DelayDistribution,
    opts: &RootOptions,
) -> Result<RootReport, CharError> {
    check_coefficient(a)?;
    let ch = Characteristic::new(a, dist);
    let (count, shift, bound) = count_right_of(&ch, 0.0, opts)?;
    let leading = leading_root_impl(&ch, Some((count, shift)), opts)?;
    Ok(RootReport {
        unstable_count: count,
        leading_root: leading,
        contour_bound: bound,
    })
}

/// Number of roots with `Re λ > 0`, without locating the leading root.
pub fn unstable_count(a: f64, dist: &DelayDistribution) -> Result<usize, CharError> {
    unstable_count_with(a, dist, &RootOptions::default())
}

pub fn unstable_count_with(
    a: f64,
    dist: &DelayDistribution,
    opts: &RootOptions,
) -> Result<usize, CharError> {
    check_coefficient(a)?;
    Ok(count_right_of(&Characteristic::new(a, dist), 0.0, opts)?.0)
}

/// Stability status from two strip counts, without locating the leading root.
///
/// Roots with `Re λ > tol` make the status unstable; otherwise any root with
/// `|Re λ| ≤ tol` makes it marginal.
pub fn root_status(
    a: f64,
    dist: &DelayDistribution,
    opts: &RootOptions,
) -> Result<RootSummary, CharError> {
    check_coefficient(a)?;
    let ch = Characteristic::new(a, dist);
    let tol = opts.marginal_tol;
    let (right, _, _) = count_right_of(&ch, tol, opts)?;
    if right > 0 {
        return Ok(RootSummary {
            status: RootStatus::Unstable,
            unstable_count: right,
        });
    }
    let lower = (-tol).max(0.5 * dist.convergence_abscissa());
    let (strip, _, _) = count_right_of_leftward(&ch, lower, opts)?;
    let status = if strip > 0 {
        RootStatus::Marginal
    } else {
        RootStatus::Stable
    };
    Ok(RootSummary {
        status,
        unstable_count: 0,
    })
}

/// Like [`count_right_of`] but nudges the left edge outward (to the left).
fn count_right_of_leftward(
    ch: &Characteristic,
    sigma: f64,
    opts: &RootOptions,
) -> Result<(usize, f64, f64), CharError> {
    let retries = opts.max_retries.min(EDGE_SHIFTS.len() - 1);
    for (attempt, shift) in EDGE_SHIFTS.iter().take(retries + 1).enumerate() {
        let margin = opts.margin * (1.0 + 0.1 * attempt as f64);
        let rect = half_plane_rect(ch, sigma - shift, sigma - shift, margin)?;
        match winding_count(ch, rect) {
            Ok(n) => return Ok((n, *shift, rect.y1)),
            Err(WalkError::OnContour) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(CharError::ContourThroughRoot(retries))
}

/// Rightmost root of the characteristic equation, returned with `Im ≥ 0`.
///
/// For exponential and gamma kernels the root may lie left of the
/// convergence abscissa, where [`char_value`] refuses to evaluate; it is then
/// a root of the rational continuation of the transform.
pub fn leading_root(a: f64, dist: &DelayDistribution) -> Result<Complex64, CharError> {
    leading_root_with(a, dist, &RootOptions::default())
}

pub fn leading_root_with(
    a: f64,
    dist: &DelayDistribution,
    opts: &RootOptions,
) -> Result<Complex64, CharError> {
    check_coefficient(a)?;
    leading_root_impl(&Characteristic::new(a, dist), None, opts)
}

fn leading_root_impl(
    ch: &Characteristic,
    known: Option<(usize, f64)>,
    opts: &RootOptions,
) -> Result<Complex64, CharError> {
    if let DistributionKind::Exponential { .. } | DistributionKind::Gamma { .. } = ch.dist.kind() {
        return rational::leading_root(ch, opts);
    }
    let (count, shift) = match known {
        Some(k) => k,
        None => {
            let (n, s, _) = count_right_of(ch, 0.0, opts)?;
            (n, s)
        }
    };

    // bracket [lo, hi] with a root of real part >= lo and none beyond hi
    let (mut lo, mut hi) = if count > 0 {
        (shift, ch.root_radius(shift)? + opts.margin)
    } else {
        let mut hi = shift;
        let step0 = 0.05 / (1.0 + ch.dist.mean());
        let mut sigma = -step0;
        let floor = ch.dist.convergence_abscissa();
        loop {
            if sigma <= floor || ch.root_radius(sigma)? > 1e8 {
                return Err(CharError::NoRootFound(sigma));
            }
            let rect = half_plane_rect(ch, sigma, sigma, opts.margin)?;
            match winding_count(ch, rect) {
                Ok(0) => {
                    hi = sigma;
                    sigma *= 2.0;
                }
                Ok(_) | Err(WalkError::OnContour) => break (sigma, hi),
                Err(e) => return Err(e.into()),
            }
        }
    };

    let bound_sigma = lo;
    while hi - lo > opts.re_resolution {
        let mid = 0.5 * (lo + hi);
        let rect = half_plane_rect(ch, mid, bound_sigma, opts.margin)?;
        match winding_count(ch, rect) {
            Ok(0) => hi = mid,
            Ok(_) | Err(WalkError::OnContour) => lo = mid,
            Err(e) => return Err(e.into()),
        }
    }

    let start = locate_imaginary_part(ch, lo, bound_sigma, opts)?;
    let root = polish(ch, Complex64::new(0.5 * (lo + hi), start), opts)?;
    Ok(canonical(ch, root, opts))
}

/// Bisects on the imaginary part inside the strip `Re λ ≥ lo - ε`.
fn locate_imaginary_part(
    ch: &Characteristic,
    lo: f64,
    bound_sigma: f64,
    opts: &RootOptions,
) -> Result<f64, CharError> {
    let floor = ch.dist.convergence_abscissa();
    let mut eps = 1e-5 * lo.abs().max(1.0);
    for _ in 0..6 {
        let left = (lo - eps).max(0.5 * (lo + floor.max(lo - 1.0)));
        let outer = half_plane_rect(ch, left, bound_sigma.min(left), opts.margin)?;
        let mut y_lo = -1e-3;
        let mut y_hi = outer.y1;
        let mut failed = false;
        while y_hi - y_lo > opts.im_resolution {
            let mut mid = 0.5 * (y_lo + y_hi);
            let mut attempt = 0;
            let upper = loop {
                let rect = Rect {
                    y0: mid,
                    y1: y_hi,
                    ..outer
                };
                match winding_count(ch, rect) {
                    Ok(n) => break Some(n),
                    Err(WalkError::OnContour) if attempt < 5 => {
                        attempt += 1;
                        mid += 0.037 * (y_hi - y_lo);
                    }
                    Err(WalkError::OnContour) => break None,
                    Err(e) => return Err(e.into()),
                }
            };
            match upper {
                Some(0) => y_hi = mid,
                Some(_) => y_lo = mid,
                None => {
                    failed = true;
                    break;
                }
            }
        }
        if !failed {
            return Ok(0.5 * (y_lo + y_hi));
        }
        eps *= 3.0;
    }
    Err(CharError::ContourThroughRoot(6))
}

/// Newton refinement, switching to Newton on `f'` near a multiple root.
fn polish(
    ch: &Characteristic,
    start: Complex64,
    opts: &RootOptions,
) -> Result<Complex64, CharError> {
    let mut z = start;
    let mut best = (z, f64::INFINITY);
    for _ in 0..100 {
        let (f, fp) = ch.value_and_derivative(z)?;
        let r = f.norm();
        if r < best.1 {
            best = (z, r);
        }
        if r < opts.newton_tol {
            break;
        }
        let step = f / fp;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        z -= step;
        if step.norm() < 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    let (mut z, mut residual) = best;

    // a small derivative at the root signals multiplicity: refine on f'
    let (_, fp) = ch.value_and_derivative(z)?;
    if fp.norm() < 1e-3 {
        let mut w = z;
        for _ in 0..50 {
            let (_, fp) = ch.value_and_derivative(w)?;
            let fpp = ch.second_derivative(w)?;
            let step = fp / fpp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            w -= step;
            if step.norm() < 1e-16 * (1.0 + w.norm()) {
                break;
            }
        }
        let r = ch.value(w)?.norm();
        if r <= residual {
            z = w;
            residual = r;
        }
    }
    if residual > 1e-10 {
        return Err(CharError::RefinementFailed(residual));
    }
    Ok(z)
}

/// Upper-half-plane member, with near-real roots snapped onto the axis.
fn canonical(ch: &Characteristic, root: Complex64, opts: &RootOptions) -> Complex64 {
    let mut z = if root.im < 0.0 { root.conj() } else { root };
    if z.im.abs() < 1e-9 {
        let real = Complex64::new(z.re, 0.0);
        if ch
            .value(real)
            .map(|v| v.norm() <= opts.newton_tol.max(ch.value(z).map_or(0.0, |w| w.norm())))
            .unwrap_or(false)
        {
            z = real;
        }
    }
    z
}

/// Exponential and gamma kernels have rational transforms: clearing the
/// denominator turns the characteristic equation into a polynomial.
mod rational {
    use super::*;

    /// Coefficients (ascending) of `(λ + a)(1 + λ/r)^k + 1`.
    fn polynomial(a: f64, order: u32, rate: f64) -> Vec<f64> {
        let k = order as usize;
        let mut binom = vec![0.0; k + 1];
        binom[0] = 1.0;
        for j in 1..=k {
            binom[j] = binom[j - 1] * (k + 1 - j) as f64 / j as f64;
        }
        let chain: Vec<f64> = (0..=k).map(|j| binom[j] / rate.powi(j as i32)).collect();
        let mut poly = vec![0.0; k + 2];
        for j in 0..=k {
            poly[j] += a * chain[j];
            poly[j + 1] += chain[j];
        }
        poly[0] += 1.0;
        poly
    }

    fn horner(poly: &[f64], z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in poly.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// All roots by Aberth–Ehrlich iteration.
    pub(super) fn roots(poly: &[f64]) -> Vec<Complex64> {
        let degree = poly.len() - 1;
        let lead = poly[degree];
        let monic: Vec<f64> = poly.iter().map(|c| c / lead).collect();
        let radius = 1.0 + monic[..degree].iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut z: Vec<Complex64> = (0..degree)
            .map(|j| {
                let angle = std::f64::consts::TAU * (j as f64 + 0.25) / degree as f64 + 0.4;
                Complex64::from_polar(0.5 * radius, angle)
            })
            .collect();
        for _ in 0..500 {
            let mut largest: f64 = 0.0;
            for i in 0..degree {
                let (p, dp) = horner(&monic, z[i]);
                let ratio = p / dp;
                let repulsion: Complex64 = (0..degree)
                    .filter(|&j| j != i)
                    .map(|j| 1.0 / (z[i] - z[j]))
                    .sum();
                let step = ratio / (1.0 - ratio * repulsion);
                if step.re.is_finite() && step.im.is_finite() {
                    z[i] -= step;
                    largest = largest.max(step.norm() / (1.0 + z[i].norm()));
                }
            }
            if largest < 1e-15 {
                break;
            }
        }
        z
    }

    pub(super) fn leading_root(
        ch: &Characteristic,
        opts: &RootOptions,
    ) -> Result<Complex64, CharError> {
        let (order, mean) = match ch.dist.kind() {
            DistributionKind::Exponential { mean } => (1, *mean),
            DistributionKind::Gamma { order, mean } => (*order, *mean),
            _ => unreachable!("rational path only handles exponential and gamma kernels"),
        };
        let poly = polynomial(ch.a, order, f64::from(order) / mean);
        let candidates = roots(&poly);
        let best = candidates
            .into_iter()
            .max_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)))
            .expect("degree is at least two");
        if best.re > ch.dist.convergence_abscissa() {
            let root = polish(ch, best, opts)?;
            return Ok(canonical(ch, root, opts));
        }
        // left of the abscissa the transform integral diverges, but the
        // polynomial roots are still the eigenvalues of the chain system
        let mut z = polish_polynomial(&poly, best);
        if z.im < 0.0 {
            z = z.conj();
        }
        if z.im.abs() < 1e-9 {
            let real = Complex64::new(z.re, 0.0);
            if horner(&poly, real).0.norm() <= horner(&poly, z).0.norm() {
                z = real;
            }
        }
        Ok(z)
    }

    fn polish_polynomial(poly: &[f64], start: Complex64) -> Complex64 {
        let mut z = start;
        for _ in 0..50 {
            let (p, dp) = horner(poly, z);
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            z -= step;
            if step.norm() < 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
        z
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // principal branch W0(-1), the leading root of λ + e^{-λ} = 0
    const W0_MINUS_ONE: (f64, f64) = (-0.318_131_505_204_764_1, 1.337_235_701_430_689_4);

    #[test]
    fn char_value_examples() {
        let e = DelayDistribution::exponential(1.0).unwrap();
        let v = char_value(-1.0, &e, c(0.0, 0.0)).unwrap().value;
        assert!(v.norm() < 1e-15);
        let d = DelayDistribution::dirac(FRAC_PI_2).unwrap();
        assert!(char_value(0.0, &d, c(0.0, 1.0)).unwrap().value.norm() < 1e-15);
        let v = char_value(0.3, &e, c(1.0, 0.0)).unwrap().value;
        assert!((v - 1.8).norm() < 1e-15);
    }

    #[test]
    fn omega_cap_examples() {
        assert_eq!(omega_cap(0.0).unwrap(), 1.0);
        assert!((omega_cap(-0.1).unwrap() - 0.99f64.sqrt()).abs() < 1e-15);
        assert_eq!(omega_cap(1.0).unwrap(), 0.0);
        assert!(omega_cap(1.2).is_err());
    }

    #[test]
    fn dirac_one_is_stable_with_lambert_root() {
        let d = DelayDistribution::dirac(1.0).unwrap();
        let report = count_unstable_roots(0.0, &d).unwrap();
        assert_eq!(report.unstable_count, 0);
        let expected = c(W0_MINUS_ONE.0, W0_MINUS_ONE.1);
        assert!(
            (report.leading_root - expected).norm() < 1e-9,
            "{}",
            report.leading_root
        );
    }

    #[test]
    fn dirac_two_has_one_crossed_pair() {
        let d = DelayDistribution::dirac(2.0).unwrap();
        let report = count_unstable_roots(0.0, &d).unwrap();
        assert_eq!(report.unstable_count, 2);
        assert!(report.leading_root.re > 0.0);
    }

    #[test]
    fn zero_root_line_below_threshold_has_positive_real_root() {
        let d = DelayDistribution::dirac(1.0).unwrap();
        let report = count_unstable_roots(-1.2, &d).unwrap();
        assert!(report.unstable_count >= 1);
        assert!(report.leading_root.re > 0.0);
        assert_eq!(report.leading_root.im, 0.0);
    }

    #[test]
    fn hopf_point_is_marginal() {
        let d = DelayDistribution::dirac(FRAC_PI_2).unwrap();
        let root = leading_root(0.0, &d).unwrap();
        assert!((root - c(0.0, 1.0)).norm() < 1e-9, "{root}");
        let report = count_unstable_roots(0.0, &d).unwrap();
        assert_eq!(report.unstable_count, 0);
        assert!(report.leading_root.re.abs() < MARGINAL_TOLERANCE);
        let status = root_status(0.0, &d, &RootOptions::default()).unwrap();
        assert_eq!(status.status, RootStatus::Marginal);
    }

    #[test]
    fn double_zero_root() {
        let d = DelayDistribution::dirac(1.0).unwrap();
        let root = leading_root(-1.0, &d).unwrap();
        assert!(root.norm() < 1e-7, "{root}");
        let status = root_status(-1.0, &d, &RootOptions::default()).unwrap();
        assert_eq!(status.status, RootStatus::Marginal);
    }

    #[test]
    fn gamma_leading_root_matches_polynomial() {
        let g = DelayDistribution::gamma(2, 10.0).unwrap();
        let root = leading_root(0.05, &g).unwrap();
        let f = char_value(0.05, &g, root).unwrap().value;
        assert!(f.norm() < 1e-10);
        let report = count_unstable_roots(0.05, &g).unwrap();
        assert_eq!(report.unstable_count, if root.re > 0.0 { 2 } else { 0 });
    }

    #[test]
    fn conjugate_symmetry() {
        let d = DelayDistribution::discrete([(0.0, 0.2), (1.3, 0.5), (4.0, 0.3)]).unwrap();
        let lam = c(0.4, -2.2);
        let v = char_value(0.1, &d, lam).unwrap().value;
        let w = char_value(0.1, &d, lam.conj()).unwrap().value;
        assert!((v.conj() - w).norm() < 1e-15);
    }

    #[test]
    fn out_of_range_coefficient_rejected() {
        let d = DelayDistribution::dirac(1.0).unwrap();
        assert!(matches!(
            count_unstable_roots(11.0, &d),
            Err(CharError::CoefficientOutOfRange(_))
        ));
    }

    #[test]
    fn no_delay_single_real_root() {
        let d = DelayDistribution::dirac(0.0).unwrap();
        let root = leading_root(0.5, &d).unwrap();
        assert!((root - c(-1.5, 0.0)).norm() < 1e-12);
        assert_eq!(count_unstable_roots(0.5, &d).unwrap().unstable_count, 0);
        assert_eq!(count_unstable_roots(-2.0, &d).unwrap().unstable_count, 1);
    }

    #[test]
    fn report_serializes_to_flat_json() {
        let report = RootReport {
            unstable_count: 2,
            leading_root: c(0.5, -PI),
            contour_bound: 2.5,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            format!(
                r#"{{"unstable_count":2,"leading_root":[0.5,{}],"contour_bound":2.5}}"#,
                -PI
            )
        );
    }
}
