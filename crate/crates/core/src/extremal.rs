//! Most-unstable two-delay distributions.
//!
//! Among delay mixtures with a prescribed mean `E` and cosine moment
//! `C(ω_s)`, the sine moment `S(ω_s)` is maximized by a pair of atoms at
//! `0` and `τ₂*`, where `ω_s τ₂*` is the first nonzero intersection of the
//! chord `1 - dθ` with `cos θ`. An `n`-delay mixture is reduced to that pair
//! by repeated pairwise replacement followed by a merge of the remaining
//! positive delays.

use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::criteria::universal_bound;
use crate::distributions::{Atom, DiscreteMixture, DistributionError};

/// Default tolerance on `|C_mix(ω_s) + a|` accepted by the reduction.
pub const DEFAULT_CROSSING_TOLERANCE: f64 = 1e-3;

const SCAN_POINTS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtremalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("chord slope {slope} exceeds the limiting slope {limit}: no admissible pair exists")]
    InfeasibleChord { slope: f64, limit: f64 },
    #[error("no intersection of the chord with cos on (0, π)")]
    NoIntersection,
    #[error("C(ω_s) + a = {residual:e} is not a crossing (tolerance {tolerance:e})")]
    NotACrossing { residual: f64, tolerance: f64 },
    #[error("mean {mean} is not below the universal bound {bound}")]
    AboveBound { mean: f64, bound: f64 },
    #[error("pairwise reduction did not terminate within {0} iterations")]
    NonConvergence(usize),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Two-atom distribution `p₁ δ(0) + p₂ δ(τ - τ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalPair {
    #[serde(skip)]
    pub tau1: f64,
    #[serde(rename = "tau2_star")]
    pub tau2: f64,
    #[serde(rename = "p1_star")]
    pub p1: f64,
    #[serde(rename = "p2_star")]
    pub p2: f64,
    pub s_star: f64,
    pub omega_s: f64,
    #[serde(rename = "mean")]
    pub preserved_mean: f64,
    #[serde(rename = "c_preserved")]
    pub preserved_c: f64,
    /// Set when the input forced `p₁* < 0` and the pair was clamped to a
    /// single atom at the mean.
    #[serde(skip)]
    pub degenerate: bool,
}

impl ExtremalPair {
    pub fn mixture(&self) -> Result<DiscreteMixture, DistributionError> {
        if self.p1 > 0.0 {
            DiscreteMixture::new([(self.tau1, self.p1), (self.tau2, self.p2)])
        } else {
            DiscreteMixture::new([(self.tau2, 1.0)])
        }
    }
}

fn chord_angle_and_slope() -> &'static (f64, f64) {
    static CHORD: OnceLock<(f64, f64)> = OnceLock::new();
    CHORD.get_or_init(|| {
        // 1 - θ sin θ - cos θ is negative at π/2 and positive at π
        let h = |t: f64| 1.0 - t * t.sin() - t.cos();
        let (mut lo, mut hi) = (std::f64::consts::FRAC_PI_2, std::f64::consts::PI);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        (theta, theta.sin())
    })
}

/// Smallest `c` with `cos θ ≥ 1 - cθ` for all `θ ≥ 0`.
pub fn chord_constant() -> f64 {
    chord_angle_and_slope().1
}

/// Angle at which the limiting chord touches `cos θ`.
pub fn chord_angle() -> f64 {
    chord_angle_and_slope().0
}

/// `z [2 - 2 cos z - z sin z]`, evaluated without cancellation for small `z`.
pub fn slope_inequality(z: f64) -> f64 {
    // 2 - 2cos z - z sin z = 2 sin h · 2(sin h - h cos h), h = z/2
    let h = 0.5 * z;
    let inner = if h.abs() < 0.5 {
        // sin h - h cos h = Σ (-1)^{n+1} 2n h^{2n+1} / (2n+1)!
        let mut sum = 0.0;
        let mut power = h;
        let mut fact = 1.0;
        for n in 1..12 {
            power *= h * h;
            fact *= f64::from(2 * n) * f64::from(2 * n + 1);
            let term = f64::from(2 * n) * power / fact;
            sum += if n % 2 == 1 { term } else { -term };
        }
        sum
    } else {
        h.sin() - h * h.cos()
    };
    z * 2.0 * h.sin() * 2.0 * inner
}

/// Smallest root of `1 - dθ - cos θ` on `(0, π)`.
fn first_chord_intersection(d: f64) -> Result<f64, ExtremalError> {
    let g = |t: f64| 1.0 - d * t - t.cos();
    let limit = chord_constant();
    if (d - limit).abs() <= 1e-12 {
        return Ok(chord_angle());
    }
    let pi = std::f64::consts::PI;
    let step = pi / SCAN_POINTS as f64;
    // g < 0 just right of zero; find where it first turns positive
    let mut lo = step;
    while g(lo) >= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(ExtremalError::NoIntersection);
        }
    }
    let mut hi = None;
    let mut t = lo;
    for i in 1..=SCAN_POINTS {
        let next = (i as f64 * step).max(t);
        if g(next) > 0.0 {
            hi = Some(next);
            break;
        }
        t = next;
        lo = t;
    }
    let Some(mut hi) = hi else {
        return Err(ExtremalError::NoIntersection);
    };
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let slope = -d + x.sin();
        if slope.abs() < 1e-8 {
            break;
        }
        let next = x - g(x) / slope;
        if !(next.is_finite() && (next - x).abs() < 1e-12) {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// The `(0, τ₂*)` pair with mean `E` and `C(ω_s) = c_target` that maximizes
/// `S(ω_s)`.
pub fn extremal_two_delay(
    c_target: f64,
    omega_s: f64,
    e: f64,
) -> Result<ExtremalPair, ExtremalError> {
    if !(omega_s > 0.0 && omega_s.is_finite()) {
        return Err(ExtremalError::InvalidArgument(format!(
            "frequency must be positive, got {omega_s}"
        )));
    }
    if !(e > 0.0 && e.is_finite()) {
        return Err(ExtremalError::InvalidArgument(format!(
            "mean must be positive, got {e}"
        )));
    }
    if !(c_target.is_finite() && c_target <= 1.0) {
        return Err(ExtremalError::InvalidArgument(format!(
            "cosine moment must not exceed 1, got {c_target}"
        )));
    }
    let t = omega_s * e;
    let d = (1.0 - c_target) / t;
    let limit = chord_constant();
    if d > limit + 1e-12 {
        return Err(ExtremalError::InfeasibleChord { slope: d, limit });
    }
    let single = |degenerate: bool| ExtremalPair {
        tau1: 0.0,
        tau2: e,
        p1: 0.0,
        p2: 1.0,
        s_star: t.sin(),
        omega_s,
        preserved_mean: e,
        preserved_c: t.cos(),
        degenerate,
    };
    if (c_target - t.cos()).abs() <= 1e-14 {
        return Ok(single(false));
    }
    let theta = first_chord_intersection(d)?;
    let tau2 = theta / omega_s;
    let p2 = e / tau2;
    let p1 = 1.0 - p2;
    if p1 < -1e-12 {
        log::warn!("extremal pair would need p1 = {p1}; clamped to a single delay");
        return Ok(single(true));
    }
    let p1 = p1.max(0.0);
    Ok(ExtremalPair {
        tau1: 0.0,
        tau2,
        p1,
        p2,
        s_star: p2 * theta.sin(),
        omega_s,
        preserved_mean: p2 * tau2,
        preserved_c: p1 + p2 * theta.cos(),
        degenerate: false,
    })
}

/// One pairwise replacement of the reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStep {
    /// Delays of the replaced pair, smaller first.
    pub replaced: (f64, f64),
    /// Positive delay that replaced the larger one.
    pub new_delay: f64,
    /// Mixture after the replacement.
    pub atoms: Vec<Atom>,
}

/// Reduction result together with the intermediate mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub pair: ExtremalPair,
    pub steps: Vec<ReductionStep>,
    /// Positive delays left after the pairwise stage, before merging.
    pub merged: Vec<Atom>,
}

fn cos_moment(atoms: &[Atom], omega: f64) -> f64 {
    atoms
        .iter()
        .map(|a| a.weight * (omega * a.delay).cos())
        .sum()
}

/// Reduces a mixture with a crossing at `ω_s` to its extremal pair.
pub fn reduce_to_extremal(
    mix: &DiscreteMixture,
    omega_s: f64,
    a: f64,
) -> Result<ExtremalPair, ExtremalError> {
    Ok(reduce_to_extremal_traced(mix, omega_s, a, DEFAULT_CROSSING_TOLERANCE)?.pair)
}

pub fn reduce_to_extremal_traced(
    mix: &DiscreteMixture,
    omega_s: f64,
    a: f64,
    crossing_tolerance: f64,
) -> Result<Reduction, ExtremalError> {
    if !(a.abs() < 1.0) {
        return Err(ExtremalError::InvalidArgument(format!(
            "coefficient must satisfy |a| < 1, got {a}"
        )));
    }
    if !(omega_s > 0.0 && omega_s.is_finite()) {
        return Err(ExtremalError::InvalidArgument(format!(
            "frequency must be positive, got {omega_s}"
        )));
    }
    let c_mix = cos_moment(mix.atoms(), omega_s);
    let residual = c_mix + a;
    if residual.abs() > crossing_tolerance {
        return Err(ExtremalError::NotACrossing {
            residual,
            tolerance: crossing_tolerance,
        });
    }
    let e = mix.mean();
    let bound = universal_bound(a, 1.0).expect("|a| < 1");
    if !(e < bound) {
        return Err(ExtremalError::AboveBound { mean: e, bound });
    }

    let mut atoms: Vec<Atom> = mix.atoms().to_vec();
    let mut steps = Vec::new();
    let n = atoms.len();
    let cap = 10 * n * n;
    let mut iterations = 0;
    'outer: loop {
        // positive delays, sorted ascending by construction
        let positive: Vec<usize> = (0..atoms.len()).filter(|&k| atoms[k].delay > 0.0).collect();
        for jj in (0..positive.len()).rev() {
            for ii in (0..jj).rev() {
                let (i, j) = (positive[ii], positive[jj]);
                let mass = atoms[i].weight + atoms[j].weight;
                let (qi, qj) = (atoms[i].weight / mass, atoms[j].weight / mass);
                let pair_mean = qi * atoms[i].delay + qj * atoms[j].delay;
                let pair_c =
                    qi * (omega_s * atoms[i].delay).cos() + qj * (omega_s * atoms[j].delay).cos();
                if pair_c > (omega_s * pair_mean).cos() {
                    continue;
                }
                iterations += 1;
                if iterations > cap {
                    return Err(ExtremalError::NonConvergence(cap));
                }
                let pair = extremal_two_delay(pair_c, omega_s, pair_mean)?;
                let replaced = (atoms[i].delay, atoms[j].delay);
                let mut next: Vec<Atom> = atoms
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, a)| *a)
                    .collect();
                next.push(Atom {
                    delay: 0.0,
                    weight: mass * pair.p1,
                });
                next.push(Atom {
                    delay: pair.tau2,
                    weight: mass * pair.p2,
                });
                atoms = merge(next);
                steps.push(ReductionStep {
                    replaced,
                    new_delay: pair.tau2,
                    atoms: atoms.clone(),
                });
                continue 'outer;
            }
        }
        break;
    }

    let merged: Vec<Atom> = atoms.iter().copied().filter(|a| a.delay > 0.0).collect();
    let pair = extremal_two_delay(c_mix, omega_s, e)?;
    Ok(Reduction {
        pair,
        steps,
        merged,
    })
}

/// Sorts atoms by delay, combining equal delays and dropping empty ones.
/// Weights are not renormalized, so mass bookkeeping stays exact.
fn merge(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.retain(|a| a.weight > 0.0);
    atoms.sort_by(|x, y| x.delay.total_cmp(&y.delay));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if (last.delay - a.delay).abs() <= 1e-14 * (1.0 + a.delay) => {
                last.weight += a.weight;
            }
            _ => out.push(a),
        }
    }
    out
}

/// Checks `S(ω_s) < ω_s` for `(1 - p) δ(0) + p δ(τ - r)` using the closed form
/// of the sine moment at the crossing. Vacuously true when no crossing exists.
pub fn s_star_bound_check(a: f64, p: f64, r: f64) -> Result<bool, ExtremalError> {
    if !(a.abs() < 1.0) {
        return Err(ExtremalError::InvalidArgument(format!(
            "coefficient must satisfy |a| < 1, got {a}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(ExtremalError::InvalidArgument(format!(
            "weight must lie in (0, 1], got {p}"
        )));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(ExtremalError::InvalidArgument(format!(
            "delay must be positive, got {r}"
        )));
    }
    let bound = universal_bound(a, 1.0).expect("|a| < 1");
    if !(p * r < bound) {
        return Err(ExtremalError::AboveBound { mean: p * r, bound });
    }
    let arg = -(a + 1.0 - p) / p;
    if !(-1.0..=1.0).contains(&arg) {
        return Ok(true);
    }
    let omega_s = arg.acos() / r;
    let s = (p * p - (-a + p - 1.0).powi(2)).max(0.0).sqrt();
    Ok(s < omega_s)
}
