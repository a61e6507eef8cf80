//! Delay distributions and their transforms.
//!
//! A [`DelayDistribution`] is a cumulative probability distribution of
//! nonnegative delays. Every downstream computation only needs three things
//! from it: the mean, the Laplace-Stieltjes transform
//! `L(λ) = ∫ e^{-λτ} dη(τ)` and its first-moment companion
//! `M(λ) = ∫ τ e^{-λτ} dη(τ) = -L'(λ)`. All supported kinds have closed forms
//! for both.
//!
//! Every kind has exponentially decaying tails, so `L` is analytic on the
//! half-plane `Re λ > σ_c` where `σ_c` is [`DelayDistribution::convergence_abscissa`]
//! (finite and negative for exponential and gamma kernels, `-∞` otherwise).

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special;

/// Atoms closer than this (in delay) are merged.
pub const ATOM_MERGE_DISTANCE: f64 = 1e-12;

/// Tolerance on the total weight before renormalization is considered a no-op.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("delay must be finite and nonnegative, got {0}")]
    InvalidDelay(f64),
    #[error("weight must be finite and positive, got {0}")]
    InvalidWeight(f64),
    #[error("a discrete mixture needs at least one atom")]
    EmptyMixture,
    #[error("mean must be finite and positive, got {0}")]
    InvalidMean(f64),
    #[error("gamma order must be at least 1")]
    ZeroOrder,
    #[error("uniform support [{lower}, {upper}] needs 0 <= lower < upper")]
    InvalidSupport { lower: f64, upper: f64 },
    #[error("target mean must be finite and nonnegative, got {0}")]
    InvalidTargetMean(f64),
    #[error("cannot rescale a distribution concentrated at zero delay to mean {0}")]
    DegenerateScale(f64),
    #[error("transform diverges at Re(λ) = {re}: abscissa of convergence is {abscissa}")]
    Divergent { re: f64, abscissa: f64 },
    #[error("failed to read distribution file: {0}")]
    Io(String),
    #[error("malformed distribution spec: {0}")]
    Parse(String),
}

/// A single point mass of a discrete mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub delay: f64,
    pub weight: f64,
}

/// Finite mixture of point masses, sorted by delay, weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMixture {
    atoms: Vec<Atom>,
}

impl DiscreteMixture {
    /// Builds a mixture from `(delay, weight)` pairs.
    ///
    /// Weights are renormalized to sum to one unless already within
    /// [`WEIGHT_SUM_TOLERANCE`] of it, and atoms closer than
    /// [`ATOM_MERGE_DISTANCE`] are merged.
    pub fn new<I>(atoms: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<Atom> = Vec::new();
        for (delay, weight) in atoms {
            if !delay.is_finite() || delay < 0.0 {
                return Err(DistributionError::InvalidDelay(delay));
            }
            if !weight.is_finite() || weight <= 0.0 {
                return Err(DistributionError::InvalidWeight(weight));
            }
            raw.push(Atom { delay, weight });
        }
        if raw.is_empty() {
            return Err(DistributionError::EmptyMixture);
        }
        raw.sort_by(|x, y| x.delay.total_cmp(&y.delay));

        let mut merged: Vec<Atom> = Vec::with_capacity(raw.len());
        for atom in raw {
            match merged.last_mut() {
                Some(last) if atom.delay - last.delay < ATOM_MERGE_DISTANCE => {
                    // keep the merged atom at the weighted position
                    let w = last.weight + atom.weight;
                    last.delay = (last.delay * last.weight + atom.delay * atom.weight) / w;
                    last.weight = w;
                }
                _ => merged.push(atom),
            }
        }

        let total: f64 = merged.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            log::debug!("renormalizing mixture weights (sum was {total})");
            for atom in &mut merged {
                atom.weight /= total;
            }
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.delay * a.weight).sum()
    }

    /// Smallest strictly positive delay, if any.
    pub fn min_positive_delay(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.delay).find(|&d| d > 0.0)
    }

    pub fn max_delay(&self) -> f64 {
        self.atoms.last().map_or(0.0, |a| a.delay)
    }
}

/// The supported families of delay distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionKind {
    /// Point mass at `delay`.
    Dirac { delay: f64 },
    /// Finite mixture of point masses.
    Discrete(DiscreteMixture),
    /// Exponential density with the given mean.
    Exponential { mean: f64 },
    /// Gamma (Erlang) density of integer `order` with the given mean.
    Gamma { order: u32, mean: f64 },
    /// Uniform density on `[lower, upper]`.
    Uniform { lower: f64, upper: f64 },
}

/// A validated delay distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct DelayDistribution {
    kind: DistributionKind,
}

impl DelayDistribution {
    pub fn dirac(delay: f64) -> Result<Self, DistributionError> {
        if !delay.is_finite() || delay < 0.0 {
            return Err(DistributionError::InvalidDelay(delay));
        }
        Ok(Self {
            kind: DistributionKind::Dirac { delay },
        })
    }

    pub fn discrete<I>(atoms: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        Ok(Self::from_mixture(DiscreteMixture::new(atoms)?))
    }

    pub fn from_mixture(mixture: DiscreteMixture) -> Self {
        Self {
            kind: DistributionKind::Discrete(mixture),
        }
    }

    pub fn exponential(mean: f64) -> Result<Self, DistributionError> {
        if !mean.is_finite() || mean <= 0.0 {
            return Err(DistributionError::InvalidMean(mean));
        }
        Ok(Self {
            kind: DistributionKind::Exponential { mean },
        })
    }

    pub fn gamma(order: u32, mean: f64) -> Result<Self, DistributionError> {
        if order == 0 {
            return Err(DistributionError::ZeroOrder);
        }
        if !mean.is_finite() || mean <= 0.0 {
            return Err(DistributionError::InvalidMean(mean));
        }
        Ok(Self {
            kind: DistributionKind::Gamma { order, mean },
        })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self, DistributionError> {
        if !(lower.is_finite() && upper.is_finite() && lower >= 0.0 && upper > lower) {
            return Err(DistributionError::InvalidSupport { lower, upper });
        }
        Ok(Self {
            kind: DistributionKind::Uniform { lower, upper },
        })
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    /// Mean delay `E = ∫ τ dη(τ)`.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistributionKind::Dirac { delay } => *delay,
            DistributionKind::Discrete(m) => m.mean(),
            DistributionKind::Exponential { mean } | DistributionKind::Gamma { mean, .. } => *mean,
            DistributionKind::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    /// Abscissa of convergence of the Laplace transform.
    ///
    /// Any `ν` with `0 < ν < -σ_c` satisfies the exponential moment condition.
    pub fn convergence_abscissa(&self) -> f64 {
        match &self.kind {
            DistributionKind::Exponential { mean } => -1.0 / mean,
            DistributionKind::Gamma { order, mean } => -f64::from(*order) / mean,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Whether the transform is a rational function of `λ`.
    pub fn is_rational(&self) -> bool {
        matches!(
            self.kind,
            DistributionKind::Exponential { .. } | DistributionKind::Gamma { .. }
        )
    }

    /// Whether the distribution has a density (as opposed to point masses).
    pub fn is_continuous(&self) -> bool {
        matches!(
            self.kind,
            DistributionKind::Exponential { .. }
                | DistributionKind::Gamma { .. }
                | DistributionKind::Uniform { .. }
        )
    }

    /// Density at `tau` for continuous kinds, `None` for atomic ones.
    pub fn density(&self, tau: f64) -> Option<f64> {
        match &self.kind {
            DistributionKind::Exponential { mean } => {
                Some(special::erlang_density(1, 1.0 / mean, tau))
            }
            DistributionKind::Gamma { order, mean } => Some(special::erlang_density(
                *order,
                f64::from(*order) / mean,
                tau,
            )),
            DistributionKind::Uniform { lower, upper } => Some(if tau >= *lower && tau <= *upper {
                1.0 / (upper - lower)
            } else {
                0.0
            }),
            _ => None,
        }
    }

    /// Upper end of the support, `∞` for exponential and gamma kernels.
    pub fn support_end(&self) -> f64 {
        match &self.kind {
            DistributionKind::Dirac { delay } => *delay,
            DistributionKind::Discrete(m) => m.max_delay(),
            DistributionKind::Uniform { upper, .. } => *upper,
            _ => f64::INFINITY,
        }
    }

    /// Point at which the remaining tail mass drops below `tail`.
    pub fn tail_cutoff(&self, tail: f64) -> f64 {
        match &self.kind {
            DistributionKind::Exponential { mean } => mean * (-tail.ln()),
            DistributionKind::Gamma { order, mean } => {
                mean / f64::from(*order) * special::erlang_quantile(*order, 1.0 - tail)
            }
            _ => self.support_end(),
        }
    }

    /// Proportional rescaling to mean `target`; `target = 0` gives the unit step
    /// at zero.
    pub fn scale_to_mean(&self, target: f64) -> Result<Self, DistributionError> {
        if !target.is_finite() || target < 0.0 {
            return Err(DistributionError::InvalidTargetMean(target));
        }
        if target == 0.0 {
            return Self::dirac(0.0);
        }
        let current = self.mean();
        if current <= 0.0 {
            return Err(DistributionError::DegenerateScale(target));
        }
        let factor = target / current;
        let kind = match &self.kind {
            DistributionKind::Dirac { .. } => DistributionKind::Dirac { delay: target },
            DistributionKind::Discrete(m) => DistributionKind::Discrete(DiscreteMixture {
                atoms: m
                    .atoms
                    .iter()
                    .map(|a| Atom {
                        delay: a.delay * factor,
                        weight: a.weight,
                    })
                    .collect(),
            }),
            DistributionKind::Exponential { .. } => DistributionKind::Exponential { mean: target },
            DistributionKind::Gamma { order, .. } => DistributionKind::Gamma {
                order: *order,
                mean: target,
            },
            DistributionKind::Uniform { lower, upper } => DistributionKind::Uniform {
                lower: lower * factor,
                upper: upper * factor,
            },
        };
        Ok(Self { kind })
    }

    fn check_domain(&self, lambda: Complex64) -> Result<(), DistributionError> {
        let abscissa = self.convergence_abscissa();
        if lambda.re <= abscissa {
            return Err(DistributionError::Divergent {
                re: lambda.re,
                abscissa,
            });
        }
        Ok(())
    }

    /// Laplace-Stieltjes transform `∫ e^{-λτ} dη(τ)`.
    pub fn laplace(&self, lambda: Complex64) -> Result<Complex64, DistributionError> {
        self.check_domain(lambda)?;
        Ok(match &self.kind {
            DistributionKind::Dirac { delay } => (-lambda * delay).exp(),
            DistributionKind::Discrete(m) => m
                .atoms
                .iter()
                .map(|a| (-lambda * a.delay).exp() * a.weight)
                .sum(),
            DistributionKind::Exponential { mean } => 1.0 / (1.0 + lambda * mean),
            DistributionKind::Gamma { order, mean } => {
                let base = 1.0 + lambda * (mean / f64::from(*order));
                base.powi(-(*order as i32))
            }
            DistributionKind::Uniform { lower, upper } => {
                let width = upper - lower;
                (-lambda * lower).exp() * special::phi1(lambda * width)
            }
        })
    }

    /// First-moment transform `∫ τ e^{-λτ} dη(τ)`, i.e. `-dL/dλ`.
    pub fn moment_transform(&self, lambda: Complex64) -> Result<Complex64, DistributionError> {
        self.check_domain(lambda)?;
        Ok(match &self.kind {
            DistributionKind::Dirac { delay } => (-lambda * delay).exp() * delay,
            DistributionKind::Discrete(m) => m
                .atoms
                .iter()
                .map(|a| (-lambda * a.delay).exp() * (a.delay * a.weight))
                .sum(),
            DistributionKind::Exponential { mean } => {
                let base = 1.0 + lambda * mean;
                mean / (base * base)
            }
            DistributionKind::Gamma { order, mean } => {
                let base = 1.0 + lambda * (mean / f64::from(*order));
                base.powi(-(*order as i32) - 1) * mean
            }
            DistributionKind::Uniform { lower, upper } => {
                let width = upper - lower;
                let z = lambda * width;
                (-lambda * lower).exp() * (special::phi1(z) * lower + special::phi2(z) * width)
            }
        })
    }

    /// Second-moment transform `∫ τ² e^{-λτ} dη(τ)`, i.e. `d²L/dλ²`.
    pub fn second_moment_transform(
        &self,
        lambda: Complex64,
    ) -> Result<Complex64, DistributionError> {
        self.check_domain(lambda)?;
        Ok(match &self.kind {
            DistributionKind::Dirac { delay } => (-lambda * delay).exp() * (delay * delay),
            DistributionKind::Discrete(m) => m
                .atoms
                .iter()
                .map(|a| (-lambda * a.delay).exp() * (a.delay * a.delay * a.weight))
                .sum(),
            DistributionKind::Exponential { mean } => {
                let base = 1.0 + lambda * mean;
                2.0 * mean * mean / (base * base * base)
            }
            DistributionKind::Gamma { order, mean } => {
                let k = f64::from(*order);
                let base = 1.0 + lambda * (mean / k);
                base.powi(-(*order as i32) - 2) * (mean * mean * (k + 1.0) / k)
            }
            DistributionKind::Uniform { lower, upper } => {
                let width = upper - lower;
                let z = lambda * width;
                (-lambda * lower).exp()
                    * (special::phi1(z) * (lower * lower)
                        + special::phi2(z) * (2.0 * lower * width)
                        + special::phi3(z) * (width * width))
            }
        })
    }

    /// `(L(λ), M(λ))` in one pass; cheaper than two calls for mixtures.
    pub fn transform_pair(
        &self,
        lambda: Complex64,
    ) -> Result<(Complex64, Complex64), DistributionError> {
        match &self.kind {
            DistributionKind::Discrete(m) => {
                self.check_domain(lambda)?;
                let mut l = Complex64::new(0.0, 0.0);
                let mut d = Complex64::new(0.0, 0.0);
                for a in &m.atoms {
                    let e = (-lambda * a.delay).exp() * a.weight;
                    l += e;
                    d += e * a.delay;
                }
                Ok((l, d))
            }
            _ => Ok((self.laplace(lambda)?, self.moment_transform(lambda)?)),
        }
    }

    /// Cosine and sine moments `C(ω)`, `S(ω)`.
    pub fn trig_moments(&self, omega: f64) -> TrigMoments {
        let transform = self
            .laplace(Complex64::new(0.0, omega))
            .expect("imaginary axis lies inside the convergence half-plane");
        TrigMoments {
            omega,
            c_value: transform.re,
            s_value: -transform.im,
        }
    }

    /// Equal-probability discretization with `n` atoms, each at the conditional
    /// mean of its quantile cell. The mean is preserved.
    ///
    /// Atomic distributions are returned unchanged (as mixtures).
    pub fn discretize(&self, n: usize) -> Self {
        let n = n.max(1);
        let atoms: Vec<(f64, f64)> = match &self.kind {
            DistributionKind::Dirac { delay } => vec![(*delay, 1.0)],
            DistributionKind::Discrete(m) => return Self::from_mixture(m.clone()),
            DistributionKind::Uniform { lower, upper } => {
                let width = (upper - lower) / n as f64;
                (0..n)
                    .map(|i| (lower + width * (i as f64 + 0.5), 1.0 / n as f64))
                    .collect()
            }
            DistributionKind::Exponential { mean } => erlang_cells(1, *mean, n),
            DistributionKind::Gamma { order, mean } => erlang_cells(*order, *mean, n),
        };
        Self::discrete(atoms).expect("cell means are finite and nonnegative")
    }

    /// Reads a JSON or TOML spec file; the format follows the extension
    /// (`.toml` is TOML, anything else is JSON).
    pub fn from_path(path: &Path) -> Result<Self, DistributionError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DistributionError::Io(e.to_string()))?;
        if is_toml(path) {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, DistributionError> {
        serde_json::from_str(text).map_err(|e| DistributionError::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DistributionError> {
        toml::from_str(text).map_err(|e| DistributionError::Parse(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("distribution specs always serialize")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("distribution specs always serialize")
    }

    /// Writes the spec in the format implied by the extension.
    pub fn write_spec(&self, path: &Path) -> Result<(), DistributionError> {
        let text = if is_toml(path) {
            self.to_toml_string()
        } else {
            self.to_json_string()
        };
        std::fs::write(path, text).map_err(|e| DistributionError::Io(e.to_string()))
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Conditional means of the `n` equal-probability cells of an Erlang law.
///
/// Uses `τ f_k(τ) = E f_{k+1}(τ)`, so each conditional mean is `n E` times
/// the `Erlang(k+1)` mass of the cell. Cell edges are in unit-rate time.
fn erlang_cells(order: u32, mean: f64, n: usize) -> Vec<(f64, f64)> {
    let edges: Vec<f64> = (0..=n)
        .map(|i| special::erlang_quantile(order, i as f64 / n as f64))
        .collect();
    let mut masses: Vec<f64> = edges
        .windows(2)
        .map(|w| {
            let (p_lo, q_lo) = special::erlang_tails(order + 1, w[0]);
            let (p_hi, q_hi) = special::erlang_tails(order + 1, w[1]);
            if p_hi < 0.5 {
                p_hi - p_lo
            } else {
                q_lo - q_hi
            }
        })
        .collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    masses
        .into_iter()
        .map(|m| (m * n as f64 * mean, 1.0 / n as f64))
        .collect()
}

/// Cosine and sine moments of a distribution at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMoments {
    pub omega: f64,
    pub c_value: f64,
    pub s_value: f64,
}

impl fmt::Display for DelayDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistributionKind::Dirac { delay } => write!(f, "dirac({delay})"),
            DistributionKind::Discrete(m) => {
                write!(f, "discrete[")?;
                for (i, a) in m.atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}@{}", a.weight, a.delay)?;
                }
                write!(f, "]")
            }
            DistributionKind::Exponential { mean } => write!(f, "exponential(mean {mean})"),
            DistributionKind::Gamma { order, mean } => {
                write!(f, "gamma(order {order}, mean {mean})")
            }
            DistributionKind::Uniform { lower, upper } => write!(f, "uniform({lower}, {upper})"),
        }
    }
}

/// On-disk representation of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    Dirac { delay: f64 },
    Discrete { atoms: Vec<Atom> },
    Exponential { mean: f64 },
    Gamma { order: u32, mean: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl TryFrom<DistributionSpec> for DelayDistribution {
    type Error = DistributionError;

    fn try_from(spec: DistributionSpec) -> Result<Self, Self::Error> {
        match spec {
            DistributionSpec::Dirac { delay } => Self::dirac(delay),
            DistributionSpec::Discrete { atoms } => {
                Self::discrete(atoms.into_iter().map(|a| (a.delay, a.weight)))
            }
            DistributionSpec::Exponential { mean } => Self::exponential(mean),
            DistributionSpec::Gamma { order, mean } => Self::gamma(order, mean),
            DistributionSpec::Uniform { lower, upper } => Self::uniform(lower, upper),
        }
    }
}

impl From<DelayDistribution> for DistributionSpec {
    fn from(dist: DelayDistribution) -> Self {
        match dist.kind {
            DistributionKind::Dirac { delay } => DistributionSpec::Dirac { delay },
            DistributionKind::Discrete(m) => DistributionSpec::Discrete { atoms: m.atoms },
            DistributionKind::Exponential { mean } => DistributionSpec::Exponential { mean },
            DistributionKind::Gamma { order, mean } => DistributionSpec::Gamma { order, mean },
            DistributionKind::Uniform { lower, upper } => {
                DistributionSpec::Uniform { lower, upper }
            }
        }
    }
}
