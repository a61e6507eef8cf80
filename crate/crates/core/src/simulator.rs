//! Time-domain integration of `x' = -a x - b ∫ x(t - τ) dη(τ)`.
//!
//! Atomic kernels are integrated with classical RK4, reading delayed values
//! from the stored trace by cubic Hermite interpolation. Exponential and
//! gamma kernels are replaced by the equivalent linear chain of ODEs, and
//! uniform kernels are discretized first.

use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::distributions::{Atom, DelayDistribution, DistributionKind};
use crate::quadrature;
use crate::special;

/// Atoms used for kernels without an exact finite representation.
pub const UNIFORM_ATOMS: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time step {dt} exceeds a quarter of the smallest positive delay {min_delay}")]
    StepTooLarge { dt: f64, min_delay: f64 },
    #[error("only {found} extrema in the fitting window; integrate longer")]
    TooFewExtrema { found: usize },
    #[error("trace left the representable range")]
    Overflow,
    #[error("history file: {0}")]
    History(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Initial function on `t ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Constant(f64),
    /// Samples `(t, x)` with `t ≤ 0`, ascending in `t`, linearly
    /// interpolated and held constant outside their range.
    Sampled(Vec<(f64, f64)>),
}

impl Default for History {
    fn default() -> Self {
        History::Constant(1.0)
    }
}

impl History {
    pub fn sampled(mut samples: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if samples.is_empty() {
            return Err(SimError::History("no samples".into()));
        }
        if samples
            .iter()
            .any(|&(t, x)| !t.is_finite() || !x.is_finite() || t > 0.0)
        {
            return Err(SimError::History(
                "samples must be finite with t <= 0".into(),
            ));
        }
        samples.sort_by(|p, q| p.0.total_cmp(&q.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SimError::History("duplicate sample times".into()));
        }
        Ok(History::Sampled(samples))
    }

    /// Reads a `t,x` CSV file with a header line.
    pub fn from_csv_path(path: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(io::BufReader::new(file))
    }

    pub fn from_csv_reader<R: BufRead>(reader: R) -> Result<Self, SimError> {
        let mut samples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split(',').map(str::trim);
            let (Some(t), Some(x), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(SimError::History(format!(
                    "line {}: expected two columns",
                    lineno + 1
                )));
            };
            match (t.parse::<f64>(), x.parse::<f64>()) {
                (Ok(t), Ok(x)) => samples.push((t, x)),
                _ if lineno == 0 => continue,
                _ => {
                    return Err(SimError::History(format!(
                        "line {}: cannot parse '{trimmed}'",
                        lineno + 1
                    )))
                }
            }
        }
        Self::sampled(samples)
    }

    /// Value at `t ≤ 0`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            History::Constant(c) => *c,
            History::Sampled(s) => {
                let first = s[0];
                let last = s[s.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let k = s.partition_point(|p| p.0 <= t);
                let (t0, x0) = s[k - 1];
                let (t1, x1) = s[k];
                x0 + (x1 - x0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// `∫_0^∞ h(-s) g(s) ds` for the Erlang density `g` of shape `k`, rate `rate`.
    fn erlang_average(&self, k: u32, rate: f64) -> f64 {
        match self {
            History::Constant(c) => *c,
            History::Sampled(s) => {
                let span = -s[0].0;
                if span <= 0.0 {
                    return s[0].1;
                }
                let body = quadrature::integrate(
                    |u| self.value(-u) * special::erlang_density(k, rate, u),
                    0.0,
                    span,
                    1e-12,
                )
                .map(|r| r.value)
                .unwrap_or_else(|e| {
                    log::warn!("history quadrature: {e}");
                    f64::NAN
                });
                let (_, tail) = special::erlang_tails(k, rate * span);
                body + tail * s[0].1
            }
        }
    }
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dt: f64,
    pub a: f64,
    pub b: f64,
    pub dist: DelayDistribution,
    pub history: History,
}

impl SimulationTrace {
    /// Writes `t,x`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }
}

/// Default step: `min(mean/200, smallest delay/8)`, capped at `0.02`.
pub fn default_dt(dist: &DelayDistribution) -> f64 {
    let mean = dist.mean();
    let mut dt: f64 = if mean > 0.0 { mean / 200.0 } else { 0.005 };
    if let Some(m) = min_positive_delay(&integration_kernel(dist)) {
        dt = dt.min(m / 8.0);
    }
    dt.min(0.02)
}

/// Default horizon `40 · mean`, at least `10`.
pub fn default_horizon(dist: &DelayDistribution) -> f64 {
    (40.0 * dist.mean()).max(10.0)
}

enum Kernel {
    Atoms(Vec<Atom>),
    Chain { order: u32, rate: f64 },
}

fn integration_kernel(dist: &DelayDistribution) -> Kernel {
    match dist.kind() {
        DistributionKind::Dirac { delay } => Kernel::Atoms(vec![Atom {
            delay: *delay,
            weight: 1.0,
        }]),
        DistributionKind::Discrete(m) => Kernel::Atoms(m.atoms().to_vec()),
        DistributionKind::Exponential { mean } => Kernel::Chain {
            order: 1,
            rate: 1.0 / mean,
        },
        DistributionKind::Gamma { order, mean } => Kernel::Chain {
            order: *order,
            rate: f64::from(*order) / mean,
        },
        DistributionKind::Uniform { .. } => match dist.discretize(UNIFORM_ATOMS).kind() {
            DistributionKind::Discrete(m) => Kernel::Atoms(m.atoms().to_vec()),
            DistributionKind::Dirac { delay } => Kernel::Atoms(vec![Atom {
                delay: *delay,
                weight: 1.0,
            }]),
            _ => unreachable!("discretization yields atoms"),
        },
    }
}

fn min_positive_delay(kernel: &Kernel) -> Option<f64> {
    match kernel {
        Kernel::Atoms(atoms) => atoms
            .iter()
            .map(|a| a.delay)
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp),
        Kernel::Chain { .. } => None,
    }
}

/// Integrates on `[0, t_end]` with step `dt`.
pub fn simulate(
    a: f64,
    b: f64,
    dist: &DelayDistribution,
    history: &History,
    t_end: f64,
    dt: f64,
) -> Result<SimulationTrace, SimError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(SimError::InvalidArgument(
            "coefficients must be finite".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidArgument(format!(
            "T must be positive, got {t_end}"
        )));
    }
    if t_end <= 10.0 * dist.mean() {
        log::warn!(
            "horizon T = {t_end} is not beyond ten mean delays ({})",
            10.0 * dist.mean()
        );
    }
    let kernel = integration_kernel(dist);
    if let Some(m) = min_positive_delay(&kernel) {
        if dt > m / 4.0 {
            return Err(SimError::StepTooLarge { dt, min_delay: m });
        }
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let values = match kernel {
        Kernel::Atoms(atoms) => integrate_atoms(a, b, &atoms, history, dt, steps),
        Kernel::Chain { order, rate } => integrate_chain(a, b, order, rate, history, dt, steps),
    };
    if values.iter().any(|x| !x.is_finite()) {
        return Err(SimError::Overflow);
    }
    Ok(SimulationTrace {
        times: (0..=steps).map(|i| i as f64 * dt).collect(),
        values,
        dt,
        a,
        b,
        dist: dist.clone(),
        history: history.clone(),
    })
}

struct Past<'a> {
    history: &'a History,
    dt: f64,
    x: &'a [f64],
    dx: &'a [f64],
}

impl Past<'_> {
    /// `x(t)` for `t` at or before the last stored grid point.
    fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.history.value(t);
        }
        let s = t / self.dt;
        let last = self.x.len() - 1;
        let i = (s.floor() as usize).min(last.saturating_sub(1));
        if i >= last {
            return self.x[last];
        }
        let theta = s - i as f64;
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let (d0, d1) = (self.dx[i] * self.dt, self.dx[i + 1] * self.dt);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (2.0 * t3 - 3.0 * t2 + 1.0) * x0
            + (t3 - 2.0 * t2 + theta) * d0
            + (-2.0 * t3 + 3.0 * t2) * x1
            + (t3 - t2) * d1
    }
}

fn integrate_atoms(
    a: f64,
    b: f64,
    atoms: &[Atom],
    history: &History,
    dt: f64,
    steps: usize,
) -> Vec<f64> {
    let instant: f64 = atoms
        .iter()
        .filter(|q| q.delay == 0.0)
        .map(|q| q.weight)
        .sum();
    let delayed: Vec<Atom> = atoms.iter().copied().filter(|q| q.delay > 0.0).collect();
    let mut x = Vec::with_capacity(steps + 1);
    let mut dx = Vec::with_capacity(steps + 1);
    x.push(history.value(0.0));

    let rhs = |past: &Past, t: f64, state: f64| -> f64 {
        let lagged: f64 = delayed
            .iter()
            .map(|q| q.weight * past.at(t - q.delay))
            .sum();
        -a * state - b * (instant * state + lagged)
    };

    for n in 0..steps {
        let t = n as f64 * dt;
        let xn = x[n];
        // derivative at the current grid point completes the Hermite data
        let k1 = {
            let past = Past {
                history,
                dt,
                x: &x,
                dx: &dx,
            };
            rhs(&past, t, xn)
        };
        dx.push(k1);
        let past = Past {
            history,
            dt,
            x: &x,
            dx: &dx,
        };
        let k2 = rhs(&past, t + 0.5 * dt, xn + 0.5 * dt * k1);
        let k3 = rhs(&past, t + 0.5 * dt, xn + 0.5 * dt * k2);
        let k4 = rhs(&past, t + dt, xn + dt * k3);
        x.push(xn + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    x
}

fn integrate_chain(
    a: f64,
    b: f64,
    order: u32,
    rate: f64,
    history: &History,
    dt: f64,
    steps: usize,
) -> Vec<f64> {
    let k = order as usize;
    // state[0] = x, state[j] = x filtered by the Erlang(j, rate) kernel
    let mut state = vec![history.value(0.0)];
    state.extend((1..=k).map(|j| history.erlang_average(j as u32, rate)));

    let rhs = |s: &[f64], out: &mut [f64]| {
        out[0] = -a * s[0] - b * s[k];
        for j in 1..=k {
            out[j] = rate * (s[j - 1] - s[j]);
        }
    };

    let dim = k + 1;
    let mut xs = Vec::with_capacity(steps + 1);
    xs.push(state[0]);
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut tmp = vec![0.0; dim];
    for _ in 0..steps {
        rhs(&state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..dim {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        xs.push(state[0]);
    }
    xs
}

/// Exponential rate of the trace over its last third.
///
/// Oscillating traces are fitted through the logarithm of their extrema;
/// traces of one sign through `log |x|` directly.
pub fn decay_rate(trace: &SimulationTrace) -> Result<f64, SimError> {
    let n = trace.values.len();
    let start = 2 * n / 3;
    let t = &trace.times[start..];
    let x = &trace.values[start..];
    if x.len() < 3 {
        return Err(SimError::TooFewExtrema { found: 0 });
    }
    let changes_sign = x.windows(2).any(|w| (w[0] > 0.0) != (w[1] > 0.0));

    let mut peaks = Vec::new();
    for i in 1..x.len() - 1 {
        let (l, c, r) = (x[i - 1], x[i], x[i + 1]);
        if (c > l && c >= r) || (c < l && c <= r) {
            // vertex of the parabola through the three samples
            let denom = l - 2.0 * c + r;
            let (offset, value) = if denom != 0.0 {
                let off = 0.5 * (l - r) / denom;
                (off, c - 0.25 * (l - r) * off)
            } else {
                (0.0, c)
            };
            if value.abs() > 1e-290 {
                peaks.push((t[i] + offset * trace.dt, value.abs().ln()));
            }
        }
    }

    if changes_sign && peaks.len() >= 4 {
        return Ok(least_squares_slope(&peaks));
    }
    if !changes_sign {
        let points: Vec<(f64, f64)> = t
            .iter()
            .zip(x)
            .filter(|(_, v)| v.abs() > 1e-290)
            .map(|(&ti, v)| (ti, v.abs().ln()))
            .collect();
        if points.len() >= 3 {
            return Ok(least_squares_slope(&points));
        }
    }
    Err(SimError::TooFewExtrema { found: peaks.len() })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    sxy / sxx
}
