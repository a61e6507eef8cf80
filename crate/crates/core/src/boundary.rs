//! Stability boundaries in the `(a, E)` plane and stability charts.
//!
//! For a mean-one kernel with moments `C(u)`, `S(u)`, the purely imaginary
//! root `λ = iu/E` of the scaled problem exists exactly on the curve
//! `a = -C(u)`, `E = u / S(u)`. Together with the zero-root line `a = -1`
//! this curve bounds every stability region.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::charfun::{self, RootOptions, RootStatus};
use crate::distributions::{DelayDistribution, DistributionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Parameters of the boundary tracer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub u_min: f64,
    pub u_max: f64,
    pub points: usize,
    /// Branches end where `S(u)` drops below this.
    pub pole_tol: f64,
    pub e_max: f64,
    /// Largest jump in `a` tolerated between neighbouring points.
    pub max_da: f64,
    /// Largest jump in `ln E` tolerated between neighbouring points.
    pub max_dlog_e: f64,
    pub max_refine_depth: u32,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            u_min: 1e-4,
            u_max: 100.0,
            points: 4000,
            pole_tol: 1e-10,
            e_max: 1e4,
            max_da: 0.01,
            max_dlog_e: 0.1,
            max_refine_depth: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    HopfCurve,
    ZeroRootLine,
}

impl BranchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::HopfCurve => "hopf",
            BranchKind::ZeroRootLine => "zero_root",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub u: f64,
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryBranch {
    pub kind: BranchKind,
    /// Ordered by `u`.
    pub points: Vec<BoundaryPoint>,
}

impl BoundaryBranch {
    /// `(first u, last u)` of the branch.
    pub fn u_range(&self) -> (f64, f64) {
        match (self.points.first(), self.points.last()) {
            (Some(p), Some(q)) => (p.u, q.u),
            _ => (f64::NAN, f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryTrace {
    pub branches: Vec<BoundaryBranch>,
    /// Set when `S(u)` vanishes on the whole grid and no curve exists.
    pub degenerate: bool,
}

impl BoundaryTrace {
    pub fn hopf_branches(&self) -> impl Iterator<Item = &BoundaryBranch> {
        self.branches
            .iter()
            .filter(|b| b.kind == BranchKind::HopfCurve)
    }
}

/// Traces the boundary with default options and the given grid.
pub fn trace_boundary(
    dist: &DelayDistribution,
    u_max: f64,
    n_points: usize,
) -> Result<BoundaryTrace, BoundaryError> {
    trace_boundary_with(
        dist,
        &TraceOptions {
            u_max,
            points: n_points,
            ..TraceOptions::default()
        },
    )
}

pub fn trace_boundary_with(
    dist: &DelayDistribution,
    opts: &TraceOptions,
) -> Result<BoundaryTrace, BoundaryError> {
    if !(opts.u_max > opts.u_min && opts.u_min > 0.0 && opts.u_max.is_finite()) {
        return Err(BoundaryError::InvalidArgument(format!(
            "u range must satisfy 0 < u_min < u_max, got ({}, {})",
            opts.u_min, opts.u_max
        )));
    }
    if opts.points < 2 {
        return Err(BoundaryError::InvalidArgument(
            "at least two grid points are needed".into(),
        ));
    }
    if !(opts.e_max > 0.0) {
        return Err(BoundaryError::InvalidArgument(format!(
            "E_max must be positive, got {}",
            opts.e_max
        )));
    }
    if dist.mean() <= 0.0 {
        log::warn!("kernel has zero mean; S(u) vanishes identically");
        return Ok(BoundaryTrace {
            branches: Vec::new(),
            degenerate: true,
        });
    }
    let unit = dist.scale_to_mean(1.0)?;
    let tracer = Tracer { dist: &unit, opts };

    let ratio = (opts.u_max / opts.u_min).powf(1.0 / (opts.points - 1) as f64);
    let grid: Vec<f64> = (0..opts.points)
        .map(|i| {
            if i + 1 == opts.points {
                opts.u_max
            } else {
                opts.u_min * ratio.powi(i as i32)
            }
        })
        .collect();

    let mut branches = Vec::new();
    let mut current: Vec<BoundaryPoint> = Vec::new();
    let mut previous_u: Option<f64> = None;
    let mut any_valid = false;
    for &u in &grid {
        match tracer.point(u) {
            Some(p) => {
                any_valid = true;
                if current.is_empty() {
                    if let Some(prev) = previous_u {
                        // entering the window: locate the edge first
                        let edge = tracer.edge(u, prev);
                        current.push(edge);
                        tracer.refine(edge, p, 0, &mut current);
                    }
                    current.push(p);
                } else {
                    let last = *current.last().expect("nonempty branch");
                    tracer.refine(last, p, 0, &mut current);
                    current.push(p);
                }
            }
            None => {
                if let Some(&last) = current.last() {
                    let edge = tracer.edge(last.u, u);
                    tracer.refine(last, edge, 0, &mut current);
                    current.push(edge);
                    branches.push(finish(std::mem::take(&mut current)));
                }
            }
        }
        previous_u = Some(u);
    }
    if !current.is_empty() {
        branches.push(finish(current));
    }
    if !any_valid
        && grid
            .iter()
            .all(|&u| unit.trig_moments(u).s_value.abs() <= opts.pole_tol)
    {
        return Ok(BoundaryTrace {
            branches: Vec::new(),
            degenerate: true,
        });
    }
    branches.push(BoundaryBranch {
        kind: BranchKind::ZeroRootLine,
        points: vec![
            BoundaryPoint {
                u: 0.0,
                a: -1.0,
                e: 0.0,
            },
            BoundaryPoint {
                u: 0.0,
                a: -1.0,
                e: opts.e_max,
            },
        ],
    });
    Ok(BoundaryTrace {
        branches,
        degenerate: false,
    })
}

fn finish(mut points: Vec<BoundaryPoint>) -> BoundaryBranch {
    points.dedup_by(|x, y| x.u == y.u);
    BoundaryBranch {
        kind: BranchKind::HopfCurve,
        points,
    }
}

struct Tracer<'a> {
    dist: &'a DelayDistribution,
    opts: &'a TraceOptions,
}

impl Tracer<'_> {
    fn point(&self, u: f64) -> Option<BoundaryPoint> {
        let m = self.dist.trig_moments(u);
        if !(m.s_value > self.opts.pole_tol) {
            return None;
        }
        let e = u / m.s_value;
        let a = -m.c_value;
        if !(e > 0.0 && e <= self.opts.e_max && a.abs() <= 1.0) {
            return None;
        }
        Some(BoundaryPoint { u, a, e })
    }

    /// Last in-window point between a valid and an invalid parameter.
    fn edge(&self, valid: f64, invalid: f64) -> BoundaryPoint {
        let (mut inside, mut outside) = (valid, invalid);
        let mut best = self.point(valid).expect("valid end of the bracket");
        for _ in 0..200 {
            if (outside - inside).abs() <= 1e-14 * inside.abs().max(outside.abs()) {
                break;
            }
            let mid = 0.5 * (inside + outside);
            match self.point(mid) {
                Some(p) => {
                    inside = mid;
                    best = p;
                }
                None => outside = mid,
            }
        }
        best
    }

    /// Inserts points between `p` and `q` (exclusive) where `a` jumps.
    fn refine(&self, p: BoundaryPoint, q: BoundaryPoint, depth: u32, out: &mut Vec<BoundaryPoint>) {
        let smooth =
            (q.a - p.a).abs() <= self.opts.max_da && (q.e / p.e).ln().abs() <= self.opts.max_dlog_e;
        if depth >= self.opts.max_refine_depth || smooth {
            return;
        }
        let mid = 0.5 * (p.u + q.u);
        match self.point(mid) {
            Some(m) => {
                self.refine(p, m, depth + 1, out);
                out.push(m);
                self.refine(m, q, depth + 1, out);
            }
            None => {
                // the window is left and re-entered between grid points
                log::debug!("boundary leaves the window between u = {} and {}", p.u, q.u);
            }
        }
    }
}

/// Vertical asymptote `a = 2p - 1` of the boundary of
/// `(1 - p) δ(0) + p δ(τ - r)`.
pub fn asymptote_two_delay(p: f64) -> Result<f64, BoundaryError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(BoundaryError::InvalidArgument(format!(
            "weight must lie in (0, 1], got {p}"
        )));
    }
    Ok(2.0 * p - 1.0)
}

/// `n` equally spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// One cell of a stability chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartCell {
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub outcome: Result<(RootStatus, usize), String>,
}

impl ChartCell {
    pub fn status(&self) -> Option<RootStatus> {
        self.outcome.as_ref().ok().map(|o| o.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartGrid {
    pub a_axis: Vec<f64>,
    pub e_axis: Vec<f64>,
    /// Row-major: `cells[i * e_axis.len() + j]` is `(a_axis[i], e_axis[j])`.
    pub cells: Vec<ChartCell>,
}

impl ChartGrid {
    pub fn cell(&self, i: usize, j: usize) -> &ChartCell {
        &self.cells[i * self.e_axis.len() + j]
    }
}

fn check_monotone(axis: &[f64], name: &str) -> Result<(), BoundaryError> {
    if axis.iter().any(|x| !x.is_finite()) || axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BoundaryError::InvalidArgument(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Exact stability verdict on every `(a, E)` cell of the grid.
pub fn chart(
    dist: &DelayDistribution,
    a_grid: &[f64],
    e_grid: &[f64],
) -> Result<ChartGrid, BoundaryError> {
    chart_with(dist, a_grid, e_grid, &RootOptions::default())
}

pub fn chart_with(
    dist: &DelayDistribution,
    a_grid: &[f64],
    e_grid: &[f64],
    opts: &RootOptions,
) -> Result<ChartGrid, BoundaryError> {
    check_monotone(a_grid, "a")?;
    check_monotone(e_grid, "E")?;
    if e_grid.first().is_some_and(|&e| e < 0.0) {
        return Err(BoundaryError::InvalidArgument(
            "E grid must be nonnegative".into(),
        ));
    }
    if dist.mean() <= 0.0 {
        return Err(BoundaryError::InvalidArgument(
            "kernel must have positive mean to be rescaled".into(),
        ));
    }
    let pairs: Vec<(f64, f64)> = a_grid
        .iter()
        .flat_map(|&a| e_grid.iter().map(move |&e| (a, e)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(a, e)| {
            let outcome = dist
                .scale_to_mean(e)
                .map_err(|err| err.to_string())
                .and_then(|scaled| {
                    charfun::root_status(a, &scaled, opts)
                        .map(|s| (s.status, s.unstable_count))
                        .map_err(|err| err.to_string())
                });
            if let Err(msg) = &outcome {
                log::warn!("chart cell a = {a}, E = {e} failed: {msg}");
            }
            ChartCell { a, e, outcome }
        })
        .collect();
    Ok(ChartGrid {
        a_axis: a_grid.to_vec(),
        e_axis: e_grid.to_vec(),
        cells,
    })
}

/// Output flavour for tabular files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// Comma separated with a plain header line.
    Csv,
    /// Space separated with a `#` header, readable by gnuplot.
    Dat,
}

fn write_row<W: Write>(out: &mut W, format: TableFormat, fields: &[String]) -> io::Result<()> {
    let sep = match format {
        TableFormat::Csv => ",",
        TableFormat::Dat => " ",
    };
    writeln!(out, "{}", fields.join(sep))
}

fn header<W: Write>(out: &mut W, format: TableFormat, names: &[&str]) -> io::Result<()> {
    match format {
        TableFormat::Csv => writeln!(out, "{}", names.join(",")),
        TableFormat::Dat => writeln!(out, "# {}", names.join(" ")),
    }
}

/// Writes `u,a,E,branch_id,kind`.
pub fn write_boundary<W: Write>(
    trace: &BoundaryTrace,
    out: &mut W,
    format: TableFormat,
) -> io::Result<()> {
    header(out, format, &["u", "a", "E", "branch_id", "kind"])?;
    for (id, branch) in trace.branches.iter().enumerate() {
        for p in &branch.points {
            write_row(
                out,
                format,
                &[
                    p.u.to_string(),
                    p.a.to_string(),
                    p.e.to_string(),
                    id.to_string(),
                    branch.kind.as_str().to_string(),
                ],
            )?;
        }
        if format == TableFormat::Dat {
            // blank line separates gnuplot data blocks
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Writes `a,E,status,unstable_count`; failed cells carry status `error`.
pub fn write_chart<W: Write>(grid: &ChartGrid, out: &mut W, format: TableFormat) -> io::Result<()> {
    header(out, format, &["a", "E", "status", "unstable_count"])?;
    for cell in &grid.cells {
        let (status, count) = match &cell.outcome {
            Ok((s, n)) => (status_name(*s), n.to_string()),
            Err(_) => ("error", "NA".to_string()),
        };
        write_row(
            out,
            format,
            &[
                cell.a.to_string(),
                cell.e.to_string(),
                status.to_string(),
                count,
            ],
        )?;
    }
    Ok(())
}

fn status_name(s: RootStatus) -> &'static str {
    match s {
        RootStatus::Stable => "stable",
        RootStatus::Unstable => "unstable",
        RootStatus::Marginal => "marginal",
    }
}
