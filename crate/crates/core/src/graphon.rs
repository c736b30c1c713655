//! Graphons, step graphons, grid discretization and L^p norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::{compensated_sum, gl64, KahanSum};

/// Serialized form of a graphon, e.g. `{"kind": "power_law", "a": 0.2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphonDescriptor {
    Constant {
        c: f64,
    },
    PowerLaw {
        a: f64,
    },
    UniformAttachment,
    /// `g(x, y) = x y`
    Product,
    Step {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        partition: Option<Vec<f64>>,
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
    },
    User {
        expr: String,
    },
}

/// A symmetric nonnegative kernel on the unit square.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GraphonDescriptor", into = "GraphonDescriptor")]
pub enum Graphon {
    Constant(f64),
    PowerLaw(f64),
    UniformAttachment,
    Product,
    Step(StepGraphon),
    User { source: String, expr: Expr },
}

impl TryFrom<GraphonDescriptor> for Graphon {
    type Error = Error;

    fn try_from(d: GraphonDescriptor) -> Result<Self> {
        match d {
            GraphonDescriptor::Constant { c } => Graphon::constant(c),
            GraphonDescriptor::PowerLaw { a } => Graphon::power_law(a),
            GraphonDescriptor::UniformAttachment => Ok(Graphon::UniformAttachment),
            GraphonDescriptor::Product => Ok(Graphon::Product),
            GraphonDescriptor::Step { partition, w } => {
                let step = match partition {
                    Some(p) => StepGraphon::new(p, w)?,
                    None => StepGraphon::equal(w)?,
                };
                Ok(Graphon::Step(step))
            }
            GraphonDescriptor::User { expr } => Graphon::user(&expr),
        }
    }
}

impl From<Graphon> for GraphonDescriptor {
    fn from(g: Graphon) -> Self {
        match g {
            Graphon::Constant(c) => GraphonDescriptor::Constant { c },
            Graphon::PowerLaw(a) => GraphonDescriptor::PowerLaw { a },
            Graphon::UniformAttachment => GraphonDescriptor::UniformAttachment,
            Graphon::Product => GraphonDescriptor::Product,
            Graphon::Step(s) => GraphonDescriptor::Step {
                partition: Some(s.lengths()),
                w: s.rows(),
            },
            Graphon::User { source, .. } => GraphonDescriptor::User { expr: source },
        }
    }
}

impl Graphon {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constant graphon needs a finite c >= 0, got {c}"
            )));
        }
        Ok(Graphon::Constant(c))
    }

    pub fn power_law(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent must lie in (0, 1), got {a}"
            )));
        }
        Ok(Graphon::PowerLaw(a))
    }

    /// Parses and validates a user kernel. Symmetry and nonnegativity are
    /// checked on a 17x17 probe grid.
    pub fn user(source: &str) -> Result<Self> {
        let expr = Expr::parse(source)?;
        let probes: Vec<f64> = (0..17).map(|k| k as f64 / 16.0).collect();
        for &x in &probes {
            for &y in &probes {
                let a = expr.eval(x, y);
                let b = expr.eval(y, x);
                if a.is_nan() || a < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "kernel {source:?} is negative or undefined at ({x}, {y})"
                    )));
                }
                let scale = a.abs().max(b.abs()).max(1.0);
                if a.is_finite() && (a - b).abs() > 1e-12 * scale || a.is_finite() != b.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "kernel {source:?} is not symmetric at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(Graphon::User {
            source: source.to_string(),
            expr,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Kernel value. The power law returns `+inf` on the axes; callers clamp.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Graphon::Constant(c) => *c,
            Graphon::PowerLaw(a) => (x * y).powf(-a),
            Graphon::UniformAttachment => 1.0 - x.max(y),
            Graphon::Product => x * y,
            Graphon::Step(s) => s.eval(x, y),
            Graphon::User { expr, .. } => expr.eval(x, y),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        match self {
            Graphon::PowerLaw(_) => true,
            Graphon::User { expr, .. } => [(0.0, 0.0), (0.0, 0.5), (1.0, 1.0), (0.0, 1.0)]
                .iter()
                .any(|&(x, y)| !expr.eval(x, y).is_finite()),
            _ => false,
        }
    }

    /// Whether the kernel is known to be Lipschitz on the unit square.
    pub fn is_lipschitz(&self) -> bool {
        match self {
            Graphon::Constant(_) | Graphon::UniformAttachment | Graphon::Product => true,
            Graphon::Step(s) => s.values.iter().all(|&v| v == s.values[0]),
            Graphon::PowerLaw(_) | Graphon::User { .. } => false,
        }
    }

    /// Supremum of the kernel, `inf` when unbounded. User kernels are probed.
    pub fn sup(&self) -> f64 {
        match self {
            Graphon::Constant(c) => *c,
            Graphon::PowerLaw(_) => f64::INFINITY,
            Graphon::UniformAttachment | Graphon::Product => 1.0,
            Graphon::Step(s) => s.max_value(),
            Graphon::User { expr, .. } => {
                let probes: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
                probes
                    .iter()
                    .flat_map(|&x| probes.iter().map(move |&y| (x, y)))
                    .map(|(x, y)| expr.eval(x, y))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Closed-form L^p norm where one is known.
    pub fn analytic_norm(&self, p: f64) -> Option<Result<f64>> {
        match self {
            Graphon::Constant(c) => Some(Ok(*c)),
            Graphon::PowerLaw(a) => {
                if a * p >= 1.0 {
                    Some(Err(Error::DivergentNorm { p }))
                } else {
                    // (int_0^1 x^{-ap} dx)^2 = (1 / (1 - ap))^2
                    Some(Ok((1.0 / (1.0 - a * p)).powf(2.0 / p)))
                }
            }
            // 2 int_0^1 y (1 - y)^p dy = 2 / ((p + 1)(p + 2))
            Graphon::UniformAttachment => Some(Ok((2.0 / ((p + 1.0) * (p + 2.0))).powf(1.0 / p))),
            Graphon::Product => Some(Ok((1.0 / (p + 1.0)).powf(2.0 / p))),
            Graphon::Step(s) => Some(Ok(s.lp_norm(p))),
            Graphon::User { .. } => None,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Graphon::Step(s) => s.breaks.clone(),
            _ => vec![0.0, 1.0],
        }
    }
}

/// Piecewise-constant graphon on a partition of [0, 1] into K intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGraphon {
    /// K + 1 increasing boundaries, `breaks[0] = 0`, `breaks[K] = 1`.
    breaks: Vec<f64>,
    /// K x K block values, row-major.
    values: Vec<f64>,
    k: usize,
}

impl StepGraphon {
    /// Step graphon with the given interval lengths and block values.
    pub fn new(lengths: Vec<f64>, w: Vec<Vec<f64>>) -> Result<Self> {
        let k = lengths.len();
        if k == 0 {
            return Err(Error::InvalidParameter("step graphon needs at least one block".into()));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("partition lengths must be positive".into()));
        }
        let total = compensated_sum(lengths.iter().copied());
        if (total - 1.0).abs() > f64::EPSILON {
            return Err(Error::InvalidParameter(format!(
                "partition lengths sum to {total}, not 1"
            )));
        }
        let mut breaks = Vec::with_capacity(k + 1);
        let mut acc = KahanSum::default();
        breaks.push(0.0);
        for &l in &lengths[..k - 1] {
            acc.add(l);
            breaks.push(acc.value());
        }
        breaks.push(1.0);
        Self::from_breaks(breaks, w)
    }

    /// Equal-length partition, block `i` = `[i/K, (i+1)/K)`.
    pub fn equal(w: Vec<Vec<f64>>) -> Result<Self> {
        let k = w.len();
        if k == 0 {
            return Err(Error::InvalidParameter("step graphon needs at least one block".into()));
        }
        Self::from_breaks(GridSpec::new(k)?.breaks(), w)
    }

    pub(crate) fn from_breaks(breaks: Vec<f64>, w: Vec<Vec<f64>>) -> Result<Self> {
        let k = breaks.len() - 1;
        if w.len() != k || w.iter().any(|row| row.len() != k) {
            return Err(Error::ShapeMismatch(format!("W must be {k}x{k}")));
        }
        if breaks.windows(2).any(|b| !(b[1] > b[0])) {
            return Err(Error::InvalidParameter("partition boundaries must increase".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let v = w[i][j];
                if !(v >= 0.0) || v.is_infinite() {
                    return Err(Error::InvalidParameter(format!(
                        "block value W[{i}][{j}] = {v} must be finite and nonnegative"
                    )));
                }
                if w[i][j] != w[j][i] {
                    return Err(Error::NonSymmetric { i, j });
                }
            }
        }
        Ok(Self {
            breaks,
            values: w.into_iter().flatten().collect(),
            k,
        })
    }

    pub fn blocks(&self) -> usize {
        self.k
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.breaks.windows(2).map(|b| b[1] - b[0]).collect()
    }

    pub fn length(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the block containing `x`; the last block is closed at 1.
    pub fn block_of(&self, x: f64) -> usize {
        let idx = self.breaks.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(self.k - 1)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.value(self.block_of(x), self.block_of(y))
    }

    /// Adds a constant to every block value.
    pub fn shifted(&self, eps: f64) -> Result<Self> {
        let w = self
            .rows()
            .into_iter()
            .map(|r| r.into_iter().map(|v| v + eps).collect())
            .collect();
        Self::from_breaks(self.breaks.clone(), w)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let mut acc = KahanSum::default();
        for i in 0..self.k {
            for j in 0..self.k {
                acc.add(self.length(i) * self.length(j) * self.value(i, j).abs().powf(p));
            }
        }
        acc.value().powf(1.0 / p)
    }

    /// Exact L^p distance on the common refinement of both partitions.
    pub fn lp_distance(&self, other: &StepGraphon, p: f64) -> f64 {
        let mut cuts: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mids: Vec<(f64, f64)> = cuts
            .windows(2)
            .map(|c| (0.5 * (c[0] + c[1]), c[1] - c[0]))
            .collect();
        let blocks: Vec<(usize, usize, f64)> = mids
            .iter()
            .map(|&(m, len)| (self.block_of(m), other.block_of(m), len))
            .collect();
        let mut acc = KahanSum::default();
        for &(ai, bi, li) in &blocks {
            for &(aj, bj, lj) in &blocks {
                acc.add(li * lj * (self.value(ai, aj) - other.value(bi, bj)).abs().powf(p));
            }
        }
        acc.value().powf(1.0 / p)
    }
}

impl From<StepGraphon> for Graphon {
    fn from(s: StepGraphon) -> Self {
        Graphon::Step(s)
    }
}

/// The regular grid `x_i = (i - 1) / N`, stored 0-based as `i / N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs N >= 1".into()));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (i as f64 + 0.5) / self.n as f64)
            .collect()
    }

    /// `N + 1` boundaries `0, 1/N, ..., 1`.
    pub fn breaks(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the largest grid point not exceeding `x`.
    pub fn cell(&self, x: f64) -> usize {
        let guess = ((x * self.n as f64).floor().max(0.0) as usize).min(self.n - 1);
        let mut i = guess;
        while i > 0 && self.point(i) > x {
            i -= 1;
        }
        while i + 1 < self.n && self.point(i + 1) <= x {
            i += 1;
        }
        i
    }

    /// `f_N(x)`: the largest grid point `x_i <= x`, with `x_N` on `[x_N, 1]`.
    pub fn project(&self, x: f64) -> f64 {
        self.point(self.cell(x))
    }
}

pub fn grid_project(x: f64, grid: &GridSpec) -> f64 {
    grid.project(x)
}

/// How to discretize a kernel that is infinite at some grid pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SingularPolicy {
    Reject,
    /// Evaluate at cell midpoints `(i - 1/2) / N` instead of left points.
    MidpointShift,
    /// Evaluate at the grid, capping values at `cap`.
    Clamp { cap: f64 },
}

impl SingularPolicy {
    pub fn default_for(g: &Graphon) -> Self {
        if g.is_unbounded() {
            SingularPolicy::MidpointShift
        } else {
            SingularPolicy::Reject
        }
    }
}

/// `g_N(x, y) = g(x_i, x_j)` on the regular grid.
pub fn discretize(g: &Graphon, grid: &GridSpec, policy: SingularPolicy) -> Result<StepGraphon> {
    let eval_points = match policy {
        SingularPolicy::MidpointShift => grid.midpoints(),
        _ => grid.points(),
    };
    discretize_on(g, grid.breaks(), &eval_points, policy)
}

/// Step graphon over the partition `[p_1, p_2), ..., [p_N, 1]` given by
/// increasing left endpoints starting at 0, with block values `g(p_i, p_j)`.
pub fn discretize_at(g: &Graphon, left_points: &[f64], policy: SingularPolicy) -> Result<StepGraphon> {
    if left_points.first() != Some(&0.0) {
        return Err(Error::InvalidParameter("left endpoints must start at 0".into()));
    }
    let mut breaks = left_points.to_vec();
    breaks.push(1.0);
    let eval_points: Vec<f64> = match policy {
        SingularPolicy::MidpointShift => breaks.windows(2).map(|b| 0.5 * (b[0] + b[1])).collect(),
        _ => left_points.to_vec(),
    };
    discretize_on(g, breaks, &eval_points, policy)
}

fn discretize_on(
    g: &Graphon,
    breaks: Vec<f64>,
    eval_points: &[f64],
    policy: SingularPolicy,
) -> Result<StepGraphon> {
    let k = eval_points.len();
    let mut w = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let mut v = g.eval(eval_points[i], eval_points[j]);
            if let SingularPolicy::Clamp { cap } = policy {
                v = v.min(cap);
            }
            if !v.is_finite() {
                return Err(Error::SingularGrid {
                    x: eval_points[i],
                    y: eval_points[j],
                });
            }
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    StepGraphon::from_breaks(breaks, w)
}

/// Quadrature controls for norms and distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Use closed forms when available.
    pub analytic: bool,
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            analytic: true,
            rel_tol: 1e-8,
            max_refinements: 5,
        }
    }
}

impl Quadrature {
    pub fn numeric() -> Self {
        Self {
            analytic: false,
            ..Self::default()
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    Ok(())
}

/// `(int int |g|^p)^{1/p}`.
pub fn lp_norm(g: &Graphon, p: f64, quad: &Quadrature) -> Result<f64> {
    check_p(p)?;
    if let Graphon::PowerLaw(a) = g {
        if a * p >= 1.0 {
            return Err(Error::DivergentNorm { p });
        }
    }
    if quad.analytic {
        if let Some(v) = g.analytic_norm(p) {
            return v;
        }
    }
    let integral = integrate_symmetric(
        &|x, y| g.eval(x, y).abs().powf(p),
        &g.breakpoints(),
        g.is_unbounded(),
        quad,
    );
    finite_norm(integral, p)
}

/// `||g - h||_p`; exact on the common refinement when both are step graphons.
pub fn lp_distance(g: &Graphon, h: &Graphon, p: f64, quad: &Quadrature) -> Result<f64> {
    check_p(p)?;
    if let (Graphon::Step(a), Graphon::Step(b)) = (g, h) {
        return Ok(a.lp_distance(b, p));
    }
    // one finite and one divergent norm means the difference diverges too
    let finite = |x: &Graphon| match x.analytic_norm(p) {
        Some(Err(_)) => Some(false),
        Some(Ok(_)) => Some(true),
        None => None,
    };
    if let (Some(a), Some(b)) = (finite(g), finite(h)) {
        if a != b {
            return Err(Error::DivergentNorm { p });
        }
    }
    let mut breaks = g.breakpoints();
    breaks.extend(h.breakpoints());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integral = integrate_symmetric(
        &|x, y| (g.eval(x, y) - h.eval(x, y)).abs().powf(p),
        &breaks,
        g.is_unbounded() || h.is_unbounded(),
        quad,
    );
    finite_norm(integral, p)
}

fn finite_norm(integral: f64, p: f64) -> Result<f64> {
    if integral.is_finite() {
        Ok(integral.powf(1.0 / p))
    } else {
        Err(Error::DivergentNorm { p })
    }
}

/// Integrates a symmetric function over the unit square.
///
/// Cells of the tensor grid built from `breaks` (each interval split into
/// `2^r` pieces) use a 64x64 Gauss-Legendre rule; cells on the diagonal are
/// split into two triangles so kernels with a kink along `x = y` stay smooth
/// on each piece. With `singular_at_zero` the first interval is refined
/// dyadically towards 0. Refinement doubles until the relative change drops
/// below `rel_tol`.
fn integrate_symmetric(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    breaks: &[f64],
    singular_at_zero: bool,
    quad: &Quadrature,
) -> f64 {
    let mut prev: Option<f64> = None;
    let mut last = f64::NAN;
    for r in 0..=quad.max_refinements {
        let cuts = refine(breaks, r, singular_at_zero);
        let v = integrate_on_cuts(f, &cuts);
        if let Some(p) = prev {
            if (v - p).abs() <= quad.rel_tol * v.abs().max(f64::MIN_POSITIVE) {
                return v;
            }
        }
        prev = Some(v);
        last = v;
    }
    last
}

fn refine(breaks: &[f64], r: usize, singular_at_zero: bool) -> Vec<f64> {
    let pieces = 1usize << r;
    let mut cuts = Vec::with_capacity(breaks.len() * pieces + 64);
    for (idx, b) in breaks.windows(2).enumerate() {
        let (lo, hi) = (b[0], b[1]);
        for s in 0..pieces {
            let left = lo + (hi - lo) * s as f64 / pieces as f64;
            if idx == 0 && s == 0 && singular_at_zero {
                let right = lo + (hi - lo) / pieces as f64;
                let levels = 12 + 12 * r;
                cuts.push(0.0);
                for k in (1..=levels).rev() {
                    cuts.push(right * 0.5f64.powi(k as i32));
                }
            } else {
                cuts.push(left);
            }
        }
    }
    cuts.push(*breaks.last().unwrap());
    cuts
}

fn integrate_on_cuts(f: &(dyn Fn(f64, f64) -> f64 + Sync), cuts: &[f64]) -> f64 {
    let (nodes, weights) = gl64();
    let intervals: Vec<(f64, f64)> = cuts.windows(2).map(|c| (c[0], c[1])).collect();
    let m = intervals.len();
    // Mapped nodes per interval.
    let mapped: Vec<Vec<(f64, f64)>> = intervals
        .iter()
        .map(|&(a, b)| {
            let half = 0.5 * (b - a);
            nodes
                .iter()
                .zip(weights)
                .map(|(t, w)| (a + half * (t + 1.0), half * w))
                .collect()
        })
        .collect();
    let row_sums: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::default();
            // off-diagonal cells j > i, counted twice by symmetry
            for j in (i + 1)..m {
                let mut cell = KahanSum::default();
                for &(x, wx) in &mapped[i] {
                    for &(y, wy) in &mapped[j] {
                        cell.add(wx * wy * f(x, y));
                    }
                }
                acc.add(2.0 * cell.value());
            }
            // diagonal cell: two mirror triangles, y = x + (b - x) s
            let (_, b) = intervals[i];
            let mut tri = KahanSum::default();
            for &(x, wx) in &mapped[i] {
                let span = b - x;
                for (t, ws) in nodes.iter().zip(weights) {
                    let s = 0.5 * (t + 1.0);
                    let y = x + span * s;
                    tri.add(wx * 0.5 * ws * span * f(x, y));
                }
            }
            acc.add(2.0 * tri.value());
            acc.value()
        })
        .collect();
    compensated_sum(row_sums)
}

/// Step graphon of a simple graph: block `(i, j)` is 1 iff `i ~ j`.
pub fn graph_to_graphon(adj: &[Vec<u8>]) -> Result<StepGraphon> {
    let n = adj.len();
    for (i, row) in adj.iter().enumerate() {
        if row.len() != n {
            return Err(Error::ShapeMismatch("adjacency matrix must be square".into()));
        }
        if row[i] != 0 {
            return Err(Error::NonZeroDiagonal(i));
        }
        for (j, &v) in row.iter().enumerate() {
            if v > 1 {
                return Err(Error::InvalidParameter(format!("entry ({i}, {j}) is not 0/1")));
            }
            if v != adj[j][i] {
                return Err(Error::NonSymmetric { i, j });
            }
        }
    }
    let w = adj
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    StepGraphon::equal(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Graphon::constant(1.0).unwrap().eval(0.3, 0.7), 1.0);
        assert_eq!(Graphon::power_law(0.25).unwrap().eval(0.25, 0.25), 2.0);
        assert!(close(Graphon::UniformAttachment.eval(0.2, 0.6), 0.4, 1e-15));
        assert_eq!(Graphon::power_law(0.25).unwrap().eval(0.0, 0.5), f64::INFINITY);
    }

    #[test]
    fn invalid_parameters_rejected_at_construction() {
        assert!(Graphon::power_law(0.0).is_err());
        assert!(Graphon::power_law(-0.1).is_err());
        assert!(Graphon::constant(-1.0).is_err());
        assert!(Graphon::user("x - y").is_err());
        assert!(Graphon::user("x * (1 - y)").is_err());
        assert!(Graphon::user("x * y").is_ok());
    }

    #[test]
    fn grid_projection_examples() {
        let g4 = GridSpec::new(4).unwrap();
        assert_eq!(g4.project(0.3), 0.25);
        assert_eq!(g4.project(0.99), 0.75);
        assert_eq!(g4.project(1.0), 0.75);
        assert_eq!(GridSpec::new(10).unwrap().project(0.0), 0.0);
        let g10 = GridSpec::new(10).unwrap();
        assert_eq!(g10.project(0.3), 0.3);
        assert_eq!(g10.project(0.7), 0.7);
    }

    #[test]
    fn discretize_examples() {
        let grid = GridSpec::new(5).unwrap();
        let s = discretize(&Graphon::Constant(0.7), &grid, SingularPolicy::Reject).unwrap();
        assert!(s.rows().iter().flatten().all(|&v| v == 0.7));

        let s = discretize(&Graphon::UniformAttachment, &GridSpec::new(2).unwrap(), SingularPolicy::Reject)
            .unwrap();
        assert_eq!(s.rows(), vec![vec![1.0, 0.5], vec![0.5, 0.5]]);

        let pl = Graphon::power_law(0.25).unwrap();
        let grid = GridSpec::new(4).unwrap();
        assert!(matches!(
            discretize(&pl, &grid, SingularPolicy::Reject),
            Err(Error::SingularGrid { .. })
        ));
        let s = discretize(&pl, &grid, SingularPolicy::MidpointShift).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mi = (i as f64 + 0.5) / 4.0;
                let mj = (j as f64 + 0.5) / 4.0;
                let direct = (mi * mj).powf(-0.25);
                assert!(close(s.value(i, j), direct, 1e-14));
                assert_eq!(s.value(i, j), pl.eval(mi, mj));
            }
        }
        let s = discretize(&pl, &grid, SingularPolicy::Clamp { cap: 10.0 }).unwrap();
        assert_eq!(s.value(0, 0), 10.0);
    }

    #[test]
    fn norm_examples() {
        let q = Quadrature::default();
        assert_eq!(lp_norm(&Graphon::Constant(2.5), 2.0, &q).unwrap(), 2.5);
        assert!(close(lp_norm(&Graphon::UniformAttachment, 1.0, &q).unwrap(), 1.0 / 3.0, 1e-15));
        for a in [0.1, 0.2, 0.3] {
            let v = lp_norm(&Graphon::power_law(a).unwrap(), 2.0, &q).unwrap();
            assert!(close(v, 1.0 / (1.0 - 2.0 * a), 1e-14));
        }
        assert!(matches!(
            lp_norm(&Graphon::power_law(0.25).unwrap(), 4.0, &q),
            Err(Error::DivergentNorm { .. })
        ));
        assert!(lp_norm(&Graphon::power_law(0.2).unwrap(), 4.0, &q).is_ok());
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let q = Quadrature::numeric();
        let cases: Vec<(Graphon, f64, f64)> = vec![
            (Graphon::Constant(0.8), 1.0, 0.8),
            (Graphon::Constant(0.8), 2.0, 0.8),
            (Graphon::UniformAttachment, 1.0, 1.0 / 3.0),
            (Graphon::UniformAttachment, 2.0, (1.0f64 / 6.0).sqrt()),
            (Graphon::Product, 2.0, 1.0 / 3.0),
            (Graphon::power_law(0.2).unwrap(), 2.0, 1.0 / 0.6),
        ];
        for (g, p, exact) in cases {
            let v = lp_norm(&g, p, &q).unwrap();
            assert!(close(v, exact, 1e-6), "{g:?} p={p}: {v} vs {exact}");
        }
        let user = Graphon::user("1 - max(x, y)").unwrap();
        let v = lp_norm(&user, 1.0, &q).unwrap();
        assert!(close(v, 1.0 / 3.0, 1e-10));
    }

    #[test]
    fn distance_examples() {
        let q = Quadrature::default();
        let ua = Graphon::UniformAttachment;
        assert_eq!(lp_distance(&ua, &ua, 2.0, &q).unwrap(), 0.0);
        let d = lp_distance(&Graphon::Constant(1.0), &Graphon::Constant(0.0), 2.0, &q).unwrap();
        assert!(close(d, 1.0, 1e-12));
        let s = discretize(&ua, &GridSpec::new(64).unwrap(), SingularPolicy::Reject).unwrap();
        let d = lp_distance(&ua, &Graphon::Step(s), 2.0, &q).unwrap();
        assert!(d > 0.0 && d <= 0.25, "{d}");
    }

    #[test]
    fn step_distance_uses_common_refinement() {
        let a = StepGraphon::equal(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = StepGraphon::equal(vec![vec![1.0; 3]; 3]).unwrap();
        // a and b differ exactly on the off-diagonal blocks of a: mass 1/2
        assert!(close(a.lp_distance(&b, 1.0), 0.5, 1e-15));
        assert!(close(a.lp_distance(&b, 2.0), 0.5f64.sqrt(), 1e-15));
        let c = StepGraphon::new(vec![0.25, 0.75], vec![vec![2.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let v = Graphon::Step(c.clone());
        // against the quadrature route
        let quad = lp_distance(&v, &Graphon::Constant(0.5), 2.0, &Quadrature::default()).unwrap();
        let exact = c.lp_distance(&StepGraphon::equal(vec![vec![0.5]]).unwrap(), 2.0);
        assert!(close(quad, exact, 1e-10));
    }

    #[test]
    fn step_validation() {
        assert!(StepGraphon::new(vec![0.5, 0.4], vec![vec![1.0; 2]; 2]).is_err());
        assert!(StepGraphon::new(vec![0.1; 10], vec![vec![1.0; 10]; 10]).is_ok());
        assert!(matches!(
            StepGraphon::equal(vec![vec![1.0, 2.0], vec![0.0, 1.0]]),
            Err(Error::NonSymmetric { .. })
        ));
        assert!(StepGraphon::equal(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn graph_embedding() {
        let k3 = vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]];
        let s = graph_to_graphon(&k3).unwrap();
        assert_eq!(s.blocks(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.value(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        assert!(close(s.lp_norm(1.0), 2.0 / 3.0, 1e-15));
        let empty = graph_to_graphon(&vec![vec![0; 4]; 4]).unwrap();
        assert_eq!(empty.lp_norm(2.0), 0.0);
        assert!(matches!(
            graph_to_graphon(&[vec![0, 1], vec![0, 0]]),
            Err(Error::NonSymmetric { .. })
        ));
        assert!(matches!(graph_to_graphon(&[vec![1]]), Err(Error::NonZeroDiagonal(0))));
    }

    #[test]
    fn json_descriptors() {
        let g = Graphon::from_json(r#"{"kind": "power_law", "a": 0.2}"#).unwrap();
        assert!(matches!(g, Graphon::PowerLaw(a) if a == 0.2));
        let g = Graphon::from_json(r#"{"kind": "step", "partition": [0.5, 0.5], "W": [[1, 0], [0, 1]]}"#)
            .unwrap();
        assert_eq!(g.eval(0.2, 0.7), 0.0);
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"W\""));
        assert!(Graphon::from_json(r#"{"kind": "power_law", "a": -1}"#).is_err());
        let g = Graphon::from_json(r#"{"kind": "user", "expr": "exp(-x-y)"}"#).unwrap();
        assert!(close(g.eval(0.5, 0.5), (-1.0f64).exp(), 1e-15));
    }
}
