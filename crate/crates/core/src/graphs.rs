//! Interaction graphs: W-random sampling, deterministic weighted graphs,
//! random vertex positions and graph statistics.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{GridSpec, Graphon, StepGraphon};
use crate::rng::{Domain, Draws, KeyedRng};

/// Below this size graphs are stored densely.
pub const DENSE_THRESHOLD: usize = 512;

/// Smallest accepted sparsity parameter.
pub const MIN_BETA: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Every ordered pair `i != j` drawn independently.
    DirectedIndependent,
    /// Pairs `i < j` drawn once and mirrored, no loops.
    SymmetricSimple,
    /// `zeta_ij = beta g_N(x_i, x_j)`, diagonal included.
    Deterministic,
}

impl GraphMode {
    fn as_str(&self) -> &'static str {
        match self {
            GraphMode::DirectedIndependent => "directed",
            GraphMode::SymmetricSimple => "symmetric",
            GraphMode::Deterministic => "deterministic",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(GraphMode::DirectedIndependent),
            "symmetric" => Ok(GraphMode::SymmetricSimple),
            "deterministic" => Ok(GraphMode::Deterministic),
            other => Err(Error::Parse(format!("unknown graph mode {other:?}"))),
        }
    }
}

/// `beta_N` as a function of `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SparsitySchedule {
    Constant { beta: f64 },
    /// `beta_N = N^{-gamma}`
    Power { gamma: f64 },
    /// `beta_N = N^{b - 2a}`
    PowerLawRegime { a: f64, b: f64 },
}

impl SparsitySchedule {
    pub fn beta(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            SparsitySchedule::Constant { beta } => beta,
            SparsitySchedule::Power { gamma } => nf.powf(-gamma),
            SparsitySchedule::PowerLawRegime { a, b } => nf.powf(b - 2.0 * a),
        }
    }

    /// Exponent `e` with `beta_N ~ N^e` (0 for constant schedules).
    fn exponent(&self) -> f64 {
        match *self {
            SparsitySchedule::Constant { .. } => 0.0,
            SparsitySchedule::Power { gamma } => -gamma,
            SparsitySchedule::PowerLawRegime { a, b } => b - 2.0 * a,
        }
    }

    /// `N beta_N -> infinity`.
    pub fn degrees_diverge(&self) -> bool {
        self.exponent() > -1.0
    }

    /// `N beta_N^2 -> infinity`.
    pub fn n_beta_squared_diverges(&self) -> bool {
        self.exponent() > -0.5
    }

    /// Checks `beta_N` in `(0, 1]` for every `N` used.
    pub fn validate(&self, ns: &[usize]) -> Result<()> {
        for &n in ns {
            let b = self.beta(n);
            if !(MIN_BETA..=1.0).contains(&b) {
                return Err(Error::Config(format!(
                    "beta_N = {b} at N = {n} is outside [{MIN_BETA}, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Dense(Vec<f64>),
    Sparse(Csr),
}

/// Nonzero entries of one row, in increasing column order.
pub enum RowIter<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::iter::Zip<std::slice::Iter<'a, u32>, std::slice::Iter<'a, f64>>),
}

impl Iterator for RowIter<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense(it) => it.by_ref().find(|(_, &w)| w != 0.0).map(|(j, &w)| (j, w)),
            RowIter::Sparse(it) => it.next().map(|(&j, &w)| (j as usize, w)),
        }
    }
}

/// Weighted interaction graph `zeta^N` with its sparsity parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    n: usize,
    beta: f64,
    mode: GraphMode,
    weights: Weights,
    points: Vec<f64>,
}

impl InteractionGraph {
    /// Builds a graph from per-row nonzeros (column-sorted).
    pub fn from_rows(
        n: usize,
        beta: f64,
        mode: GraphMode,
        rows: Vec<Vec<(u32, f64)>>,
        points: Vec<f64>,
    ) -> Result<Self> {
        check_beta(beta)?;
        if rows.len() != n || points.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} rows and points, found {} and {}",
                rows.len(),
                points.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                if (j as usize) >= n {
                    return Err(Error::ShapeMismatch(format!("column {j} out of range")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::WeightExceedsOne {
                        i,
                        j: j as usize,
                        weight: w,
                    });
                }
            }
        }
        let weights = if n < DENSE_THRESHOLD {
            let mut dense = vec![0.0; n * n];
            for (i, row) in rows.iter().enumerate() {
                for &(j, w) in row {
                    dense[i * n + j as usize] = w;
                }
            }
            Weights::Dense(dense)
        } else {
            let mut row_ptr = Vec::with_capacity(n + 1);
            row_ptr.push(0);
            let nnz: usize = rows.iter().map(Vec::len).sum();
            let mut cols = Vec::with_capacity(nnz);
            let mut vals = Vec::with_capacity(nnz);
            for row in rows {
                for (j, w) in row {
                    if w != 0.0 {
                        cols.push(j);
                        vals.push(w);
                    }
                }
                row_ptr.push(cols.len());
            }
            Weights::Sparse(Csr { row_ptr, cols, vals })
        };
        Ok(Self {
            n,
            beta,
            mode,
            weights,
            points,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn row(&self, i: usize) -> RowIter<'_> {
        match &self.weights {
            Weights::Dense(d) => RowIter::Dense(d[i * self.n..(i + 1) * self.n].iter().enumerate()),
            Weights::Sparse(c) => {
                let r = c.row_ptr[i]..c.row_ptr[i + 1];
                RowIter::Sparse(c.cols[r.clone()].iter().zip(c.vals[r].iter()))
            }
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            Weights::Dense(d) => d[i * self.n + j],
            Weights::Sparse(c) => {
                let r = c.row_ptr[i]..c.row_ptr[i + 1];
                match c.cols[r.clone()].binary_search(&(j as u32)) {
                    Ok(k) => c.vals[r.start + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        (0..self.n).map(|i| self.row(i).count()).sum()
    }

    /// Text form: header `N beta mode`, then one `i j weight` line per nonzero.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.n, self.beta, self.mode.as_str());
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                let _ = writeln!(out, "{i} {j} {w}");
            }
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    /// Parses the text form; vertex positions are taken from the regular grid.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let n: usize = parts[0].parse().map_err(|_| Error::Parse("bad N".into()))?;
        let beta: f64 = parts[1].parse().map_err(|_| Error::Parse("bad beta".into()))?;
        let mode = GraphMode::parse(parts[2])?;
        let mut rows = vec![Vec::new(); n];
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad triple {line:?}")));
            }
            let i: usize = f[0].parse().map_err(|_| Error::Parse(format!("bad row in {line:?}")))?;
            let j: u32 = f[1].parse().map_err(|_| Error::Parse(format!("bad column in {line:?}")))?;
            let w: f64 = f[2].parse().map_err(|_| Error::Parse(format!("bad weight in {line:?}")))?;
            if i >= n {
                return Err(Error::Parse(format!("row {i} out of range")));
            }
            rows[i].push((j, w));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
        }
        let points = GridSpec::new(n.max(1))?.points().into_iter().take(n).collect();
        Self::from_rows(n, beta, mode, rows, points)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(MIN_BETA..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in [{MIN_BETA}, 1], got {beta}"
        )));
    }
    Ok(())
}

#[inline]
fn edge_probability(g: &Graphon, beta: f64, x: f64, y: f64) -> f64 {
    let p = beta * g.eval(x, y);
    // NaN (0 * inf) counts as no edge; inf clamps to 1
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// W-random graph on the regular grid `x_i = i / N`, `i = 0..N`.
pub fn sample_w_random(
    g: &Graphon,
    n: usize,
    beta: f64,
    mode: GraphMode,
    seed: u64,
) -> Result<InteractionGraph> {
    let points = GridSpec::new(n)?.points();
    sample_w_random_at(g, &points, beta, mode, seed)
}

/// W-random graph at arbitrary vertex positions: `(i, j)` is present with
/// probability `min(beta g(x_i, x_j), 1)`. Each pair draws the uniform at
/// position `j` of stream `i` (upper triangle only in symmetric mode).
pub fn sample_w_random_at(
    g: &Graphon,
    points: &[f64],
    beta: f64,
    mode: GraphMode,
    seed: u64,
) -> Result<InteractionGraph> {
    check_beta(beta)?;
    let n = points.len();
    if mode == GraphMode::Deterministic {
        return Err(Error::InvalidParameter(
            "deterministic graphs are built with deterministic_graph".into(),
        ));
    }
    let keyed = KeyedRng::new(seed, Domain::Graph);
    let symmetric = mode == GraphMode::SymmetricSimple;
    let drawn: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = if symmetric { i + 1 } else { 0 };
            let mut draws = Draws::at(&keyed, i as u64, start as u64);
            let mut row = Vec::new();
            for j in start..n {
                let u = draws.uniform();
                if j == i {
                    continue;
                }
                if u < edge_probability(g, beta, points[i], points[j]) {
                    row.push((j as u32, 1.0));
                }
            }
            row
        })
        .collect();
    let rows = if symmetric {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (i, upper) in drawn.iter().enumerate() {
            for &(j, w) in upper {
                rows[j as usize].push((i as u32, w));
            }
        }
        for (i, upper) in drawn.into_iter().enumerate() {
            rows[i].extend(upper);
        }
        rows
    } else {
        drawn
    };
    InteractionGraph::from_rows(n, beta, mode, rows, points.to_vec())
}

/// `zeta_ij = beta g_N(x_i, x_j)` on the regular grid, diagonal included.
pub fn deterministic_graph(g_n: &StepGraphon, n: usize, beta: f64) -> Result<InteractionGraph> {
    let points = GridSpec::new(n)?.points();
    deterministic_graph_at(g_n, &points, beta)
}

pub fn deterministic_graph_at(g_n: &StepGraphon, points: &[f64], beta: f64) -> Result<InteractionGraph> {
    check_beta(beta)?;
    let n = points.len();
    let blocks: Vec<usize> = points.iter().map(|&x| g_n.block_of(x)).collect();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::new();
        for j in 0..n {
            let w = beta * g_n.value(blocks[i], blocks[j]);
            if w > 1.0 {
                return Err(Error::WeightExceedsOne { i, j, weight: w });
            }
            if w != 0.0 {
                row.push((j as u32, w));
            }
        }
        rows.push(row);
    }
    InteractionGraph::from_rows(n, beta, GraphMode::Deterministic, rows, points.to_vec())
}

/// `N + 1` ordered points: `U_1 = 0`, `U_{N+1} = 1`, and `U_2..U_N` the
/// order statistics of `N - 1` iid uniforms.
pub fn sample_random_points(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("random points need N >= 2".into()));
    }
    let keyed = KeyedRng::new(seed, Domain::Points);
    let mut draws = Draws::new(&keyed, 0);
    let mut inner: Vec<f64> = Vec::with_capacity(n - 1);
    while inner.len() < n - 1 {
        let u = draws.uniform();
        // exclude the endpoints so the output is strictly increasing
        if u > 0.0 {
            inner.push(u);
        }
    }
    inner.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    out.extend(inner);
    out.push(1.0);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub degrees: Vec<f64>,
    pub mean_degree: f64,
    pub edge_density: f64,
    pub norm_1: f64,
    pub norm_2: f64,
    pub norm_4: f64,
}

/// Degrees, density and `||G||_p = (sum |zeta_ij|^p / N^2)^{1/p}`.
pub fn graph_stats(graph: &InteractionGraph) -> GraphStats {
    let n = graph.n();
    let mut degrees = vec![0.0; n];
    let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
    let mut off_diag = 0.0;
    for (i, d) in degrees.iter_mut().enumerate() {
        for (j, w) in graph.row(i) {
            *d += w;
            s1 += w.abs();
            s2 += w * w;
            s4 += w.powi(4);
            if i != j {
                off_diag += w;
            }
        }
    }
    let nn = (n * n) as f64;
    let pairs = (n * n.saturating_sub(1)) as f64;
    GraphStats {
        mean_degree: if n > 0 { degrees.iter().sum::<f64>() / n as f64 } else { 0.0 },
        edge_density: if pairs > 0.0 { off_diag / pairs } else { 0.0 },
        norm_1: if n > 0 { s1 / nn } else { 0.0 },
        norm_2: if n > 0 { (s2 / nn).sqrt() } else { 0.0 },
        norm_4: if n > 0 { (s4 / nn).powf(0.25) } else { 0.0 },
        degrees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{discretize, SingularPolicy};

    fn from_adjacency(adj: &[Vec<u8>]) -> InteractionGraph {
        let n = adj.len();
        let rows = adj
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(j, _)| (j as u32, 1.0))
                    .collect()
            })
            .collect();
        InteractionGraph::from_rows(n, 1.0, GraphMode::SymmetricSimple, rows, GridSpec::new(n).unwrap().points())
            .unwrap()
    }

    #[test]
    fn complete_and_empty() {
        let g = sample_w_random(&Graphon::Constant(1.0), 5, 1.0, GraphMode::SymmetricSimple, 3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g.weight(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        let g = sample_w_random(&Graphon::Constant(0.0), 50, 1.0, GraphMode::DirectedIndependent, 3).unwrap();
        assert_eq!(g.nnz(), 0);
        let s = graph_stats(&g);
        assert_eq!(s.mean_degree, 0.0);
        assert_eq!(s.norm_4, 0.0);
    }

    #[test]
    fn edge_count_within_binomial_interval() {
        let n = 1000;
        let g = sample_w_random(&Graphon::Constant(1.0), n, 0.3, GraphMode::SymmetricSimple, 17).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let edges = g.nnz() as f64 / 2.0;
        let mean = 0.3 * pairs;
        let sd = (pairs * 0.3 * 0.7).sqrt();
        // two-sided 99.9% normal quantile
        assert!((edges - mean).abs() < 3.2905 * sd, "{edges} vs {mean}");
        assert!(matches!(g.weights(), Weights::Sparse(_)));
    }

    #[test]
    fn symmetric_mode_is_simple_and_mirrored() {
        for n in [1, 2, 7, 60, 200] {
            let g = sample_w_random(&Graphon::UniformAttachment, n, 0.7, GraphMode::SymmetricSimple, n as u64)
                .unwrap();
            for i in 0..n {
                assert_eq!(g.weight(i, i), 0.0);
                for j in 0..n {
                    assert_eq!(g.weight(i, j), g.weight(j, i));
                }
            }
        }
        let g = sample_w_random(&Graphon::Constant(1.0), 30, 1.0, GraphMode::DirectedIndependent, 1).unwrap();
        assert_eq!(g.nnz(), 30 * 29);
    }

    #[test]
    fn seed_determinism_and_text_round_trip() {
        let pl = Graphon::power_law(0.2).unwrap();
        let a = sample_w_random(&pl, 600, 0.2, GraphMode::SymmetricSimple, 9).unwrap();
        let b = sample_w_random(&pl, 600, 0.2, GraphMode::SymmetricSimple, 9).unwrap();
        let c = sample_w_random(&pl, 600, 0.2, GraphMode::SymmetricSimple, 10).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), c.to_text());
        // vertex 0 sits on the singularity: clamped probability 1
        assert_eq!(a.row(0).count(), 599);
        let back = InteractionGraph::read_text(a.to_text().as_bytes()).unwrap();
        assert_eq!(back.to_text(), a.to_text());
        assert!(InteractionGraph::read_text("3 0.5 sideways\n".as_bytes()).is_err());
    }

    #[test]
    fn parallelism_does_not_change_the_sample() {
        let g = Graphon::UniformAttachment;
        let a = sample_w_random(&g, 700, 0.5, GraphMode::DirectedIndependent, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| sample_w_random(&g, 700, 0.5, GraphMode::DirectedIndependent, 4))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_examples() {
        let one = StepGraphon::equal(vec![vec![1.0]]).unwrap();
        let g = deterministic_graph(&one, 6, 0.4).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(g.weight(i, j), 0.4);
            }
        }
        assert!((graph_stats(&g).norm_1 - 0.4).abs() < 1e-15);

        let ua = discretize(&Graphon::UniformAttachment, &GridSpec::new(2).unwrap(), SingularPolicy::Reject).unwrap();
        let g = deterministic_graph(&ua, 2, 1.0).unwrap();
        assert_eq!(g.weight(0, 0), 1.0);
        assert_eq!(g.weight(0, 1), 0.5);
        assert_eq!(g.weight(1, 1), 0.5);

        // power law, midpoint grid N = 4: beta = 4^{-0.1} times the largest
        // block value 64^{0.2} is about 2, so the precondition fails
        let pl = Graphon::power_law(0.2).unwrap();
        let s = discretize(&pl, &GridSpec::new(4).unwrap(), SingularPolicy::MidpointShift).unwrap();
        let beta = 4f64.powf(-0.1);
        assert!((beta * s.max_value() - 2.0).abs() < 1e-12);
        assert!(matches!(deterministic_graph(&s, 4, beta), Err(Error::WeightExceedsOne { .. })));
        let beta = 1.0 / s.max_value();
        let g = deterministic_graph(&s, 4, beta).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mi = (i as f64 + 0.5) / 4.0;
                let mj = (j as f64 + 0.5) / 4.0;
                assert!((g.weight(i, j) - beta * (mi * mj).powf(-0.2)).abs() < 1e-15);
                assert!(g.weight(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn random_points_structure() {
        let p = sample_random_points(2, 5).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[2], 1.0);
        assert!(p[1] > 0.0 && p[1] < 1.0);
        let p = sample_random_points(100, 6).unwrap();
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_random_points(1, 0).is_err());
    }

    #[test]
    fn stats_of_small_graphs() {
        let k3 = from_adjacency(&[vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]]);
        let s = graph_stats(&k3);
        assert!((s.norm_1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.degrees, vec![2.0; 3]);
        assert_eq!(s.edge_density, 1.0);
        // constant-degree graph: deg / N = ||G||_1
        let n = 10;
        let cycle: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..n).map(|j| u8::from((i + 1) % n == j || (j + 1) % n == i)).collect())
            .collect();
        let s = graph_stats(&from_adjacency(&cycle));
        for d in &s.degrees {
            assert_eq!(d / n as f64, s.norm_1);
        }
    }

    #[test]
    fn schedules() {
        let s = SparsitySchedule::Power { gamma: 0.5 };
        assert_eq!(s.beta(64), 0.125);
        assert!(s.degrees_diverge());
        assert!(!s.n_beta_squared_diverges());
        assert!(SparsitySchedule::Power { gamma: 0.4 }.n_beta_squared_diverges());
        assert!(!SparsitySchedule::Power { gamma: 1.0 }.degrees_diverge());
        let pl = SparsitySchedule::PowerLawRegime { a: 0.2, b: 0.1 };
        assert!((pl.beta(100) - 100f64.powf(-0.3)).abs() < 1e-15);
        assert!(SparsitySchedule::Constant { beta: 1.5 }.validate(&[10]).is_err());
        assert!(SparsitySchedule::Constant { beta: 1e-12 }.validate(&[10]).is_err());
    }
}
