//! Finite positive measures on R^n, the graph-weighted empirical measure,
//! the discretized graphon integral and bounded-Lipschitz distances.

mod dictionary;
mod transport;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::graphs::InteractionGraph;

pub use dictionary::{dbl_estimate, Dictionary, TestFunction};
pub use transport::{dbl_exact, dbl_exact_with_cap, DEFAULT_SUPPORT_CAP};

/// Atoms closer than this are merged before distances are computed.
pub const MERGE_TOL: f64 = 1e-12;

/// Finite positive measure `sum_k w_k delta_{z_k}`; the mass need not be 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Atom coordinates, `dim` consecutive values per atom.
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// From flat coordinates (`dim` values per atom) and weights.
    pub fn from_flat(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("measure dimension must be >= 1".into()));
        }
        if atoms.len() != dim * weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} atoms of dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!("weight {w} is not finite and nonnegative")));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("atom coordinates must be finite".into()));
        }
        Ok(Self { dim, atoms, weights })
    }

    pub fn new(dim: usize, atoms: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: a.len(),
            });
        }
        Self::from_flat(dim, atoms.concat(), weights)
    }

    pub fn dirac(point: &[f64], mass: f64) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), vec![mass])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.atoms.chunks(self.dim).zip(self.weights.iter().copied())
    }

    pub(crate) fn push(&mut self, point: &[f64], weight: f64) {
        debug_assert_eq!(point.len(), self.dim);
        self.atoms.extend_from_slice(point);
        self.weights.push(weight);
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            atoms: self.atoms.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Merges atoms closer than [`MERGE_TOL`] and drops zero weights.
    pub fn merged(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).filter(|&k| self.weights[k] > 0.0).collect();
        order.sort_by(|&a, &b| {
            self.atom(a)
                .iter()
                .zip(self.atom(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut out = DiscreteMeasure::zero(self.dim);
        let mut reps: Vec<usize> = Vec::new();
        for k in order {
            let z = self.atom(k);
            // candidates share the first coordinate up to the tolerance
            let hit = reps.iter().rev().take_while(|&&r| (out.atom(r)[0] - z[0]).abs() <= MERGE_TOL).find(
                |&&r| euclid(out.atom(r), z) <= MERGE_TOL,
            );
            match hit {
                Some(&r) => out.weights[r] += self.weights[k],
                None => {
                    reps.push(out.len());
                    out.push(z, self.weights[k]);
                }
            }
        }
        out
    }

    /// Measure text form: a `dim n` line, then `w x1 ... xn` per atom.
    pub fn to_text(&self) -> String {
        let mut s = format!("dim {}\n", self.dim);
        for (z, w) in self.iter() {
            let _ = write!(s, "{w}");
            for x in z {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty measure file".into()))?;
        let dim = header
            .strip_prefix("dim")
            .and_then(|r| r.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("expected `dim n`, found {header:?}")))?;
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for line in lines {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    found: vals.len(),
                });
            }
            weights.push(vals[0]);
            atoms.extend_from_slice(&vals[1..]);
        }
        Self::from_flat(dim, atoms, weights)
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Functionals every measure exposes.
pub trait MeasureFunctionalView {
    fn total_mass(&self) -> f64;
    /// First moment `int y mu(dy)` (not normalized by the mass).
    fn first_moment(&self) -> Vec<f64>;
    fn integrate(&self, f: &TestFunction) -> f64;
    /// Equals the total mass for positive measures: `f = 1` attains the sup.
    fn bl_norm(&self) -> f64 {
        self.total_mass()
    }
}

impl MeasureFunctionalView for DiscreteMeasure {
    fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn first_moment(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (z, w) in self.iter() {
            for (acc, x) in m.iter_mut().zip(z) {
                *acc += w * x;
            }
        }
        m
    }

    fn integrate(&self, f: &TestFunction) -> f64 {
        self.iter().map(|(z, w)| w * f.eval(z)).sum()
    }
}

/// `m^{i,N} = (1 / (N beta_N)) sum_j zeta_ij delta_{X^j}`; `i` is 0-based and
/// `states` holds `N` points of dimension `dim`, flattened.
pub fn weighted_empirical(
    graph: &InteractionGraph,
    i: usize,
    states: &[f64],
    dim: usize,
) -> Result<DiscreteMeasure> {
    let n = graph.n();
    if states.len() != n * dim {
        return Err(Error::ShapeMismatch(format!(
            "expected {} state values, found {}",
            n * dim,
            states.len()
        )));
    }
    if i >= n {
        return Err(Error::InvalidParameter(format!("vertex {i} out of range")));
    }
    let scale = 1.0 / (n as f64 * graph.beta());
    let mut m = DiscreteMeasure::zero(dim);
    for (j, w) in graph.row(i) {
        m.push(&states[j * dim..(j + 1) * dim], w * scale);
    }
    Ok(m)
}

/// Discretized `nu^x = sum_j |I_j| g_N(x, x_j) law_j`, as one measure.
pub fn graphon_integral_measure(
    g_n: &StepGraphon,
    x: f64,
    block_laws: &[DiscreteMeasure],
) -> Result<DiscreteMeasure> {
    if block_laws.len() != g_n.blocks() {
        return Err(Error::ShapeMismatch(format!(
            "{} block laws for {} blocks",
            block_laws.len(),
            g_n.blocks()
        )));
    }
    let dim = block_laws.first().map_or(1, DiscreteMeasure::dim);
    if let Some(law) = block_laws.iter().find(|l| l.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: law.dim(),
        });
    }
    let bx = g_n.block_of(x);
    let mut out = DiscreteMeasure::zero(dim);
    for (j, law) in block_laws.iter().enumerate() {
        let scale = g_n.length(j) * g_n.value(bx, j);
        if scale == 0.0 {
            continue;
        }
        for (z, w) in law.iter() {
            out.push(z, scale * w);
        }
    }
    Ok(out)
}

/// 1-Wasserstein distance between equal-mass measures on the line, by the
/// sorted quantile coupling (`int |F_mu - F_nu|`).
pub fn w1_sorted(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    for m in [mu, nu] {
        if m.dim() != 1 {
            return Err(Error::WrongDimension {
                expected: 1,
                found: m.dim(),
            });
        }
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() > 1e-12 * a.max(b).max(1.0) {
        return Err(Error::MassMismatch(a, b));
    }
    let mut events: Vec<(f64, f64)> = mu
        .iter()
        .map(|(z, w)| (z[0], w))
        .chain(nu.iter().map(|(z, w)| (z[0], -w)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::GridSpec;
    use crate::graphs::{deterministic_graph, GraphMode};

    #[test]
    fn empirical_examples() {
        let one = StepGraphon::equal(vec![vec![1.0]]).unwrap();
        let g = deterministic_graph(&one, 2, 1.0).unwrap();
        let m = weighted_empirical(&g, 0, &[0.0, 1.0], 1).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);

        let empty = InteractionGraph::from_rows(3, 0.5, GraphMode::SymmetricSimple, vec![vec![]; 3], GridSpec::new(3).unwrap().points())
            .unwrap();
        let m = weighted_empirical(&empty, 1, &[0.0, 1.0, 2.0], 1).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.total_mass(), 0.0);

        let k2 = InteractionGraph::from_rows(
            2,
            1.0,
            GraphMode::SymmetricSimple,
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            vec![0.0, 0.5],
        )
        .unwrap();
        let m = weighted_empirical(&k2, 0, &[0.0, 1.0], 1).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atom(0), &[1.0]);
        assert_eq!(m.weights(), &[0.5]);
    }

    #[test]
    fn graphon_integral_examples() {
        let one = StepGraphon::equal(vec![vec![1.0]]).unwrap();
        let d0 = DiscreteMeasure::dirac(&[0.0], 1.0).unwrap();
        let nu = graphon_integral_measure(&one, 0.3, std::slice::from_ref(&d0)).unwrap();
        assert_eq!(nu.total_mass(), 1.0);
        assert_eq!(nu.atom(0), &[0.0]);

        let zero = StepGraphon::equal(vec![vec![0.0]]).unwrap();
        assert!(graphon_integral_measure(&zero, 0.3, std::slice::from_ref(&d0)).unwrap().is_empty());

        let two = StepGraphon::equal(vec![vec![2.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let d1 = DiscreteMeasure::dirac(&[1.0], 1.0).unwrap();
        let nu = graphon_integral_measure(&two, 0.1, &[d0.clone(), d1]).unwrap();
        assert_eq!(nu.len(), 1);
        assert_eq!(nu.atom(0), &[0.0]);
        assert_eq!(nu.weights(), &[1.0]);

        let d2 = DiscreteMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            graphon_integral_measure(&two, 0.1, &[d0, d2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn functional_view() {
        let m = DiscreteMeasure::new(2, &[vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.5, 1.5]).unwrap();
        assert_eq!(m.total_mass(), 2.0);
        assert_eq!(m.bl_norm(), 2.0);
        assert_eq!(m.first_moment(), vec![0.5, 3.0]);
        assert_eq!(m.integrate(&TestFunction::Constant(1.0)), m.total_mass());
    }

    #[test]
    fn merging() {
        let m = DiscreteMeasure::new(1, &[vec![0.0], vec![1.0], vec![1e-13], vec![2.0]], vec![1.0, 2.0, 3.0, 0.0])
            .unwrap();
        let merged = m.merged();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.weights(), &[4.0, 2.0]);
    }

    #[test]
    fn w1_examples() {
        let d0 = DiscreteMeasure::dirac(&[0.0], 1.0).unwrap();
        let d1 = DiscreteMeasure::dirac(&[1.0], 1.0).unwrap();
        assert_eq!(w1_sorted(&d0, &d1).unwrap(), 1.0);
        let half = DiscreteMeasure::new(1, &[vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(w1_sorted(&half, &half).unwrap(), 0.0);
        assert!(matches!(w1_sorted(&d0, &d0.scaled(2.0)), Err(Error::MassMismatch(..))));
        let p = DiscreteMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(w1_sorted(&p, &p), Err(Error::WrongDimension { .. })));
    }

    #[test]
    fn text_format() {
        let m = DiscreteMeasure::new(2, &[vec![1.0, -0.5], vec![0.25, 3.0]], vec![0.5, 2.0]).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("dim 2\n0.5 1 -0.5\n"));
        assert_eq!(DiscreteMeasure::from_text(&text).unwrap(), m);
        assert!(DiscreteMeasure::from_text("dim 2\n1 0\n").is_err());
        assert!(DiscreteMeasure::from_text("dim 1\n-1 0\n").is_err());
    }
}
