//! Numerical solution of the graphon SDE with block-constant laws, Picard
//! iteration on the law table, and limit trajectories coupled to the finite
//! system through shared noise keys.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{integrate, Coefficients, InitialSampler, NoiseSource, ParticleKey, PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::graphs::InteractionGraph;
use crate::measures::{dbl_exact, graphon_integral_measure, weighted_empirical, DiscreteMeasure};
use crate::rng::{Domain, KeyedRng};

/// `M` equally weighted samples per block and time step.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLawTable {
    blocks: usize,
    samples: usize,
    breaks: Vec<f64>,
    paths: PathEnsemble,
}

impl BlockLawTable {
    /// `data` is `[step][block][sample][component]`; `breaks` has `blocks + 1` entries.
    pub fn new(breaks: Vec<f64>, samples: usize, grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        let blocks = breaks.len().saturating_sub(1);
        if blocks == 0 || samples == 0 || dim == 0 {
            return Err(Error::ShapeMismatch("law table needs blocks, samples and a dimension".into()));
        }
        if data.len() != (grid.steps + 1) * blocks * samples * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} steps x {blocks} blocks x {samples} samples x {dim}",
                data.len(),
                grid.steps + 1
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("law table samples must be finite".into()));
        }
        let keys = (0..blocks as u32)
            .flat_map(|block| (0..samples as u32).map(move |sample| ParticleKey::Aux { block, sample }))
            .collect();
        Ok(Self {
            blocks,
            samples,
            breaks,
            paths: PathEnsemble::from_parts(grid, dim, keys, data),
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.paths.dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.paths.grid()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn paths(&self) -> &PathEnsemble {
        &self.paths
    }

    pub fn sample(&self, step: usize, block: usize, sample: usize) -> &[f64] {
        self.paths.state(step, block * self.samples + sample)
    }

    /// All samples of one block at one step, flattened.
    pub fn block_samples(&self, step: usize, block: usize) -> &[f64] {
        let w = self.samples * self.dim();
        &self.paths.step_states(step)[block * w..(block + 1) * w]
    }

    /// Empirical law of a block at a step, weights `1/M`.
    pub fn block_law(&self, step: usize, block: usize) -> DiscreteMeasure {
        let w = 1.0 / self.samples as f64;
        DiscreteMeasure::from_flat(self.dim(), self.block_samples(step, block).to_vec(), vec![w; self.samples])
            .expect("law table samples are finite")
    }

    pub fn block_laws(&self, step: usize) -> Vec<DiscreteMeasure> {
        (0..self.blocks).map(|b| self.block_law(step, b)).collect()
    }

    pub fn block_mean(&self, step: usize, block: usize) -> Vec<f64> {
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        for s in self.block_samples(step, block).chunks(dim) {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= self.samples as f64);
        mean
    }

    /// Text lines `block step sample x1..xn`.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        for b in 0..self.blocks {
            for k in 0..=self.grid().steps {
                for m in 0..self.samples {
                    let _ = write!(s, "{b} {k} {m}");
                    for v in self.sample(k, b, m) {
                        let _ = write!(s, " {v}");
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    /// `int phi d(law_j)` for every step and block, `[step][block][feature]`.
    fn feature_means<C: Coefficients + ?Sized>(&self, model: &C) -> Vec<f64> {
        let f = model.feature_count();
        let dim = self.dim();
        let steps = self.grid().steps;
        let mut out = vec![0.0; (steps + 1) * self.blocks * f];
        out.par_chunks_mut(self.blocks * f).enumerate().for_each_init(
            || vec![0.0; f],
            |buf, (k, row)| {
                for b in 0..self.blocks {
                    let acc = &mut row[b * f..(b + 1) * f];
                    for x in self.block_samples(k, b).chunks(dim) {
                        model.features(x, buf);
                        acc.iter_mut().zip(buf.iter()).for_each(|(a, v)| *a += v);
                    }
                    acc.iter_mut().for_each(|a| *a /= self.samples as f64);
                }
            },
        );
        out
    }
}

/// Summaries of `nu^x = sum_j |I_j| g_N(x, .) law_j` for every step and
/// every block of `g_n`, `[step][block][feature]`.
fn interaction_features(g_n: &StepGraphon, means: &[f64], blocks: usize, f: usize, steps: usize) -> Vec<f64> {
    let lengths = g_n.lengths();
    let mut out = vec![0.0; (steps + 1) * blocks * f];
    out.par_chunks_mut(blocks * f).enumerate().for_each(|(k, row)| {
        let fm = &means[k * blocks * f..(k + 1) * blocks * f];
        for i in 0..blocks {
            let acc = &mut row[i * f..(i + 1) * f];
            for (j, len) in lengths.iter().enumerate() {
                let w = len * g_n.value(i, j);
                if w != 0.0 {
                    acc.iter_mut().zip(&fm[j * f..(j + 1) * f]).for_each(|(a, v)| *a += w * v);
                }
            }
        }
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardState {
    pub iterations: usize,
    /// Mean over aux particles of the squared sup-gap between successive iterates.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PicardOptions {
    pub samples: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub init_seed: u64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            samples: 16,
            max_iters: 30,
            tol: 1e-6,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LimitSolution {
    pub laws: BlockLawTable,
    pub state: PicardState,
}

/// Aux keys and stratified positions for `M` samples in each block.
fn aux_layout(g_n: &StepGraphon, samples: usize) -> (Vec<ParticleKey>, Vec<f64>) {
    let breaks = g_n.breaks();
    let mut keys = Vec::with_capacity(g_n.blocks() * samples);
    let mut pos = Vec::with_capacity(g_n.blocks() * samples);
    for b in 0..g_n.blocks() {
        let (lo, hi) = (breaks[b], breaks[b + 1]);
        for s in 0..samples {
            keys.push(ParticleKey::Aux {
                block: b as u32,
                sample: s as u32,
            });
            pos.push(lo + (hi - lo) * (s as f64 + 0.5) / samples as f64);
        }
    }
    (keys, pos)
}

/// Picard iteration for the block laws. A run that exhausts `max_iters`
/// returns the last iterate with `converged = false`.
pub fn solve_graphon_sde<C: Coefficients + ?Sized>(
    g_n: &StepGraphon,
    model: &C,
    init: &InitialSampler,
    grid: &TimeGrid,
    opts: &PicardOptions,
    driver_aux: &dyn NoiseSource,
) -> Result<LimitSolution> {
    if opts.samples < 2 {
        return Err(Error::InvalidParameter(format!("need M >= 2 samples per block, got {}", opts.samples)));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::InvalidParameter("Picard needs tol > 0 and max_iters >= 1".into()));
    }
    let dim = model.dim_state();
    init.validate(dim)?;
    let blocks = g_n.blocks();
    let f = model.feature_count();
    let steps = grid.steps;
    let (keys, positions) = aux_layout(g_n, opts.samples);
    if keys.len() > u32::MAX as usize {
        return Err(Error::InvalidParameter("too many auxiliary particles".into()));
    }
    let initial: Vec<f64> = keys
        .par_iter()
        .zip(positions.par_iter())
        .flat_map_iter(|(k, &x)| init.sample(*k, x, opts.init_seed))
        .collect();

    let frozen: Vec<f64> = initial.iter().copied().cycle().take((steps + 1) * initial.len()).collect();
    let mut table = BlockLawTable {
        blocks,
        samples: opts.samples,
        breaks: g_n.breaks().to_vec(),
        paths: PathEnsemble::from_parts(*grid, dim, keys.clone(), frozen),
    };
    let mut state = PicardState {
        iterations: 0,
        residuals: Vec::new(),
        converged: false,
    };
    let mut previous_nu: Option<Vec<f64>> = None;
    while state.iterations < opts.max_iters {
        let nu = interaction_features(g_n, &table.feature_means(model), blocks, f, steps);
        state.iterations += 1;
        if previous_nu.as_ref() == Some(&nu) {
            // same frozen measures and same noise: the new iterate is the old one
            state.residuals.push(0.0);
            state.converged = true;
            break;
        }
        let samples = opts.samples;
        let paths = integrate(model, grid, &keys, &initial, driver_aux, |k, _, out| {
            out.par_chunks_mut(f).enumerate().for_each(|(p, acc)| {
                let b = p / samples;
                acc.copy_from_slice(&nu[(k * blocks + b) * f..(k * blocks + b + 1) * f]);
            });
        })?;
        let residual = sup_gap(&table.paths, &paths, 2.0).iter().sum::<f64>() / keys.len() as f64;
        table.paths = paths;
        previous_nu = Some(nu);
        state.residuals.push(residual);
        if residual < opts.tol {
            state.converged = true;
            break;
        }
    }
    Ok(LimitSolution { laws: table, state })
}

/// Per particle `sup_k |a_k - b_k|^order`.
fn sup_gap(a: &PathEnsemble, b: &PathEnsemble, order: f64) -> Vec<f64> {
    let n = a.particles();
    (0..n)
        .into_par_iter()
        .map(|p| {
            (0..=a.grid().steps)
                .map(|k| {
                    let d: f64 = a.state(k, p).iter().zip(b.state(k, p)).map(|(x, y)| (x - y) * (x - y)).sum();
                    d.sqrt().powf(order)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Limit trajectories `X^{x_i, g}` driven by the coupled noise streams, with
/// interaction measures frozen from the law table.
pub fn coupled_limit_trajectories<C: Coefficients + ?Sized>(
    laws: &BlockLawTable,
    g_n: &StepGraphon,
    model: &C,
    initial: &[f64],
    points: &[f64],
    driver: &dyn NoiseSource,
    keys: &[ParticleKey],
) -> Result<PathEnsemble> {
    if let Some(k) = keys.iter().find(|k| k.is_aux()) {
        return Err(Error::KeyCollision(k.stream_id()));
    }
    if points.len() != keys.len() {
        return Err(Error::ShapeMismatch(format!("{} positions for {} keys", points.len(), keys.len())));
    }
    if laws.blocks() != g_n.blocks() || laws.dim() != model.dim_state() {
        return Err(Error::ShapeMismatch("law table does not match the step graphon or model".into()));
    }
    if (driver.dt() - laws.grid().dt()).abs() > 1e-15 * laws.grid().dt() {
        return Err(Error::GridMismatch);
    }
    let f = model.feature_count();
    let blocks = laws.blocks();
    let grid = *laws.grid();
    let nu = interaction_features(g_n, &laws.feature_means(model), blocks, f, grid.steps);
    let block_of: Vec<usize> = points.iter().map(|&x| g_n.block_of(x)).collect();
    integrate(model, &grid, keys, initial, driver, |k, _, out| {
        out.par_chunks_mut(f).zip(block_of.par_iter()).for_each(|(acc, &b)| {
            acc.copy_from_slice(&nu[(k * blocks + b) * f..(k * blocks + b + 1) * f]);
        });
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingError {
    /// `(1/N) sum_i sup_k |X^{i,N} - X^{i,g}|^order`
    pub value: f64,
    /// `(1/N) sum_i |X^{i,N}_{t_k} - X^{i,g}_{t_k}|^order` per step.
    pub profile: Vec<f64>,
}

pub fn coupling_error(finite: &PathEnsemble, limit: &PathEnsemble, order: f64) -> Result<CouplingError> {
    if finite.particles() != limit.particles() || finite.dim() != limit.dim() || finite.grid() != limit.grid() {
        return Err(Error::ShapeMismatch(format!(
            "ensembles differ: {} x {} vs {} x {}",
            finite.particles(),
            finite.dim(),
            limit.particles(),
            limit.dim()
        )));
    }
    if !(order >= 1.0) {
        return Err(Error::InvalidParameter(format!("order must be >= 1, got {order}")));
    }
    let n = finite.particles() as f64;
    let value = sup_gap(finite, limit, order).iter().sum::<f64>() / n;
    let profile = (0..=finite.grid().steps)
        .map(|k| {
            (0..finite.particles())
                .map(|p| {
                    let d: f64 = finite.state(k, p).iter().zip(limit.state(k, p)).map(|(x, y)| (x - y) * (x - y)).sum();
                    d.sqrt().powf(order)
                })
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(CouplingError { value, profile })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureErrorOptions {
    /// Number of vertices averaged over; all of them when `>= N`.
    pub vertices: usize,
    /// Measures with more atoms are systematically resampled to this size.
    pub atom_cap: usize,
    pub seed: u64,
}

impl Default for MeasureErrorOptions {
    fn default() -> Self {
        Self {
            vertices: 16,
            atom_cap: 256,
            seed: 0,
        }
    }
}

/// Systematic resampling to `cap` equal-weight atoms, preserving total mass.
pub(crate) fn resample(mu: &DiscreteMeasure, cap: usize, u: f64) -> DiscreteMeasure {
    if mu.len() <= cap {
        return mu.clone();
    }
    let total: f64 = mu.weights().iter().sum();
    let mut out = DiscreteMeasure::zero(mu.dim());
    let w = total / cap as f64;
    let mut cum = 0.0;
    let mut atoms = mu.iter().peekable();
    let mut current = atoms.next();
    if let Some((_, wt)) = current {
        cum = wt;
    }
    for k in 0..cap {
        let target = (u + k as f64) * w;
        while cum < target {
            match atoms.next() {
                Some(a) => {
                    cum += a.1;
                    current = Some(a);
                }
                None => break,
            }
        }
        if let Some((z, _)) = current {
            out.push(z, w);
        }
    }
    out
}

/// `(1/|S|) sum_{i in S} d_BL(m^{i,N}_t, nu^{x_i}_t)` over a keyed vertex
/// subsample `S`, with atoms resampled down to `atom_cap`.
pub fn measure_error(
    graph: &InteractionGraph,
    states: &[f64],
    laws: &BlockLawTable,
    g_n: &StepGraphon,
    step: usize,
    opts: &MeasureErrorOptions,
) -> Result<f64> {
    let n = graph.n();
    let dim = laws.dim();
    if step > laws.grid().steps {
        return Err(Error::InvalidParameter(format!("step {step} beyond the grid")));
    }
    if opts.atom_cap == 0 || opts.vertices == 0 {
        return Err(Error::InvalidParameter("measure_error needs positive caps".into()));
    }
    let keyed = KeyedRng::new(opts.seed, Domain::Subsample);
    let vertices: Vec<usize> = if opts.vertices >= n {
        (0..n).collect()
    } else {
        // stratified pick: one vertex per stratum of equal size
        (0..opts.vertices)
            .map(|s| {
                let lo = s * n / opts.vertices;
                let hi = (s + 1) * n / opts.vertices;
                lo + ((keyed.uniform_at(0, s as u64) * (hi - lo) as f64) as usize).min(hi - lo - 1)
            })
            .collect()
    };
    let block_laws = laws.block_laws(step);
    let points = graph.points();
    let dists: Vec<f64> = vertices
        .par_iter()
        .map(|&i| -> Result<f64> {
            let m = weighted_empirical(graph, i, states, dim)?;
            let nu = graphon_integral_measure(g_n, points[i], &block_laws)?;
            let m = resample(&m, opts.atom_cap, keyed.uniform_at(1, i as u64));
            let nu = resample(&nu, opts.atom_cap, keyed.uniform_at(2, i as u64));
            dbl_exact(&m, &nu)
        })
        .collect::<Result<_>>()?;
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_keeps_mass_and_mean() {
        let atoms: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let weights = vec![0.002; 1000];
        let mu = DiscreteMeasure::from_flat(1, atoms, weights).unwrap();
        let r = resample(&mu, 100, 0.5);
        assert_eq!(r.len(), 100);
        assert!((r.weights().iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let mean = |m: &DiscreteMeasure| m.iter().map(|(z, w)| z[0] * w).sum::<f64>();
        assert!((mean(&r) - mean(&mu)).abs() < 0.02);
        assert_eq!(resample(&r, 100, 0.1), r);
    }
}
