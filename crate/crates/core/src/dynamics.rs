//! Coefficient models, the keyed Brownian driver and the Euler-Maruyama
//! integrator for the graph-interacting particle system.
//!
//! Interaction enters the builtin coefficients only through linear
//! functionals of the measure (mass, first moment, `int sin`, `int cos`), so
//! each step computes per-particle feature vectors once and sums them along
//! sparse rows: O(nnz) work per step, no atom lists materialized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::InteractionGraph;
use crate::measures::{dbl_exact, DiscreteMeasure, MeasureFunctionalView};
use crate::rng::{Domain, Draws, KeyedRng};

/// Uniform time grid `t_k = k T / S`, `k = 0..=S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 200,
        }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and S >= 1, got T = {horizon}, S = {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }
}

/// Drift families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    /// `b = a x + c int y mu(dy)`
    LinearMean { a: f64, c: f64 },
    /// `b = kappa int sin(y - x) mu(dy)`, one-dimensional
    Kuramoto { kappa: f64 },
}

/// Diffusion families; both are multiples of the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionSpec {
    Constant { sigma: f64 },
    /// `sigma_0 (1 + tanh(mu(R^n)))`
    MeanSigma { sigma: f64 },
}

/// Drift and diffusion acting on a state and the summary of an interaction
/// measure. `summary` holds the integrals of [`Coefficients::features`].
pub trait Coefficients: Sync {
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn feature_count(&self) -> usize;
    /// Feature values `phi(x)`; a measure is summarized by `int phi dmu`.
    fn features(&self, x: &[f64], out: &mut [f64]);
    fn drift(&self, t: f64, x: &[f64], summary: &[f64], out: &mut [f64]);
    /// Row-major `dim_state x dim_noise` matrix.
    fn diffusion(&self, t: f64, x: &[f64], summary: &[f64], out: &mut [f64]);
    fn measure_dependent_sigma(&self) -> bool;

    fn summarize(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        let f = self.feature_count();
        let mut acc = vec![0.0; f];
        let mut buf = vec![0.0; f];
        for (z, w) in mu.iter() {
            self.features(z, &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += w * v;
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub dim: usize,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    /// Bound on interaction masses used for the declared Lipschitz constant.
    #[serde(default = "default_mass_cap")]
    pub mass_cap: f64,
}

fn default_mass_cap() -> f64 {
    2.0
}

impl CoefficientModel {
    pub fn new(dim: usize, drift: DriftSpec, diffusion: DiffusionSpec) -> Result<Self> {
        let m = Self {
            dim,
            drift,
            diffusion,
            mass_cap: default_mass_cap(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::Constant { sigma: 0.0 },
            mass_cap: default_mass_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("state dimension must be >= 1".into()));
        }
        if matches!(self.drift, DriftSpec::Kuramoto { .. }) && self.dim != 1 {
            return Err(Error::InvalidParameter("the Kuramoto drift is one-dimensional".into()));
        }
        let finite = match (&self.drift, &self.diffusion) {
            (DriftSpec::LinearMean { a, c }, _) if !(a.is_finite() && c.is_finite()) => false,
            (DriftSpec::Kuramoto { kappa }, _) if !kappa.is_finite() => false,
            (_, DiffusionSpec::Constant { sigma } | DiffusionSpec::MeanSigma { sigma }) => sigma.is_finite(),
        };
        if !finite || !(self.mass_cap > 0.0) {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        Ok(())
    }

    fn uses_trig(&self) -> bool {
        matches!(self.drift, DriftSpec::Kuramoto { .. })
    }

    fn drift_lipschitz(&self) -> f64 {
        match self.drift {
            DriftSpec::Zero => 0.0,
            DriftSpec::LinearMean { a, c } => a.abs().max(c.abs()),
            DriftSpec::Kuramoto { kappa } => kappa.abs() * self.mass_cap.max(1.0),
        }
    }

    fn drift_growth(&self) -> f64 {
        match self.drift {
            DriftSpec::Zero => 0.0,
            DriftSpec::LinearMean { a, c } => a.abs().max(c.abs()),
            DriftSpec::Kuramoto { kappa } => kappa.abs(),
        }
    }

    fn sigma_norm_factor(&self) -> f64 {
        (self.dim as f64).sqrt()
    }

    /// Constant `C` such that, for probe measures supported in the unit ball
    /// with mass at most `mass_cap`,
    /// `|b(t,x,mu) - b(t,y,nu)| + |s(t,x,mu) - s(t,y,nu)| <= C (|x - y| + d_BL(mu, nu))`
    /// and `|b| + |s| <= C (1 + |x| + ||mu||_BL)` (Frobenius norm for `s`).
    pub fn declared_lipschitz(&self) -> f64 {
        let (sigma_lip, sigma_growth) = match self.diffusion {
            DiffusionSpec::Constant { sigma } => (0.0, sigma.abs() * self.sigma_norm_factor()),
            DiffusionSpec::MeanSigma { sigma } => (
                sigma.abs() * self.sigma_norm_factor(),
                2.0 * sigma.abs() * self.sigma_norm_factor(),
            ),
        };
        (self.drift_lipschitz() + sigma_lip).max(self.drift_growth() + sigma_growth)
    }

    /// Drift at a measure given by atoms.
    pub fn drift_at(&self, t: f64, x: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        let s = self.summarize(mu);
        let mut out = vec![0.0; self.dim];
        self.drift(t, x, &s, &mut out);
        out
    }

    pub fn diffusion_at(&self, t: f64, x: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        let s = self.summarize(mu);
        let mut out = vec![0.0; self.dim * self.dim];
        self.diffusion(t, x, &s, &mut out);
        out
    }
}

impl Coefficients for CoefficientModel {
    fn dim_state(&self) -> usize {
        self.dim
    }

    fn dim_noise(&self) -> usize {
        self.dim
    }

    fn feature_count(&self) -> usize {
        1 + self.dim + if self.uses_trig() { 2 } else { 0 }
    }

    #[inline]
    fn features(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1..=self.dim].copy_from_slice(x);
        if self.uses_trig() {
            let (s, c) = x[0].sin_cos();
            out[self.dim + 1] = s;
            out[self.dim + 2] = c;
        }
    }

    #[inline]
    fn drift(&self, _t: f64, x: &[f64], summary: &[f64], out: &mut [f64]) {
        match self.drift {
            DriftSpec::Zero => out.fill(0.0),
            DriftSpec::LinearMean { a, c } => {
                for d in 0..self.dim {
                    out[d] = a * x[d] + c * summary[1 + d];
                }
            }
            DriftSpec::Kuramoto { kappa } => {
                // int sin(y - x) = cos x int sin y - sin x int cos y
                let (s, c) = x[0].sin_cos();
                out[0] = kappa * (c * summary[2] - s * summary[3]);
            }
        }
    }

    #[inline]
    fn diffusion(&self, _t: f64, _x: &[f64], summary: &[f64], out: &mut [f64]) {
        let scale = match self.diffusion {
            DiffusionSpec::Constant { sigma } => sigma,
            DiffusionSpec::MeanSigma { sigma } => sigma * (1.0 + summary[0].tanh()),
        };
        out.fill(0.0);
        for d in 0..self.dim {
            out[d * self.dim + d] = scale;
        }
    }

    fn measure_dependent_sigma(&self) -> bool {
        matches!(self.diffusion, DiffusionSpec::MeanSigma { sigma } if sigma != 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub max_lipschitz_ratio: f64,
    pub max_growth_ratio: f64,
    pub declared: f64,
    pub violation: bool,
}

/// Monte Carlo probe of the Lipschitz and linear-growth bounds.
///
/// States are drawn in `[-3, 3]^n`; probe measures have up to four atoms in
/// the unit ball and total mass at most the model's `mass_cap`.
pub fn validate_coefficients(model: &CoefficientModel, trials: usize, seed: u64) -> Result<ValidationReport> {
    model.validate()?;
    let n = model.dim;
    let keyed = KeyedRng::new(seed, Domain::Probe);
    let mut draws = Draws::new(&keyed, 0);
    let point = |draws: &mut Draws, radius: f64| -> Vec<f64> {
        (0..n).map(|_| radius * (2.0 * draws.uniform() - 1.0)).collect()
    };
    let measure = |draws: &mut Draws| -> Result<DiscreteMeasure> {
        let k = 1 + (draws.uniform() * 4.0) as usize;
        let mass = model.mass_cap * draws.uniform();
        let mut atoms = Vec::with_capacity(k * n);
        for _ in 0..k {
            let mut z: Vec<f64> = (0..n).map(|_| 2.0 * draws.uniform() - 1.0).collect();
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                z.iter_mut().for_each(|v| *v /= norm);
            }
            atoms.extend(z);
        }
        let raw: Vec<f64> = (0..k).map(|_| draws.uniform() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        DiscreteMeasure::from_flat(n, atoms, raw.iter().map(|w| mass * w / total).collect())
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff_norm = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut max_lip: f64 = 0.0;
    let mut max_growth: f64 = 0.0;
    for _ in 0..trials {
        let t = draws.uniform();
        let x = point(&mut draws, 3.0);
        // half the probes compare nearby states to stress the local ratio
        let y = if draws.uniform() < 0.5 {
            x.iter().map(|v| v + 1e-3 * (2.0 * draws.uniform() - 1.0)).collect()
        } else {
            point(&mut draws, 3.0)
        };
        let mu = measure(&mut draws)?;
        let nu = if draws.uniform() < 0.5 { mu.clone() } else { measure(&mut draws)? };
        let (bx, by) = (model.drift_at(t, &x, &mu), model.drift_at(t, &y, &nu));
        let (sx, sy) = (model.diffusion_at(t, &x, &mu), model.diffusion_at(t, &y, &nu));
        let denom = diff_norm(&x, &y) + dbl_exact(&mu, &nu)?;
        if denom > 1e-12 {
            max_lip = max_lip.max((diff_norm(&bx, &by) + diff_norm(&sx, &sy)) / denom);
        }
        max_growth = max_growth.max((norm(&bx) + norm(&sx)) / (1.0 + norm(&x) + mu.bl_norm()));
    }
    let declared = model.declared_lipschitz();
    Ok(ValidationReport {
        trials,
        max_lipschitz_ratio: max_lip,
        max_growth_ratio: max_growth,
        declared,
        violation: max_lip > declared * 1.01 || max_growth > declared * 1.01,
    })
}

/// Identifies a noise stream. Auxiliary law-estimation particles live in a
/// namespace disjoint from the particles that are coupled to the finite system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParticleKey {
    Coupled(u64),
    Aux { block: u32, sample: u32 },
}

const AUX_BIT: u64 = 1 << 63;

impl ParticleKey {
    pub fn coupled(index: u64) -> Result<Self> {
        if index & AUX_BIT != 0 {
            return Err(Error::KeyCollision(index));
        }
        Ok(ParticleKey::Coupled(index))
    }

    pub fn stream_id(&self) -> u64 {
        match *self {
            ParticleKey::Coupled(k) => k,
            ParticleKey::Aux { block, sample } => AUX_BIT | ((block as u64) << 32) | sample as u64,
        }
    }

    pub fn is_aux(&self) -> bool {
        matches!(self, ParticleKey::Aux { .. })
    }
}

/// Source of Brownian increments addressed by `(key, step, component)`.
pub trait NoiseSource: Sync {
    fn dt(&self) -> f64;
    /// Increments for steps `0..steps`, `components` per step, step-major.
    fn fill_increments(&self, key: ParticleKey, steps: usize, components: usize, out: &mut [f64]);
}

/// Keyed Brownian driver: the increment for `(key, step, component)` is
/// `sqrt(dt)` times the standard normal at position `step * m + component`
/// of the key's stream, so it never depends on evaluation order.
#[derive(Clone, Debug)]
pub struct BrownianDriver {
    seed: u64,
    dt: f64,
    components: usize,
    keyed: KeyedRng,
}

impl BrownianDriver {
    pub fn new(seed: u64, grid: &TimeGrid, components: usize) -> Self {
        Self {
            seed,
            dt: grid.dt(),
            components,
            keyed: KeyedRng::new(seed, Domain::Brownian),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn increment(&self, key: ParticleKey, step: usize, component: usize) -> f64 {
        let idx = (step * self.components + component) as u64;
        self.dt.sqrt() * self.keyed.normal_at(key.stream_id(), idx)
    }
}

impl NoiseSource for BrownianDriver {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn fill_increments(&self, key: ParticleKey, steps: usize, components: usize, out: &mut [f64]) {
        assert_eq!(components, self.components, "noise dimension mismatch");
        let sd = self.dt.sqrt();
        let mut draws = Draws::new(&self.keyed, key.stream_id());
        for v in out[..steps * components].iter_mut() {
            *v = sd * draws.normal();
        }
    }
}

/// Brownian increment for `(particle_key, step, component)`.
pub fn brownian_increment(driver: &BrownianDriver, key: ParticleKey, step: usize, component: usize) -> f64 {
    driver.increment(key, step, component)
}

/// Per-particle initial laws `gamma^x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSampler {
    Point { x: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Point masses by position: `x` in `[k/L, (k+1)/L)` starts at `values[k]`.
    Table { values: Vec<Vec<f64>> },
}

impl InitialSampler {
    pub fn dim(&self) -> usize {
        match self {
            InitialSampler::Point { x } => x.len(),
            InitialSampler::Gaussian { mean, .. } => mean.len(),
            InitialSampler::Uniform { lo, .. } => lo.len(),
            InitialSampler::Table { values } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            InitialSampler::Point { x } => x.len() == dim && x.iter().all(|v| v.is_finite()),
            InitialSampler::Gaussian { mean, cov } => {
                mean.len() == dim && cov.len() == dim && cov.iter().all(|r| r.len() == dim) && cholesky(cov).is_some()
            }
            InitialSampler::Uniform { lo, hi } => {
                lo.len() == dim && hi.len() == dim && lo.iter().zip(hi).all(|(a, b)| a <= b)
            }
            InitialSampler::Table { values } => !values.is_empty() && values.iter().all(|v| v.len() == dim),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("initial law does not fit dimension {dim}")))
        }
    }

    /// Draws `X_0` for the particle `key` sitting at position `x`.
    pub fn sample(&self, key: ParticleKey, x: f64, seed: u64) -> Vec<f64> {
        let keyed = KeyedRng::new(seed, Domain::Initial);
        let mut draws = Draws::new(&keyed, key.stream_id());
        match self {
            InitialSampler::Point { x } => x.clone(),
            InitialSampler::Gaussian { mean, cov } => {
                let l = cholesky(cov).expect("validated covariance");
                let z: Vec<f64> = (0..mean.len()).map(|_| draws.normal()).collect();
                (0..mean.len())
                    .map(|i| mean[i] + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>())
                    .collect()
            }
            InitialSampler::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a + (b - a) * draws.uniform())
                .collect(),
            InitialSampler::Table { values } => {
                let len = values.len();
                let mut k = ((x * len as f64).floor().max(0.0) as usize).min(len - 1);
                while k > 0 && k as f64 / len as f64 > x {
                    k -= 1;
                }
                while k + 1 < len && (k + 1) as f64 / len as f64 <= x {
                    k += 1;
                }
                values[k].clone()
            }
        }
    }

    /// Initial states for coupled particles `0..points.len()`, flattened.
    pub fn sample_coupled(&self, points: &[f64], seed: u64) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .flat_map(|(i, &x)| self.sample(ParticleKey::Coupled(i as u64), x, seed))
            .collect()
    }
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d < 0.0 {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (a[i][j] - s) / l[j][j];
            } else if (a[i][j] - s).abs() > 0.0 {
                return None;
            }
        }
    }
    Some(l)
}

/// Trajectories on a time grid, stored step-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    dim: usize,
    keys: Vec<ParticleKey>,
    /// `states[(k * n + p) * dim + d]`
    states: Vec<f64>,
}

impl PathEnsemble {
    pub(crate) fn from_parts(grid: TimeGrid, dim: usize, keys: Vec<ParticleKey>, states: Vec<f64>) -> Self {
        debug_assert_eq!(states.len(), (grid.steps + 1) * keys.len() * dim);
        Self {
            grid,
            dim,
            keys,
            states,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[ParticleKey] {
        &self.keys
    }

    pub fn state(&self, step: usize, particle: usize) -> &[f64] {
        let n = self.keys.len();
        let start = (step * n + particle) * self.dim;
        &self.states[start..start + self.dim]
    }

    /// All particle states at one step, flattened.
    pub fn step_states(&self, step: usize) -> &[f64] {
        let w = self.keys.len() * self.dim;
        &self.states[step * w..(step + 1) * w]
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    /// CSV rows `step,time,particle,x1..xn`, keeping every `thin`-th step.
    pub fn to_csv(&self, thin: usize) -> String {
        use std::fmt::Write as _;
        let thin = thin.max(1);
        let mut s = String::from("step,time,particle");
        for d in 1..=self.dim {
            let _ = write!(s, ",x{d}");
        }
        s.push('\n');
        for k in (0..=self.grid.steps).filter(|k| k % thin == 0 || *k == self.grid.steps) {
            for p in 0..self.particles() {
                let _ = write!(s, "{k},{},{p}", self.grid.time(k));
                for v in self.state(k, p) {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Euler-Maruyama for one ensemble whose interaction summaries come from
/// `summaries(step, states, out)`; `out` has `feature_count` slots per particle.
pub(crate) fn integrate<C, S>(
    model: &C,
    grid: &TimeGrid,
    keys: &[ParticleKey],
    initial: &[f64],
    noise: &dyn NoiseSource,
    summaries: S,
) -> Result<PathEnsemble>
where
    C: Coefficients + ?Sized,
    S: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let n = keys.len();
    let dim = model.dim_state();
    let m = model.dim_noise();
    let f = model.feature_count();
    if initial.len() != n * dim {
        return Err(Error::ShapeMismatch(format!(
            "{} initial values for {n} particles of dimension {dim}",
            initial.len()
        )));
    }
    if (noise.dt() - grid.dt()).abs() > 1e-15 * grid.dt() {
        return Err(Error::GridMismatch);
    }
    let steps = grid.steps;
    let dt = grid.dt();
    let increments: Vec<f64> = {
        let mut buf = vec![0.0; n * steps * m];
        buf.par_chunks_mut((steps * m).max(1))
            .zip(keys.par_iter())
            .for_each(|(chunk, key)| noise.fill_increments(*key, steps, m, chunk));
        buf
    };
    let mut states = Vec::with_capacity((steps + 1) * n * dim);
    states.extend_from_slice(initial);
    let mut summary = vec![0.0; n * f];
    let mut next = vec![0.0; n * dim];
    for k in 0..steps {
        let t = grid.time(k);
        let current = &states[k * n * dim..(k + 1) * n * dim];
        summaries(k, current, &mut summary);
        next.par_chunks_mut(dim).enumerate().for_each_init(
            || (vec![0.0; dim], vec![0.0; dim * m]),
            |(b, s), (p, out)| {
                let x = &current[p * dim..(p + 1) * dim];
                let sum = &summary[p * f..(p + 1) * f];
                model.drift(t, x, sum, b);
                model.diffusion(t, x, sum, s);
                let dw = &increments[(p * steps + k) * m..(p * steps + k + 1) * m];
                for d in 0..dim {
                    let noise: f64 = (0..m).map(|c| s[d * m + c] * dw[c]).sum();
                    out[d] = x[d] + b[d] * dt + noise;
                }
            },
        );
        if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: k + 1,
                particle: pos / dim,
            });
        }
        states.extend_from_slice(&next);
    }
    Ok(PathEnsemble::from_parts(*grid, dim, keys.to_vec(), states))
}

/// Euler-Maruyama for the N-particle system. Particle `i` uses the noise
/// stream `Coupled(i)` and interacts through `m^{i,N}` built from `graph`.
pub fn simulate_particle_system<C: Coefficients + ?Sized>(
    graph: &InteractionGraph,
    model: &C,
    initial: &[f64],
    grid: &TimeGrid,
    noise: &dyn NoiseSource,
) -> Result<PathEnsemble> {
    let n = graph.n();
    let dim = model.dim_state();
    let f = model.feature_count();
    let keys: Vec<ParticleKey> = (0..n as u64).map(ParticleKey::Coupled).collect();
    let scale = 1.0 / (n as f64 * graph.beta());
    integrate(model, grid, &keys, initial, noise, |_, current, out| {
        let mut phi = vec![0.0; n * f];
        phi.par_chunks_mut(f).enumerate().for_each(|(j, row)| {
            model.features(&current[j * dim..(j + 1) * dim], row);
        });
        let phi = &phi;
        out.par_chunks_mut(f).enumerate().for_each(|(i, acc)| {
            acc.fill(0.0);
            for (j, w) in graph.row(i) {
                let src = &phi[j * f..(j + 1) * f];
                for (a, v) in acc.iter_mut().zip(src) {
                    *a += w * v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
        });
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    /// `(1/N) sum_i sup_k |X^i_{t_k}|^order`
    pub sup_moment: f64,
    /// `(1/N) sum_i |X^i_{t_k}|^order` per grid time.
    pub per_step: Vec<f64>,
}

pub fn particle_moments(ensemble: &PathEnsemble, order: f64) -> Result<MomentEstimate> {
    if !(order >= 1.0) {
        return Err(Error::InvalidParameter(format!("moment order must be >= 1, got {order}")));
    }
    let n = ensemble.particles();
    let steps = ensemble.grid().steps;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sup = vec![0.0f64; n];
    let mut per_step = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let mut acc = 0.0;
        for (p, s) in sup.iter_mut().enumerate() {
            let v = norm(ensemble.state(k, p)).powf(order);
            *s = s.max(v);
            acc += v;
        }
        per_step.push(acc / n as f64);
    }
    Ok(MomentEstimate {
        sup_moment: sup.iter().sum::<f64>() / n as f64,
        per_step,
    })
}
