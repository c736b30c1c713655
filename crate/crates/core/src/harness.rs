//! Experiment configuration, convergence sweeps, rate fits, stability and
//! law-of-large-numbers experiments, and report output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dynamics::{
    particle_moments, simulate_particle_system, BrownianDriver, CoefficientModel, Coefficients, InitialSampler,
    ParticleKey, TimeGrid,
};
use crate::error::{Error, Result};
use crate::graphon::{discretize, discretize_at, Graphon, GridSpec, SingularPolicy, StepGraphon};
use crate::graphs::{
    deterministic_graph_at, sample_random_points, sample_w_random_at, GraphMode, InteractionGraph, SparsitySchedule,
};
use crate::limitsolver::{
    coupled_limit_trajectories, coupling_error, measure_error, resample, solve_graphon_sde, LimitSolution,
    MeasureErrorOptions, PicardOptions,
};
use crate::measures::{dbl_exact, DiscreteMeasure};

/// Fixed column order of `report.csv` for convergence sweeps.
pub const CSV_HEADER: &str = "N,beta,n_beta,seeds,err_l1,err_l1_se,err_l2,err_l2_se,err_dbl,err_dbl_se,wall_ms";

/// Number of measure-error checkpoints, evenly spaced with the last at `T`.
pub const CHECKPOINTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Converge,
    Rate,
    Stability,
    Wlln,
    Moments,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureErrorSettings {
    pub vertices: usize,
    pub atom_cap: usize,
}

impl Default for MeasureErrorSettings {
    fn default() -> Self {
        Self {
            vertices: 8,
            atom_cap: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub graphon: Graphon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_policy: Option<SingularPolicy>,
    pub schedule: SparsitySchedule,
    pub mode: GraphMode,
    pub n_list: Vec<usize>,
    /// Limit blocks `K`; defaults to 1 for a constant graphon, else `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    /// Samples per block `M`; defaults to `max(2, 4N/K)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub grid: TimeGrid,
    pub model: CoefficientModel,
    pub initial: InitialSampler,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub picard: PicardSettings,
    #[serde(default)]
    pub measure_error: MeasureErrorSettings,
    #[serde(default)]
    pub random_points: bool,
    /// Constant bumps `h = g + eps` for stability runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<f64>,
    /// Thresholds for law-of-large-numbers exceedance fractions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    /// Record wall time per row; off by default so reports are reproducible byte for byte.
    #[serde(default)]
    pub wall_clock: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses a config, or the `config` object of a `meta.json`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("config_hash").is_some() => c.clone(),
            _ => value,
        };
        let cfg: Self = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn policy(&self) -> SingularPolicy {
        self.singular_policy.unwrap_or_else(|| SingularPolicy::default_for(&self.graphon))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return fail("n_list needs at least one N >= 2".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return fail("n_list must be strictly increasing".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        self.schedule.validate(&self.n_list)?;
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.initial.validate(self.model.dim)?;
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.picard.tol > 0.0) || self.picard.max_iters == 0 {
            return fail("picard needs tol > 0 and max_iters >= 1".into());
        }
        if self.blocks == Some(0) || matches!(self.samples, Some(m) if m < 2) {
            return fail("blocks must be >= 1 and samples >= 2".into());
        }
        if self.measure_error.vertices == 0 || self.measure_error.atom_cap == 0 {
            return fail("measure_error caps must be positive".into());
        }
        if self.model.measure_dependent_sigma() {
            if !self.schedule.n_beta_squared_diverges() {
                return fail("a measure-dependent diffusion needs N beta_N^2 -> infinity".into());
            }
            if self.graphon.is_unbounded() {
                return fail("a measure-dependent diffusion needs a bounded graphon".into());
            }
        }
        match self.kind {
            ExperimentKind::Rate if !self.graphon.is_lipschitz() => {
                return fail("rate experiments need a Lipschitz graphon".into())
            }
            ExperimentKind::Rate if self.n_list.len() < 4 => return fail("rate experiments need at least 4 values of N".into()),
            ExperimentKind::Wlln if !self.graphon.is_lipschitz() => {
                return fail("law-of-large-numbers experiments need a Lipschitz graphon".into())
            }
            ExperimentKind::Stability if self.perturbations.is_empty() => {
                return fail("stability experiments need perturbations".into())
            }
            _ => {}
        }
        if self.perturbations.iter().chain(&self.eta).any(|v| !v.is_finite()) {
            return fail("perturbations and eta must be finite".into());
        }
        Ok(())
    }

    /// Stable SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn blocks_for(&self, n: usize) -> usize {
        self.blocks.unwrap_or(if self.is_constant() { 1 } else { n })
    }

    pub fn samples_for(&self, n: usize, blocks: usize) -> usize {
        self.samples.unwrap_or((4 * n / blocks).max(2))
    }

    fn is_constant(&self) -> bool {
        matches!(self.graphon, Graphon::Constant(_))
    }

    pub fn picard_options(&self, samples: usize, seed: u64) -> PicardOptions {
        PicardOptions {
            samples,
            max_iters: self.picard.max_iters,
            tol: self.picard.tol,
            init_seed: seed,
        }
    }
}

/// Mean and standard error (`s / sqrt(n)`, zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sided Welch test of `mean(a) > mean(b)`; returns the p-value.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter("t-test needs two values per sample".into()));
    }
    let (ma, sa) = mean_se(a);
    let (mb, sb) = mean_se(b);
    let se2 = sa * sa + sb * sb;
    if se2 == 0.0 {
        return Ok(if ma > mb { 0.0 } else { 1.0 });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = se2 * se2 / (sa.powi(4) / (na - 1.0) + sb.powi(4) / (nb - 1.0));
    let t = (ma - mb) / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(1.0 - dist.cdf(t))
}

/// Two-sided z threshold at family-wise level `2 (1 - Phi(sigmas))` split
/// over `tests` comparisons (Bonferroni).
pub fn corrected_z_threshold(sigmas: f64, tests: usize) -> f64 {
    let normal = Normal::standard();
    let alpha = 2.0 * (1.0 - normal.cdf(sigmas));
    normal.inverse_cdf(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub err_l1: f64,
    pub err_l2: f64,
    /// Measure error at the checkpoints; the last entry is at `T`.
    pub err_dbl: Vec<f64>,
    pub sup_moment2: f64,
    pub picard_iterations: usize,
    pub picard_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub beta: f64,
    pub n_beta: f64,
    pub seeds: usize,
    pub err_l1: f64,
    pub err_l1_se: f64,
    pub err_l2: f64,
    pub err_l2_se: f64,
    pub err_dbl: f64,
    pub err_dbl_se: f64,
    pub wall_ms: Option<u64>,
    pub checkpoint_times: Vec<f64>,
    pub checkpoint_dbl: Vec<f64>,
    pub sup_moment2: f64,
    pub sup_moment2_se: f64,
    pub runs: Vec<RunRecord>,
}

impl ConvergenceRow {
    pub fn l1_values(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.err_l1).collect()
    }

    fn csv_line(&self) -> String {
        let wall = self.wall_ms.map(|w| w.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.beta,
            self.n_beta,
            self.seeds,
            self.err_l1,
            self.err_l1_se,
            self.err_l2,
            self.err_l2_se,
            self.err_dbl,
            self.err_dbl_se,
            wall
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Theoretical envelope exponent `-1 / (2 (n + 1))`.
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dim: usize,
    pub rows: Vec<ConvergenceRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<RateFit>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn envelope(&self) -> f64 {
        -1.0 / (2.0 * (self.dim as f64 + 1.0))
    }
}

/// A `report.csv` row read back as numbers (`wall_ms` may be blank).
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub values: Vec<f64>,
    pub wall_ms: Option<u64>,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("report.csv header does not match the schema".into()));
    }
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 11 {
                return Err(Error::Parse(format!("expected 11 columns: {line}")));
            }
            let values = cols[..10]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::Parse(format!("{c}: {e}"))))
                .collect::<Result<_>>()?;
            let wall_ms = match cols[10] {
                "" => None,
                w => Some(w.parse().map_err(|e| Error::Parse(format!("{w}: {e}")))?),
            };
            Ok(CsvRow { values, wall_ms })
        })
        .collect()
}

/// Vertex positions and graph of the finite system, and the limit step graphon.
pub struct Setup {
    pub points: Vec<f64>,
    pub graph: InteractionGraph,
    pub g_limit: StepGraphon,
}

pub fn build_setup(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Setup> {
    let beta = cfg.schedule.beta(n);
    let policy = cfg.policy();
    let random = cfg.random_points;
    let points = if random {
        let mut p = sample_random_points(n, seed)?;
        p.truncate(n);
        p
    } else {
        GridSpec::new(n)?.points()
    };
    let g_finite = || -> Result<StepGraphon> {
        if random {
            discretize_at(&cfg.graphon, &points, policy)
        } else {
            discretize(&cfg.graphon, &GridSpec::new(n)?, policy)
        }
    };
    let graph = match cfg.mode {
        GraphMode::Deterministic => deterministic_graph_at(&g_finite()?, &points, beta)?,
        mode => sample_w_random_at(&cfg.graphon, &points, beta, mode, seed)?,
    };
    let blocks = cfg.blocks_for(n);
    let g_limit = if random {
        g_finite()?
    } else if let Graphon::Constant(c) = cfg.graphon {
        StepGraphon::equal(vec![vec![c; blocks]; blocks])?
    } else if blocks == n {
        g_finite()?
    } else {
        discretize(&cfg.graphon, &GridSpec::new(blocks)?, policy)?
    };
    Ok(Setup { points, graph, g_limit })
}

fn checkpoint_steps(grid: &TimeGrid) -> Vec<usize> {
    (1..=CHECKPOINTS).map(|j| j * grid.steps / CHECKPOINTS).collect()
}

fn run_single(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<RunRecord> {
    let setup = build_setup(cfg, n, seed)?;
    let model = &cfg.model;
    let grid = cfg.grid;
    let driver = BrownianDriver::new(seed, &grid, model.dim_noise());
    let x0 = cfg.initial.sample_coupled(&setup.points, seed);
    let finite = simulate_particle_system(&setup.graph, model, &x0, &grid, &driver)?;
    let samples = cfg.samples_for(n, setup.g_limit.blocks());
    let LimitSolution { laws, state } =
        solve_graphon_sde(&setup.g_limit, model, &cfg.initial, &grid, &cfg.picard_options(samples, seed), &driver)?;
    let keys: Vec<ParticleKey> = (0..n as u64).map(ParticleKey::coupled).collect::<Result<_>>()?;
    let limit = coupled_limit_trajectories(&laws, &setup.g_limit, model, &x0, &setup.points, &driver, &keys)?;
    let me = MeasureErrorOptions {
        vertices: cfg.measure_error.vertices,
        atom_cap: cfg.measure_error.atom_cap,
        seed,
    };
    let err_dbl = checkpoint_steps(&grid)
        .into_iter()
        .map(|k| measure_error(&setup.graph, finite.step_states(k), &laws, &setup.g_limit, k, &me))
        .collect::<Result<_>>()?;
    Ok(RunRecord {
        seed,
        err_l1: coupling_error(&finite, &limit, 1.0)?.value,
        err_l2: coupling_error(&finite, &limit, 2.0)?.value,
        err_dbl,
        sup_moment2: particle_moments(&finite, 2.0)?.sup_moment,
        picard_iterations: state.iterations,
        picard_converged: state.converged,
    })
}

/// Convergence sweep over `n_list`; `on_row` sees the report after each row.
pub fn run_convergence_with(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(&ConvergenceReport) -> Result<()>,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let mut report = ConvergenceReport {
        dim: cfg.model.dim,
        rows: Vec::new(),
        fit: None,
    };
    for &n in &cfg.n_list {
        let start = Instant::now();
        let runs: Vec<RunRecord> = cfg.seeds.par_iter().map(|&s| run_single(cfg, n, s)).collect::<Result<_>>()?;
        let stat = |f: &dyn Fn(&RunRecord) -> f64| mean_se(&runs.iter().map(f).collect::<Vec<_>>());
        let (l1, l1_se) = stat(&|r| r.err_l1);
        let (l2, l2_se) = stat(&|r| r.err_l2);
        let (dbl, dbl_se) = stat(&|r| *r.err_dbl.last().expect("checkpoints"));
        let (m2, m2_se) = stat(&|r| r.sup_moment2);
        let checkpoint_dbl = (0..CHECKPOINTS).map(|j| stat(&|r| r.err_dbl[j]).0).collect();
        let beta = cfg.schedule.beta(n);
        report.rows.push(ConvergenceRow {
            n,
            beta,
            n_beta: n as f64 * beta,
            seeds: runs.len(),
            err_l1: l1,
            err_l1_se: l1_se,
            err_l2: l2,
            err_l2_se: l2_se,
            err_dbl: dbl,
            err_dbl_se: dbl_se,
            wall_ms: cfg.wall_clock.then(|| start.elapsed().as_millis() as u64),
            checkpoint_times: checkpoint_steps(&cfg.grid).iter().map(|&k| cfg.grid.time(k)).collect(),
            checkpoint_dbl,
            sup_moment2: m2,
            sup_moment2_se: m2_se,
            runs,
        });
        on_row(&report)?;
    }
    Ok(report)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    run_convergence_with(cfg, |_| Ok(()))
}

/// Least squares of `log err_l1` on `log(N beta_N)`.
pub fn estimate_rate(report: &ConvergenceReport) -> Result<RateFit> {
    if report.rows.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} rows, need at least 4", report.rows.len())));
    }
    if let Some(r) = report.rows.iter().find(|r| !(r.err_l1 > 0.0) || !(r.n_beta > 0.0)) {
        return Err(Error::DegenerateFit(format!("non-positive error or N beta at N = {}", r.n)));
    }
    let xs: Vec<f64> = report.rows.iter().map(|r| r.n_beta.ln()).collect();
    let ys: Vec<f64> = report.rows.iter().map(|r| r.err_l1.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys)?;
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        envelope: report.envelope(),
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0) {
        return Err(Error::DegenerateFit("all abscissae are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, intercept, r2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub dist_l2: f64,
    pub gap: f64,
    pub gap_se: f64,
    /// `gap / dist_l2^2`; undefined when the graphons coincide.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub blocks: usize,
    pub samples: usize,
    pub rows: Vec<StabilityRow>,
    /// `(max ratio - min ratio) / min ratio` over rows with a ratio.
    pub spread: Option<f64>,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,dist_l2,gap,gap_se,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.eps, r.dist_l2, r.gap, r.gap_se, ratio);
        }
        s
    }
}

/// Limit laws for `g` and for each bump `g + eps`, solved on shared
/// auxiliary noise; reports the mean-square sup gap against `||g - h||_2^2`.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let n = cfg.n_list[0];
    let blocks = cfg.blocks_for(n);
    let g = if let Graphon::Constant(c) = cfg.graphon {
        StepGraphon::equal(vec![vec![c; blocks]; blocks])?
    } else {
        discretize(&cfg.graphon, &GridSpec::new(blocks)?, cfg.policy())?
    };
    let samples = cfg.samples_for(n, blocks);
    let bumped: Vec<StepGraphon> = cfg.perturbations.iter().map(|&e| g.shifted(e)).collect::<Result<_>>()?;
    let gaps: Vec<Vec<f64>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let driver = BrownianDriver::new(seed, &cfg.grid, cfg.model.dim_noise());
            let opts = cfg.picard_options(samples, seed);
            let base = solve_graphon_sde(&g, &cfg.model, &cfg.initial, &cfg.grid, &opts, &driver)?;
            bumped
                .iter()
                .map(|h| {
                    let other = solve_graphon_sde(h, &cfg.model, &cfg.initial, &cfg.grid, &opts, &driver)?;
                    Ok(coupling_error(base.laws.paths(), other.laws.paths(), 2.0)?.value)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StabilityRow> = cfg
        .perturbations
        .iter()
        .zip(&bumped)
        .enumerate()
        .map(|(j, (&eps, h))| {
            let (gap, gap_se) = mean_se(&gaps.iter().map(|v| v[j]).collect::<Vec<_>>());
            let dist = g.lp_distance(h, 2.0);
            StabilityRow {
                eps,
                dist_l2: dist,
                gap,
                gap_se,
                ratio: (dist > 0.0).then(|| gap / (dist * dist)),
            }
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let spread = (!ratios.is_empty()).then(|| {
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    });
    Ok(StabilityReport {
        blocks,
        samples,
        rows,
        spread,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WllnRow {
    pub n: usize,
    pub seeds: usize,
    /// `|(1/N) sum_i X^i_T - (1/K) sum_b mean of block b at T|` per seed.
    pub diffs: Vec<f64>,
    /// `d_BL` between the empirical measure and the block-law mixture per seed.
    pub dbl: Vec<f64>,
    /// Fraction of seeds with `diff > eta`, one per `eta`.
    pub exceed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WllnReport {
    pub eta: Vec<f64>,
    pub rows: Vec<WllnRow>,
}

impl WllnReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,seeds,diff,diff_se,dbl,dbl_se");
        for e in &self.eta {
            let _ = write!(s, ",exceed_{e}");
        }
        s.push('\n');
        for r in &self.rows {
            let (d, dse) = mean_se(&r.diffs);
            let (b, bse) = mean_se(&r.dbl);
            let _ = write!(s, "{},{},{d},{dse},{b},{bse}", r.n, r.seeds);
            for f in &r.exceed {
                let _ = write!(s, ",{f}");
            }
            s.push('\n');
        }
        s
    }
}

fn equal_weight(dim: usize, flat: &[f64], total: f64) -> Result<DiscreteMeasure> {
    let k = flat.len() / dim;
    DiscreteMeasure::from_flat(dim, flat.to_vec(), vec![total / k as f64; k])
}

pub fn run_wlln(cfg: &ExperimentConfig) -> Result<WllnReport> {
    cfg.validate()?;
    let eta = if cfg.eta.is_empty() { vec![0.05, 0.1, 0.2] } else { cfg.eta.clone() };
    let dim = cfg.model.dim;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let per_seed: Vec<(f64, f64)> = cfg
            .seeds
            .par_iter()
            .map(|&seed| -> Result<(f64, f64)> {
                let setup = build_setup(cfg, n, seed)?;
                let driver = BrownianDriver::new(seed, &cfg.grid, cfg.model.dim_noise());
                let x0 = cfg.initial.sample_coupled(&setup.points, seed);
                let finite = simulate_particle_system(&setup.graph, &cfg.model, &x0, &cfg.grid, &driver)?;
                let samples = cfg.samples_for(n, setup.g_limit.blocks());
                let sol = solve_graphon_sde(
                    &setup.g_limit,
                    &cfg.model,
                    &cfg.initial,
                    &cfg.grid,
                    &cfg.picard_options(samples, seed),
                    &driver,
                )?;
                let last = cfg.grid.steps;
                let states = finite.step_states(last);
                let k = sol.laws.blocks();
                let mut diff2 = 0.0;
                for d in 0..dim {
                    let fin = states.iter().skip(d).step_by(dim).sum::<f64>() / n as f64;
                    let lim = (0..k).map(|b| sol.laws.block_mean(last, b)[d]).sum::<f64>() / k as f64;
                    diff2 += (fin - lim).powi(2);
                }
                let cap = cfg.measure_error.atom_cap;
                let empirical = resample(&equal_weight(dim, states, 1.0)?, cap, 0.5);
                let mixture = resample(&equal_weight(dim, sol.laws.paths().step_states(last), 1.0)?, cap, 0.5);
                Ok((diff2.sqrt(), dbl_exact(&empirical, &mixture)?))
            })
            .collect::<Result<_>>()?;
        let diffs: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
        let exceed = eta
            .iter()
            .map(|&e| diffs.iter().filter(|&&d| d > e).count() as f64 / diffs.len() as f64)
            .collect();
        rows.push(WllnRow {
            n,
            seeds: diffs.len(),
            dbl: per_seed.iter().map(|p| p.1).collect(),
            diffs,
            exceed,
        });
    }
    Ok(WllnReport { eta, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Convergence(ConvergenceReport),
    Stability(StabilityReport),
    Wlln(WllnReport),
}

impl Report {
    pub fn to_csv(&self) -> String {
        match self {
            Report::Convergence(r) => r.to_csv(),
            Report::Stability(r) => r.to_csv(),
            Report::Wlln(r) => r.to_csv(),
        }
    }
}

/// Runs the experiment named by `cfg.kind`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.kind {
        ExperimentKind::Converge | ExperimentKind::Moments => Ok(Report::Convergence(run_convergence(cfg)?)),
        ExperimentKind::Rate => {
            let mut report = run_convergence(cfg)?;
            report.fit = Some(estimate_rate(&report)?);
            Ok(Report::Convergence(report))
        }
        ExperimentKind::Stability => Ok(Report::Stability(run_stability(cfg)?)),
        ExperimentKind::Wlln => Ok(Report::Wlln(run_wlln(cfg)?)),
    }
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta<'a> {
    pub config: &'a ExperimentConfig,
    pub seeds: &'a [u64],
    pub git_describe: String,
    pub config_hash: String,
    pub version: &'static str,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv`, `meta.json`, `summary.json` and `plot.svg` into `dir`.
pub fn emit_report(report: &Report, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    let meta = Meta {
        config: cfg,
        seeds: &cfg.seeds,
        git_describe: git_describe(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_file(&dir.join("meta.json"), &serde_json::to_string_pretty(&meta)?)?;
    write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(report)?)?;
    write_file(&dir.join("plot.svg"), &plot_svg(report))?;
    Ok(())
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn plot_svg(report: &Report) -> String {
    match report {
        Report::Convergence(r) => {
            let series = |label: &str, f: fn(&ConvergenceRow) -> f64| Series {
                label: label.into(),
                points: r.rows.iter().map(|row| (row.n_beta, f(row))).collect(),
            };
            let all = vec![
                series("err_l1", |row| row.err_l1),
                series("err_l2", |row| row.err_l2),
                series("err_dbl", |row| row.err_dbl),
            ];
            let denom = 2 * (r.dim + 1);
            loglog_svg(&all, Some((r.envelope(), format!("envelope slope -1/{denom}"))), "N beta_N", "error")
        }
        Report::Stability(r) => {
            let s = Series {
                label: "gap".into(),
                points: r.rows.iter().map(|row| (row.dist_l2, row.gap)).collect(),
            };
            loglog_svg(&[s], Some((2.0, "reference slope 2".into())), "||g - h||_2", "mean-square gap")
        }
        Report::Wlln(r) => {
            let s = Series {
                label: "diff".into(),
                points: r.rows.iter().map(|row| (row.n as f64, mean_se(&row.diffs).0)).collect(),
            };
            loglog_svg(&[s], None, "N", "mean |difference|")
        }
    }
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Self-contained log-log line plot. Non-positive points are dropped; the
/// optional envelope is a dashed line of the given slope through the first
/// point of the first series.
pub fn loglog_svg(series: &[Series], envelope: Option<(f64, String)>, xlabel: &str, ylabel: &str) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let flat: Vec<&(f64, f64)> = pts.iter().flatten().collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{xlabel} (log10)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel} (log10)</text>"#,
        h / 2.0,
        h / 2.0
    );
    if flat.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, w / 2.0, h / 2.0);
        s.push_str("</svg>\n");
        return s;
    }
    let (mut x0, mut x1) = flat.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = flat.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        s,
        r#"<polyline points="{},{} {},{} {},{}" fill="none" stroke="black"/>"#,
        pad,
        pad,
        pad,
        h - pad,
        w - pad,
        h - pad
    );
    for (tick, v) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, r#"<text x="{v:.1}" y="{}" font-size="11" text-anchor="middle">{tick:.2}</text>"#, h - pad + 16.0);
    }
    for (tick, v) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{v:.1}" font-size="11" text-anchor="end">{tick:.2}</text>"#, pad - 4.0);
    }
    for (k, (p, ser)) in pts.iter().zip(series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for (x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(*x), sy(*y));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - pad - 110.0,
            pad + 16.0 * k as f64,
            ser.label
        );
    }
    if let (Some((slope, label)), Some(&(ax, ay))) = (envelope, pts.first().and_then(|p| p.first())) {
        let ey = |x: f64| ay + slope * (x - ax);
        let _ = writeln!(
            s,
            r#"<line class="envelope" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6,4"/>"#,
            sx(x0),
            sy(ey(x0)),
            sx(x1),
            sy(ey(x1))
        );
        let _ = writeln!(
            s,
            r#"<text class="envelope-label" x="{}" y="{}" font-size="12" fill="gray">{label}</text>"#,
            pad + 10.0,
            pad - 20.0
        );
    }
    s.push_str("</svg>\n");
    s
}
