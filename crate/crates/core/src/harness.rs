//! Runtime sweeps, scaling fits, comparison reports, configuration files and plot data.
//!
//! Every experiment reads a TOML file. Sweep results persist as JSON so reports can be
//! regenerated without re-running the evolutions; all tabular output is CSV with `#`
//! comment lines describing the columns.

use crate::apt::AptBreakdown;
use crate::error::{Error, Result};
use crate::estimators::{
    branch_resolve, branch_t1, branch_t_max, full_qpe_pipeline, BranchConfig, EigenPhases, Estimate, EstimateSeries,
    OverlapPhases, PhaseSourceKind, PipelineConfig, PipelineResult, RichardsonScheme,
};
use crate::hamiltonians::{LoopHamiltonian, ModelSpec};
use crate::linalg::wrap_2pi;
use crate::measure::{hadamard_pipeline, HadamardConfig, HadamardResult, QpePhases};
use crate::numerics::{fit_power, geometric_grid, rms};
use crate::propagate::{Direction, PropagationConfig};
use crate::randomize::{
    bias_prediction_exact, exact_bias, lifted_estimate, nearest_branch, randomized_richardson, richardson_at,
    RuntimeDistribution,
};
use crate::response::{DirectOverlaps, OverlapSource, ResponseTable};
use crate::rng::derive_seed;
use crate::spectral::{berry_phase_oracle, decompose, SpectralConfig, SpectralFrame};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Fits with a log10 residual RMS above this are flagged unreliable.
pub const RELIABLE_RMS: f64 = 0.2;

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol_prop: Option<f64>,
    pub grid: Option<usize>,
}

impl Overrides {
    fn apply(&self, seed: &mut u64, propagation: &mut PropagationConfig, spectral: &mut SpectralConfig) {
        if let Some(s) = self.seed {
            *seed = s;
        }
        if let Some(t) = self.tol_prop {
            propagation.tol = t;
        }
        if let Some(g) = self.grid {
            spectral.grid = g;
        }
    }
}

fn check_common(propagation: &PropagationConfig, spectral: &SpectralConfig) -> Result<()> {
    if !(propagation.tol > 0.0 && propagation.tol < 1.0) {
        return Err(Error::Config(format!("propagation tolerance must lie in (0, 1), got {}", propagation.tol)));
    }
    if spectral.grid < 16 {
        return Err(Error::Config(format!("spectral grid needs at least 16 intervals, got {}", spectral.grid)));
    }
    Ok(())
}

/// A built model with its eigenframe and theory predictions.
pub struct Experiment {
    pub spec: ModelSpec,
    pub h: LoopHamiltonian,
    pub frame: SpectralFrame,
    pub apt: AptBreakdown,
    pub oracle: f64,
    pub propagation: PropagationConfig,
}

impl Experiment {
    pub fn new(spec: &ModelSpec, spectral: &SpectralConfig, propagation: &PropagationConfig) -> Result<Experiment> {
        check_common(propagation, spectral)?;
        let h = spec.build()?;
        let frame = decompose(&h, spectral)?;
        let apt = AptBreakdown::new(&frame);
        let oracle = berry_phase_oracle(&frame, 0);
        Ok(Experiment { spec: spec.clone(), h, frame, apt, oracle, propagation: propagation.clone() })
    }

    pub fn direct(&self) -> DirectOverlaps<'_> {
        DirectOverlaps::new(&self.h, &self.frame, self.propagation.clone())
    }

    pub fn table(&self, t_lo: f64, t_hi: f64, nodes: usize) -> Result<ResponseTable> {
        ResponseTable::build(&self.h, &self.frame, t_lo, t_hi, nodes, &self.propagation)
    }

    /// Coarse estimate from exact overlaps, used to lift sweep estimates.
    pub fn coarse(&self, cfg: &BranchConfig) -> Result<f64> {
        let direct = self.direct();
        Ok(branch_resolve(&mut OverlapPhases::new(&direct), &self.frame, cfg)?.coarse)
    }

    /// Period `2 pi / omega_1` of the slowest oscillation.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.frame.frequency(1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuntimeGrid {
    pub start: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_ratio() -> f64 {
    2f64.powf(1.0 / 3.0)
}
fn default_count() -> usize {
    13
}
fn default_order() -> usize {
    1
}
fn default_alpha() -> f64 {
    2.0
}
fn default_window_points() -> usize {
    16
}
fn default_periods() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_nodes() -> usize {
    24
}

impl RuntimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.start.is_finite()) || !(self.ratio > 1.0) {
            return Err(Error::Config(format!("runtime grid must start above 0 and grow: start {}, ratio {}", self.start, self.ratio)));
        }
        if self.count < 4 {
            return Err(Error::Config(format!("runtime grid needs at least 4 points for a fit, got {}", self.count)));
        }
        Ok(())
    }

    pub fn runtimes(&self) -> Vec<f64> {
        geometric_grid(self.start, self.ratio, self.count)
    }
}

/// Which estimator runs at each grid point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stack {
    /// Forward evolution only, dynamical phase subtracted by quadrature.
    Single,
    FwdRev,
    Richardson {
        #[serde(default = "default_order")]
        m: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Randomized {
        #[serde(default = "default_order")]
        m: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        distribution: RuntimeDistribution,
        samples: usize,
        /// Replace sampling by quadrature over the distribution.
        #[serde(default)]
        exact: bool,
    },
}

impl Stack {
    pub fn label(&self) -> String {
        match self {
            Stack::Single => "single".into(),
            Stack::FwdRev => "fwd-rev".into(),
            Stack::Richardson { m, alpha } => format!("richardson(m={m},alpha={alpha})"),
            Stack::Randomized { m, alpha, distribution, samples, exact } => format!(
                "randomized(m={m},alpha={alpha},{:?},lambda={},N={}{})",
                distribution.kind,
                distribution.lambda,
                samples,
                if *exact { ",exact" } else { "" }
            ),
        }
    }

    fn scheme(&self) -> Result<Option<RichardsonScheme>> {
        match self {
            Stack::Richardson { m, alpha } | Stack::Randomized { m, alpha, .. } => Ok(Some(RichardsonScheme::new(*alpha, *m)?)),
            _ => Ok(None),
        }
    }

    fn validate(&self) -> Result<()> {
        self.scheme()?;
        if let Stack::Randomized { distribution, samples, .. } = self {
            distribution.validate()?;
            if *samples == 0 {
                return Err(Error::Config("randomized stack needs samples >= 1".into()));
            }
        }
        Ok(())
    }

    /// Runtime multipliers an estimate at `T` touches, as `(lowest, highest)`.
    fn reach(&self) -> (f64, f64) {
        match self {
            Stack::Single | Stack::FwdRev => (1.0, 1.0),
            Stack::Richardson { m, alpha } => (1.0, alpha.powi(*m as i32)),
            Stack::Randomized { m, alpha, distribution, .. } => {
                (1.0 - distribution.lambda, alpha.powi(*m as i32) * (1.0 + distribution.lambda))
            }
        }
    }

    /// Total evolved time for one estimate at base runtime `T`, in units of `T`.
    pub fn cost_factor(&self) -> f64 {
        match self {
            Stack::Single => 1.0,
            Stack::FwdRev => 2.0,
            Stack::Richardson { m, alpha } => 2.0 * (0..=*m).map(|k| alpha.powi(k as i32)).sum::<f64>(),
            Stack::Randomized { m, alpha, samples, .. } => {
                2.0 * *samples as f64 * (0..=*m).map(|k| alpha.powi(k as i32)).sum::<f64>()
            }
        }
    }
}

/// Running RMS over a window of slow periods around every grid point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowConfig {
    #[serde(default = "default_window_points")]
    pub points: usize,
    /// Window length in units of `2 pi / omega_1`.
    #[serde(default = "default_periods")]
    pub periods: f64,
    /// Subtract the predicted oscillatory part before averaging.
    #[serde(default = "default_true")]
    pub subtract: bool,
}

impl WindowConfig {
    pub fn length(&self, period: f64) -> f64 {
        self.periods * period
    }
}

/// Dense uniform runtime grid for the residual spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
}

/// Tabulate return amplitudes instead of evolving at every requested runtime.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    pub grid: RuntimeGrid,
    pub stack: Stack,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub table: Option<TableConfig>,
    #[serde(default)]
    pub branch: BranchConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<SweepConfig> {
        let mut cfg: SweepConfig = load_toml(path)?;
        overrides.apply(&mut cfg.seed, &mut cfg.propagation, &mut cfg.spectral);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_common(&self.propagation, &self.spectral)?;
        self.grid.validate()?;
        self.stack.validate()?;
        if let Some(w) = &self.window {
            if w.points < 4 || !(w.periods > 0.0) {
                return Err(Error::Config("window needs at least 4 points and a positive length".into()));
            }
        }
        if let Some(s) = &self.spectrum {
            if !(s.t_lo > 0.0 && s.t_hi > s.t_lo) || s.points < 16 {
                return Err(Error::Config(format!("bad spectrum range [{}, {}] with {} points", s.t_lo, s.t_hi, s.points)));
            }
        }
        Ok(())
    }

    /// Runtime span the sweep will request, including windows and the spectrum grid.
    pub fn span(&self, period: f64) -> (f64, f64) {
        let ts = self.grid.runtimes();
        let (mut lo, mut hi) = (ts[0], ts[ts.len() - 1]);
        if let Some(w) = &self.window {
            lo -= w.length(period) / 2.0;
            hi += w.length(period) / 2.0;
        }
        if let Some(s) = &self.spectrum {
            lo = lo.min(s.t_lo);
            hi = hi.max(s.t_hi);
        }
        let (a, b) = self.stack.reach();
        (lo * a, hi * b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Raw,
    PeriodAveraged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// `log10` of the fitted coefficient.
    pub intercept: f64,
    pub coefficient: f64,
    pub residual_rms: f64,
    pub reliable: bool,
    pub window: WindowKind,
    /// Averaging window in `T`, when averaged.
    pub period: Option<f64>,
    pub points: usize,
}

impl ScalingFit {
    /// Least-squares slope of `log10 |err|` against `log10 T`.
    pub fn fit(runtimes: &[f64], errors: &[f64], window: WindowKind, period: Option<f64>) -> Option<ScalingFit> {
        let f = fit_power(runtimes, errors)?;
        let points = errors.iter().filter(|e| e.abs() > 0.0 && e.is_finite()).count();
        Some(ScalingFit {
            exponent: f.slope,
            intercept: f.intercept,
            coefficient: 10f64.powf(f.intercept),
            residual_rms: f.residual_rms,
            reliable: f.residual_rms < RELIABLE_RMS && points >= 4,
            window,
            period,
            points,
        })
    }

    /// Smallest runtime at which the fitted law reaches `epsilon`.
    pub fn runtime_for(&self, epsilon: f64) -> Option<f64> {
        (self.reliable && self.exponent < 0.0).then(|| (self.coefficient / epsilon).powf(-1.0 / self.exponent))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub runtime: f64,
    pub estimate: f64,
    /// `estimate - theta_B`.
    pub error: f64,
    /// Theory prediction of `error` through second order.
    pub predicted: f64,
    /// Oscillatory part of `predicted`.
    pub predicted_osc: f64,
    /// Standard error of a sampled estimate.
    pub se: Option<f64>,
    /// RMS of `error` (less `predicted_osc` unless disabled) over the window around `runtime`.
    pub averaged: Option<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensePoint {
    pub runtime: f64,
    pub error: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub label: String,
    pub stack: Stack,
    pub model: ModelSpec,
    pub seed: u64,
    pub theta_oracle: f64,
    pub coarse: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub omega1: f64,
    pub gap_min: f64,
    pub points: Vec<SweepPoint>,
    pub fit: Option<ScalingFit>,
    pub averaged_fit: Option<ScalingFit>,
    #[serde(default)]
    pub dense: Vec<DensePoint>,
    pub series: EstimateSeries,
}

impl SweepResult {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(self)?)?;
        self.series.write_csv(&dir.join("series.csv"))?;
        emit_plotdata(self, PlotKind::ErrorVsT, &dir.join("error_vs_t.csv"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SweepResult> {
        let file = if path.is_dir() { path.join("sweep.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", file.display())))
    }
}

struct StackRunner<'a, S: OverlapSource + ?Sized> {
    exp: &'a Experiment,
    source: &'a S,
    stack: &'a Stack,
    scheme: Option<RichardsonScheme>,
    coarse: f64,
    seed: u64,
}

impl<S: OverlapSource + ?Sized> StackRunner<'_, S> {
    /// Estimate and optional standard error at base runtime `t`.
    fn estimate(&self, t: f64, index: u64) -> Result<(f64, Option<f64>)> {
        match self.stack {
            Stack::Single => {
                let z = self.source.overlap(t, Direction::Forward)?;
                if z.norm() < 1e-6 {
                    return Err(Error::PhaseUndefined { s: 1.0, modulus: z.norm() });
                }
                let theta = wrap_2pi(z.arg() + t * self.exp.frame.mean_ground_energy());
                Ok((nearest_branch(theta, self.coarse), None))
            }
            Stack::FwdRev => Ok((lifted_estimate(self.source, t, self.coarse)?, None)),
            Stack::Richardson { .. } => Ok((richardson_at(self.source, self.scheme.as_ref().unwrap(), t, self.coarse)?, None)),
            Stack::Randomized { distribution, samples, exact, .. } => {
                let scheme = self.scheme.as_ref().unwrap();
                if *exact {
                    let band = self.exp.frame.max_frequency();
                    let b = exact_bias(self.source, distribution, t, scheme, self.coarse, self.exp.oracle, band)?;
                    Ok((self.exp.oracle + b, None))
                } else {
                    let seed = derive_seed(self.seed, "sweep-point", index);
                    let r = randomized_richardson(self.source, distribution, t, scheme, *samples, seed, self.coarse, self.exp.oracle)?;
                    Ok((r.mean, Some(r.se)))
                }
            }
        }
    }

    /// Signed error relative to the oracle.
    fn error(&self, estimate: f64) -> f64 {
        estimate - nearest_branch(self.exp.oracle, estimate)
    }

    /// `(full prediction, oscillatory part)`.
    fn predicted(&self, t: f64) -> (f64, f64) {
        let apt = &self.exp.apt;
        match self.stack {
            Stack::Single => (apt.phase_error(t, false), apt.phi2_osc(t, false) / (t * t)),
            Stack::FwdRev => (apt.fr_error(t), apt.fr_osc(t) / (t * t)),
            Stack::Richardson { .. } => {
                let s = self.scheme.as_ref().unwrap();
                let r = apt.richardson_residual(t, s.alpha, &s.weights);
                (r, r)
            }
            Stack::Randomized { distribution, .. } => {
                let b = bias_prediction_exact(apt, distribution, t, self.scheme.as_ref().unwrap());
                (b, b)
            }
        }
    }
}

/// Runs a sweep, building the model and an overlap source from the configuration. When an
/// output directory is configured the result is written there, including partial results
/// if a grid point fails.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let exp = Experiment::new(&cfg.model, &cfg.spectral, &cfg.propagation)?;
    match &cfg.table {
        Some(t) => {
            let (lo, hi) = cfg.span(exp.period());
            let table = exp.table(lo * 0.999, hi * 1.001, t.nodes)?;
            sweep_on(&exp, &table, cfg)
        }
        None => sweep_on(&exp, &exp.direct(), cfg),
    }
}

/// Sweep against a caller-supplied overlap source.
pub fn sweep_on<S: OverlapSource + ?Sized>(exp: &Experiment, source: &S, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let coarse = exp.coarse(&cfg.branch)?;
    let runner = StackRunner { exp, source, stack: &cfg.stack, scheme: cfg.stack.scheme()?, coarse, seed: cfg.seed };
    let period = exp.period();
    let ts = cfg.grid.runtimes();
    let outcomes: Vec<Result<SweepPoint>> = ts
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let (estimate, se) = runner.estimate(t, k as u64)?;
            let error = runner.error(estimate);
            let (predicted, predicted_osc) = runner.predicted(t);
            let averaged = match &cfg.window {
                Some(w) => {
                    let mut resid = Vec::with_capacity(w.points);
                    for j in 0..w.points {
                        let tj = t + w.length(period) * ((j as f64 + 0.5) / w.points as f64 - 0.5);
                        let idx = (k as u64 + 1) * 1_000_003 + j as u64;
                        let e = runner.error(runner.estimate(tj, idx)?.0);
                        resid.push(if w.subtract { e - runner.predicted(tj).1 } else { e });
                    }
                    Some(rms(&resid))
                }
                None => None,
            };
            Ok(SweepPoint { runtime: t, estimate, error, predicted, predicted_osc, se, averaged, cost: cfg.stack.cost_factor() * t })
        })
        .collect();
    let mut points = Vec::new();
    let mut failure = None;
    for o in outcomes {
        match o {
            Ok(p) => points.push(p),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let tag = cfg.stack.label();
    let mut series = EstimateSeries { theta_oracle: exp.oracle, points: Vec::new() };
    for (k, p) in points.iter().enumerate() {
        let lifted = crate::estimators::lift(p.estimate, coarse).unwrap_or(Estimate::unlifted(p.estimate));
        let est = Estimate { value: p.estimate, branch: lifted.branch };
        series.push(p.runtime, &est, &tag, derive_seed(cfg.seed, "sweep-point", k as u64));
    }
    let mut dense = Vec::new();
    if failure.is_none() {
        if let Some(s) = &cfg.spectrum {
            let h = (s.t_hi - s.t_lo) / (s.points - 1) as f64;
            let res: Vec<Result<DensePoint>> = (0..s.points)
                .into_par_iter()
                .map(|j| {
                    let t = s.t_lo + h * j as f64;
                    let e = runner.error(runner.estimate(t, 2_000_000_011 + j as u64)?.0);
                    Ok(DensePoint { runtime: t, error: e, predicted: runner.predicted(t).0 })
                })
                .collect();
            for r in res {
                match r {
                    Ok(d) => dense.push(d),
                    Err(e) => {
                        failure.get_or_insert(e);
                        break;
                    }
                }
            }
        }
    }
    let rt: Vec<f64> = points.iter().map(|p| p.runtime).collect();
    let err: Vec<f64> = points.iter().map(|p| p.error).collect();
    let fit = ScalingFit::fit(&rt, &err, WindowKind::Raw, None);
    let averaged_fit = if cfg.window.is_some() {
        let av: Vec<f64> = points.iter().map(|p| p.averaged.unwrap_or(0.0)).collect();
        ScalingFit::fit(&rt, &av, WindowKind::PeriodAveraged, cfg.window.as_ref().map(|w| w.length(period)))
    } else {
        None
    };
    let coefficients = &exp.apt.coefficients;
    let result = SweepResult {
        label: cfg.label.clone().unwrap_or_else(|| tag.clone()),
        stack: cfg.stack.clone(),
        model: cfg.model.clone(),
        seed: cfg.seed,
        theta_oracle: exp.oracle,
        coarse,
        phi1: coefficients.phi1,
        phi2: coefficients.phi2,
        omega1: exp.frame.frequency(1),
        gap_min: exp.frame.gap_min,
        points,
        fit,
        averaged_fit,
        dense,
        series,
    };
    if let Some(dir) = &cfg.output {
        if failure.is_some() {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("partial.json"), serde_json::to_string_pretty(&result)?)?;
        } else {
            result.save(dir)?;
        }
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub exponent: Option<f64>,
    pub coefficient: Option<f64>,
    pub residual_rms: Option<f64>,
    pub reliable: bool,
    pub averaged_exponent: Option<f64>,
    /// The same fit applied to the theory prediction on the same grid.
    pub predicted_exponent: Option<f64>,
    pub predicted_coefficient: Option<f64>,
    pub cost_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub epsilon: f64,
    /// Evolved time per estimate for each sweep, from its fitted law.
    pub costs: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub theta_oracle: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub rows: Vec<ComparisonRow>,
    pub cost: Vec<CostRow>,
    /// Largest accuracy target below which forward-reverse is cheaper than a single
    /// evolution, when both sweeps are present.
    pub crossover: Option<f64>,
}

fn cost_at(r: &SweepResult, epsilon: f64) -> Option<f64> {
    r.fit.as_ref()?.runtime_for(epsilon).map(|t| t * r.stack.cost_factor())
}

/// Solves `cost_fr(eps) = cost_single(eps)` by bisection in `log eps`.
fn crossover(single: &SweepResult, fr: &SweepResult, lo: f64, hi: f64) -> Option<f64> {
    let diff = |e: f64| Some(cost_at(fr, e)?.ln() - cost_at(single, e)?.ln());
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (da, db) = (diff(lo)?, diff(hi)?);
    if da >= 0.0 {
        return None;
    }
    if db < 0.0 {
        return Some(hi);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if diff(m.exp())? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some((0.5 * (a + b)).exp())
}

pub fn compare_report(sweeps: &[SweepResult]) -> Result<Comparison> {
    if sweeps.is_empty() {
        return Err(Error::Config("compare needs at least one sweep; got none".into()));
    }
    if sweeps.len() < 2 {
        return Err(Error::Config("compare needs at least two sweeps".into()));
    }
    let model = &sweeps[0].model;
    if let Some(other) = sweeps.iter().find(|s| &s.model != model) {
        return Err(Error::Config(format!("sweeps are on different models: {:?} vs {:?}", model, other.model)));
    }
    let rows = sweeps
        .iter()
        .map(|s| {
            let rt: Vec<f64> = s.points.iter().map(|p| p.runtime).collect();
            let pred: Vec<f64> = s.points.iter().map(|p| p.predicted).collect();
            let pf = ScalingFit::fit(&rt, &pred, WindowKind::Raw, None);
            ComparisonRow {
                label: s.label.clone(),
                exponent: s.fit.as_ref().map(|f| f.exponent),
                coefficient: s.fit.as_ref().map(|f| f.coefficient),
                residual_rms: s.fit.as_ref().map(|f| f.residual_rms),
                reliable: s.fit.as_ref().is_some_and(|f| f.reliable),
                averaged_exponent: s.averaged_fit.as_ref().map(|f| f.exponent),
                predicted_exponent: pf.as_ref().map(|f| f.exponent),
                predicted_coefficient: pf.as_ref().map(|f| f.coefficient),
                cost_factor: s.stack.cost_factor(),
            }
        })
        .collect();
    let epsilons: Vec<f64> = (0..=28).map(|k| 10f64.powf(-1.0 - k as f64 / 4.0)).collect();
    let cost = epsilons
        .iter()
        .map(|&e| CostRow { epsilon: e, costs: sweeps.iter().map(|s| cost_at(s, e)).collect() })
        .collect();
    let single = sweeps.iter().find(|s| matches!(s.stack, Stack::Single));
    let fr = sweeps.iter().find(|s| matches!(s.stack, Stack::FwdRev));
    let crossover = match (single, fr) {
        (Some(a), Some(b)) => crossover(a, b, epsilons[epsilons.len() - 1], epsilons[0]),
        _ => None,
    };
    Ok(Comparison {
        model: serde_json::to_string(model)?,
        theta_oracle: sweeps[0].theta_oracle,
        phi1: sweeps[0].phi1,
        phi2: sweeps[0].phi2,
        rows,
        cost,
        crossover,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into())
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model: {}\n", self.model));
        s.push_str(&format!("theta_B (Wilson loop): {:.12}\n", self.theta_oracle));
        s.push_str(&format!("phi1 = {:.6}, phi2 (non-oscillatory) = {:.6}\n\n", self.phi1, self.phi2));
        s.push_str(&format!(
            "{:<48} {:>10} {:>14} {:>8} {:>9} {:>10} {:>10} {:>14}\n",
            "stack", "exponent", "coefficient", "rms", "reliable", "averaged", "theory", "theory coef"
        ));
        for r in &self.rows {
            let exp = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{:<48} {:>10} {:>14} {:>8} {:>9} {:>10} {:>10} {:>14}\n",
                r.label,
                exp(r.exponent),
                fmt_opt(r.coefficient),
                r.residual_rms.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                r.reliable,
                exp(r.averaged_exponent),
                exp(r.predicted_exponent),
                fmt_opt(r.predicted_coefficient),
            ));
        }
        s.push_str("\ncost at accuracy (evolved time per estimate)\n");
        s.push_str(&format!("{:>12}", "epsilon"));
        for r in &self.rows {
            s.push_str(&format!(" {:>16}", truncate(&r.label, 16)));
        }
        s.push('\n');
        for c in &self.cost {
            s.push_str(&format!("{:>12.3e}", c.epsilon));
            for v in &c.costs {
                s.push_str(&format!(" {:>16}", v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())));
            }
            s.push('\n');
        }
        match self.crossover {
            Some(e) => s.push_str(&format!("\nfwd-rev is cheaper than single evolution for epsilon < {e:.4e}\n")),
            None => s.push_str("\nno fwd-rev / single crossover in range\n"),
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.txt"), self.to_text())?;
        let mut f = std::fs::File::create(dir.join("comparison.csv"))?;
        writeln!(f, "# one row per sweep; exponents are log-log slopes of |error| against T")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record([
            "label",
            "exponent",
            "coefficient",
            "residual_rms",
            "reliable",
            "averaged_exponent",
            "predicted_exponent",
            "predicted_coefficient",
            "cost_factor",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                fmt_opt(r.exponent),
                fmt_opt(r.coefficient),
                fmt_opt(r.residual_rms),
                r.reliable.to_string(),
                fmt_opt(r.averaged_exponent),
                fmt_opt(r.predicted_exponent),
                fmt_opt(r.predicted_coefficient),
                format!("{:.6e}", r.cost_factor),
            ])?;
        }
        w.flush()?;
        let mut f = std::fs::File::create(dir.join("cost.csv"))?;
        writeln!(f, "# evolved time per estimate needed to reach epsilon, one column per sweep")?;
        let mut w = csv::Writer::from_writer(f);
        let mut header = vec!["epsilon".to_string()];
        header.extend(self.rows.iter().map(|r| r.label.clone()));
        w.write_record(&header)?;
        for c in &self.cost {
            let mut rec = vec![format!("{:.6e}", c.epsilon)];
            rec.extend(c.costs.iter().map(|v| fmt_opt(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    ErrorVsT,
    BiasVsT,
    ResidualSpectrum,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<PlotKind> {
        match s {
            "error-vs-t" | "error-vs-T" => Ok(PlotKind::ErrorVsT),
            "bias-vs-t" | "bias-vs-T" => Ok(PlotKind::BiasVsT),
            "residual-spectrum" => Ok(PlotKind::ResidualSpectrum),
            _ => Err(Error::Config(format!("unknown plot kind {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBin {
    /// Angular frequency in `T`.
    pub omega: f64,
    pub magnitude: f64,
}

/// Hann-windowed DFT of `T^2 r(T)` on a uniform runtime grid, non-negative frequencies only.
pub fn residual_spectrum(dense: &[DensePoint]) -> Result<Vec<SpectrumBin>> {
    let n = dense.len();
    if n < 16 {
        return Err(Error::Config(format!("residual spectrum needs a dense grid, got {n} points")));
    }
    let h = (dense[n - 1].runtime - dense[0].runtime) / (n - 1) as f64;
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = dense
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let hann = 0.5 - 0.5 * (2.0 * PI * j as f64 / (n - 1) as f64).cos();
            rustfft::num_complex::Complex::new(hann * d.runtime * d.runtime * d.error, 0.0)
        })
        .collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok((0..=n / 2)
        .map(|k| SpectrumBin { omega: 2.0 * PI * k as f64 / (n as f64 * h), magnitude: buf[k].norm() / n as f64 })
        .collect())
}

fn f17(x: f64) -> String {
    format!("{x:.17e}")
}

/// Writes one tidy CSV for plotting.
pub fn emit_plotdata(result: &SweepResult, kind: PlotKind, path: &Path) -> Result<()> {
    if result.points.is_empty() {
        return Err(Error::Config("nothing to plot: sweep has no points".into()));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# {} on {}", result.label, serde_json::to_string(&result.model)?)?;
    match kind {
        PlotKind::ErrorVsT => {
            writeln!(f, "# runtime: T; abs_err: |estimate - theta_B|; predicted: theory error; averaged: period RMS of error minus oscillatory prediction")?;
            let mut w = csv::Writer::from_writer(f);
            w.write_record(["runtime", "estimate", "abs_err", "predicted", "averaged", "cost"])?;
            for p in &result.points {
                w.write_record([f17(p.runtime), f17(p.estimate), f17(p.error.abs()), f17(p.predicted), p.averaged.map(f17).unwrap_or_default(), f17(p.cost)])?;
            }
            w.flush()?;
        }
        PlotKind::BiasVsT => {
            writeln!(f, "# runtime: T; bias: estimate - theta_B; se: standard error (empty when exact); predicted_bias: theory")?;
            let mut w = csv::Writer::from_writer(f);
            w.write_record(["runtime", "bias", "se", "predicted_bias"])?;
            for p in &result.points {
                w.write_record([f17(p.runtime), f17(p.error), p.se.map(f17).unwrap_or_default(), f17(p.predicted)])?;
            }
            w.flush()?;
        }
        PlotKind::ResidualSpectrum => {
            let spec = residual_spectrum(&result.dense)?;
            let peak = spec.iter().map(|b| b.magnitude).fold(0.0, f64::max);
            writeln!(f, "# omega: angular frequency in T; cycles: omega / 2pi; magnitude: |DFT of T^2 residual| (Hann window); relative: magnitude / peak")?;
            writeln!(f, "# omega_1 = {:.17e}, gap_min = {:.17e}", result.omega1, result.gap_min)?;
            let mut w = csv::Writer::from_writer(f);
            w.write_record(["omega", "cycles", "magnitude", "relative"])?;
            for b in &spec {
                let rel = if peak > 0.0 { b.magnitude / peak } else { 0.0 };
                w.write_record([f17(b.omega), f17(b.omega / (2.0 * PI)), f17(b.magnitude), f17(rel)])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default = "default_source")]
    pub source: PhaseSourceKind,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Accuracy targets to run; defaults to the pipeline's own.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_repetitions")]
    pub qpe_repetitions: usize,
}

fn default_source() -> PhaseSourceKind {
    PhaseSourceKind::ExactOverlap
}
fn default_trials() -> usize {
    1
}
fn default_repetitions() -> usize {
    3
}

impl EstimateConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<EstimateConfig> {
        let mut cfg: EstimateConfig = load_toml(path)?;
        overrides.apply(&mut cfg.seed, &mut cfg.propagation, &mut cfg.spectral);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_common(&self.propagation, &self.spectral)?;
        RichardsonScheme::new(self.pipeline.alpha, self.pipeline.order)?;
        if self.source == PhaseSourceKind::HadamardSampled {
            return Err(Error::Config("estimate runs phase estimation; use hadamard-run for Hadamard sampling".into()));
        }
        if self.trials == 0 || self.qpe_repetitions == 0 {
            return Err(Error::Config("trials and qpe_repetitions must be positive".into()));
        }
        if self.targets().iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("accuracy targets must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<f64> {
        if self.epsilons.is_empty() {
            vec![self.pipeline.epsilon]
        } else {
            self.epsilons.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trial<R> {
    pub epsilon: f64,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub result: R,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetSummary {
    pub epsilon: f64,
    pub successes: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport<R> {
    pub theta_oracle: f64,
    pub trials: Vec<Trial<R>>,
    pub summary: Vec<TargetSummary>,
}

impl<R> RunReport<R> {
    fn new(theta_oracle: f64, trials: Vec<Trial<R>>, targets: &[f64]) -> RunReport<R> {
        let summary = targets
            .iter()
            .map(|&e| {
                let of: Vec<&Trial<R>> = trials.iter().filter(|t| t.epsilon == e).collect();
                TargetSummary { epsilon: e, successes: of.iter().filter(|t| t.success).count(), trials: of.len() }
            })
            .collect();
        RunReport { theta_oracle, trials, summary }
    }
}

impl<R: Serialize> RunReport<R> {
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(self)?)?;
        let mut f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
        writeln!(f, "# theta_oracle = {:.17e}; one row per trial", self.theta_oracle)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["epsilon", "trial", "seed", "success", "result"])?;
        for t in &self.trials {
            w.write_record([format!("{:.6e}", t.epsilon), t.trial.to_string(), t.seed.to_string(), t.success.to_string(), serde_json::to_string(&t.result)?])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the phase-estimation pipeline for every target and trial.
pub fn run_estimate(cfg: &EstimateConfig) -> Result<RunReport<PipelineResult>> {
    cfg.validate()?;
    let exp = Experiment::new(&cfg.model, &cfg.spectral, &cfg.propagation)?;
    let targets = cfg.targets();
    let mut trials = Vec::new();
    let mut qpe = QpePhases::new(&exp.h, &exp.frame, cfg.propagation.clone(), cfg.qpe_repetitions, cfg.seed);
    let direct = exp.direct();
    for &eps in &targets {
        let pc = PipelineConfig { epsilon: eps, ..cfg.pipeline.clone() };
        for trial in 0..cfg.trials {
            let seed = derive_seed(cfg.seed, &format!("estimate-{eps:e}"), trial as u64);
            let result = match cfg.source {
                PhaseSourceKind::ExactOverlap => full_qpe_pipeline(&mut OverlapPhases::new(&direct), &exp.frame, &pc, seed)?,
                PhaseSourceKind::ExactEigen => {
                    full_qpe_pipeline(&mut EigenPhases::new(&exp.h, &exp.frame, cfg.propagation.clone()), &exp.frame, &pc, seed)?
                }
                _ => {
                    qpe.reseed(seed);
                    full_qpe_pipeline(&mut qpe, &exp.frame, &pc, seed)?
                }
            };
            trials.push(Trial { epsilon: eps, trial, seed, success: result.abs_err <= eps, result });
        }
    }
    Ok(RunReport::new(exp.oracle, trials, &targets))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardRunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub hadamard: HadamardConfig,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub table: Option<TableConfig>,
}

impl HadamardRunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<HadamardRunConfig> {
        let mut cfg: HadamardRunConfig = load_toml(path)?;
        overrides.apply(&mut cfg.seed, &mut cfg.propagation, &mut cfg.spectral);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_common(&self.propagation, &self.spectral)?;
        RuntimeDistribution::new(self.hadamard.distribution, self.hadamard.lambda)?;
        RichardsonScheme::new(self.hadamard.alpha, 1)?;
        if self.trials == 0 || self.targets().iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("need trials >= 1 and accuracy targets in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<f64> {
        if self.epsilons.is_empty() {
            vec![self.hadamard.epsilon]
        } else {
            self.epsilons.clone()
        }
    }

    /// Runtime range a table must cover for every target.
    pub fn span(&self, frame: &SpectralFrame) -> (f64, f64) {
        let mut lo = branch_t1(frame, &self.hadamard.branch);
        let mut hi = branch_t_max(frame, &self.hadamard.branch);
        for &e in &self.targets() {
            let t = HadamardConfig { epsilon: e, ..self.hadamard.clone() }.base_runtime(frame);
            lo = lo.min(t * (1.0 - self.hadamard.lambda));
            hi = hi.max(t * self.hadamard.alpha * (1.0 + self.hadamard.lambda));
        }
        (lo * 0.999, hi * 1.001)
    }
}

pub fn run_hadamard(cfg: &HadamardRunConfig) -> Result<RunReport<HadamardResult>> {
    cfg.validate()?;
    let exp = Experiment::new(&cfg.model, &cfg.spectral, &cfg.propagation)?;
    match &cfg.table {
        Some(t) => {
            let (lo, hi) = cfg.span(&exp.frame);
            let table = exp.table(lo, hi, t.nodes)?;
            run_hadamard_on(&exp, &table, cfg)
        }
        None => run_hadamard_on(&exp, &exp.direct(), cfg),
    }
}

pub fn run_hadamard_on<S: OverlapSource + ?Sized>(exp: &Experiment, source: &S, cfg: &HadamardRunConfig) -> Result<RunReport<HadamardResult>> {
    let targets = cfg.targets();
    let mut trials = Vec::new();
    for &eps in &targets {
        let hc = HadamardConfig { epsilon: eps, ..cfg.hadamard.clone() };
        for trial in 0..cfg.trials {
            let seed = derive_seed(cfg.seed, &format!("hadamard-{eps:e}"), trial as u64);
            let result = hadamard_pipeline(source, &exp.frame, &hc, seed)?;
            trials.push(Trial { epsilon: eps, trial, seed, success: result.abs_err <= eps, result });
        }
    }
    Ok(RunReport::new(exp.oracle, trials, &targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone_sweep(stack: Stack) -> SweepConfig {
        SweepConfig {
            seed: 3,
            label: None,
            model: ModelSpec::spin_cone(1.0, 0.4),
            spectral: SpectralConfig { grid: 1024, ..Default::default() },
            propagation: PropagationConfig { tol: 1e-11, ..Default::default() },
            grid: RuntimeGrid { start: 20.0, ratio: 1.5, count: 4 },
            stack,
            window: None,
            spectrum: None,
            table: None,
            branch: BranchConfig::default(),
            output: None,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(RuntimeGrid { start: 10.0, ratio: 2.0, count: 3 }.validate().is_err());
        assert!(RuntimeGrid { start: 10.0, ratio: 1.0, count: 5 }.validate().is_err());
        assert!(RuntimeGrid { start: 10.0, ratio: 2.0, count: 4 }.validate().is_ok());
    }

    #[test]
    fn compare_refuses_bad_input() {
        assert!(compare_report(&[]).unwrap_err().is_config());
        let a = sweep(&cone_sweep(Stack::FwdRev)).unwrap();
        let mut b = a.clone();
        b.model = ModelSpec::spin_cone(1.0, 0.5);
        let err = compare_report(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("different models"));
    }

    #[test]
    fn stacks_order_their_errors() {
        let s = sweep(&cone_sweep(Stack::Single)).unwrap();
        let f = sweep(&cone_sweep(Stack::FwdRev)).unwrap();
        for (a, b) in s.points.iter().zip(&f.points) {
            assert!(b.error.abs() < a.error.abs());
            assert!((a.error - a.predicted).abs() < 0.2 * a.error.abs());
        }
    }
}
