//! Forward-reverse averaging, Richardson extrapolation, branch resolution and mod-pi lifting.

use crate::error::{Error, Result};
use crate::linalg::{circ_dist, column, unitary_eigen, wrap_2pi, wrap_pi, CVector, C64};
use crate::propagate::{evolve_true, Direction, PropagationConfig};
use crate::hamiltonians::LoopHamiltonian;
use crate::response::OverlapSource;
use crate::spectral::{berry_phase_oracle, SpectralFrame};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSourceKind {
    ExactOverlap,
    ExactEigen,
    QpeSampled,
    HadamardSampled,
}

/// Forward and reverse ground eigenphases at one runtime, both in `[0, 2pi)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhasePair {
    pub runtime: f64,
    pub forward: f64,
    pub reverse: f64,
    pub source: PhaseSourceKind,
}

/// `(forward + reverse) / 2` on the circle: a representative in `[0, pi)`.
pub fn forward_reverse_estimate(pair: &PhasePair) -> f64 {
    wrap_2pi(pair.forward + pair.reverse) / 2.0
}

/// Anything that can report the ground eigenphase of `U_T(1)` for a given runtime.
pub trait EigenphaseSource {
    /// `precision` is the phase resolution the caller needs; sampled sources size their
    /// resources from it.
    fn eigenphase(&mut self, runtime: f64, direction: Direction, precision: f64) -> Result<f64>;
    fn kind(&self) -> PhaseSourceKind;
    /// Total simulated evolution time spent so far.
    fn cost(&self) -> f64;

    fn pair(&mut self, runtime: f64, precision: f64) -> Result<PhasePair> {
        Ok(PhasePair {
            runtime,
            forward: self.eigenphase(runtime, Direction::Forward, precision)?,
            reverse: self.eigenphase(runtime, Direction::Reverse, precision)?,
            source: self.kind(),
        })
    }
}

/// Exact `arg <psi_0|U_T(1)|psi_0>`.
pub struct OverlapPhases<'a, S: OverlapSource + ?Sized> {
    pub source: &'a S,
    cost: f64,
}

impl<'a, S: OverlapSource + ?Sized> OverlapPhases<'a, S> {
    pub fn new(source: &'a S) -> Self {
        OverlapPhases { source, cost: 0.0 }
    }
}

impl<S: OverlapSource + ?Sized> EigenphaseSource for OverlapPhases<'_, S> {
    fn eigenphase(&mut self, runtime: f64, direction: Direction, _precision: f64) -> Result<f64> {
        let z = self.source.overlap(runtime, direction)?;
        if z.norm() < 1e-6 {
            return Err(Error::PhaseUndefined { s: 1.0, modulus: z.norm() });
        }
        self.cost += runtime;
        Ok(wrap_2pi(z.arg()))
    }
    fn kind(&self) -> PhaseSourceKind {
        PhaseSourceKind::ExactOverlap
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

/// Spectral content of `|psi_0>` in the eigenbasis of `U_T(1)`.
#[derive(Clone, Debug)]
pub struct Branches {
    pub weights: Vec<f64>,
    pub phases: Vec<f64>,
}

impl Branches {
    pub fn dominant(&self) -> f64 {
        let k = (0..self.weights.len()).max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b])).unwrap();
        self.phases[k]
    }
}

pub fn branches(h: &LoopHamiltonian, psi0: &CVector, runtime: f64, direction: Direction, cfg: &PropagationConfig) -> Result<Branches> {
    let u = evolve_true(h, runtime, direction, &[1.0], cfg)?;
    let eig = unitary_eigen(u.last());
    let weights = (0..psi0.len()).map(|k| eig.vectors.column(k).dotc(psi0).norm_sqr()).collect();
    Ok(Branches { weights, phases: eig.phases })
}

/// Exact eigenphase of the eigenvector of `U_T(1)` with the largest ground-state weight:
/// what an ideal phase estimation converges to.
pub struct EigenPhases<'a> {
    pub h: &'a LoopHamiltonian,
    pub psi0: CVector,
    pub cfg: PropagationConfig,
    cost: f64,
}

impl<'a> EigenPhases<'a> {
    pub fn new(h: &'a LoopHamiltonian, frame: &SpectralFrame, cfg: PropagationConfig) -> Self {
        EigenPhases { h, psi0: column(&frame.vectors[0], 0), cfg, cost: 0.0 }
    }
}

impl EigenphaseSource for EigenPhases<'_> {
    fn eigenphase(&mut self, runtime: f64, direction: Direction, _precision: f64) -> Result<f64> {
        self.cost += runtime;
        Ok(branches(self.h, &self.psi0, runtime, direction, &self.cfg)?.dominant())
    }
    fn kind(&self) -> PhaseSourceKind {
        PhaseSourceKind::ExactEigen
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RichardsonScheme {
    pub alpha: f64,
    pub order: usize,
    pub weights: Vec<f64>,
}

impl RichardsonScheme {
    /// Weights from the Lagrange basis at `x_k = alpha^(-2k)` evaluated at `x = 0`.
    pub fn new(alpha: f64, order: usize) -> Result<RichardsonScheme> {
        if !(alpha > 1.0) || order == 0 {
            return Err(Error::Config(format!("Richardson needs alpha > 1 and order >= 1, got {alpha}, {order}")));
        }
        let x: Vec<f64> = (0..=order).map(|k| alpha.powi(-2 * k as i32)).collect();
        let weights = (0..=order)
            .map(|k| (0..=order).filter(|&l| l != k).map(|l| x[l] / (x[l] - x[k])).product())
            .collect();
        Ok(RichardsonScheme { alpha, order, weights })
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// `(m + 1) (alpha^2 / (alpha^2 - 1))^m`.
    pub fn weight_sum_bound(&self) -> f64 {
        let a2 = self.alpha * self.alpha;
        (self.order + 1) as f64 * (a2 / (a2 - 1.0)).powi(self.order as i32)
    }

    pub fn runtimes(&self, base: f64) -> Vec<f64> {
        (0..=self.order).map(|k| base * self.alpha.powi(k as i32)).collect()
    }

    /// Plain weighted sum, for real-valued sequences that carry no branch ambiguity.
    pub fn combine(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// A mod-pi estimate, optionally lifted to a definite branch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub branch: Option<Branch>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub coarse: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn unlifted(value: f64) -> Estimate {
        Estimate { value, branch: None }
    }
}

/// Representative of `estimate (mod pi)` inside `(coarse - pi/2, coarse + pi/2)`.
pub fn lift(estimate_mod_pi: f64, coarse: f64) -> Result<Estimate> {
    let lo = coarse - PI / 2.0;
    let hi = coarse + PI / 2.0;
    let k = ((lo - estimate_mod_pi) / PI).ceil();
    let mut v = estimate_mod_pi + k * PI;
    if v <= lo {
        v += PI;
    }
    let margin = (v - lo).min(hi - v);
    if margin < 1e-9 {
        return Err(Error::AmbiguousLift { estimate: estimate_mod_pi, margin });
    }
    Ok(Estimate { value: v, branch: Some(Branch { coarse, lo, hi }) })
}

pub fn richardson(scheme: &RichardsonScheme, estimates: &[Estimate]) -> Result<f64> {
    if estimates.len() != scheme.weights.len() {
        return Err(Error::Config(format!(
            "scheme of order {} needs {} estimates, got {}",
            scheme.order,
            scheme.weights.len(),
            estimates.len()
        )));
    }
    if estimates.iter().any(|e| e.branch.is_none()) {
        return Err(Error::UnliftedInput);
    }
    Ok(scheme.combine(&estimates.iter().map(|e| e.value).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchConfig {
    /// `T1 = c * Hdot_max^2 / Delta_min^3`.
    pub t1_factor: f64,
    pub max_doublings: usize,
    /// Agreement required between consecutive doublings.
    pub tolerance: f64,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig { t1_factor: 4.0, max_doublings: 6, tolerance: PI / 8.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchReport {
    pub coarse: f64,
    pub t1: f64,
    pub alpha_prime: f64,
    pub doublings: usize,
    pub history: Vec<f64>,
}

fn alpha_prime(t1: f64, h_max: f64) -> f64 {
    1.0 + PI / (t1 * h_max + PI)
}

/// Needed phase resolution at `T1` so the scaled difference stays well inside `pi/8`.
pub fn branch_precision(t1: f64, h_max: f64) -> f64 {
    PI * (alpha_prime(t1, h_max) - 1.0) / 32.0
}

fn coarse_at<S: EigenphaseSource + ?Sized>(source: &mut S, t1: f64, h_max: f64) -> Result<f64> {
    let ap = alpha_prime(t1, h_max);
    let prec = branch_precision(t1, h_max);
    let mut phasor = C64::new(0.0, 0.0);
    for dir in [Direction::Forward, Direction::Reverse] {
        let a = source.eigenphase(t1, dir, prec)?;
        let b = source.eigenphase(ap * t1, dir, prec)?;
        // theta(T) = -+ T E + theta_B: the wrapped difference recovers T1 E exactly.
        let est = a + wrap_pi(a - b) / (ap - 1.0);
        phasor += C64::from_polar(1.0, est);
    }
    Ok(wrap_2pi(phasor.arg()))
}

/// Starting runtime `T1 = c Hdot_max^2 / Delta_min^3`, at least one inverse gap.
pub fn branch_t1(frame: &SpectralFrame, cfg: &BranchConfig) -> f64 {
    (cfg.t1_factor * frame.hdot_max().powi(2) / frame.gap_min.powi(3)).max(1.0 / frame.gap_min)
}

/// Bound on the runtimes `branch_resolve` may request (`alpha' < 2`).
pub fn branch_t_max(frame: &SpectralFrame, cfg: &BranchConfig) -> f64 {
    2.0 * branch_t1(frame, cfg) * 2f64.powi(cfg.max_doublings as i32)
}

/// Coarse Berry phase from runtime scaling: eliminates the dynamical phase between `T1`
/// and `alpha' T1`, and averages the forward and reverse combinations so the `1/T1` error
/// cancels. `T1` doubles until two successive estimates agree.
pub fn branch_resolve<S: EigenphaseSource + ?Sized>(source: &mut S, frame: &SpectralFrame, cfg: &BranchConfig) -> Result<BranchReport> {
    let h_max = frame.h_max().max(1e-12);
    let mut t1 = branch_t1(frame, cfg);
    let mut prev = coarse_at(source, t1, h_max)?;
    let mut history = vec![prev];
    for doublings in 1..=cfg.max_doublings {
        t1 *= 2.0;
        let next = coarse_at(source, t1, h_max)?;
        history.push(next);
        if circ_dist(prev, next, 2.0 * PI) < cfg.tolerance {
            return Ok(BranchReport { coarse: next, t1, alpha_prime: alpha_prime(t1, h_max), doublings, history });
        }
        prev = next;
    }
    Err(Error::BranchResolutionFailed { doublings: cfg.max_doublings })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub runtime: f64,
    pub estimate: f64,
    pub tag: String,
    pub seed: u64,
    pub lift_lo: Option<f64>,
    pub lift_hi: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub theta_oracle: f64,
    pub points: Vec<SeriesPoint>,
}

impl EstimateSeries {
    pub fn push(&mut self, runtime: f64, estimate: &Estimate, tag: &str, seed: u64) {
        self.points.push(SeriesPoint {
            runtime,
            estimate: estimate.value,
            tag: tag.to_string(),
            seed,
            lift_lo: estimate.branch.map(|b| b.lo),
            lift_hi: estimate.branch.map(|b| b.hi),
        });
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# theta_oracle = {:.17e}", self.theta_oracle)?;
        writeln!(f, "# runtime: T; estimate: radians; lift_lo/lift_hi: lifting interval, empty when unlifted")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["runtime", "estimate", "tag", "seed", "lift_lo", "lift_hi"])?;
        for p in &self.points {
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
            w.write_record([
                format!("{:.17e}", p.runtime),
                format!("{:.17e}", p.estimate),
                p.tag.clone(),
                p.seed.to_string(),
                opt(p.lift_lo),
                opt(p.lift_hi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub order: usize,
    /// `T0 = c * |Hdot(0)| / (Delta(0)^2 sqrt(eps))`.
    pub t0_factor: f64,
    #[serde(default)]
    pub branch: BranchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { epsilon: 1e-3, alpha: 2.0, order: 1, t0_factor: 1.5, branch: BranchConfig::default() }
    }
}

/// Base runtime for a target accuracy.
pub fn t0_for(frame: &SpectralFrame, epsilon: f64, factor: f64) -> f64 {
    let scale = frame.hdot_norm[0] / frame.gap(1, 0).powi(2);
    (factor * scale / epsilon.sqrt()).max(1.0 / frame.gap_min)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineResult {
    pub theta_hat: f64,
    pub theta_oracle: f64,
    pub abs_err: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub alpha: f64,
    pub m: usize,
    #[serde(rename = "cost_total_T")]
    pub cost_total_t: f64,
    pub branch: BranchReport,
    #[serde(skip)]
    pub series: EstimateSeries,
}

/// Step 1 eigenphases at `T0 alpha^k`, Step 2 branch resolution, Step 3 lifting and
/// Richardson combination.
pub fn full_qpe_pipeline<S: EigenphaseSource + ?Sized>(source: &mut S, frame: &SpectralFrame, cfg: &PipelineConfig, seed: u64) -> Result<PipelineResult> {
    let scheme = RichardsonScheme::new(cfg.alpha, cfg.order)?;
    let t0 = t0_for(frame, cfg.epsilon, cfg.t0_factor);
    let precision = cfg.epsilon / (4.0 * scheme.weight_sum());
    let pairs = scheme
        .runtimes(t0)
        .into_iter()
        .map(|t| source.pair(t, precision))
        .collect::<Result<Vec<_>>>()?;
    let branch = branch_resolve(source, frame, &cfg.branch)?;
    let oracle = berry_phase_oracle(frame, 0);
    let mut series = EstimateSeries { theta_oracle: oracle, points: Vec::new() };
    let lifted = pairs
        .iter()
        .map(|p| {
            let e = lift(forward_reverse_estimate(p), branch.coarse)?;
            series.push(p.runtime, &e, "fwd-rev", seed);
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = richardson(&scheme, &lifted)?;
    let theta_hat = wrap_2pi(value);
    series.push(t0, &Estimate { value, branch: lifted[0].branch }, "richardson", seed);
    Ok(PipelineResult {
        theta_hat,
        theta_oracle: oracle,
        abs_err: circ_dist(theta_hat, oracle, 2.0 * PI),
        t0,
        alpha: cfg.alpha,
        m: cfg.order,
        cost_total_t: source.cost(),
        branch,
        series,
    })
}
