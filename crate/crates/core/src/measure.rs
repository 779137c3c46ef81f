//! Outcome-level emulation of phase estimation and Hadamard tests.
//!
//! Phase estimation is sampled bit by bit with the semiclassical inverse Fourier transform,
//! whose outcome statistics are exactly those of the textbook circuit, so registers of up
//! to 24 bits cost O(m) per draw.

use crate::error::{Error, Result};
use crate::estimators::{
    branch_resolve, branches, forward_reverse_estimate, lift, BranchConfig, BranchReport, Branches, EigenphaseSource,
    PhasePair, PhaseSourceKind, RichardsonScheme,
};
use crate::hamiltonians::LoopHamiltonian;
use crate::linalg::{circ_dist, column, wrap_2pi, CVector, C64};
use crate::propagate::{Direction, PropagationConfig};
use crate::randomize::{DistributionKind, RuntimeDistribution};
use crate::response::OverlapSource;
use crate::rng::stream;
use crate::spectral::{berry_phase_oracle, SpectralFrame};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QpeConfig {
    pub m_bits: u32,
    pub repetitions: usize,
    /// Leading bits that take part in the majority vote.
    pub vote_bits: u32,
}

impl QpeConfig {
    /// Vote on `ceil(log2(1/precision))` bits and carry six guard bits below them.
    pub fn for_precision(precision: f64, repetitions: usize) -> QpeConfig {
        let vote = ((1.0 / precision).log2().ceil() as i64).clamp(1, 18) as u32;
        QpeConfig { m_bits: (vote + 6).min(24), repetitions, vote_bits: vote }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.m_bits) || self.repetitions == 0 || self.vote_bits == 0 || self.vote_bits > self.m_bits {
            return Err(Error::Config(format!("invalid QPE configuration {self:?}")));
        }
        Ok(())
    }
}

/// One register readout `k` for eigenphase `theta`, least significant bit first.
pub fn register_outcome<R: Rng>(theta: f64, m_bits: u32, rng: &mut R) -> u64 {
    let mut k: u64 = 0;
    for j in 0..m_bits {
        let power = 2f64.powi((m_bits - 1 - j) as i32);
        let feedback = 2.0 * PI * k as f64 / 2f64.powi(j as i32 + 1);
        let angle = power * theta - feedback;
        let p0 = (0.5 * angle).cos().powi(2);
        if rng.random::<f64>() >= p0 {
            k |= 1 << j;
        }
    }
    k
}

/// Textbook outcome distribution `|2^-m sum_t e^{i t (theta - 2 pi k / 2^m)}|^2`.
pub fn register_distribution(theta: f64, m_bits: u32) -> Vec<f64> {
    let n = 1usize << m_bits;
    (0..n)
        .map(|k| {
            let d = theta - 2.0 * PI * k as f64 / n as f64;
            let s = (0.5 * d).sin();
            if s.abs() < 1e-300 {
                1.0
            } else {
                ((0.5 * n as f64 * d).sin() / (n as f64 * s)).powi(2)
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QpeOutcome {
    pub phase: f64,
    pub outcomes: Vec<u64>,
    /// Draws that landed on a branch other than the dominant one.
    pub off_branch: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Repeated phase estimation on `sum_k sqrt(w_k) |v_k>`: majority vote on the leading bits,
/// then the median of the full readouts that fall in or next to the winning bin.
pub fn qpe_sample<R: Rng>(br: &Branches, cfg: &QpeConfig, rng: &mut R) -> Result<QpeOutcome> {
    cfg.validate()?;
    let total: f64 = br.weights.iter().sum();
    let dominant = (0..br.weights.len()).max_by(|&a, &b| br.weights[a].total_cmp(&br.weights[b])).unwrap();
    let mut outcomes = Vec::with_capacity(cfg.repetitions);
    let mut off_branch = 0;
    for _ in 0..cfg.repetitions {
        let mut u = rng.random::<f64>() * total;
        let mut branch = br.weights.len() - 1;
        for (k, w) in br.weights.iter().enumerate() {
            if u < *w {
                branch = k;
                break;
            }
            u -= w;
        }
        if branch != dominant {
            off_branch += 1;
        }
        outcomes.push(register_outcome(br.phases[branch], cfg.m_bits, rng));
    }
    let shift = cfg.m_bits - cfg.vote_bits;
    let bins = 1u64 << cfg.vote_bits;
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for k in &outcomes {
        *counts.entry(k >> shift).or_default() += 1;
    }
    let support = |b: u64| -> usize {
        [(b + bins - 1) % bins, b, (b + 1) % bins].iter().map(|x| counts.get(x).copied().unwrap_or(0)).sum()
    };
    let winner = *counts
        .keys()
        .max_by(|&&a, &&b| (support(a), counts[&a], std::cmp::Reverse(a)).cmp(&(support(b), counts[&b], std::cmp::Reverse(b))))
        .unwrap();
    let full = 1u64 << cfg.m_bits;
    let centre = ((winner << shift) + (1 << shift) / 2) as f64;
    let mut offsets: Vec<f64> = outcomes
        .iter()
        .filter(|&&k| {
            let b = k >> shift;
            b == winner || b == (winner + 1) % bins || b == (winner + bins - 1) % bins
        })
        .map(|&k| {
            let mut d = k as f64 - centre;
            if d > full as f64 / 2.0 {
                d -= full as f64;
            } else if d < -(full as f64) / 2.0 {
                d += full as f64;
            }
            d
        })
        .collect();
    let pos = centre + median(&mut offsets);
    Ok(QpeOutcome { phase: wrap_2pi(2.0 * PI * pos / full as f64), outcomes, off_branch })
}

/// Phase estimation on exact propagators. Eigendecompositions are cached per runtime.
pub struct QpePhases<'a> {
    pub h: &'a LoopHamiltonian,
    pub psi0: CVector,
    pub cfg: PropagationConfig,
    pub repetitions: usize,
    rng: ChaCha20Rng,
    cache: HashMap<(u64, bool), Branches>,
    cost: f64,
    pub draws: usize,
    pub off_branch: usize,
}

impl<'a> QpePhases<'a> {
    pub fn new(h: &'a LoopHamiltonian, frame: &SpectralFrame, cfg: PropagationConfig, repetitions: usize, seed: u64) -> Self {
        QpePhases {
            h,
            psi0: column(&frame.vectors[0], 0),
            cfg,
            repetitions,
            rng: stream(seed, "qpe", 0),
            cache: HashMap::new(),
            cost: 0.0,
            draws: 0,
            off_branch: 0,
        }
    }

    /// Shares eigendecompositions with another sampler so repeated trials do not re-evolve.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = stream(seed, "qpe", 0);
        self.cost = 0.0;
        self.draws = 0;
        self.off_branch = 0;
    }

    pub fn branches(&mut self, runtime: f64, direction: Direction) -> Result<Branches> {
        let key = (runtime.to_bits(), direction == Direction::Forward);
        if let Some(b) = self.cache.get(&key) {
            return Ok(b.clone());
        }
        let b = branches(self.h, &self.psi0, runtime, direction, &self.cfg)?;
        self.cache.insert(key, b.clone());
        Ok(b)
    }
}

impl EigenphaseSource for QpePhases<'_> {
    fn eigenphase(&mut self, runtime: f64, direction: Direction, precision: f64) -> Result<f64> {
        let br = self.branches(runtime, direction)?;
        let cfg = QpeConfig::for_precision(precision, self.repetitions);
        let out = qpe_sample(&br, &cfg, &mut self.rng)?;
        self.draws += cfg.repetitions;
        self.off_branch += out.off_branch;
        // Each run applies U_T controlled 2^m - 1 times.
        self.cost += runtime * ((1u64 << cfg.m_bits) - 1) as f64 * cfg.repetitions as f64;
        Ok(out.phase)
    }
    fn kind(&self) -> PhaseSourceKind {
        PhaseSourceKind::QpeSampled
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    Real,
    Imag,
}

/// Probability of reading 0 on the control: `(1 + Re z)/2` or, with the control phase
/// rotated by `-pi/2`, `(1 + Im z)/2`.
pub fn zero_probability(overlap: C64, basis: Basis) -> f64 {
    let v = match basis {
        Basis::Real => overlap.re,
        Basis::Imag => overlap.im,
    };
    (0.5 * (1.0 + v)).clamp(0.0, 1.0)
}

/// Fraction of 0 outcomes over `shots` Hadamard tests.
pub fn hadamard_sample<R: Rng>(overlap: C64, basis: Basis, shots: u64, rng: &mut R) -> Result<f64> {
    if overlap.norm() > 1.0 + 1e-10 {
        return Err(Error::Numerical(format!("overlap modulus {} exceeds 1", overlap.norm())));
    }
    if shots == 0 {
        return Err(Error::Config("at least one shot is needed".into()));
    }
    let p = zero_probability(overlap, basis);
    let zeros = Binomial::new(shots, p).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
    Ok(zeros as f64 / shots as f64)
}

/// Unbiased estimate of `z` from `shots` tests in each basis.
pub fn hadamard_overlap<R: Rng>(overlap: C64, shots: u64, rng: &mut R) -> Result<C64> {
    let re = 2.0 * hadamard_sample(overlap, Basis::Real, shots, rng)? - 1.0;
    let im = 2.0 * hadamard_sample(overlap, Basis::Imag, shots, rng)? - 1.0;
    Ok(C64::new(re, im))
}

/// Hadamard-test phase readout for branch resolution; shots are sized from the requested
/// precision assuming `|z| >= 1/2`.
pub struct HadamardPhases<'a, S: OverlapSource + ?Sized> {
    pub source: &'a S,
    rng: ChaCha20Rng,
    cost: f64,
    pub shots: u64,
}

impl<'a, S: OverlapSource + ?Sized> HadamardPhases<'a, S> {
    pub fn new(source: &'a S, seed: u64) -> Self {
        HadamardPhases { source, rng: stream(seed, "hadamard-coarse", 0), cost: 0.0, shots: 0 }
    }
}

impl<S: OverlapSource + ?Sized> EigenphaseSource for HadamardPhases<'_, S> {
    fn eigenphase(&mut self, runtime: f64, direction: Direction, precision: f64) -> Result<f64> {
        let z = self.source.overlap(runtime, direction)?;
        let shots = (36.0 / (precision * precision)).ceil() as u64;
        let est = hadamard_overlap(z, shots, &mut self.rng)?;
        self.shots += 2 * shots;
        self.cost += 2.0 * shots as f64 * runtime;
        Ok(wrap_2pi(est.arg()))
    }
    fn kind(&self) -> PhaseSourceKind {
        PhaseSourceKind::HadamardSampled
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HadamardConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default = "uniform")]
    pub distribution: DistributionKind,
    /// `N = ceil(c / eps^2)`.
    pub samples_factor: f64,
    /// `T = c (|Hdot(0)| |Hdot(1)| / (Delta(0)^4 Delta_min eps))^(1/3)`.
    pub runtime_factor: f64,
    pub samples: Option<usize>,
    pub runtime: Option<f64>,
    #[serde(default)]
    pub branch: BranchConfig,
}

fn uniform() -> DistributionKind {
    DistributionKind::Uniform
}

impl Default for HadamardConfig {
    fn default() -> Self {
        HadamardConfig {
            epsilon: 3e-2,
            alpha: 2.0,
            lambda: 0.2,
            distribution: DistributionKind::Uniform,
            samples_factor: 6.0,
            runtime_factor: 2.0,
            samples: None,
            runtime: None,
            branch: BranchConfig::default(),
        }
    }
}

impl HadamardConfig {
    pub fn sample_count(&self) -> usize {
        self.samples.unwrap_or_else(|| (self.samples_factor / (self.epsilon * self.epsilon)).ceil() as usize)
    }

    pub fn base_runtime(&self, frame: &SpectralFrame) -> f64 {
        self.runtime.unwrap_or_else(|| hadamard_runtime(frame, self.epsilon, self.runtime_factor))
    }
}

pub fn hadamard_runtime(frame: &SpectralFrame, epsilon: f64, factor: f64) -> f64 {
    let last = frame.grid.len() - 1;
    let scale = frame.hdot_norm[0] * frame.hdot_norm[last] / (frame.gap(1, 0).powi(4) * frame.gap_min * epsilon);
    (factor * scale.cbrt()).max(1.0 / frame.gap_min)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardResult {
    pub theta_hat: f64,
    pub theta_oracle: f64,
    pub abs_err: f64,
    pub runtime: f64,
    pub samples: usize,
    pub alpha: f64,
    /// Lifted forward-reverse phases at `T alpha^k`.
    pub lifted: Vec<f64>,
    pub cost_total_t: f64,
    pub shots: u64,
    pub branch: BranchReport,
}

/// Randomized Hadamard-test pipeline. Each sample draws one shot per basis for the forward
/// and reverse propagators at every Richardson runtime; the product of the forward and
/// reverse single-shot phasors estimates `z_f z_r`, whose argument is twice the
/// forward-reverse estimate with the dynamical phase cancelled.
pub fn hadamard_pipeline<S: OverlapSource + ?Sized>(source: &S, frame: &SpectralFrame, cfg: &HadamardConfig, seed: u64) -> Result<HadamardResult> {
    let scheme = RichardsonScheme::new(cfg.alpha, 1)?;
    let dist = RuntimeDistribution::new(cfg.distribution, cfg.lambda)?;
    let runtime = cfg.base_runtime(frame);
    let count = cfg.sample_count();
    let mut coarse_src = HadamardPhases::new(source, seed);
    let branch = branch_resolve(&mut coarse_src, frame, &cfg.branch)?;
    let xs = dist.sample(count, crate::rng::derive_seed(seed, "hadamard-runtimes", 0))?;
    let orders = scheme.order + 1;
    let mut sums = vec![C64::new(0.0, 0.0); orders];
    let mut cost = coarse_src.cost();
    let mut shots = coarse_src.shots;
    let single = |z: C64, rng: &mut ChaCha20Rng| -> Result<C64> { hadamard_overlap(z, 1, rng) };
    for (j, x) in xs.iter().enumerate() {
        let mut rng = stream(seed, "shots", j as u64);
        for (k, sum) in sums.iter_mut().enumerate() {
            let t = runtime * x * cfg.alpha.powi(k as i32);
            let zf = source.overlap(t, Direction::Forward)?;
            let zr = source.overlap(t, Direction::Reverse)?;
            *sum += single(zf, &mut rng)? * single(zr, &mut rng)?;
            cost += 4.0 * t;
            shots += 4;
        }
    }
    let lifted = sums
        .iter()
        .zip(scheme.runtimes(runtime))
        .map(|(w, t)| {
            let pair = PhasePair { runtime: t, forward: wrap_2pi(w.arg()), reverse: 0.0, source: PhaseSourceKind::HadamardSampled };
            Ok(lift(forward_reverse_estimate(&pair), branch.coarse)?.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = scheme.combine(&lifted);
    if (value - branch.coarse).abs() > PI / 2.0 {
        return Err(Error::PipelineInconsistent(format!(
            "extrapolant {value} left the lifting interval around {}",
            branch.coarse
        )));
    }
    let oracle = berry_phase_oracle(frame, 0);
    let theta_hat = wrap_2pi(value);
    Ok(HadamardResult {
        theta_hat,
        theta_oracle: oracle,
        abs_err: circ_dist(theta_hat, oracle, 2.0 * PI),
        runtime,
        samples: count,
        alpha: cfg.alpha,
        lifted,
        cost_total_t: cost,
        shots,
        branch,
    })
}

/// Bias of the Hadamard pipeline with shot noise and sampling removed: the interference
/// signals are replaced by their exact expectations over the runtime distribution.
pub fn hadamard_exact_bias<S: OverlapSource + ?Sized>(
    source: &S,
    frame: &SpectralFrame,
    dist: &RuntimeDistribution,
    runtime: f64,
    alpha: f64,
    coarse: f64,
) -> Result<f64> {
    let scheme = RichardsonScheme::new(alpha, 1)?;
    let mut lifted = Vec::new();
    for t in scheme.runtimes(runtime) {
        let (x, w) = dist.quadrature(2.0 * t * frame.max_frequency() + 1.0);
        let mut signal = C64::new(0.0, 0.0);
        for (x, w) in x.iter().zip(&w) {
            signal += source.overlap(t * x, Direction::Forward)? * source.overlap(t * x, Direction::Reverse)? * *w;
        }
        let pair = PhasePair { runtime: t, forward: wrap_2pi(signal.arg()), reverse: 0.0, source: PhaseSourceKind::ExactOverlap };
        lifted.push(lift(forward_reverse_estimate(&pair), coarse)?.value);
    }
    let value = scheme.combine(&lifted);
    let oracle = berry_phase_oracle(frame, 0);
    Ok(value - crate::randomize::nearest_branch(oracle, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn exact_register_phase_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let m = 8;
        let theta = 2.0 * PI * 5.0 / 256.0;
        for _ in 0..200 {
            assert_eq!(register_outcome(theta, m, &mut rng), 5);
        }
    }

    #[test]
    fn semiclassical_sampler_matches_distribution() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (m, theta) = (5, 1.234);
        let p = register_distribution(theta, m);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let n = 100_000;
        let mut h = vec![0usize; p.len()];
        for _ in 0..n {
            h[register_outcome(theta, m, &mut rng) as usize] += 1;
        }
        let tv: f64 = h.iter().zip(&p).map(|(c, q)| (*c as f64 / n as f64 - q).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "{tv}");
        let nearest = (theta / (2.0 * PI) * 32.0).round() as usize % 32;
        assert!(p[nearest] >= 4.0 / (PI * PI));
    }

    #[test]
    fn hadamard_edge_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(hadamard_sample(C64::new(1.0, 0.0), Basis::Real, 1000, &mut rng).unwrap(), 1.0);
        let f = hadamard_sample(C64::new(0.0, 0.0), Basis::Imag, 10_000, &mut rng).unwrap();
        assert!((f - 0.5).abs() < 3.0 / (2.0 * 100.0));
        assert!(hadamard_sample(C64::new(1.1, 0.0), Basis::Real, 10, &mut rng).is_err());
    }

    #[test]
    fn vote_rejects_leaked_outliers() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let br = Branches { weights: vec![0.8, 0.2], phases: vec![1.0, 4.0] };
        let cfg = QpeConfig::for_precision(1e-3, 9);
        let mut ok = 0;
        for _ in 0..200 {
            let out = qpe_sample(&br, &cfg, &mut rng).unwrap();
            if circ_dist(out.phase, 1.0, 2.0 * PI) < 1e-3 {
                ok += 1;
            }
        }
        assert!(ok >= 195, "{ok}");
    }
}
