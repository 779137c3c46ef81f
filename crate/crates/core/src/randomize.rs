//! Runtime randomization: `T_j = T X_j` with `X_j` drawn from a distribution on
//! `[1 - lambda, 1 + lambda]`, which damps the oscillatory residue of Richardson
//! extrapolation by the characteristic function of the distribution.

use crate::apt::AptBreakdown;
use crate::error::{Error, Result};
use crate::estimators::{forward_reverse_estimate, lift, PhasePair, PhaseSourceKind, RichardsonScheme};
use crate::linalg::{wrap_2pi, C64};
use crate::numerics::{composite_gauss, mean, std_dev};
use crate::propagate::Direction;
use crate::response::OverlapSource;
use crate::rng::stream;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    Uniform,
    Triangular,
    SmoothBump,
}

fn default_sharpness() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuntimeDistribution {
    pub kind: DistributionKind,
    pub lambda: f64,
    /// Smooth bump only: density `exp(-a / (1 - u^2))` in `u = (x - 1) / lambda`.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    #[serde(skip)]
    norm: OnceLock<f64>,
}

impl RuntimeDistribution {
    pub fn new(kind: DistributionKind, lambda: f64) -> Result<RuntimeDistribution> {
        let d = RuntimeDistribution { kind, lambda, sharpness: 1.0, norm: OnceLock::new() };
        d.validate()?;
        Ok(d)
    }

    pub fn bump(lambda: f64, sharpness: f64) -> Result<RuntimeDistribution> {
        let d = RuntimeDistribution { kind: DistributionKind::SmoothBump, lambda, sharpness, norm: OnceLock::new() };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if self.kind == DistributionKind::SmoothBump {
            if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
                return Err(Error::Config(format!("bump sharpness must be positive, got {}", self.sharpness)));
            }
            let acceptance = self.acceptance();
            if acceptance < 0.01 {
                return Err(Error::MisconfiguredBump { acceptance });
            }
        }
        Ok(())
    }

    fn bump_shape(&self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            0.0
        } else {
            // Scaled so the peak is 1.
            (self.sharpness - self.sharpness / (1.0 - u * u)).exp()
        }
    }

    /// `int_{-1}^{1}` of the peak-normalized bump.
    fn bump_mass(&self) -> f64 {
        *self.norm.get_or_init(|| {
            let (x, w) = composite_gauss(-1.0, 1.0, 64, 10);
            x.iter().zip(&w).map(|(u, w)| w * self.bump_shape(*u)).sum()
        })
    }

    /// Rejection-sampling acceptance against the uniform envelope.
    pub fn acceptance(&self) -> f64 {
        match self.kind {
            DistributionKind::SmoothBump => self.bump_mass() / 2.0,
            _ => 1.0,
        }
    }

    /// Density of `X` at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let u = (x - 1.0) / self.lambda;
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self.kind {
            DistributionKind::Uniform => 0.5 / self.lambda,
            DistributionKind::Triangular => (1.0 - u.abs()) / self.lambda,
            DistributionKind::SmoothBump => self.bump_shape(u) / (self.lambda * self.bump_mass()),
        }
    }

    /// Nodes and density-weighted weights for `E[f(X)]`; `bandwidth` is the largest angular
    /// frequency of `f` in `x`, which sets the panel count. Panel counts are even so the
    /// triangular kink at `x = 1` sits on a panel edge.
    pub fn quadrature(&self, bandwidth: f64) -> (Vec<f64>, Vec<f64>) {
        let span = 2.0 * self.lambda;
        let mut panels = 2 * (((bandwidth * span / PI).ceil() as usize) / 2 + 4);
        if self.kind == DistributionKind::SmoothBump {
            // The bump is flat to all orders at the edges, which Gauss rules resolve slowly.
            panels = panels.max(48);
        }
        let (x, w) = composite_gauss(1.0 - self.lambda, 1.0 + self.lambda, panels, 12);
        let w: Vec<f64> = x.iter().zip(&w).map(|(x, w)| w * self.density(*x)).collect();
        let total: f64 = w.iter().sum();
        (x, w.into_iter().map(|w| w / total).collect())
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, bandwidth: f64) -> f64 {
        let (x, w) = self.quadrature(bandwidth);
        x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum()
    }

    /// `chi(xi) = E[e^{i xi X}]`.
    pub fn characteristic(&self, xi: f64) -> C64 {
        let carrier = C64::from_polar(1.0, xi);
        let sinc = |t: f64| if t.abs() < 1e-8 { 1.0 - t * t / 6.0 } else { t.sin() / t };
        match self.kind {
            DistributionKind::Uniform => carrier * sinc(self.lambda * xi),
            DistributionKind::Triangular => carrier * sinc(0.5 * self.lambda * xi).powi(2),
            DistributionKind::SmoothBump => {
                let re = self.expect(|x| ((x - 1.0) * xi).cos(), xi.abs());
                let im = self.expect(|x| ((x - 1.0) * xi).sin(), xi.abs());
                carrier * C64::new(re, im)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistributionKind::Uniform => 1.0 + self.lambda * (2.0 * rng.random::<f64>() - 1.0),
            DistributionKind::Triangular => 1.0 + self.lambda * (rng.random::<f64>() + rng.random::<f64>() - 1.0),
            DistributionKind::SmoothBump => loop {
                let u = 2.0 * rng.random::<f64>() - 1.0;
                if rng.random::<f64>() < self.bump_shape(u) {
                    break 1.0 + self.lambda * u;
                }
            },
        }
    }

    /// Multipliers `X_j`, one deterministic substream per sample index.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        Ok((0..count).map(|j| self.draw(&mut stream(seed, "runtime", j as u64))).collect())
    }

    /// Runtimes `T_j = T X_j`.
    pub fn sample_runtimes(&self, runtime: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
        if !(runtime > 0.0) || count == 0 {
            return Err(Error::Config(format!("need T > 0 and N >= 1, got {runtime}, {count}")));
        }
        Ok(self.sample(count, seed)?.into_iter().map(|x| runtime * x).collect())
    }
}

/// Lifted forward-reverse estimate at one runtime from exact overlaps.
pub fn lifted_estimate<S: OverlapSource + ?Sized>(source: &S, runtime: f64, coarse: f64) -> Result<f64> {
    let zf = source.overlap(runtime, Direction::Forward)?;
    let zr = source.overlap(runtime, Direction::Reverse)?;
    for z in [zf, zr] {
        if z.norm() < 1e-6 {
            return Err(Error::PhaseUndefined { s: 1.0, modulus: z.norm() });
        }
    }
    let pair = PhasePair {
        runtime,
        forward: wrap_2pi(zf.arg()),
        reverse: wrap_2pi(zr.arg()),
        source: PhaseSourceKind::ExactOverlap,
    };
    Ok(lift(forward_reverse_estimate(&pair), coarse)?.value)
}

/// Richardson extrapolant from base runtime `T` with exact overlaps.
pub fn richardson_at<S: OverlapSource + ?Sized>(source: &S, scheme: &RichardsonScheme, runtime: f64, coarse: f64) -> Result<f64> {
    let values = scheme
        .runtimes(runtime)
        .into_iter()
        .map(|t| lifted_estimate(source, t, coarse))
        .collect::<Result<Vec<_>>>()?;
    Ok(scheme.combine(&values))
}

/// The `2pi` representative of `theta` nearest to `reference`.
pub fn nearest_branch(theta: f64, reference: f64) -> f64 {
    theta + 2.0 * PI * ((reference - theta) / (2.0 * PI)).round()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sample {
    pub j: usize,
    pub x: f64,
    pub runtime: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomizedEstimate {
    pub n: usize,
    pub runtime: f64,
    pub alpha: f64,
    pub distribution: RuntimeDistribution,
    pub samples: Vec<Sample>,
    pub mean: f64,
    pub se: f64,
    pub bias: f64,
    pub dropped: usize,
}

impl RandomizedEstimate {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# runtime = {:.17e}, alpha = {}, N = {}, dropped = {}", self.runtime, self.alpha, self.n, self.dropped)?;
        writeln!(f, "# j: sample index; x: multiplier X_j; runtime: T_j; estimate: Richardson extrapolant")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["j", "x", "runtime", "estimate"])?;
        for s in &self.samples {
            w.write_record([s.j.to_string(), format!("{:.17e}", s.x), format!("{:.17e}", s.runtime), format!("{:.17e}", s.estimate)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean of per-sample Richardson extrapolants over randomized runtimes. Samples whose
/// return amplitude vanishes are dropped; more than 0.1% dropped is a failure.
#[allow(clippy::too_many_arguments)]
pub fn randomized_richardson<S: OverlapSource + ?Sized>(
    source: &S,
    dist: &RuntimeDistribution,
    runtime: f64,
    scheme: &RichardsonScheme,
    count: usize,
    seed: u64,
    coarse: f64,
    oracle: f64,
) -> Result<RandomizedEstimate> {
    let xs = dist.sample(count, seed)?;
    let outcomes: Vec<Result<f64>> = xs.par_iter().map(|x| richardson_at(source, scheme, runtime * x, coarse)).collect();
    let mut samples = Vec::with_capacity(count);
    let mut dropped = 0;
    for (j, (x, r)) in xs.iter().zip(outcomes).enumerate() {
        match r {
            Ok(v) => samples.push(Sample { j, x: *x, runtime: runtime * x, estimate: v }),
            Err(Error::PhaseUndefined { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if dropped as f64 > 1e-3 * count as f64 {
        return Err(Error::Numerical(format!("{dropped} of {count} samples had an undefined phase")));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.estimate).collect();
    let m = mean(&values);
    let se = if values.len() > 1 { std_dev(&values) / (values.len() as f64).sqrt() } else { 0.0 };
    Ok(RandomizedEstimate {
        n: count,
        runtime,
        alpha: scheme.alpha,
        distribution: dist.clone(),
        samples,
        mean: m,
        se,
        bias: m - nearest_branch(oracle, m),
        dropped,
    })
}

/// `E[R(T X)] - theta_B` by quadrature over the distribution: the randomization bias with no
/// sampling noise. `bandwidth` is the fastest integrated gap.
pub fn exact_bias<S: OverlapSource + ?Sized>(
    source: &S,
    dist: &RuntimeDistribution,
    runtime: f64,
    scheme: &RichardsonScheme,
    coarse: f64,
    oracle: f64,
    bandwidth: f64,
) -> Result<f64> {
    let (x, w) = dist.quadrature(runtime * scheme.alpha.powi(scheme.order as i32) * bandwidth);
    let vals = x.par_iter().map(|x| richardson_at(source, scheme, runtime * x, coarse)).collect::<Result<Vec<_>>>()?;
    let m: f64 = w.iter().zip(&vals).map(|(w, v)| w * v).sum();
    Ok(m - nearest_branch(oracle, m))
}

/// Oscillatory bias in the characteristic-function form: each Richardson runtime contributes
/// `w_k sum_n B_n Re chi(omega_n alpha^k T) / (alpha^k T)^2`. Treats `1/X^2` as 1.
pub fn bias_prediction(apt: &AptBreakdown, dist: &RuntimeDistribution, runtime: f64, scheme: &RichardsonScheme) -> f64 {
    scheme
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let t = runtime * scheme.alpha.powi(k as i32);
            w * apt.terms.iter().map(|term| term.b * dist.characteristic(term.omega * t).re).sum::<f64>() / (t * t)
        })
        .sum()
}

/// Same expectation with the `1/X^2` factor kept, by quadrature.
pub fn bias_prediction_exact(apt: &AptBreakdown, dist: &RuntimeDistribution, runtime: f64, scheme: &RichardsonScheme) -> f64 {
    let band = runtime * scheme.alpha.powi(scheme.order as i32) * apt.terms.iter().map(|t| t.omega).fold(0.0, f64::max);
    dist.expect(|x| apt.richardson_residual(runtime * x, scheme.alpha, &scheme.weights), band)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceReport {
    pub predicted_bound: f64,
    pub empirical: f64,
    pub ratio: f64,
}

/// Variance of the per-sample oscillatory residue against `(sum |B_n|)^2 / ((1 - lambda)^4 T^4)`.
pub fn variance_report(
    apt: &AptBreakdown,
    dist: &RuntimeDistribution,
    runtime: f64,
    scheme: &RichardsonScheme,
    count: usize,
    seed: u64,
) -> Result<VarianceReport> {
    let xs = dist.sample(count, seed)?;
    let vals: Vec<f64> = xs.iter().map(|x| apt.richardson_residual(runtime * x, scheme.alpha, &scheme.weights)).collect();
    let empirical = std_dev(&vals).powi(2);
    let predicted_bound = apt.sum_abs_b().powi(2) / ((1.0 - dist.lambda).powi(4) * runtime.powi(4));
    let ratio = if predicted_bound > 0.0 { empirical / predicted_bound } else { 0.0 };
    Ok(VarianceReport { predicted_bound, empirical, ratio })
}
