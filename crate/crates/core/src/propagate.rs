//! Time-ordered propagators of `i dU/ds = T H(s) U` and of the ideal adiabatic evolution.
//!
//! Integration uses commutator-based Magnus schemes on Gauss nodes (orders 2, 4, 6). Every
//! step is an exact exponential of a Hermitian matrix, so propagators stay unitary to
//! round-off. Step counts double until two successive passes agree to the tolerance.

use crate::error::{Error, Result};
use crate::hamiltonians::LoopHamiltonian;
use crate::linalg::{c, column, eigh, expm_minus_i, hcomm, inner, max_abs, unwrap, CMatrix, CVector, Pauli, C64, I, U2};
use crate::spectral::{ground_projector, SpectralFrame};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    /// Sign multiplying `H`: the reverse loop is generated by `-H`.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MagnusOrder {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "6")]
    Six,
}

impl MagnusOrder {
    pub fn order(self) -> i32 {
        match self {
            MagnusOrder::Two => 2,
            MagnusOrder::Four => 4,
            MagnusOrder::Six => 6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub order: MagnusOrder,
    /// Relative tolerance; the absolute target is `tol * (1 + T)`.
    pub tol: f64,
    pub max_steps: u64,
    pub min_steps: usize,
    /// Initial step size in units of `1 / (T * spread of H)`.
    pub initial_step: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            order: MagnusOrder::Six,
            tol: 1e-10,
            max_steps: 1 << 26,
            min_steps: 16,
            initial_step: 0.5,
        }
    }
}

/// Hermitian generator `K(s)` of `dU/ds = -i K(s) U`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn at(&self, s: f64) -> CMatrix;
    fn pauli(&self, s: f64) -> Pauli {
        Pauli::from_matrix(&self.at(s))
    }
}

/// `K = sign T H(s)`.
pub struct TrueGenerator<'a> {
    pub h: &'a LoopHamiltonian,
    pub runtime: f64,
    pub direction: Direction,
}

impl Generator for TrueGenerator<'_> {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn at(&self, s: f64) -> CMatrix {
        self.h.evaluate(s) * c(self.direction.sign() * self.runtime, 0.0)
    }
}

/// `K = T (sign H + (i/T) [P', P])`: the ideal adiabatic Hamiltonian, whose evolution maps
/// the ground projector at `s = 0` onto the one at `s`.
pub struct IdealGenerator<'a> {
    pub h: &'a LoopHamiltonian,
    pub runtime: f64,
    pub direction: Direction,
}

impl Generator for IdealGenerator<'_> {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn at(&self, s: f64) -> CMatrix {
        let (p, dp) = ground_projector(self.h, s);
        let geo = (&dp * &p - &p * &dp) * I;
        self.h.evaluate(s) * c(self.direction.sign() * self.runtime, 0.0) + geo
    }
}

/// Propagators at each checkpoint.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub checkpoints: Vec<f64>,
    pub unitaries: Vec<CMatrix>,
    pub steps: u64,
    pub error_estimate: f64,
}

impl Propagation {
    pub fn last(&self) -> &CMatrix {
        self.unitaries.last().expect("no checkpoints")
    }
}

const SQ15: f64 = 3.872_983_346_207_417;
const SQ3: f64 = 1.732_050_807_568_877_2;

/// One Magnus step over `[s, s + h]`, returning Hermitian `X` with step propagator `exp(-i X)`.
fn magnus_dense<G: Generator + ?Sized>(gen: &G, s: f64, h: f64, order: MagnusOrder) -> CMatrix {
    match order {
        MagnusOrder::Two => gen.at(s + 0.5 * h) * c(h, 0.0),
        MagnusOrder::Four => {
            let k1 = gen.at(s + h * (0.5 - SQ3 / 6.0));
            let k2 = gen.at(s + h * (0.5 + SQ3 / 6.0));
            (&k1 + &k2) * c(0.5 * h, 0.0) + hcomm(&k2, &k1) * c(SQ3 * h * h / 12.0, 0.0)
        }
        MagnusOrder::Six => {
            let k1 = gen.at(s + h * (0.5 - SQ15 / 10.0));
            let k2 = gen.at(s + 0.5 * h);
            let k3 = gen.at(s + h * (0.5 + SQ15 / 10.0));
            let a1 = &k2 * c(h, 0.0);
            let a2 = (&k3 - &k1) * c(SQ15 * h / 3.0, 0.0);
            let a3 = (&k3 - &k2 * c(2.0, 0.0) + &k1) * c(10.0 * h / 3.0, 0.0);
            let c1 = hcomm(&a1, &a2);
            let c2 = hcomm(&a1, &(&a3 * c(2.0, 0.0) + &c1)) * c(-1.0 / 60.0, 0.0);
            let left = &a1 * c(-20.0, 0.0) - &a3 + &c1;
            let right = &a2 + &c2;
            &a1 + &a3 * c(1.0 / 12.0, 0.0) + hcomm(&left, &right) * c(1.0 / 240.0, 0.0)
        }
    }
}

fn magnus_pauli<G: Generator + ?Sized>(gen: &G, s: f64, h: f64, order: MagnusOrder) -> Pauli {
    match order {
        MagnusOrder::Two => gen.pauli(s + 0.5 * h).scale(h),
        MagnusOrder::Four => {
            let k1 = gen.pauli(s + h * (0.5 - SQ3 / 6.0));
            let k2 = gen.pauli(s + h * (0.5 + SQ3 / 6.0));
            k1.add(k2).scale(0.5 * h).add(k2.hcomm(k1).scale(SQ3 * h * h / 12.0))
        }
        MagnusOrder::Six => {
            let k1 = gen.pauli(s + h * (0.5 - SQ15 / 10.0));
            let k2 = gen.pauli(s + 0.5 * h);
            let k3 = gen.pauli(s + h * (0.5 + SQ15 / 10.0));
            let a1 = k2.scale(h);
            let a2 = k3.sub(k1).scale(SQ15 * h / 3.0);
            let a3 = k3.sub(k2.scale(2.0)).add(k1).scale(10.0 * h / 3.0);
            let c1 = a1.hcomm(a2);
            let c2 = a1.hcomm(a3.scale(2.0).add(c1)).scale(-1.0 / 60.0);
            let left = a1.scale(-20.0).sub(a3).add(c1);
            let right = a2.add(c2);
            a1.add(a3.scale(1.0 / 12.0)).add(left.hcomm(right).scale(1.0 / 240.0))
        }
    }
}

/// Fixed-step pass with `substeps[i]` uniform steps inside checkpoint interval `i`.
fn fixed_pass<G: Generator + ?Sized>(gen: &G, knots: &[f64], substeps: &[usize], order: MagnusOrder) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(knots.len());
    if gen.dim() == 2 {
        let mut u = U2::identity();
        out.push(u.to_matrix());
        for i in 0..knots.len() - 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            let n = substeps[i];
            let h = (b - a) / n as f64;
            for k in 0..n {
                let x = magnus_pauli(gen, a + k as f64 * h, h, order);
                u = x.exp_minus_i().mul(&u);
            }
            out.push(u.to_matrix());
        }
    } else {
        let d = gen.dim();
        let mut u = CMatrix::identity(d, d);
        out.push(u.clone());
        for i in 0..knots.len() - 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            let n = substeps[i];
            let h = (b - a) / n as f64;
            for k in 0..n {
                let x = magnus_dense(gen, a + k as f64 * h, h, order);
                u = expm_minus_i(&x) * u;
            }
            out.push(u.clone());
        }
    }
    out
}

/// Largest eigenvalue spread of `K(s)` over a coarse sample of the loop.
fn spread<G: Generator + ?Sized>(gen: &G) -> f64 {
    (0..=32)
        .map(|k| {
            let v = eigh(&gen.at(k as f64 / 32.0)).values;
            v[v.len() - 1] - v[0]
        })
        .fold(0.0, f64::max)
}

fn knots(checkpoints: &[f64]) -> Result<(Vec<f64>, bool)> {
    for w in checkpoints.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config("checkpoints must be strictly increasing".into()));
        }
    }
    if checkpoints.is_empty() || checkpoints[0] < 0.0 || *checkpoints.last().unwrap() > 1.0 {
        return Err(Error::Config("checkpoints must lie in [0, 1]".into()));
    }
    if checkpoints[0] == 0.0 {
        Ok((checkpoints.to_vec(), false))
    } else {
        let mut k = vec![0.0];
        k.extend_from_slice(checkpoints);
        Ok((k, true))
    }
}

/// Propagate with a fixed number of steps per unit `s` (no error control).
pub fn propagate_fixed<G: Generator + ?Sized>(
    gen: &G,
    checkpoints: &[f64],
    steps_per_unit: usize,
    order: MagnusOrder,
) -> Result<Vec<CMatrix>> {
    let (kn, prepended) = knots(checkpoints)?;
    let sub: Vec<usize> = kn.windows(2).map(|w| ((w[1] - w[0]) * steps_per_unit as f64).ceil().max(1.0) as usize).collect();
    let mut out = fixed_pass(gen, &kn, &sub, order);
    if prepended {
        out.remove(0);
    }
    Ok(out)
}

/// Propagate with step doubling until the estimated error is below `abs_tol`.
pub fn propagate_adaptive<G: Generator + ?Sized>(
    gen: &G,
    checkpoints: &[f64],
    abs_tol: f64,
    cfg: &PropagationConfig,
) -> Result<Propagation> {
    let (kn, prepended) = knots(checkpoints)?;
    let spread = spread(gen).max(1e-12);
    let per_unit = (spread / cfg.initial_step).ceil().max(cfg.min_steps as f64);
    let mut sub: Vec<usize> = kn.windows(2).map(|w| ((w[1] - w[0]) * per_unit).ceil().max(1.0) as usize).collect();
    let factor = 2f64.powi(cfg.order.order()) - 1.0;
    let mut prev = fixed_pass(gen, &kn, &sub, cfg.order);
    loop {
        let total: u64 = sub.iter().map(|&n| n as u64).sum::<u64>() * 2;
        if total > cfg.max_steps {
            return Err(Error::RuntimeTooLarge { steps: total, tol: abs_tol });
        }
        let finer: Vec<usize> = sub.iter().map(|n| 2 * n).collect();
        let cur = fixed_pass(gen, &kn, &finer, cfg.order);
        let defect = prev.iter().zip(&cur).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max);
        let err = defect / factor;
        if err <= abs_tol {
            let mut unitaries = cur;
            if prepended {
                unitaries.remove(0);
            }
            return Ok(Propagation { checkpoints: checkpoints.to_vec(), unitaries, steps: total, error_estimate: err });
        }
        prev = cur;
        sub = finer;
    }
}

pub fn absolute_tol(runtime: f64, cfg: &PropagationConfig) -> f64 {
    cfg.tol * (1.0 + runtime)
}

/// `U_T(s)` for `i dU/ds = +- T H(s) U`.
pub fn evolve_true(
    h: &LoopHamiltonian,
    runtime: f64,
    direction: Direction,
    checkpoints: &[f64],
    cfg: &PropagationConfig,
) -> Result<Propagation> {
    let gen = TrueGenerator { h, runtime, direction };
    propagate_adaptive(&gen, checkpoints, absolute_tol(runtime, cfg), cfg)
}

/// Ideal adiabatic propagator `U_A(s)`.
pub fn evolve_ideal(
    h: &LoopHamiltonian,
    runtime: f64,
    direction: Direction,
    checkpoints: &[f64],
    cfg: &PropagationConfig,
) -> Result<Propagation> {
    let gen = IdealGenerator { h, runtime, direction };
    propagate_adaptive(&gen, checkpoints, absolute_tol(runtime, cfg), cfg)
}

/// `<psi_0| U_T(1) |psi_0>` for the ground state at `s = 0`.
pub fn ground_overlap(
    h: &LoopHamiltonian,
    psi0: &CVector,
    runtime: f64,
    direction: Direction,
    cfg: &PropagationConfig,
) -> Result<C64> {
    let p = evolve_true(h, runtime, direction, &[1.0], cfg)?;
    Ok(inner(psi0, &(p.last() * psi0)))
}

pub fn uniform_checkpoints(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 / (count - 1) as f64).collect()
}

/// Wave-operator scalar `z(s) = <psi_0| U_A^dag U_T |psi_0>` along the checkpoints.
#[derive(Clone, Debug)]
pub struct WaveScalar {
    pub z: Vec<C64>,
    /// Unwrapped `arg z`.
    pub phase_error: Vec<f64>,
    /// `1 - |z|^2`.
    pub leakage: Vec<f64>,
}

pub fn wave_scalar(u_true: &[CMatrix], u_ideal: &[CMatrix], psi0: &CVector, checkpoints: &[f64]) -> Result<WaveScalar> {
    let mut z = Vec::with_capacity(u_true.len());
    for (k, (ut, ua)) in u_true.iter().zip(u_ideal).enumerate() {
        let v = inner(&(ua * psi0), &(ut * psi0));
        if v.norm() < 1e-6 {
            return Err(Error::PhaseUndefined { s: checkpoints[k], modulus: v.norm() });
        }
        z.push(v);
    }
    let raw: Vec<f64> = z.iter().map(|v| v.arg()).collect();
    let phase_error = unwrap(&raw);
    let leakage = z.iter().map(|v| 1.0 - v.norm_sqr()).collect();
    Ok(WaveScalar { z, phase_error, leakage })
}

/// Everything measured along one evolution.
#[derive(Clone, Debug)]
pub struct EvolutionRecord {
    pub runtime: f64,
    pub direction: Direction,
    pub checkpoints: Vec<f64>,
    pub u_true: Vec<CMatrix>,
    pub u_ideal: Vec<CMatrix>,
    pub wave: WaveScalar,
    /// `T int_0^s E_0`.
    pub dynamical_phase: Vec<f64>,
    pub steps: u64,
    pub error_estimate: f64,
}

impl EvolutionRecord {
    pub fn final_phase_error(&self) -> f64 {
        *self.wave.phase_error.last().unwrap()
    }

    pub fn final_leakage(&self) -> f64 {
        *self.wave.leakage.last().unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# runtime = {}, direction = {:?}", self.runtime, self.direction)?;
        writeln!(f, "# s: loop parameter; z: <psi0|U_A^dag U_T|psi0>; phase_error: unwrapped arg z;")?;
        writeln!(f, "# leakage: 1 - |z|^2; dynamical_phase: T int_0^s E_0")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["s", "re_z", "im_z", "phase_error", "leakage", "dynamical_phase"])?;
        for k in 0..self.checkpoints.len() {
            w.write_record([
                format!("{:.17e}", self.checkpoints[k]),
                format!("{:.17e}", self.wave.z[k].re),
                format!("{:.17e}", self.wave.z[k].im),
                format!("{:.17e}", self.wave.phase_error[k]),
                format!("{:.17e}", self.wave.leakage[k]),
                format!("{:.17e}", self.dynamical_phase[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn record(
    h: &LoopHamiltonian,
    frame: &SpectralFrame,
    runtime: f64,
    direction: Direction,
    checkpoints: &[f64],
    cfg: &PropagationConfig,
) -> Result<EvolutionRecord> {
    let ut = evolve_true(h, runtime, direction, checkpoints, cfg)?;
    let ua = evolve_ideal(h, runtime, direction, checkpoints, cfg)?;
    let psi0 = column(&frame.vectors[0], 0);
    let wave = wave_scalar(&ut.unitaries, &ua.unitaries, &psi0, checkpoints)?;
    let dynamical_phase = checkpoints.iter().map(|&s| runtime * frame.ground_integral_at(s)).collect();
    Ok(EvolutionRecord {
        runtime,
        direction,
        checkpoints: checkpoints.to_vec(),
        wave,
        dynamical_phase,
        steps: ut.steps + ua.steps,
        error_estimate: ut.error_estimate.max(ua.error_estimate),
        u_true: ut.unitaries,
        u_ideal: ua.unitaries,
    })
}
