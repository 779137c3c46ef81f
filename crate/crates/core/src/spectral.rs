//! Instantaneous eigenframe of a loop on a uniform grid.
//!
//! Eigenvectors are made smooth by a real-positive overlap chain (discrete parallel
//! transport). The holonomy of each level is then spread linearly over the loop so the
//! frame is single valued: column `n` at `s = 1` equals column `n` at `s = 0`. In this gauge
//! the diagonal couplings are constant, `M_nn = -i chi_n`, and `theta_B^(n)(s) = chi_n s`.

use crate::error::{Error, Result};
use crate::hamiltonians::LoopHamiltonian;
use crate::linalg::{c, column, eigh, herm_norm, inner, unwrap, wrap_2pi, CMatrix, C64};
use crate::numerics::{cumulative, simpson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Number of grid intervals `G`; the frame holds `G + 1` points.
    pub grid: usize,
    /// Smallest acceptable `|<n(s_g)|n(s_{g+1})>|` before tracking is declared lost.
    pub min_track_overlap: f64,
    /// Smallest acceptable level splitting.
    pub degeneracy_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { grid: 4096, min_track_overlap: 0.7, degeneracy_tol: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub grid: Vec<f64>,
    /// `energies[g][n]`, ascending in `n`.
    pub energies: Vec<Vec<f64>>,
    /// Smooth single-valued eigenvectors as columns.
    pub vectors: Vec<CMatrix>,
    /// `couplings[g][(n, m)] = <n|d_s m>`.
    pub couplings: Vec<CMatrix>,
    /// Berry phase of each level around the loop, grid-extrapolated.
    pub holonomy: Vec<f64>,
    /// Holonomy read off the overlap chain before extrapolation.
    pub raw_holonomy: Vec<f64>,
    /// `omega[n][g] = int_0^{s_g} (E_n - E_0)`.
    pub omega: Vec<Vec<f64>>,
    /// `int_0^{s_g} E_0`.
    pub ground_integral: Vec<f64>,
    pub h_norm: Vec<f64>,
    pub hdot_norm: Vec<f64>,
    pub gap_min: f64,
}

impl SpectralFrame {
    pub fn dim(&self) -> usize {
        self.energies[0].len()
    }

    pub fn intervals(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn gap(&self, n: usize, g: usize) -> f64 {
        self.energies[g][n] - self.energies[g][0]
    }

    /// `theta_B^(n)(s_g)` in the frame gauge.
    pub fn level_berry(&self, n: usize, g: usize) -> f64 {
        self.holonomy[n] * self.grid[g]
    }

    /// `beta_n(s_g) = theta_B^(n) - theta_B^(0)`.
    pub fn beta(&self, n: usize, g: usize) -> f64 {
        (self.holonomy[n] - self.holonomy[0]) * self.grid[g]
    }

    /// `M_n0` along the grid.
    pub fn coupling(&self, n: usize) -> Vec<C64> {
        self.couplings.iter().map(|m| m[(n, 0)]).collect()
    }

    /// Unwrapped `phi_n(s) = arg M_n0(s)`.
    pub fn coupling_phase(&self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = self.coupling(n).iter().map(|z| z.arg()).collect();
        unwrap(&raw)
    }

    /// Total integrated gap `omega_n = omega_n(1)`.
    pub fn frequency(&self, n: usize) -> f64 {
        *self.omega[n].last().unwrap()
    }

    /// `int_0^1 E_0`; the forward dynamical phase is `T` times this.
    pub fn mean_ground_energy(&self) -> f64 {
        *self.ground_integral.last().unwrap()
    }

    /// `int_0^s E_0` at an arbitrary `s`, by cubic Hermite interpolation of the running
    /// integral (its derivative is `E_0`).
    pub fn ground_integral_at(&self, s: f64) -> f64 {
        let g = self.intervals();
        let h = self.spacing();
        let x = (s / h).clamp(0.0, g as f64);
        let k = (x.floor() as usize).min(g - 1);
        let t = x - k as f64;
        let (f0, f1) = (self.ground_integral[k], self.ground_integral[k + 1]);
        let (d0, d1) = (self.energies[k][0] * h, self.energies[k + 1][0] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * d1
    }

    pub fn hdot_max(&self) -> f64 {
        self.hdot_norm.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        self.h_norm.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest integrated gap, the fastest oscillation in any phase signal.
    pub fn max_frequency(&self) -> f64 {
        (1..self.dim()).map(|n| self.frequency(n)).fold(0.0, f64::max)
    }

    /// Gauge-invariant Wilson-loop Berry phase on every `stride`-th grid point.
    pub fn wilson_loop(&self, level: usize, stride: usize) -> f64 {
        let g = self.intervals();
        let mut prod = c(1.0, 0.0);
        let mut k = 0;
        while k < g {
            let next = (k + stride).min(g);
            let a = column(&self.vectors[k], level);
            let b = column(&self.vectors[if next == g { 0 } else { next }], level);
            let ov = inner(&a, &b);
            prod *= ov / ov.norm();
            k = next;
        }
        wrap_2pi(-prod.arg())
    }
}

/// Ground-state Berry phase of the loop in `[0, 2pi)`.
pub fn berry_phase_oracle(frame: &SpectralFrame, level: usize) -> f64 {
    wrap_2pi(frame.holonomy[level])
}

/// Ground projector and its derivative at an arbitrary `s`, from `H(s)` and `dH/ds`.
/// Gauge free: `dP = |d psi><psi| + h.c.` with `|d psi> = sum_n |n><n|H'|psi> / (E_0 - E_n)`.
pub fn ground_projector(h: &LoopHamiltonian, s: f64) -> (CMatrix, CMatrix) {
    let e = eigh(&h.evaluate(s));
    let hd = h.derivative(s);
    let psi = column(&e.vectors, 0);
    let hpsi = &hd * &psi;
    let mut dpsi = crate::linalg::CVector::zeros(h.dim());
    for n in 1..h.dim() {
        let v = column(&e.vectors, n);
        let amp = inner(&v, &hpsi) / (e.values[0] - e.values[n]);
        dpsi += v * amp;
    }
    let p = &psi * psi.adjoint();
    let dp = &dpsi * psi.adjoint() + &psi * dpsi.adjoint();
    (p, dp)
}

pub fn decompose(h: &LoopHamiltonian, cfg: &SpectralConfig) -> Result<SpectralFrame> {
    let g_count = cfg.grid;
    if g_count < 8 {
        return Err(Error::Config(format!("spectral grid {g_count} too small")));
    }
    let dim = h.dim();
    let hstep = 1.0 / g_count as f64;
    let grid: Vec<f64> = (0..=g_count).map(|k| k as f64 * hstep).collect();

    let raw: Vec<(crate::linalg::HermitianEigen, CMatrix, f64, f64)> = grid
        .par_iter()
        .map(|&s| {
            let hs = h.evaluate(s);
            let hd = h.derivative(s);
            let e = eigh(&hs);
            let hn = herm_norm(&hs);
            let hdn = herm_norm(&hd);
            (e, hd, hn, hdn)
        })
        .collect();

    let mut gap_min = f64::INFINITY;
    for (g, (e, ..)) in raw.iter().enumerate() {
        for n in 0..dim - 1 {
            let split = e.values[n + 1] - e.values[n];
            if split < cfg.degeneracy_tol {
                return Err(Error::ModelDegeneracy { s: grid[g], splitting: split });
            }
        }
        gap_min = gap_min.min(e.values[1] - e.values[0]);
    }

    // Real-positive overlap chain.
    let mut vectors: Vec<CMatrix> = Vec::with_capacity(g_count + 1);
    vectors.push(raw[0].0.vectors.clone());
    for g in 1..=g_count {
        let mut v = raw[g].0.vectors.clone();
        for n in 0..dim {
            let ov: C64 = (0..dim).map(|r| vectors[g - 1][(r, n)].conj() * v[(r, n)]).sum();
            let mag = ov.norm();
            if mag < cfg.min_track_overlap {
                return Err(Error::GridTooCoarse { s: grid[g], overlap: mag });
            }
            let fix = ov.conj() / mag;
            for r in 0..dim {
                v[(r, n)] *= fix;
            }
        }
        vectors.push(v);
    }

    // Holonomy of the chain, then Richardson in h^2 over strides 1, 2, 4.
    let mut raw_holonomy = vec![0.0; dim];
    let mut holonomy = vec![0.0; dim];
    for n in 0..dim {
        let ov: C64 = (0..dim).map(|r| vectors[0][(r, n)].conj() * vectors[g_count][(r, n)]).sum();
        let gamma = ov.arg();
        raw_holonomy[n] = gamma;
        if g_count % 4 == 0 {
            let stride_phase = |stride: usize| -> f64 {
                let mut acc = 0.0;
                let mut k = 0;
                while k < g_count {
                    let ov: C64 = (0..dim).map(|r| vectors[k][(r, n)].conj() * vectors[k + stride][(r, n)]).sum();
                    acc += ov.arg();
                    k += stride;
                }
                gamma - acc
            };
            let (t1, t2, t4) = (stride_phase(1), stride_phase(2), stride_phase(4));
            let e1 = t1 + (t1 - t2) / 3.0;
            let e2 = t2 + (t2 - t4) / 3.0;
            holonomy[n] = e1 + (e1 - e2) / 15.0;
        } else {
            holonomy[n] = gamma;
        }
    }

    // Spread the chain holonomy so the frame closes on itself.
    for (g, v) in vectors.iter_mut().enumerate() {
        for n in 0..dim {
            let ph = C64::from_polar(1.0, -raw_holonomy[n] * grid[g]);
            for r in 0..dim {
                v[(r, n)] *= ph;
            }
        }
    }
    vectors[g_count] = vectors[0].clone();

    let couplings: Vec<CMatrix> = (0..=g_count)
        .into_par_iter()
        .map(|g| {
            let (e, hd, ..) = &raw[g];
            let v = &vectors[g];
            let hv = hd * v;
            let proj = v.adjoint() * hv;
            CMatrix::from_fn(dim, dim, |n, m| {
                if n == m {
                    c(0.0, -holonomy[n])
                } else {
                    proj[(n, m)] / (e.values[m] - e.values[n])
                }
            })
        })
        .collect();

    let energies: Vec<Vec<f64>> = raw.iter().map(|(e, ..)| e.values.clone()).collect();
    let omega = (0..dim)
        .map(|n| {
            let gaps: Vec<f64> = energies.iter().map(|e| e[n] - e[0]).collect();
            cumulative(&gaps, hstep)
        })
        .collect();
    let e0: Vec<f64> = energies.iter().map(|e| e[0]).collect();
    let mut ground_integral = cumulative(&e0, hstep);
    // Simpson total and running integral agree to round-off for smooth data; pin the end.
    let total = simpson(&e0, hstep);
    let last = ground_integral.len() - 1;
    let drift = total - ground_integral[last];
    for (k, v) in ground_integral.iter_mut().enumerate() {
        *v += drift * grid[k];
    }

    Ok(SpectralFrame {
        h_norm: raw.iter().map(|r| r.2).collect(),
        hdot_norm: raw.iter().map(|r| r.3).collect(),
        grid,
        energies,
        vectors,
        couplings,
        holonomy,
        raw_holonomy,
        omega,
        ground_integral,
        gap_min,
    })
}
