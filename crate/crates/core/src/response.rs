//! Ground-state return amplitudes `z(T) = <psi_0|U_T(1)|psi_0>` as functions of the runtime.
//!
//! Randomized and sampled estimators need `z` at thousands of runtimes. After removing the
//! dynamical phase, `z` is band-limited in `T` (its frequencies are integrated gaps), so a
//! piecewise Chebyshev table built from a few direct evolutions per oscillation period
//! reproduces it to integrator accuracy.

use crate::error::{Error, Result};
use crate::hamiltonians::LoopHamiltonian;
use crate::linalg::{column, CVector, C64};
use crate::numerics::{chebyshev_eval, chebyshev_nodes};
use crate::propagate::{ground_overlap, Direction, PropagationConfig};
use crate::spectral::SpectralFrame;
use rayon::prelude::*;

pub trait OverlapSource: Sync {
    fn overlap(&self, runtime: f64, direction: Direction) -> Result<C64>;

    /// Number of direct evolutions performed so far (diagnostic).
    fn evolutions(&self) -> u64 {
        0
    }
}

/// Evolves on every request.
pub struct DirectOverlaps<'a> {
    pub h: &'a LoopHamiltonian,
    pub psi0: CVector,
    pub cfg: PropagationConfig,
    count: std::sync::atomic::AtomicU64,
}

impl<'a> DirectOverlaps<'a> {
    pub fn new(h: &'a LoopHamiltonian, frame: &SpectralFrame, cfg: PropagationConfig) -> Self {
        DirectOverlaps { h, psi0: column(&frame.vectors[0], 0), cfg, count: Default::default() }
    }
}

impl OverlapSource for DirectOverlaps<'_> {
    fn overlap(&self, runtime: f64, direction: Direction) -> Result<C64> {
        self.count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        ground_overlap(self.h, &self.psi0, runtime, direction, &self.cfg)
    }

    fn evolutions(&self) -> u64 {
        self.count.load(std::sync::atomic::Ordering::Relaxed)
    }
}

#[derive(Clone, Debug)]
pub struct ResponseTable {
    pub t_lo: f64,
    pub t_hi: f64,
    pub panel_width: f64,
    pub nodes: usize,
    mean_energy: f64,
    forward: Vec<Vec<C64>>,
    reverse: Vec<Vec<C64>>,
    /// Largest deviation from direct evolution at the off-node check points.
    pub verify_error: f64,
}

impl ResponseTable {
    /// Tabulates `[t_lo, t_hi]` with panels one fastest period wide.
    pub fn build(
        h: &LoopHamiltonian,
        frame: &SpectralFrame,
        t_lo: f64,
        t_hi: f64,
        nodes: usize,
        cfg: &PropagationConfig,
    ) -> Result<ResponseTable> {
        if !(t_lo > 0.0 && t_hi > t_lo) || nodes < 4 {
            return Err(Error::Config(format!("bad response table range [{t_lo}, {t_hi}] with {nodes} nodes")));
        }
        // Widest spread of the instantaneous spectrum bounds every frequency of z(T) e^{iTE}.
        let top = frame.energies.iter().map(|e| e[e.len() - 1]).fold(f64::MIN, f64::max);
        let bottom = frame.energies.iter().map(|e| e[0]).fold(f64::MAX, f64::min);
        let band = (top - bottom).max(frame.max_frequency()).max(1e-3);
        let width = 2.0 * std::f64::consts::PI / band;
        let panels = ((t_hi - t_lo) / width).ceil().max(1.0) as usize;
        let width = (t_hi - t_lo) / panels as f64;
        let direct = DirectOverlaps::new(h, frame, cfg.clone());
        let e_bar = frame.mean_ground_energy();
        let jobs: Vec<(usize, usize, Direction)> = (0..panels)
            .flat_map(|p| (0..nodes).flat_map(move |j| [(p, j, Direction::Forward), (p, j, Direction::Reverse)]))
            .collect();
        let vals: Vec<Result<C64>> = jobs
            .par_iter()
            .map(|&(p, j, dir)| {
                let a = t_lo + p as f64 * width;
                let t = chebyshev_nodes(a, a + width, nodes)[j];
                let z = direct.overlap(t, dir)?;
                Ok(z * C64::from_polar(1.0, dir.sign() * t * e_bar))
            })
            .collect();
        let mut forward = vec![vec![C64::new(0.0, 0.0); nodes]; panels];
        let mut reverse = forward.clone();
        for (&(p, j, dir), v) in jobs.iter().zip(vals) {
            let v = v?;
            match dir {
                Direction::Forward => forward[p][j] = v,
                Direction::Reverse => reverse[p][j] = v,
            }
        }
        let mut table = ResponseTable {
            t_lo,
            t_hi,
            panel_width: width,
            nodes,
            mean_energy: e_bar,
            forward,
            reverse,
            verify_error: 0.0,
        };
        let probes: Vec<f64> = (0..8).map(|k| t_lo + (t_hi - t_lo) * (0.05 + 0.9 * (k as f64 * 0.618_034).fract())).collect();
        let mut worst: f64 = 0.0;
        for t in probes {
            for dir in [Direction::Forward, Direction::Reverse] {
                worst = worst.max((direct.overlap(t, dir)? - table.overlap(t, dir)?).norm());
            }
        }
        table.verify_error = worst;
        Ok(table)
    }

    pub fn contains(&self, runtime: f64) -> bool {
        runtime >= self.t_lo && runtime <= self.t_hi
    }
}

impl OverlapSource for ResponseTable {
    fn overlap(&self, runtime: f64, direction: Direction) -> Result<C64> {
        if !self.contains(runtime) {
            return Err(Error::Numerical(format!(
                "runtime {runtime} outside response table [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        let p = (((runtime - self.t_lo) / self.panel_width) as usize).min(self.forward.len() - 1);
        let a = self.t_lo + p as f64 * self.panel_width;
        let panel = match direction {
            Direction::Forward => &self.forward[p],
            Direction::Reverse => &self.reverse[p],
        };
        let g = chebyshev_eval(a, a + self.panel_width, panel, runtime);
        Ok(g * C64::from_polar(1.0, -direction.sign() * runtime * self.mean_energy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::ModelSpec;
    use crate::spectral::{decompose, SpectralConfig};

    #[test]
    fn table_matches_direct_evolution() {
        let h = ModelSpec::spin_cone(1.0, 0.4).build().unwrap();
        let f = decompose(&h, &SpectralConfig { grid: 1024, ..Default::default() }).unwrap();
        let cfg = PropagationConfig { tol: 1e-12, ..Default::default() };
        let table = ResponseTable::build(&h, &f, 20.0, 60.0, 24, &cfg).unwrap();
        assert!(table.verify_error < 1e-9, "{}", table.verify_error);
        let direct = DirectOverlaps::new(&h, &f, cfg);
        for t in [20.0, 33.3, 59.99] {
            let d = direct.overlap(t, Direction::Reverse).unwrap();
            assert!((d - table.overlap(t, Direction::Reverse).unwrap()).norm() < 1e-9);
        }
        assert!(table.overlap(61.0, Direction::Forward).is_err());
    }
}
