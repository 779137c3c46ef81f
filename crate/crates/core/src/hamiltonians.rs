//! Closed Hamiltonian loops `H(s)`, `s in [0, 1]`, with `H(0) = H(1)`.
//!
//! Three families are built in: the two-level spin cone, a spin-1 three-level loop with a
//! static anisotropy, and an arbitrary Hermitian Fourier path read from a config file.

use crate::error::{Error, Result};
use crate::linalg::{c, max_abs, CMatrix, C64};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

/// How `derivative` and `second_derivative` are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    /// Centered differences with the configured step.
    Fd,
}

/// One Fourier harmonic `A cos(2 pi k s) + B sin(2 pi k s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    #[serde(default)]
    pub cos: Vec<[f64; 2]>,
    #[serde(default)]
    pub sin: Vec<[f64; 2]>,
}

/// Model family and its parameters, as written in the `[model]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    SpinCone {
        #[serde(default = "one")]
        field: f64,
        #[serde(default = "default_cone")]
        theta_cone: f64,
    },
    ThreeLevel {
        #[serde(default = "one")]
        field: f64,
        #[serde(default = "default_three_cone")]
        theta_cone: f64,
        #[serde(default = "default_anisotropy")]
        anisotropy: f64,
        #[serde(default)]
        levels: [f64; 3],
    },
    /// Row-major `[re, im]` pairs.
    MatrixPath {
        dim: usize,
        constant: Vec<[f64; 2]>,
        #[serde(default)]
        harmonics: Vec<Harmonic>,
    },
}

fn one() -> f64 {
    1.0
}
fn default_cone() -> f64 {
    0.4
}
fn default_three_cone() -> f64 {
    0.9
}
fn default_anisotropy() -> f64 {
    0.35
}
fn default_fd_step() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub derivative: DerivativeMode,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Constant energy offset `c I`.
    #[serde(default)]
    pub shift: f64,
}

impl ModelSpec {
    pub fn spin_cone(field: f64, theta_cone: f64) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::SpinCone { field, theta_cone },
            derivative: DerivativeMode::Analytic,
            fd_step: default_fd_step(),
            shift: 0.0,
        }
    }

    pub fn three_level(field: f64, theta_cone: f64, anisotropy: f64, levels: [f64; 3]) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::ThreeLevel { field, theta_cone, anisotropy, levels },
            derivative: DerivativeMode::Analytic,
            fd_step: default_fd_step(),
            shift: 0.0,
        }
    }

    pub fn build(&self) -> Result<LoopHamiltonian> {
        LoopHamiltonian::from_spec(self)
    }
}

#[derive(Clone, Debug)]
enum Family {
    SpinCone { field: f64, theta: f64 },
    ThreeLevel { field: f64, theta: f64, anisotropy: f64, levels: [f64; 3] },
    Fourier { constant: CMatrix, harmonics: Vec<(f64, CMatrix, CMatrix)> },
}

/// Descriptive data carried alongside the Hamiltonian into output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct LoopHamiltonian {
    dim: usize,
    family: Family,
    mode: DerivativeMode,
    fd_step: f64,
    shift: f64,
    meta: ModelMetadata,
}

fn matrix_from_pairs(dim: usize, pairs: &[[f64; 2]], what: &str) -> Result<CMatrix> {
    if pairs.len() != dim * dim {
        return Err(Error::Config(format!(
            "{what}: expected {} [re, im] entries for dim {dim}, got {}",
            dim * dim,
            pairs.len()
        )));
    }
    let m = CMatrix::from_row_iterator(dim, dim, pairs.iter().map(|p| c(p[0], p[1])));
    if max_abs(&(&m - m.adjoint())) > 1e-12 {
        return Err(Error::Config(format!("{what}: matrix is not Hermitian")));
    }
    Ok(m)
}

fn spin1() -> [CMatrix; 3] {
    let r = SQRT_2 / 2.0;
    let z = c(0.0, 0.0);
    let sx = CMatrix::from_row_slice(3, 3, &[z, c(r, 0.0), z, c(r, 0.0), z, c(r, 0.0), z, c(r, 0.0), z]);
    let sy = CMatrix::from_row_slice(
        3,
        3,
        &[z, c(0.0, -r), z, c(0.0, r), z, c(0.0, -r), z, c(0.0, r), z],
    );
    let sz = CMatrix::from_row_slice(3, 3, &[c(1.0, 0.0), z, z, z, z, z, z, z, c(-1.0, 0.0)]);
    [sx, sy, sz]
}

fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    [
        CMatrix::from_row_slice(2, 2, &[z, c(1.0, 0.0), c(1.0, 0.0), z]),
        CMatrix::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), z, z, c(-1.0, 0.0)]),
    ]
}

/// `d^k/ds^k` of the cone direction `(sin t cos 2 pi s, sin t sin 2 pi s, cos t)`.
fn cone_direction(theta: f64, s: f64, k: u32) -> [f64; 3] {
    let w = 2.0 * PI;
    let (sn, cs) = (w * s).sin_cos();
    let st = theta.sin();
    match k {
        0 => [st * cs, st * sn, theta.cos()],
        1 => [-w * st * sn, w * st * cs, 0.0],
        _ => [-w * w * st * cs, -w * w * st * sn, 0.0],
    }
}

fn combine(ops: &[CMatrix; 3], v: [f64; 3], scale: f64) -> CMatrix {
    (&ops[0] * c(v[0], 0.0) + &ops[1] * c(v[1], 0.0) + &ops[2] * c(v[2], 0.0)) * c(scale, 0.0)
}

impl LoopHamiltonian {
    pub fn from_spec(spec: &ModelSpec) -> Result<LoopHamiltonian> {
        if let ModelKind::SpinCone { field, theta_cone } | ModelKind::ThreeLevel { field, theta_cone, .. } = &spec.kind {
            if !(*field > 0.0 && field.is_finite()) {
                return Err(Error::Config(format!("field must be positive for a nonzero gap, got {field}")));
            }
            if !(*theta_cone > 0.0 && *theta_cone < PI) {
                return Err(Error::Config(format!("theta_cone must lie in (0, pi), got {theta_cone}")));
            }
        }
        let mut params = BTreeMap::new();
        let (dim, family, kind) = match &spec.kind {
            ModelKind::SpinCone { field, theta_cone } => {
                params.insert("field".into(), *field);
                params.insert("theta_cone".into(), *theta_cone);
                (2, Family::SpinCone { field: *field, theta: *theta_cone }, "spin-cone")
            }
            ModelKind::ThreeLevel { field, theta_cone, anisotropy, levels } => {
                params.insert("field".into(), *field);
                params.insert("theta_cone".into(), *theta_cone);
                params.insert("anisotropy".into(), *anisotropy);
                for (k, e) in levels.iter().enumerate() {
                    params.insert(format!("level{k}"), *e);
                }
                let family = Family::ThreeLevel {
                    field: *field,
                    theta: *theta_cone,
                    anisotropy: *anisotropy,
                    levels: *levels,
                };
                (3, family, "three-level")
            }
            ModelKind::MatrixPath { dim, constant, harmonics } => {
                if *dim < 2 || *dim > 32 {
                    return Err(Error::Config(format!("matrix-path dim {dim} outside 2..=32")));
                }
                let constant = matrix_from_pairs(*dim, constant, "constant")?;
                let mut hs = Vec::new();
                for h in harmonics {
                    if h.order == 0 {
                        return Err(Error::Config("harmonic order must be positive".into()));
                    }
                    let zero = CMatrix::zeros(*dim, *dim);
                    let a = if h.cos.is_empty() { zero.clone() } else { matrix_from_pairs(*dim, &h.cos, "cos")? };
                    let b = if h.sin.is_empty() { zero } else { matrix_from_pairs(*dim, &h.sin, "sin")? };
                    hs.push((h.order as f64, a, b));
                }
                params.insert("harmonics".into(), hs.len() as f64);
                (*dim, Family::Fourier { constant, harmonics: hs }, "matrix-path")
            }
        };
        if !(spec.fd_step > 0.0 && spec.fd_step < 0.1) {
            return Err(Error::Config(format!("fd_step {} out of range", spec.fd_step)));
        }
        if spec.shift != 0.0 {
            params.insert("shift".into(), spec.shift);
        }
        Ok(LoopHamiltonian {
            dim,
            family,
            mode: spec.derivative,
            fd_step: spec.fd_step,
            shift: spec.shift,
            meta: ModelMetadata { kind: kind.into(), dim, params },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.meta
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    /// The same loop with `c I` added.
    pub fn shifted(&self, c_shift: f64) -> LoopHamiltonian {
        let mut out = self.clone();
        out.shift += c_shift;
        out.meta.params.insert("shift".into(), out.shift);
        out
    }

    pub fn evaluate(&self, s: f64) -> CMatrix {
        let mut h = self.analytic(s, 0);
        if self.shift != 0.0 {
            for k in 0..self.dim {
                h[(k, k)] += c(self.shift, 0.0);
            }
        }
        h
    }

    pub fn derivative(&self, s: f64) -> CMatrix {
        match self.mode {
            DerivativeMode::Analytic => self.analytic(s, 1),
            DerivativeMode::Fd => {
                let h = self.fd_step;
                (self.analytic(s + h, 0) - self.analytic(s - h, 0)) * c(0.5 / h, 0.0)
            }
        }
    }

    pub fn second_derivative(&self, s: f64) -> CMatrix {
        match self.mode {
            DerivativeMode::Analytic => self.analytic(s, 2),
            DerivativeMode::Fd => {
                let h = self.fd_step;
                (self.analytic(s + h, 0) - self.analytic(s, 0) * c(2.0, 0.0) + self.analytic(s - h, 0))
                    * c(1.0 / (h * h), 0.0)
            }
        }
    }

    fn analytic(&self, s: f64, k: u32) -> CMatrix {
        match &self.family {
            Family::SpinCone { field, theta } => combine(&pauli(), cone_direction(*theta, s, k), 0.5 * field),
            Family::ThreeLevel { field, theta, anisotropy, levels } => {
                let ops = spin1();
                let mut h = combine(&ops, cone_direction(*theta, s, k), *field);
                if k == 0 {
                    for (j, e) in levels.iter().enumerate() {
                        h[(j, j)] += c(*e, 0.0);
                    }
                    h += &ops[2] * &ops[2] * c(*anisotropy, 0.0);
                }
                h
            }
            Family::Fourier { constant, harmonics } => {
                let mut h = if k == 0 { constant.clone() } else { CMatrix::zeros(self.dim, self.dim) };
                for (order, a, b) in harmonics {
                    let w = 2.0 * PI * order;
                    let (sn, cs) = (w * s).sin_cos();
                    let (ca, cb) = match k {
                        0 => (cs, sn),
                        1 => (-w * sn, w * cs),
                        _ => (-w * w * cs, -w * w * sn),
                    };
                    h += a * c(ca, 0.0) + b * c(cb, 0.0);
                }
                h
            }
        }
    }

    /// Closure gap `||H(1) - H(0)||`.
    pub fn closure_gap(&self) -> f64 {
        max_abs(&(self.evaluate(1.0) - self.evaluate(0.0)))
    }
}

/// Frequently used entry: `<a| M |b>` for column vectors.
pub fn sandwich(a: &crate::linalg::CVector, m: &CMatrix, b: &crate::linalg::CVector) -> C64 {
    crate::linalg::inner(a, &(m * b))
}
