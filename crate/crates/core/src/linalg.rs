//! Small dense complex linear algebra used throughout the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

pub fn eigh(h: &CMatrix) -> HermitianEigen {
    let n = h.nrows();
    if n == 2 {
        return eigh2(h);
    }
    // Symmetrize against round-off before handing to the solver.
    let hs = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = hs.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    HermitianEigen { values, vectors }
}

/// Closed form for 2x2, which is both faster and more accurate than the iterative solver.
fn eigh2(h: &CMatrix) -> HermitianEigen {
    let p = Pauli::from_matrix(h);
    let r = p.norm();
    let values = vec![p.a0 - r, p.a0 + r];
    if r == 0.0 {
        return HermitianEigen { values, vectors: CMatrix::identity(2, 2) };
    }
    // Eigenvectors of n.sigma for unit n = (x, y, z)/r.
    let (x, y, z) = (p.x / r, p.y / r, p.z / r);
    let up = if z >= 0.0 {
        let a = ((1.0 + z) / 2.0).sqrt();
        [c(a, 0.0), c(x, y) / (2.0 * a)]
    } else {
        let b = ((1.0 - z) / 2.0).sqrt();
        [c(x, -y) / (2.0 * b), c(b, 0.0)]
    };
    // The orthogonal complement of (u0, u1) is (-conj u1, conj u0).
    let down = [-up[1].conj(), up[0].conj()];
    let vectors = CMatrix::from_row_slice(2, 2, &[down[0], up[0], down[1], up[1]]);
    HermitianEigen { values, vectors }
}

/// `exp(-i X)` for Hermitian `X`.
pub fn expm_minus_i(x: &CMatrix) -> CMatrix {
    if x.nrows() == 2 {
        return Pauli::from_matrix(x).exp_minus_i().to_matrix();
    }
    let e = eigh(x);
    let n = x.nrows();
    let mut scaled = e.vectors.clone();
    for col in 0..n {
        let ph = C64::from_polar(1.0, -e.values[col]);
        for r in 0..n {
            scaled[(r, col)] *= ph;
        }
    }
    &scaled * e.vectors.adjoint()
}

/// `-i [X, Y]`, Hermitian whenever `X` and `Y` are.
pub fn hcomm(x: &CMatrix, y: &CMatrix) -> CMatrix {
    (x * y - y * x) * (-I)
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Spectral norm of a Hermitian matrix.
pub fn herm_norm(m: &CMatrix) -> f64 {
    let v = eigh(m).values;
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `<a|b>`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn column(m: &CMatrix, k: usize) -> CVector {
    m.column(k).into_owned()
}

/// Eigenphases and eigenvectors of a unitary matrix (via complex Schur; normal matrices
/// have diagonal Schur form).
#[derive(Clone, Debug)]
pub struct UnitaryEigen {
    /// Eigenphases in `[0, 2pi)`.
    pub phases: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn unitary_eigen(u: &CMatrix) -> UnitaryEigen {
    let n = u.nrows();
    let schur = nalgebra::linalg::Schur::new(u.clone());
    let (q, t) = schur.unpack();
    let phases = (0..n).map(|k| wrap_2pi(t[(k, k)].arg())).collect();
    UnitaryEigen { phases, vectors: q }
}

pub fn wrap_2pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y >= 2.0 * PI {
        0.0
    } else {
        y
    }
}

/// Principal value in `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = wrap_2pi(x);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Distance on the circle of circumference `period`.
pub fn circ_dist(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Unwrap a sequence of phases so consecutive differences lie in `(-pi, pi]`.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut prev: Option<f64> = None;
    for &p in phases {
        let v = match prev {
            None => p,
            Some(q) => q + wrap_pi(p - q),
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

/// Hermitian 2x2 matrix `a0 I + (x, y, z).sigma`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pauli {
    pub a0: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pauli {
    pub fn from_matrix(h: &CMatrix) -> Pauli {
        Pauli {
            a0: 0.5 * (h[(0, 0)].re + h[(1, 1)].re),
            x: 0.5 * (h[(1, 0)].re + h[(0, 1)].re),
            y: 0.5 * (h[(1, 0)].im - h[(0, 1)].im),
            z: 0.5 * (h[(0, 0)].re - h[(1, 1)].re),
        }
    }

    pub fn to_matrix(self) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                c(self.a0 + self.z, 0.0),
                c(self.x, -self.y),
                c(self.x, self.y),
                c(self.a0 - self.z, 0.0),
            ],
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    #[inline]
    pub fn scale(self, s: f64) -> Pauli {
        Pauli { a0: self.a0 * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }

    #[inline]
    pub fn add(self, o: Pauli) -> Pauli {
        Pauli { a0: self.a0 + o.a0, x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }

    #[inline]
    pub fn sub(self, o: Pauli) -> Pauli {
        self.add(o.scale(-1.0))
    }

    /// `-i [X, Y]` in Pauli form: `2 (x cross y).sigma`.
    #[inline]
    pub fn hcomm(self, o: Pauli) -> Pauli {
        Pauli {
            a0: 0.0,
            x: 2.0 * (self.y * o.z - self.z * o.y),
            y: 2.0 * (self.z * o.x - self.x * o.z),
            z: 2.0 * (self.x * o.y - self.y * o.x),
        }
    }

    /// `exp(-i X)` as a 2x2 unitary.
    #[inline]
    pub fn exp_minus_i(self) -> U2 {
        let r = self.norm();
        let (s, co) = r.sin_cos();
        let k = if r > 0.0 { s / r } else { 1.0 };
        let g = C64::from_polar(1.0, -self.a0);
        // cos r - i sin r (n.sigma)
        let m00 = c(co, -k * self.z);
        let m01 = c(-k * self.y, -k * self.x);
        let m10 = c(k * self.y, -k * self.x);
        let m11 = c(co, k * self.z);
        U2([[g * m00, g * m01], [g * m10, g * m11]])
    }
}

/// Plain 2x2 complex matrix for the two-level fast path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct U2(pub [[C64; 2]; 2]);

impl U2 {
    pub fn identity() -> U2 {
        U2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]])
    }

    #[inline]
    pub fn mul(&self, o: &U2) -> U2 {
        let a = &self.0;
        let b = &o.0;
        U2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    pub fn to_matrix(self) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]])
    }

    pub fn from_matrix(m: &CMatrix) -> U2 {
        U2([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
    }
}

/// Real symmetric solve for small least-squares and Vandermonde systems.
pub fn solve_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}
