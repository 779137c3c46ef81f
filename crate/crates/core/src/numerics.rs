//! Quadrature, interpolation and fitting helpers on uniform grids.

use std::f64::consts::PI;

/// Composite Simpson on a uniform grid with an even number of intervals. Falls back to a
/// Simpson 3/8 panel at the end when the count is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let (even_part, tail) = if n % 2 == 0 { (n, 0.0) } else { (n - 3, three_eighths(&values[n - 3..], h)) };
    if even_part == 0 {
        return tail;
    }
    let mut s = values[0] + values[even_part];
    for (k, v) in values.iter().enumerate().take(even_part).skip(1) {
        s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0 + tail
}

fn three_eighths(v: &[f64], h: f64) -> f64 {
    3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3])
}

/// Running integral `F(s_g) = int_0^{s_g} f`, fourth-order accurate at every grid point.
pub fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for k in 1..n {
            out[k] = out[k - 1] + 0.5 * h * (values[k - 1] + values[k]);
        }
        return out;
    }
    for k in 0..n - 1 {
        let f = values;
        let piece = if k == 0 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if k == n - 2 {
            h / 24.0 * (9.0 * f[k + 1] + 19.0 * f[k] - 5.0 * f[k - 1] + f[k - 2])
        } else {
            h / 24.0 * (-f[k - 1] + 13.0 * f[k] + 13.0 * f[k + 1] - f[k + 2])
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Centered first difference on a closed loop sampled at `s_0..=s_G` with `s_G == s_0`.
pub fn periodic_derivative<T>(values: &[T], h: f64) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let g = values.len() - 1;
    (0..=g)
        .map(|k| {
            let next = values[if k == g { 1 } else { k + 1 }];
            let prev = values[if k == 0 { g - 1 } else { k - 1 }];
            (next - prev) * (0.5 / h)
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre on `[a, b]` with `panels` panels of `order` points.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + 0.5 * h * xi);
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Chebyshev points of the first kind mapped to `[a, b]`.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let x = ((2 * j + 1) as f64 * PI / (2 * n) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * x
        })
        .collect()
}

/// Barycentric interpolation through first-kind Chebyshev points.
pub fn chebyshev_eval<T>(a: f64, b: f64, values: &[T], t: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = values.len();
    let x = (2.0 * t - a - b) / (b - a);
    let mut num: Option<T> = None;
    let mut den = 0.0;
    for (j, v) in values.iter().enumerate() {
        let theta = (2 * j + 1) as f64 * PI / (2 * n) as f64;
        let xj = theta.cos();
        let wj = if j % 2 == 0 { theta.sin() } else { -theta.sin() };
        let d = x - xj;
        if d == 0.0 {
            return *v;
        }
        let q = wj / d;
        num = Some(match num {
            None => *v * q,
            Some(acc) => acc + *v * q,
        });
        den += q;
    }
    num.expect("empty chebyshev panel") * (1.0 / den)
}

/// Ordinary least squares line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Root-mean-square of residuals.
    pub residual_rms: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    LineFit {
        slope,
        intercept,
        slope_stderr: (sse / dof / sxx).sqrt(),
        residual_rms: (sse / n).sqrt(),
    }
}

/// Fit `log10 |y| = a + p log10 x`. Zero entries are skipped.
pub fn fit_power(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && b.abs() > 0.0 && b.is_finite())
        .map(|(a, b)| (a.log10(), b.abs().log10()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    Some(fit_line(&lx, &ly))
}

/// Linear least squares `min ||A c - y||` by SVD with column scaling.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = columns.len();
    let scale: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300))
        .collect();
    let a = nalgebra::DMatrix::from_fn(y.len(), k, |r, j| columns[j][r] / scale[j]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-13).ok()?;
    Some((0..k).map(|j| sol[j] / scale[j]).collect())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Geometric grid `start * ratio^k`, `k = 0..count`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}
