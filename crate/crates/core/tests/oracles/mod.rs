//! Slow reference implementations used to check the fast paths. Nothing
//! here calls into the crate's numerical kernels.

#![allow(dead_code)]

use essm::linalg::Matrix;
use essm::model::{LayerParams, TruncationMode};

/// Gauss-Legendre nodes and weights on `[0, 1]`, by Newton iteration on
/// `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// `Z_ij = ∫_0^1 (α - 1)^2 α^{i+j} dα` by quadrature exact for the degree.
pub fn hankel_by_quadrature(len: usize) -> Matrix {
    let rule = gauss_legendre(len + 8);
    Matrix::from_fn(len, len, |i, j| {
        rule.iter()
            .map(|&(a, w)| w * (a - 1.0) * (a - 1.0) * a.powi((i + j) as i32))
            .sum()
    })
}

/// Cyclic Jacobi eigensolver. Eigenvalues descending, eigenvectors in the
/// columns of the returned matrix.
pub fn jacobi_eig(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-300 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

/// The budgeted layer written out term by term, with direct convolution
/// sums. `eigenvalues` and `filters` describe the basis.
pub fn naive_layer(
    u: &Matrix,
    p: &LayerParams,
    eigenvalues: &[f64],
    filters: &[Vec<f64>],
    k: usize,
    gate_enabled: bool,
    truncation: TruncationMode,
) -> Matrix {
    let (len, d) = u.shape();
    let cap = eigenvalues.len();
    let support = match truncation {
        TruncationMode::MaskedSoftmax => k,
        TruncationMode::DirectPrefix => cap,
    };
    let mut y = Matrix::zeros(len, d);
    for t in 0..len {
        let ut = u.row(t);
        let mut s = vec![0.0; support];
        if gate_enabled {
            let dg = p.gate.b1.len();
            let h: Vec<f64> = (0..dg)
                .map(|a| gelu((0..d).map(|j| p.gate.w1[(a, j)] * ut[j]).sum::<f64>() + p.gate.b1[a]))
                .collect();
            for (c, sc) in s.iter_mut().enumerate() {
                *sc = (0..dg).map(|a| p.gate.w2[(c, a)] * h[a]).sum::<f64>() + p.gate.b2[c];
            }
        }
        let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = (support as f64).sqrt() / (r + p.gate.eps);
        let e: Vec<f64> = s.iter().map(|v| (v * scale).exp()).collect();
        let z: f64 = e.iter().sum();
        for i in 0..d {
            let mut acc: f64 = (0..d).map(|j| p.skip[(i, j)] * ut[j]).sum();
            for ch in 0..k {
                let alpha = e[ch] / z;
                let q = eigenvalues[ch].max(0.0).powf(0.25);
                for j in 0..d {
                    let conv: f64 = (0..=t).map(|s| filters[ch][s] * u[(t - s, j)]).sum();
                    acc += alpha * q * p.mixing[ch][(i, j)] * conv;
                }
            }
            y[(t, i)] = acc;
        }
    }
    y
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
