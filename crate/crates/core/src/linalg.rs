//! Small dense decompositions: Householder QR, cyclic Jacobi for symmetric
//! eigenproblems, one-sided Jacobi SVD, and LU with partial pivoting.
//!
//! These run on hidden-size matrices (tens to a few hundred rows), so the
//! textbook O(n³) sweeps are adequate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Thin QR of an m×n matrix with m ≥ n: returns (Q: m×n with orthonormal
/// columns, R: n×n upper triangular).
pub fn qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Shape {
            op: "qr",
            lhs: (m, n),
            rhs: (n, n),
        });
    }
    // Column-major working copy: cols[j] is column j.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let reflect = |v: &[f64], k: usize, x: &mut [f64]| {
        let d: f64 = v.iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
        for (xi, vi) in x[k..].iter_mut().zip(v) {
            *xi -= 2.0 * vi * d;
        }
    };
    for k in 0..n {
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= vnorm;
        }
        for col in cols.iter_mut().skip(k) {
            reflect(&v, k, col);
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for col in q.iter_mut() {
            reflect(v, k, col);
        }
    }
    let q = Matrix::from_fn(m, n, |i, j| q[j][i]);
    let r = Matrix::from_fn(n, n, |i, j| if j >= i { cols[j][i] } else { 0.0 });
    Ok((q, r))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            op: "symmetric_eigen",
            lhs: a.shape(),
            rhs: (n, n),
        });
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        let scale: f64 = m.data().iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

/// Singular values in descending order (one-sided Jacobi on the columns).
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    // Work on the orientation with fewer columns.
    let mut u = if a.cols() > a.rows() { a.transpose() } else { a.clone() };
    let (m, n) = u.shape();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u.get(i, p), u.get(i, q));
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if libm::fabs(gamma) <= 1e-15 * libm::sqrt(alpha * beta) || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u.get(i, p), u.get(i, q));
                    u.set(i, p, c * x - s * y);
                    u.set(i, q, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| libm::sqrt((0..m).map(|i| u.get(i, j) * u.get(i, j)).sum::<f64>()))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Solves `a · x = b` for square `a` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Shape {
            op: "solve",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.data().iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, libm::fabs(lu.get(i, k))))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular { smallest: pval });
        }
        if piv != k {
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(piv, j));
                lu.set(piv, j, t);
            }
            for j in 0..x.cols() {
                let t = x.get(k, j);
                x.set(k, j, x.get(piv, j));
                x.set(piv, j, t);
            }
        }
        for i in k + 1..n {
            let f = lu.get(i, k) / lu.get(k, k);
            lu.set(i, k, f);
            for j in k + 1..n {
                lu.set(i, j, lu.get(i, j) - f * lu.get(k, j));
            }
            for j in 0..x.cols() {
                x.set(i, j, x.get(i, j) - f * x.get(k, j));
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..x.cols() {
            let mut s = x.get(k, j);
            for i in k + 1..n {
                s -= lu.get(k, i) * x.get(i, j);
            }
            x.set(k, j, s / lu.get(k, k));
        }
    }
    Ok(x)
}

/// Product `m_1 · m_2 · … · m_k` of a non-empty chain.
pub fn chain_product(ms: &[Matrix]) -> Result<Matrix> {
    let mut it = ms.iter();
    let first = it.next().ok_or_else(|| Error::InvalidParameter("empty matrix chain".into()))?;
    it.try_fold(first.clone(), |acc, m| acc.matmul(m))
}
