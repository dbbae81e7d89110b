//! Dense linear algebra at the small sizes this crate needs: rank by
//! partial-pivot row reduction, linear solves, symmetric eigenvalues via
//! cyclic Jacobi, and 2×2 / 3×3 helpers.

use crate::scalar::Real;

/// Row-major dense matrix with explicit shape.
#[derive(Debug, Clone)]
pub struct DenseMatrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Real> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    /// Rank by Gaussian elimination with partial pivoting; pivots with
    /// magnitude at or below `pivot_tol` count as zero.
    pub fn rank(&self, pivot_tol: S) -> usize {
        let mut m = self.clone();
        let mut rank = 0usize;
        let mut row = 0usize;
        for col in 0..m.cols {
            if row >= m.rows {
                break;
            }
            let mut pivot = row;
            let mut best = m.get(row, col).abs();
            for r in row + 1..m.rows {
                let v = m.get(r, col).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best <= pivot_tol {
                continue;
            }
            if pivot != row {
                for c in 0..m.cols {
                    let a = m.get(row, c);
                    let b = m.get(pivot, c);
                    m.set(row, c, b);
                    m.set(pivot, c, a);
                }
            }
            let p = m.get(row, col);
            for r in row + 1..m.rows {
                let f = m.get(r, col) / p;
                if f != S::zero() {
                    for c in col..m.cols {
                        let v = m.get(r, c) - f * m.get(row, c);
                        m.set(r, c, v);
                    }
                }
            }
            rank += 1;
            row += 1;
        }
        rank
    }
}

/// Solves A·X = B for square A (n×n) and B with `k` right-hand columns,
/// both row-major. Returns `None` when A is numerically singular.
pub fn solve<S: Real>(a: &[S], b: &[S], n: usize, k: usize) -> Option<Vec<S>> {
    let mut aug = vec![S::zero(); n * (n + k)];
    for r in 0..n {
        for c in 0..n {
            aug[r * (n + k) + c] = a[r * n + c];
        }
        for c in 0..k {
            aug[r * (n + k) + n + c] = b[r * k + c];
        }
    }
    let w = n + k;
    for col in 0..n {
        let mut pivot = col;
        let mut best = aug[col * w + col].abs();
        for r in col + 1..n {
            let v = aug[r * w + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best <= S::epsilon() * S::from_f64(1e4).unwrap() {
            return None;
        }
        if pivot != col {
            for c in 0..w {
                aug.swap(col * w + c, pivot * w + c);
            }
        }
        let p = aug[col * w + col];
        for c in col..w {
            aug[col * w + c] = aug[col * w + c] / p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[r * w + col];
            if f != S::zero() {
                for c in col..w {
                    let v = aug[col * w + c] * f;
                    aug[r * w + c] = aug[r * w + c] - v;
                }
            }
        }
    }
    let mut out = vec![S::zero(); n * k];
    for r in 0..n {
        for c in 0..k {
            out[r * k + c] = aug[r * w + n + c];
        }
    }
    Some(out)
}

/// Eigenvalues of a symmetric n×n matrix (row-major) by cyclic Jacobi
/// rotations, ascending order.
pub fn sym_eigenvalues<S: Real>(matrix: &[S], n: usize) -> Vec<S> {
    let mut a = matrix.to_vec();
    let idx = |r: usize, c: usize| r * n + c;
    for _sweep in 0..32 {
        let mut off = S::zero();
        for r in 0..n {
            for c in r + 1..n {
                off = off + a[idx(r, c)] * a[idx(r, c)];
            }
        }
        if off.sqrt() <= S::epsilon() * S::from_f64(16.0).unwrap() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[idx(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = (aqq - app) / (S::from_f64(2.0).unwrap() * apq);
                let t = {
                    let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                    sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let cos = S::one() / (t * t + S::one()).sqrt();
                let sin = t * cos;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = cos * akp - sin * akq;
                    a[idx(k, q)] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = cos * apk - sin * aqk;
                    a[idx(q, k)] = sin * apk + cos * aqk;
                }
            }
        }
    }
    let mut eig: Vec<S> = (0..n).map(|i| a[idx(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

pub fn det2<S: Real>(m: &[[S; 2]; 2]) -> S {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inv2<S: Real>(m: &[[S; 2]; 2]) -> Option<[[S; 2]; 2]> {
    let d = det2(m);
    if d == S::zero() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

pub fn det3<S: Real>(m: &[[S; 3]; 3]) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inv3<S: Real>(m: &[[S; 3]; 3]) -> Option<[[S; 3]; 3]> {
    let d = det3(m);
    if d == S::zero() {
        return None;
    }
    let c = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    Some([
        [c(1, 1, 2, 2) / d, -c(0, 1, 2, 2) / d, c(0, 1, 1, 2) / d],
        [-c(1, 0, 2, 2) / d, c(0, 0, 2, 2) / d, -c(0, 0, 1, 2) / d],
        [c(1, 0, 2, 1) / d, -c(0, 0, 2, 1) / d, c(0, 0, 1, 1) / d],
    ])
}
