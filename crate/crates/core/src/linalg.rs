//! Small direct solvers: banded Cholesky for patch stiffness matrices and a
//! dense LU wrapper for coarse systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive definite band matrix, lower band stored row by row.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Adds `v` to entry `(i, j)`; only the lower triangle is stored, so
    /// callers add each symmetric pair once with `i >= j`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
        y
    }

    /// In-place Cholesky factorization `A = L L^T`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kmin = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + bw + j - i];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in kmin..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Singular(format!(
                            "band matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn size(&self) -> usize {
        self.l.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let r = i * w + bw - i;
            let mut s = b[i];
            for k in lo..i {
                s -= d[r + k] * b[k];
            }
            b[i] = s / d[r + i];
        }
        for i in (0..n).rev() {
            let r = i * w + bw - i;
            b[i] /= d[r + i];
            let bi = b[i];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                b[k] -= d[r + k] * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense LU solve with residual check and iterative refinement.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "{}x{} system with right-hand side of length {}",
            n,
            a.ncols(),
            b.len()
        )));
    }
    let rhs = DVector::from_column_slice(b);
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("coarse matrix is singular".into()))?;
    let mut res = f64::INFINITY;
    for _ in 0..4 {
        let r = &rhs - a * &x;
        res = r.norm() / bnorm;
        if res <= tol {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    if !(res <= tol) {
        let r = &rhs - a * &x;
        res = r.norm() / bnorm;
        if !(res <= tol) {
            return Err(Error::NotConverged {
                iterations: 4,
                residual: res,
            });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn band_cholesky_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (n, bw) = (40, 5);
        let mut a = BandMatrix::zeros(n, bw);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v: f64 = rng.random_range(-1.0..1.0);
                a.add_lower(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
            a.add_lower(i, i, 12.0);
            dense[(i, i)] = 12.0;
        }
        let b: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let y = a.matvec(&b);
        let yd = &dense * DVector::from_column_slice(&b);
        for k in 0..n {
            assert!((y[k] - yd[k]).abs() < 1e-12);
        }
        let x = a.cholesky().unwrap().solve(&b);
        let want = dense.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        for k in 0..n {
            assert!((x[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add_lower(0, 0, 1.0);
        a.add_lower(1, 0, 2.0);
        a.add_lower(1, 1, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::Singular(_))));
    }

    #[test]
    fn dense_solve_zero_rhs() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert_eq!(dense_solve(&a, &[0.0; 3], 1e-12).unwrap(), vec![0.0; 3]);
        let s = DMatrix::<f64>::zeros(2, 2);
        assert!(dense_solve(&s, &[1.0, 0.0], 1e-12).is_err());
    }
}
