use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix without stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            symmetric: nrows == ncols,
        }
    }

    /// Sums duplicate triplets in input order, so the result is independent
    /// of anything but the order the caller produced them in.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Shape(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = k;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend(order[counts[i]..counts[i + 1]].iter().map(|&k| (triplets[k].1, triplets[k].2)));
            // stable: equal columns keep input order
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    indices.push(col);
                    values.push(sum);
                }
            }
            indptr.push(indices.len());
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric(1e-14);
        Ok(m)
    }

    fn check_symmetric(&self, rel: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if (v - self.get(j, i)).abs() > rel * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &SparseMatrix) -> Result<Self> {
        if (self.nrows, self.ncols) != (other.nrows, other.ncols) {
            return Err(Error::Shape("matrix sizes differ".into()));
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            t.extend(self.row(i).map(|(j, v)| (i, j, v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, -v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Spectral norm `||A||_2` by power iteration on `A^T A`, stopped when the
    /// eigen-residual falls below `tol` relative to the Rayleigh quotient.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        if self.nnz() == 0 {
            return Ok(0.0);
        }
        let n = self.ncols;
        // deterministic, generic start vector
        let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * ((k as f64 + 1.0) * 0.618_033_988_7).fract()).collect();
        normalize(&mut v);
        let mut theta = 0.0;
        for _ in 0..max_iter {
            let w = self.transpose_matvec(&self.matvec(&v));
            theta = dot(&v, &w);
            if theta == 0.0 {
                return Ok(0.0);
            }
            let res: f64 = w.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
            let mut next = w;
            normalize(&mut next);
            v = next;
            if res <= tol * theta {
                return Ok(theta.sqrt());
            }
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            residual: theta,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5), (1, 0, 1.0), (1, 0, -1.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![3.0, 6.0]);
        assert_eq!(m.transpose_matvec(&[1.0, 1.0]), vec![0.0, 1.5, 2.0]);
        assert!(!m.is_symmetric());
        assert!(SparseMatrix::from_triplets(1, 1, &[(1, 0, 1.0)]).is_err());
    }

    #[test]
    fn power_iteration_diagonal() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(m.is_symmetric());
        assert!((m.spectral_norm(1e-8, 10_000).unwrap() - 2.0).abs() < 1e-8);
        assert_eq!(SparseMatrix::zeros(3, 3).spectral_norm(1e-8, 10).unwrap(), 0.0);
    }
}
