//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; columns within a row end up sorted.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (j, v) in r {
                if j == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros_like(&self) -> CsrMatrix {
        CsrMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    /// Position of `(i, j)` in `values`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                m = m.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Removes the constant component: `x ← x − (Σ wᵢxᵢ / Σ wᵢ)·1`.
pub fn remove_weighted_mean(x: &mut [f64], weights: &[f64]) {
    let total: f64 = weights.iter().sum();
    let mean = x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`.
///
/// With `deflate = Some(w)` the constant vector is treated as the kernel of `A`:
/// the right-hand side is projected onto its orthogonal complement and the
/// iterate is kept at zero `w`-weighted mean.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    deflate: Option<&[f64]>,
) -> Result<CgStats> {
    let n = a.n;
    let mut rhs = b.to_vec();
    if deflate.is_some() {
        remove_mean(&mut rhs);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut ax = vec![0.0; n];
    a.mul_vec(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if deflate.is_some() {
        remove_mean(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    if deflate.is_some() {
        remove_mean(&mut z);
    }
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: res,
            });
        }
        a.mul_vec(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) {
            // direction in the kernel or loss of definiteness
            if res <= tol.sqrt() * 1e-3 {
                break;
            }
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        if deflate.is_some() {
            remove_mean(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if deflate.is_some() {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
    }
    if let Some(w) = deflate {
        remove_weighted_mean(x, w);
    }
    Ok(CgStats {
        iterations: it,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.max_asymmetry(), 0.0);
    }

    #[test]
    fn solves_definite_system() {
        let a = laplacian_1d(50, 0.1);
        let exact: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.mul_vec(&exact, &mut b);
        let mut x = vec![0.0; 50];
        let s = pcg(&a, &b, &mut x, 1e-12, 500, None).unwrap();
        assert!(s.residual <= 1e-12);
        for (u, v) in x.iter().zip(&exact) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn deflation_handles_periodic_kernel() {
        // periodic graph Laplacian: constants are the kernel
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let exact: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).cos())
            .collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&exact, &mut b);
        // a constant added to b is not in the range and must be projected away
        b.iter_mut().for_each(|v| *v += 0.25);
        let w = vec![1.0; n];
        let mut x = vec![0.0; n];
        pcg(&a, &b, &mut x, 1e-12, 10 * n, Some(&w)).unwrap();
        for (u, v) in x.iter().zip(&exact) {
            assert!((u - v).abs() < 1e-9);
        }
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let a = laplacian_1d(200, 0.0);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        assert!(matches!(
            pcg(&a, &b, &mut x, 1e-14, 3, None),
            Err(Error::CgNotConverged { iterations: 3, .. })
        ));
    }
}
