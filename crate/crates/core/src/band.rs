//! Symmetric banded matrices, banded Cholesky and banded LU with partial pivoting.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix with half-bandwidth `kd`, lower band stored row-wise:
/// `data[i * (kd + 1) + d] = A[i][i - d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        if d > self.kd {
            0.0
        } else {
            self.data[r * (self.kd + 1) + d]
        }
    }

    /// Add `v` to the symmetric pair `(i, j)`, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        assert!(d <= self.kd, "entry ({i}, {j}) outside bandwidth {}", self.kd);
        self.data[r * (self.kd + 1) + d] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        let w = self.kd + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for d in 1..=self.kd.min(i) {
                let a = row[d];
                y[i] += a * x[i - d];
                y[i - d] += a * x[i];
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// `sum_k c_k A_k` over matrices of identical shape.
    pub fn combine(terms: &[(f64, &SymBand)]) -> SymBand {
        let first = terms[0].1;
        let mut out = SymBand::zeros(first.n, first.kd);
        for (c, m) in terms {
            assert!(m.n == first.n && m.kd == first.kd, "band shapes differ");
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o += c * v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kd);
                let hi = (i + self.kd).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Nonzero lower-triangle entries `(row, col, value)` with `row >= col`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for d in 0..=self.kd.min(i) {
                let v = self.data[i * (self.kd + 1) + d];
                if v != 0.0 {
                    out.push((i, i - d, v));
                }
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let kd = self.kd;
        let w = kd + 1;
        let mut l = self.data.clone();
        for j in 0..n {
            let mut diag = l[j * w];
            for d in 1..=kd.min(j) {
                let v = l[j * w + d];
                diag -= v * v;
            }
            if !(diag > 0.0) {
                return Err(Error::Solver(format!("matrix not positive definite at pivot {j} ({diag:e})")));
            }
            let djj = diag.sqrt();
            l[j * w] = djj;
            for i in j + 1..(j + kd + 1).min(n) {
                // L[i][j] = (A[i][j] - sum_k L[i][k] L[j][k]) / L[j][j]
                let mut s = l[i * w + (i - j)];
                let kmin = i.saturating_sub(kd);
                for k in kmin..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                l[i * w + (i - j)] = s / djj;
            }
        }
        Ok(BandCholesky { n, kd, l })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.kd + 1) + (i - j)]
    }

    /// Solve `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(self.kd)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }

    /// Solve `L^T x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + self.kd + 1).min(self.n) {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }
}

/// LU factorization with partial pivoting of a general banded matrix with
/// `kl` sub- and `ku` super-diagonals. Rows hold columns `i - kl ..= i + kl + ku`
/// to make room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    rows: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    /// Factor a symmetric banded matrix (possibly indefinite).
    pub fn factor_sym(a: &SymBand) -> Result<Self> {
        let n = a.n;
        let kd = a.kd;
        let kl = kd;
        let width = 2 * kl + kd + 1;
        let mut lu = Self {
            n,
            kl,
            width,
            rows: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for j in i.saturating_sub(kd)..(i + kd + 1).min(n) {
                *lu.slot(i, j) = a.get(i, j);
            }
        }
        lu.eliminate(kd)?;
        Ok(lu)
    }

    fn slot(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j + self.kl >= i && j < i + self.width - self.kl);
        &mut self.rows[i * self.width + (j + self.kl - i)]
    }

    fn val(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j >= i + self.width - self.kl {
            0.0
        } else {
            self.rows[i * self.width + (j + self.kl - i)]
        }
    }

    fn eliminate(&mut self, ku: usize) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let scale = self.rows.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.val(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.val(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale {
                return Err(Error::Solver(format!("singular banded matrix at column {k}")));
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.val(k, j);
                    let b = self.val(p, j);
                    *self.slot(k, j) = b;
                    *self.slot(p, j) = a;
                }
            }
            let pivot = self.val(k, k);
            for i in k + 1..=last_row {
                let f = self.val(i, k) / pivot;
                if f == 0.0 {
                    *self.slot(i, k) = 0.0;
                    continue;
                }
                *self.slot(i, k) = f;
                for j in k + 1..=last_col {
                    let u = self.val(k, j);
                    if u != 0.0 {
                        *self.slot(i, j) -= f * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let kl = self.kl;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..(k + kl + 1).min(n) {
                x[i] -= self.val(i, k) * xk;
            }
        }
        let reach = self.width - kl;
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + reach).min(n) {
                s -= self.val(i, j) * x[j];
            }
            x[i] = s / self.val(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kd: usize, shift: f64, seed: u64) -> SymBand {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = SymBand::zeros(n, kd);
        for i in 0..n {
            for j in i.saturating_sub(kd)..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a.add(i, j, if i == j { v + shift } else { v });
            }
        }
        a
    }

    #[test]
    fn matvec_matches_dense() {
        let a = random_band(23, 5, 0.0, 1);
        let x: Vec<f64> = (0..23).map(|i| (i as f64).sin()).collect();
        let y = a.matvec(&x);
        let yd = a.to_dense() * nalgebra::DVector::from_vec(x.clone());
        for i in 0..23 {
            assert!((y[i] - yd[i]).abs() < 1e-13);
        }
        assert!((a.quad(&x) - dot(&x, &y)).abs() < 1e-13);
    }

    #[test]
    fn cholesky_solves() {
        let a = random_band(40, 5, 12.0, 2);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let x = a.cholesky().unwrap().solve(&b);
        let r = a.matvec(&x);
        for i in 0..40 {
            assert!((r[i] - b[i]).abs() < 1e-11);
        }
        assert!(random_band(10, 2, -10.0, 3).cholesky().is_err());
    }

    #[test]
    fn lu_solves_indefinite() {
        for seed in 0..5 {
            let a = random_band(37, 3, 0.0, seed);
            let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).cos()).collect();
            let x = BandLu::factor_sym(&a).unwrap().solve(&b);
            let r = a.matvec(&x);
            let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let xd = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            let scale = xd.amax().max(1.0);
            assert!(err < 1e-9 * scale, "seed {seed}: {err}");
        }
    }
}
