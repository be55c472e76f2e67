use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored by
/// rows with room for the fill-in produced by partial pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off >= self.width as isize || j >= self.n {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` at `(i, j)`; panics if the entry lies outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j).expect("inside band");
        self.data[k] += v;
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    /// Multiplies row `i` by `s`.
    pub fn scale_row(&mut self, i: usize, s: f64) {
        for j in self.row_range(i) {
            let k = self.idx(i, j).unwrap();
            self.data[k] *= s;
        }
    }

    pub fn row_max_abs(&self, i: usize) -> f64 {
        self.row_range(i).map(|j| self.get(i, j).abs()).fold(0.0, f64::max)
    }

    /// In-place LU factorisation with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let upper = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        let mut sign = 1.0;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SolverFailure(format!("banded matrix singular at column {k}")));
            }
            piv[k] = p;
            let jend = (k + upper).min(n - 1);
            if p != k {
                sign = -sign;
                for j in k..=jend {
                    let a = self.idx(k, j).unwrap();
                    let b = self.idx(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let ik = self.idx(i, k).unwrap();
                let m = self.data[ik] / pivot;
                self.data[ik] = m;
                if m != 0.0 {
                    for j in k + 1..=jend {
                        let kj = self.data[self.idx(k, j).unwrap()];
                        let ij = self.idx(i, j).unwrap();
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv, sign })
    }
}

/// Factorised band matrix `P A = L U`.
#[derive(Clone, Debug)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
    sign: f64,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    x[i] -= a.get(i, k) * xk;
                }
            }
        }
        let upper = a.kl + a.ku;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + upper).min(n - 1) {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        x
    }

    /// Sign of the determinant of the factorised matrix.
    pub fn det_sign(&self) -> f64 {
        let mut s = self.sign;
        for k in 0..self.a.n {
            if self.a.get(k, k) < 0.0 {
                s = -s;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let v = nalgebra::DVector::from_column_slice(b);
        m.lu().solve(&v).unwrap().iter().copied().collect()
    }

    #[test]
    fn matches_dense_solve_with_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, kl, ku) = (40, 3, 2);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // Small diagonal forces row exchanges.
                let v = if i == j { 1e-3 * rng.gen::<f64>() } else { rng.gen::<f64>() - 0.5 };
                band.add(i, j, v);
                dense[i][j] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y = band.matvec(&b);
        let x = band.clone().factor().unwrap().solve(&y);
        let xd = dense_solve(&dense, &y);
        for i in 0..n {
            assert!((x[i] - b[i]).abs() < 1e-9, "{i}: {} vs {}", x[i], b[i]);
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
        let det = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]).determinant();
        assert_eq!(band.factor().unwrap().det_sign(), det.signum());
    }

    #[test]
    fn singular_matrix_reported() {
        let band = BandMatrix::zeros(5, 1, 1);
        assert!(matches!(band.factor(), Err(Error::SolverFailure(_))));
    }
}
