//! Symmetric positive definite band matrices with an in-place Cholesky solve.

/// Lower band of a symmetric matrix; entry `(i, j)`, `i − bw ≤ j ≤ i`, is
/// stored at `i·(bw+1) + (i − j)`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to entry `(i, j)` of the symmetric matrix.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        let k = self.at(a, b);
        self.data[k] += v;
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        if a - b > self.bw {
            0.0
        } else {
            self.data[self.at(a, b)]
        }
    }

    /// Replaces row and column `i` by the identity.
    pub fn pin(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bw);
        for j in lo..i {
            let k = self.at(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.bw + 1).min(self.n) {
            let k = self.at(r, i);
            self.data[k] = 0.0;
        }
        let k = self.at(i, i);
        self.data[k] = 1.0;
    }

    /// Factors in place as `L·Lᵀ` after symmetric Jacobi scaling. Returns the
    /// scaling. Pivots that rounding drives below `1e−14` of their original
    /// size are floored there.
    pub fn factor(&mut self) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut scale = vec![1.0; n];
        for i in 0..n {
            let d = self.data[self.at(i, i)];
            scale[i] = if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 };
        }
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let k = self.at(i, j);
                self.data[k] *= scale[i] * scale[j];
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.at(i, j)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= self.data[self.at(i, k)] * self.data[self.at(j, k)];
                }
                if i == j {
                    let floor = 1e-14;
                    let v = if s > floor { s.sqrt() } else { floor.sqrt() };
                    let kk = self.at(i, i);
                    self.data[kk] = v;
                } else {
                    let d = self.data[self.at(j, j)];
                    let kk = self.at(i, j);
                    self.data[kk] = s / d;
                }
            }
        }
        scale
    }

    /// Solves `A x = b` in place given the output of [`BandMatrix::factor`].
    pub fn solve(&self, scale: &[f64], b: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            b[i] *= scale[i];
        }
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[self.at(i, k)] * b[k];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for r in i + 1..(i + bw + 1).min(n) {
                s -= self.data[self.at(r, i)] * b[r];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
        for i in 0..n {
            b[i] *= scale[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 6;
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 4.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let mut b: Vec<f64> = (0..n).map(|i| {
            4.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 }
        }).collect();
        let s = m.factor();
        m.solve(&s, &mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn pinned_rows_decouple() {
        let mut m = BandMatrix::zeros(3, 2);
        for i in 0..3 {
            m.add(i, i, 3.0);
        }
        m.add(1, 0, 1.0);
        m.add(2, 1, 1.0);
        m.pin(1);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(2, 1), 0.0);
        assert_eq!(m.get(1, 1), 1.0);
    }
}
