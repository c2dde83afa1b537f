//! Dense LU determinant with partial pivoting.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for row in (col + 1)..n {
                let v = a[row * n + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for row in (col + 1)..n {
                let f = a[row * n + col] / p;
                if f != 0.0 {
                    for j in (col + 1)..n {
                        a[row * n + j] -= f * a[col * n + j];
                    }
                }
            }
        }
        det
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_determinant() {
        assert_eq!(Matrix::identity(7).det(), 1.0);
        assert_eq!(Matrix::zeros(0).det(), 1.0);
    }

    #[test]
    fn small_determinants() {
        let m = Matrix { n: 2, data: vec![1.0, 2.0, 3.0, 4.0] };
        assert!((m.det() + 2.0).abs() < 1e-15);
        let p = Matrix { n: 3, data: vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0] };
        assert!((p.det() - 1.0).abs() < 1e-15);
        let v = Matrix::from_fn(4, |i, j| ((i + 1) as f64).powi(j as i32));
        // Vandermonde on 1,2,3,4: product of differences = 1*2*3*1*2*1 = 12.
        assert!((v.det() - 12.0).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix() {
        let m = Matrix::from_fn(3, |i, _| i as f64);
        assert_eq!(m.det(), 0.0);
    }
}
