//! Packed lower-triangular Cholesky factor with O(n²) row append.

/// Lower-triangular matrix stored row by row: row `i` occupies
/// `data[i*(i+1)/2 .. (i+1)*(i+2)/2]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Dot product with four independent accumulators so it vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[row_start(i)..row_start(i + 1)]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[row_start(i) + j]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[row_start(i) + i]
    }

    /// Cholesky factor of the symmetric matrix given by `entry(i, j)` for
    /// `j <= i`. Returns `None` when a pivot is not strictly positive.
    pub fn cholesky<F>(n: usize, entry: F) -> Option<Self>
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut l = Self {
            n: 0,
            data: Vec::with_capacity(row_start(n)),
        };
        for i in 0..n {
            let row: Vec<f64> = (0..=i).map(|j| entry(i, j)).collect();
            l.push_row(&row[..i], row[i])?;
        }
        Some(l)
    }

    /// Extends the factor by one row/column given the new off-diagonal
    /// covariances `k` (length n) and the new diagonal entry. On failure the
    /// factor is left untouched.
    pub fn push_row(&mut self, k: &[f64], diag: f64) -> Option<()> {
        debug_assert_eq!(k.len(), self.n);
        let mut l = k.to_vec();
        self.forward_solve_in_place(&mut l);
        let sq = dot(&l, &l);
        let pivot = diag - sq;
        // Relative threshold: a pivot this small means the new point is
        // numerically a linear combination of the existing ones.
        if !pivot.is_finite() || pivot <= diag.abs() * 1e-12 {
            return None;
        }
        self.data.extend_from_slice(&l);
        self.data.push(pivot.sqrt());
        self.n += 1;
        Some(())
    }

    /// Solves `L x = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let (head, diag) = self.row(i).split_at(i);
            let (solved, rest) = b.split_at_mut(i);
            rest[0] = (rest[0] - dot(head, solved)) / diag[0];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let xi = b[i] / self.diag(i);
            b[i] = xi;
            let row = self.row(i);
            for j in 0..i {
                b[j] -= row[j] * xi;
            }
        }
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// `(L Lᵀ)[i][j]`.
    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        let m = i.min(j) + 1;
        dot(&self.row(i)[..m], &self.row(j)[..m])
    }
}
