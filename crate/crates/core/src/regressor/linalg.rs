//! Dense symmetric linear algebra: row-major matrices, Cholesky with a
//! jitter ladder and triangular solves.

use super::RegressorError;

/// Diagonal jitter values tried in order after a plain factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self { n, data: rows.concat() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.n();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let mut d = a.get(j, j) + jitter - lj.iter().map(|v| v * v).sum::<f64>();
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        d = d.sqrt();
        l.data[j * n + j] = d;
        for i in j + 1..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let lj = &head[j * n..j * n + j];
            let li = &tail[..j];
            let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
            tail[j] = (a.get(i, j) - dot) / d;
        }
    }
    Some(l)
}

impl Cholesky {
    /// Factorizes a symmetric matrix, walking the jitter ladder on failure.
    pub fn factor(a: &Matrix) -> Result<Self, RegressorError> {
        Self::factor_from(a, 0.0)
    }

    /// Starts the ladder at `start` (0 for a plain attempt first). Used to
    /// rebuild a stored model with exactly its original jitter.
    pub fn factor_from(a: &Matrix, start: f64) -> Result<Self, RegressorError> {
        if a.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(RegressorError::NonFinite("covariance matrix"));
        }
        let ladder = std::iter::once(0.0).chain(JITTER_LADDER).filter(|&j| j >= start);
        for jitter in ladder {
            if let Some(l) = try_factor(a, jitter) {
                if jitter > 0.0 {
                    log::debug!("cholesky succeeded with jitter {jitter:e}");
                }
                return Ok(Self { l, jitter });
            }
        }
        Err(RegressorError::Singular {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// `log |A + jitter·I|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.n()).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `L v = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n();
        let mut v = b.to_vec();
        for i in 0..n {
            let row = &self.l.row(i)[..i];
            let dot: f64 = row.iter().zip(&v[..i]).map(|(x, y)| x * y).sum();
            v[i] = (v[i] - dot) / self.l.get(i, i);
        }
        v
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l.get(i, i);
            let xi = x[i];
            for (k, xk) in x[..i].iter_mut().enumerate() {
                *xk -= self.l.get(i, k) * xi;
            }
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `(L Lᵀ)⁻¹` assembled as `L⁻ᵀ L⁻¹` from the triangular inverse. Only
    /// used for the gradient trace term.
    pub fn inverse(&self) -> Matrix {
        let n = self.l.n();
        // Column-wise inverse of L stored row-major in `m`: m[i][j] = (L⁻¹)_{ij}.
        let mut m = Matrix::zeros(n);
        for j in 0..n {
            m.set(j, j, 1.0 / self.l.get(j, j));
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l.get(i, k) * m.get(k, j);
                }
                m.set(i, j, -s / self.l.get(i, i));
            }
        }
        // (L⁻ᵀ L⁻¹)_{ij} = Σ_{k ≥ max(i,j)} m[k][i]·m[k][j]
        let mut out = Matrix::zeros(n);
        for k in 0..n {
            let row = m.row(k);
            for i in 0..=k {
                let mi = row[i];
                if mi == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    out.data[i * n + j] += mi * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[j * n + i] = out.data[i * n + j];
            }
        }
        out
    }
}
