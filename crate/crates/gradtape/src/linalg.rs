//! Dense LU factorization with partial pivoting.
//!
//! Systems on the tape are small (twice the antenna count at most), so a
//! straightforward Doolittle elimination is plenty.

use crate::error::{GradError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Tensor) -> Result<Self> {
        let [n, cols] = a.shape();
        if n != cols {
            return Err(GradError::Shape(format!("LU of non-square {n}x{cols} matrix")));
        }
        if n == 0 {
            return Err(GradError::Empty("LU factorization"));
        }
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tiny = scale * n as f64 * f64::EPSILON;
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|r| (r, lu[r * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            min_pivot = min_pivot.min(pivot);
            max_pivot = max_pivot.max(pivot);
            if pivot <= tiny || !pivot.is_finite() {
                let condition = if min_pivot > 0.0 { max_pivot / min_pivot } else { f64::INFINITY };
                return Err(GradError::Singular { condition });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / d;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` for every column of `B`.
    pub fn solve(&self, b: &Tensor) -> Result<Tensor> {
        self.check_rhs(b)?;
        let n = self.n;
        let m = b.cols();
        let mut x = Tensor::zeros(n, m);
        let mut col = vec![0.0; n];
        for j in 0..m {
            for i in 0..n {
                col[i] = b.get(self.perm[i], j);
            }
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.lu[i * n + k] * col[k];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= self.lu[i * n + k] * col[k];
                }
                col[i] = s / self.lu[i * n + i];
            }
            for i in 0..n {
                x.set(i, j, col[i]);
            }
        }
        Ok(x)
    }

    /// Solves `Aᵀ X = B` reusing the factorization of `A`.
    pub fn solve_transposed(&self, b: &Tensor) -> Result<Tensor> {
        self.check_rhs(b)?;
        let n = self.n;
        let m = b.cols();
        let mut x = Tensor::zeros(n, m);
        let mut col = vec![0.0; n];
        // PA = LU, so Aᵀ = Uᵀ Lᵀ P: solve Uᵀ w = b, Lᵀ z = w, x = Pᵀ z.
        for j in 0..m {
            for i in 0..n {
                col[i] = b.get(i, j);
            }
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.lu[k * n + i] * col[k];
                }
                col[i] = s / self.lu[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= self.lu[k * n + i] * col[k];
                }
                col[i] = s;
            }
            for i in 0..n {
                x.set(self.perm[i], j, col[i]);
            }
        }
        Ok(x)
    }

    fn check_rhs(&self, b: &Tensor) -> Result<()> {
        if b.rows() != self.n {
            return Err(GradError::Shape(format!("right-hand side has {} rows, system has {}", b.rows(), self.n)));
        }
        Ok(())
    }
}

/// 1-norm condition number `‖A‖₁‖A⁻¹‖₁`, infinite when `A` is singular.
pub fn condition_1norm(a: &Tensor) -> f64 {
    let lu = match Lu::factor(a) {
        Ok(lu) => lu,
        Err(GradError::Singular { .. }) | Err(_) => return f64::INFINITY,
    };
    let n = lu.dim();
    let inv = match lu.solve(&Tensor::identity(n)) {
        Ok(inv) => inv,
        Err(_) => return f64::INFINITY,
    };
    norm1(a) * norm1(&inv)
}

fn norm1(a: &Tensor) -> f64 {
    (0..a.cols()).map(|c| (0..a.rows()).map(|r| a.get(r, c).abs()).sum::<f64>()).fold(0.0, f64::max)
}
