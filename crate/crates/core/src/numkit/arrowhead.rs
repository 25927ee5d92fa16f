use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

/// Inertia triple of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Symmetric arrowhead matrix `[[corner, armᵀ], [arm, diag(diag)]]`.
///
/// Eigenvalue counts come from Sylvester's law of inertia applied to the
/// LDLᵀ factorization that eliminates the diagonal block first, so every
/// spectral query is O(n) per count and O(n log(1/ε)) per eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrowhead {
    pub corner: f64,
    pub arm: Vec<f64>,
    pub diag: Vec<f64>,
}

impl Arrowhead {
    pub fn new(corner: f64, arm: Vec<f64>, diag: Vec<f64>) -> Self {
        assert_eq!(arm.len(), diag.len(), "arm and diagonal lengths differ");
        Self { corner, arm, diag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len() + 1
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        m[(0, 0)] = self.corner;
        for (i, (&b, &d)) in self.arm.iter().zip(&self.diag).enumerate() {
            m[(0, i + 1)] = b;
            m[(i + 1, 0)] = b;
            m[(i + 1, i + 1)] = d;
        }
        m
    }

    /// `A v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        let mut out = Vec::with_capacity(v.len());
        out.push(self.corner * v[0] + super::dot(&self.arm, &v[1..]));
        for ((&b, &d), &vi) in self.arm.iter().zip(&self.diag).zip(&v[1..]) {
            out.push(b * v[0] + d * vi);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        let arm: f64 = self.arm.iter().map(|b| 2.0 * b * b).sum();
        let diag: f64 = self.diag.iter().map(|d| d * d).sum();
        (self.corner * self.corner + arm + diag).sqrt()
    }

    fn scale(&self) -> f64 {
        self.arm
            .iter()
            .chain(&self.diag)
            .fold(self.corner.abs(), |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let tiny = f64::EPSILON * self.scale();
        let mut negatives = 0;
        let mut schur = self.corner - sigma;
        for (&b, &d) in self.arm.iter().zip(&self.diag) {
            let mut p = d - sigma;
            if p == 0.0 {
                p = -tiny;
            }
            if p < 0.0 {
                negatives += 1;
            }
            schur -= b * b / p;
        }
        if schur < 0.0 {
            negatives += 1;
        }
        negatives
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection on [`count_below`].
    ///
    /// [`count_below`]: Arrowhead::count_below
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.dim());
        let radius: f64 = self.arm.iter().map(|b| b.abs()).sum();
        let mut lo = self.corner - radius;
        let mut hi = self.corner + radius;
        for (&b, &d) in self.arm.iter().zip(&self.diag) {
            lo = lo.min(d - b.abs());
            hi = hi.max(d + b.abs());
        }
        lo -= 1e-12 * self.scale();
        hi += 1e-12 * self.scale();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn eig_min(&self) -> f64 {
        self.eigenvalue(0)
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalue(0).abs().max(self.eigenvalue(self.dim() - 1).abs())
    }

    /// Inertia with eigenvalues of magnitude at most `band` counted as zero.
    pub fn inertia(&self, band: f64) -> Inertia {
        let below_neg = self.count_below(-band);
        // eigenvalues equal to +band belong to the zero band
        let within = self.count_below(band.next_up());
        Inertia {
            negative: below_neg,
            zero: within - below_neg,
            positive: self.dim() - within,
        }
    }
}
