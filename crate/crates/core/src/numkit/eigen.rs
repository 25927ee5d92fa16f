use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Cholesky pivots at or below this fraction of `trace(A)/n` are rejected.
pub const PIVOT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub symmetry_tol: f64,
    pub max_sweeps: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            symmetry_tol: SYMMETRY_TOL,
            max_sweeps: 100,
        }
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    /// `V diag(values) Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let lam = self.values[k];
            for i in 0..n {
                let vik = self.vectors[(i, k)] * lam;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

pub fn sym_eig(a: &Matrix) -> Result<EigenDecomposition> {
    sym_eig_with(a, &EigOptions::default())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig_with(a: &Matrix, opts: &EigOptions) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_symmetric(opts.symmetry_tol) {
        return Err(Error::Dimension("matrix is not symmetric".into()));
    }
    let n = a.rows();
    // symmetrize exactly so rotations act on a symmetric array
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    for _ in 0..opts.max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "cholesky_solve with A {}x{} and B {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Dimension("matrix is not symmetric".into()));
    }
    let l = cholesky_factor(a)?;
    let n = a.rows();
    let m = b.cols();
    let mut x = b.clone();
    for c in 0..m {
        // forward: L u = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = u
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Lower-triangular `L` with `A = L Lᵀ`.
fn cholesky_factor(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let floor = PIVOT_FLOOR * (a.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::Singular { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gaussian_sample;
    use proptest::prelude::*;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let g = gaussian_sample(n, n, seed, &vec![1.0; n]).unwrap();
        g.add(&g.transpose()).unwrap().scale(0.5)
    }

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let g = gaussian_sample(n, n, seed, &vec![1.0; n]).unwrap();
        g.transpose()
            .matmul(&g)
            .unwrap()
            .add(&Matrix::identity(n))
            .unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let e = sym_eig(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.vectors.column(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::Dimension(_))));
    }

    #[test]
    fn cholesky_trivial_cases() {
        let b = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(cholesky_solve(&Matrix::identity(2), &b).unwrap(), b);
        let a = Matrix::from_diag(&[2.0, 4.0]);
        let x = cholesky_solve(&a, &Matrix::new(2, 1, vec![2.0, 4.0]).unwrap()).unwrap();
        assert!(x.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn cholesky_recovers_constructed_solution() {
        let a = random_spd(5, 11);
        let x0 = gaussian_sample(5, 2, 12, &[1.0, 1.0]).unwrap();
        let b = a.matmul(&x0).unwrap();
        let x = cholesky_solve(&a, &b).unwrap();
        for (u, v) in x.as_slice().iter().zip(x0.as_slice()) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn cholesky_reports_pivot() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        match cholesky_solve(&a, &Matrix::identity(2)) {
            Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn eig_reconstructs_and_preserves_trace(n in 1usize..12, seed in any::<u64>()) {
            let a = random_symmetric(n, seed);
            let e = sym_eig(&a).unwrap();
            let err = e.reconstruct().sub(&a).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-8 * (1.0 + a.frobenius_norm()));
            let sum: f64 = e.values.iter().sum();
            prop_assert!((sum - a.trace()).abs() <= 1e-8 * (1.0 + a.trace().abs()));
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
            let orth = vtv.sub(&Matrix::identity(n)).unwrap().max_abs();
            prop_assert!(orth <= 1e-10);
            // residual of each eigenpair
            let norm2 = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..n {
                let vk = e.vectors.column(k);
                let av = a.matvec(&vk).unwrap();
                for (x, y) in av.iter().zip(&vk) {
                    prop_assert!((x - e.values[k] * y).abs() <= 1e-8 * norm2.max(1e-300));
                }
            }
        }

        #[test]
        fn eig_product_matches_cholesky_determinant(n in 1usize..8, seed in any::<u64>()) {
            let a = random_spd(n, seed);
            let e = sym_eig(&a).unwrap();
            let log_prod: f64 = e.values.iter().map(|v| v.ln()).sum();
            let l = cholesky_factor(&a).unwrap();
            let log_det: f64 = l.diag().iter().map(|v| 2.0 * v.ln()).sum();
            prop_assert!((log_prod - log_det).abs() < 1e-8 * (1.0 + log_det.abs()));
        }

        #[test]
        fn cholesky_inverts_multiply(n in 1usize..10, seed in any::<u64>()) {
            let a = random_spd(n, seed);
            let x0 = gaussian_sample(n, 3, seed ^ 0xabc, &[1.0; 3]).unwrap();
            let b = a.matmul(&x0).unwrap();
            let x = cholesky_solve(&a, &b).unwrap();
            let resid = a.matmul(&x).unwrap().sub(&b).unwrap().frobenius_norm();
            prop_assert!(resid <= 1e-8 * b.frobenius_norm().max(1e-300));
        }
    }
}
