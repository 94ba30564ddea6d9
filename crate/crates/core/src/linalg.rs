//! Smallest singular triplets of a dense complex matrix.
//!
//! Inverse subspace iteration on `(AᴴA)⁻¹` using one LU factorization,
//! followed by a Rayleigh–Ritz rotation. Singular values are recomputed as
//! `‖A x‖` so that tiny values near an eigenvalue are resolved to working
//! precision rather than through a squared Gram matrix.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct SmallestSingular {
    /// Ascending.
    pub values: Vec<f64>,
    /// Right singular vectors, one per value, unit 2-norm.
    pub vectors: Vec<Vec<Complex64>>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct InverseIterationConfig {
    pub block: usize,
    /// How many leading values must satisfy the tolerance.
    pub converge: usize,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for InverseIterationConfig {
    fn default() -> Self {
        Self { block: 4, converge: 2, rel_tol: 1e-9, max_iter: 60 }
    }
}

fn orthonormalize(x: &mut Mat<Complex64>) {
    let (n, b) = (x.nrows(), x.ncols());
    for j in 0..b {
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for k in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    dot += x[(i, k)].conj() * x[(i, j)];
                }
                for i in 0..n {
                    let v = x[(i, k)];
                    x[(i, j)] -= dot * v;
                }
            }
        }
        let norm = (0..n).map(|i| x[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for i in 0..n {
                x[(i, j)] /= norm;
            }
        }
    }
}

fn start_block(n: usize, b: usize) -> Mat<Complex64> {
    // deterministic, generic start vectors
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut x = Mat::<Complex64>::zeros(n, b);
    for j in 0..b {
        for i in 0..n {
            x[(i, j)] = Complex64::new(next(), next());
        }
    }
    orthonormalize(&mut x);
    x
}

fn column_norm(m: &Mat<Complex64>, j: usize) -> f64 {
    (0..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest `cfg.block` singular values of the square matrix `a`, with
/// right singular vectors.
pub fn smallest_singular(a: &Mat<Complex64>, cfg: InverseIterationConfig) -> SmallestSingular {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix expected");
    let b = cfg.block.clamp(1, n);
    let need = cfg.converge.clamp(1, b);
    let mut lu = a.partial_piv_lu();
    let mut x = start_block(n, b);
    let mut prev = vec![f64::INFINITY; b];
    let mut values = vec![0.0; b];
    let mut iterations = 0;
    let mut perturbed = false;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let keep = x.clone();
        lu.solve_adjoint_in_place(x.as_mut());
        lu.solve_in_place(x.as_mut());
        let finite = x.col_iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        if !finite && !perturbed {
            // exactly singular pivot: factor a slightly shifted matrix instead
            let eps = 1e-14 * (0..n).map(|i| a[(i, i)].norm()).fold(1.0, f64::max);
            let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { eps } else { 0.0 });
            lu = shifted.partial_piv_lu();
            perturbed = true;
            x = keep;
            lu.solve_adjoint_in_place(x.as_mut());
            lu.solve_in_place(x.as_mut());
        }
        orthonormalize(&mut x);

        // Rayleigh–Ritz in the current subspace
        let ax = a * &x;
        let gram = ax.adjoint() * &ax;
        let evd = gram
            .self_adjoint_eigen(Side::Lower)
            .expect("small hermitian eigenproblem");
        let rot = evd.U().to_owned();
        x = &x * &rot;
        let ax = &ax * &rot;
        for (j, v) in values.iter_mut().enumerate() {
            *v = column_norm(&ax, j);
        }
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        if order.iter().enumerate().any(|(k, &o)| k != o) {
            let xs = x.clone();
            let vs = values.clone();
            for (k, &o) in order.iter().enumerate() {
                values[k] = vs[o];
                for i in 0..n {
                    x[(i, k)] = xs[(i, o)];
                }
            }
        }
        let scale = values[b - 1].max(f64::MIN_POSITIVE);
        let converged = (0..need).all(|j| (values[j] - prev[j]).abs() <= cfg.rel_tol * scale);
        prev.copy_from_slice(&values);
        if converged && it > 0 {
            break;
        }
    }
    let vectors = (0..b).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect();
    SmallestSingular { values, vectors, iterations }
}

/// All singular values, descending. Used as an oracle in tests.
pub fn singular_values(a: &Mat<Complex64>) -> Vec<f64> {
    a.singular_values().expect("svd converges")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize, shift: f64) -> Mat<Complex64> {
        Mat::from_fn(n, n, |i, j| {
            let base = Complex64::new(
                ((i * 7 + j * 13) % 17) as f64 / 17.0,
                ((i * 3 + j * 5) % 11) as f64 / 11.0 - 0.5,
            );
            if i == j {
                base + shift
            } else {
                base / (1.0 + (i as f64 - j as f64).abs())
            }
        })
    }

    #[test]
    fn matches_full_svd() {
        let a = test_matrix(60, 0.7);
        let full = singular_values(&a);
        let small = smallest_singular(&a, InverseIterationConfig { block: 4, converge: 3, rel_tol: 1e-12, max_iter: 500 });
        let n = full.len();
        for j in 0..3 {
            assert!(
                (small.values[j] - full[n - 1 - j]).abs() < 1e-8 * full[0],
                "{j}: {} vs {}",
                small.values[j],
                full[n - 1 - j]
            );
        }
    }

    #[test]
    fn resolves_near_null_vector() {
        // rank-deficient by construction: last column duplicates the first
        let mut a = test_matrix(40, 1.3);
        for i in 0..40 {
            let v = a[(i, 0)];
            a[(i, 39)] = v;
        }
        let s = smallest_singular(&a, InverseIterationConfig::default());
        assert!(s.values[0] < 1e-12, "{}", s.values[0]);
        let v = &s.vectors[0];
        // null vector ∝ e_0 − e_39
        assert!((v[0] + v[39]).norm() < 1e-8);
        assert!((v[0].norm() - 0.5f64.sqrt()).abs() < 1e-8);
    }
}
