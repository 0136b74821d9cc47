use super::AnalysisError;

/// Jacobi sweeps stop once the off-diagonal Frobenius norm is at most this.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self.get(i, j).powi(2);
                }
            }
        }
        s.sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn jacobi_eigen(m: &SymMatrix) -> Eigen {
    let n = m.n;
    let mut a = m.clone();
    let mut v = SymMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let mut sweeps = 0;
    while a.off_diagonal_norm() > JACOBI_TOL && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                // rotation angle zeroing a[p][q]
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    Eigen {
        values: order.iter().map(|&i| a.get(i, i)).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v.get(k, i)).collect())
            .collect(),
        sweeps,
    }
}

/// Spread of `N` input-gradient vectors, with divisor `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceSpectrum {
    pub matrix: SymMatrix,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub total_variance: f64,
    pub mean: Vec<f64>,
    pub mean_norm: f64,
}

impl VarianceSpectrum {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn w_min(&self) -> &[f64] {
        &self.eigenvectors[0]
    }

    /// `max |M − Σ λ_k w_k w_kᵀ|`.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.matrix.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = self
                    .eigenvalues
                    .iter()
                    .zip(&self.eigenvectors)
                    .map(|(l, w)| l * w[i] * w[j])
                    .sum();
                worst = worst.max((self.matrix.get(i, j) - r).abs());
            }
        }
        worst
    }
}

fn check_family(grads: &[Vec<f64>]) -> Result<usize, AnalysisError> {
    let dim = grads
        .first()
        .ok_or(AnalysisError::Empty("gradient family"))?
        .len();
    if dim == 0 {
        return Err(AnalysisError::Empty("gradient vector"));
    }
    for g in grads {
        if g.len() != dim {
            return Err(AnalysisError::DimensionMismatch {
                what: "gradient vector",
                expected: dim,
                found: g.len(),
            });
        }
    }
    Ok(dim)
}

/// `(1/N) Σ (q_j − q̄)(q_j − q̄)ᵀ` and its eigen-decomposition.
pub fn variance_spectrum(grads: &[Vec<f64>]) -> Result<VarianceSpectrum, AnalysisError> {
    let dim = check_family(grads)?;
    let n = grads.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / n)
        .collect();
    let mut matrix = SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let c = grads
                .iter()
                .map(|g| (g[i] - mean[i]) * (g[j] - mean[j]))
                .sum::<f64>()
                / n;
            matrix.set(i, j, c);
            matrix.set(j, i, c);
        }
    }
    let eig = jacobi_eigen(&matrix);
    Ok(VarianceSpectrum {
        total_variance: matrix.trace(),
        mean_norm: mean.iter().map(|x| x * x).sum::<f64>().sqrt(),
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        matrix,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityBound {
    /// Variance over members of `Q_j(a + k·w_min)`, evaluated directly.
    pub lhs: f64,
    /// `(1/|A|)·((N−1)/N)·k²·ε` with `ε = 1 − min_{i≠j} ⟨q_i, q_j⟩`.
    pub bound: f64,
    pub epsilon: f64,
    pub lambda_min: f64,
    pub holds: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Members are locally linear around `a`: `Q_j(a + δ) = value_at_a + ⟨δ, q_j⟩`.
pub fn diversity_bound_check(
    grads: &[Vec<f64>],
    k: f64,
    value_at_a: f64,
) -> Result<DiversityBound, AnalysisError> {
    let dim = check_family(grads)?;
    let spec = variance_spectrum(grads)?;
    let w = spec.w_min();
    let values: Vec<f64> = grads.iter().map(|q| value_at_a + k * dot(w, q)).collect();
    let n = grads.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let lhs = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut min_inner = f64::INFINITY;
    for i in 0..grads.len() {
        for j in i + 1..grads.len() {
            min_inner = min_inner.min(dot(&grads[i], &grads[j]));
        }
    }
    let epsilon = if grads.len() < 2 {
        0.0
    } else {
        1.0 - min_inner
    };
    let bound = (1.0 / dim as f64) * ((n - 1.0) / n) * k * k * epsilon;
    Ok(DiversityBound {
        lhs,
        bound,
        epsilon,
        lambda_min: spec.lambda_min(),
        holds: lhs <= bound + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn equal_vectors_have_no_spread() {
        let q = unit(vec![0.3, -0.4, 1.2]);
        let s = variance_spectrum(&vec![q.clone(); 5]).unwrap();
        assert!(s.matrix.data.iter().all(|&x| x == 0.0));
        assert!(s.eigenvalues.iter().all(|&x| x == 0.0));
        assert!((s.mean_norm - 1.0).abs() < 1e-15);
        let p = diversity_bound_check(&vec![q; 5], 2.0, 0.7).unwrap();
        // ⟨q, q⟩ = 1 up to rounding
        assert_eq!(p.lhs, 0.0);
        assert!(p.bound.abs() < 1e-15 && p.epsilon.abs() < 1e-15);
        assert!(p.holds);
    }

    #[test]
    fn orthogonal_pair_by_hand() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = variance_spectrum(&g).unwrap();
        assert_eq!(s.matrix.data, vec![0.25, -0.25, -0.25, 0.25]);
        assert!((s.total_variance - 0.5).abs() < 1e-15);
        assert!((s.mean_norm.powi(2) - 0.5).abs() < 1e-15);
        assert!(s.eigenvalues[0].abs() < 1e-15 && (s.eigenvalues[1] - 0.5).abs() < 1e-15);
        let w = s.w_min();
        assert!((w[0].abs() - 0.5f64.sqrt()).abs() < 1e-15 && (w[0] - w[1]).abs() < 1e-15);

        let p = diversity_bound_check(&g, 1.0, 3.0).unwrap();
        assert!(p.lhs.abs() < 1e-15 && p.lambda_min.abs() < 1e-15);
        assert!((p.bound - 0.25).abs() < 1e-15);
        assert!(p.holds);
    }

    #[test]
    fn rejects_ragged_families() {
        assert!(matches!(
            variance_spectrum(&[vec![1.0, 0.0], vec![1.0]]),
            Err(AnalysisError::DimensionMismatch { .. })
        ));
        assert!(variance_spectrum(&[]).is_err());
    }

    #[test]
    fn jacobi_matches_nalgebra() {
        let m = SymMatrix {
            n: 4,
            data: vec![
                4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.5, -2.0, 0.0, 2.0, -1.0, 0.5, 1.5, -1.0, 1.0,
            ],
        };
        let e = jacobi_eigen(&m);
        let mut oracle: Vec<f64> = nalgebra::DMatrix::from_row_slice(4, 4, &m.data)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        oracle.sort_by(f64::total_cmp);
        for (a, b) in e.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    fn family() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=8, 2usize..=50).prop_flat_map(|(d, n)| {
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
                .prop_filter("nonzero", |vs| vs.iter().all(|v| dot(v, v) > 1e-6))
                .prop_map(|vs| vs.into_iter().map(unit).collect())
        })
    }

    proptest! {
        #[test]
        fn spectrum_invariants(g in family()) {
            let s = variance_spectrum(&g).unwrap();
            prop_assert!(s.matrix.max_asymmetry() <= 1e-12);
            prop_assert!(s.eigenvalues.iter().all(|&l| l >= -1e-10));
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let sum: f64 = s.eigenvalues.iter().sum();
            prop_assert!((sum - s.total_variance).abs() <= 1e-9);
            prop_assert!(s.reconstruction_error() <= 1e-9);
            // unit vectors: trace = 1 − ‖q̄‖²
            prop_assert!((s.total_variance - (1.0 - s.mean_norm.powi(2))).abs() <= 1e-10);
        }

        #[test]
        fn diversity_bound_holds(g in family(), k in 0.0f64..5.0, v in -10.0f64..10.0) {
            let p = diversity_bound_check(&g, k, v).unwrap();
            prop_assert!(p.holds, "lhs {} bound {}", p.lhs, p.bound);
            prop_assert!((p.lhs - k * k * p.lambda_min).abs() <= 1e-9 * (1.0 + k * k));
        }
    }
}
