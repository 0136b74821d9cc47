use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::datagen::Transitions;

/// A minibatch as row-aligned tensors; `rewards` and `dones` are `[B, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_states: Tensor,
    pub dones: Tensor,
}

impl Batch {
    pub fn gather(data: &Transitions, indices: &[usize]) -> Batch {
        let (sd, ad, b) = (data.state_dim(), data.action_dim(), indices.len());
        let mut s = Vec::with_capacity(b * sd);
        let mut a = Vec::with_capacity(b * ad);
        let mut r = Vec::with_capacity(b);
        let mut s2 = Vec::with_capacity(b * sd);
        let mut d = Vec::with_capacity(b);
        for &i in indices {
            let t = data.get(i);
            s.extend_from_slice(t.s);
            a.extend_from_slice(t.a);
            r.push(t.r);
            s2.extend_from_slice(t.s_next);
            d.push(if t.done { 1.0 } else { 0.0 });
        }
        Batch {
            states: Tensor::new([b, sd], s).expect("batch shape"),
            actions: Tensor::new([b, ad], a).expect("batch shape"),
            rewards: Tensor::column(r),
            next_states: Tensor::new([b, sd], s2).expect("batch shape"),
            dones: Tensor::column(d),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `count` indices drawn uniformly with replacement from `0..len`.
pub fn sample_indices(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

/// Standard-normal tensor, filled row-major.
pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor {
    let data = (0..shape[0] * shape[1])
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// Uniform tensor on `[-1, 1]`, filled row-major.
pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor {
    let data = (0..shape[0] * shape[1])
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// `ξ_j = ξ'_j / Σ_k ξ'_k` with `ξ'_k ~ U(0, 1)`.
pub fn simplex_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Each row of `t` repeated `m` times consecutively.
pub fn repeat_rows(t: &Tensor, m: usize) -> Tensor {
    let mut data = Vec::with_capacity(t.len() * m);
    for i in 0..t.rows() {
        for _ in 0..m {
            data.extend_from_slice(t.row_slice(i));
        }
    }
    Tensor::new([t.rows() * m, t.cols()], data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gather_keeps_rows_aligned() {
        let mut t = Transitions::new(2, 1);
        for i in 0..5 {
            let f = i as f64;
            t.push(&[f, -f], &[f / 10.0], -f, &[f + 1.0, 0.0], i == 4)
                .unwrap();
        }
        let b = Batch::gather(&t, &[4, 0, 4]);
        assert_eq!(b.states.row_slice(0), &[4.0, -4.0]);
        assert_eq!(b.actions.data(), &[0.4, 0.0, 0.4]);
        assert_eq!(b.rewards.data(), &[-4.0, -0.0, -4.0]);
        assert_eq!(b.dones.data(), &[1.0, 0.0, 1.0]);
        assert_eq!(b.next_states.row_slice(1), &[1.0, 0.0]);
    }

    #[test]
    fn sampling_is_uniform_over_indices() {
        // 10^6 draws over 100 records: each count within 5σ of 10^4
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 100];
        for i in sample_indices(&mut rng, 100, 1_000_000) {
            counts[i] += 1;
        }
        let sigma = (1e6 * 0.01 * 0.99f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!((c as f64 - 1e4).abs() <= 5.0 * sigma, "index {i}: {c}");
        }
    }

    #[test]
    fn simplex_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 3, 10, 50] {
            let xi = simplex_weights(&mut rng, n);
            assert!((xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(xi.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn repeat_rows_layout() {
        let t = Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            repeat_rows(&t, 2).data(),
            &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0]
        );
    }
}
