use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::autodiff::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[fan_in, fan_out]`
    pub weight: Tensor,
    /// `[1, fan_out]`
    pub bias: Tensor,
}

/// Fully connected network with relu between layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// Weights uniform in `±1/√fan_in`, zero biases; deterministic per seed.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::InvalidArchitecture(format!(
                "need at least input and output widths, all positive; got {widths:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Linear {
                    weight: Tensor::new([fan_in, fan_out], data).expect("shape"),
                    bias: Tensor::zeros([1, fan_out]),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidArchitecture("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != [1, l.weight.cols()] {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {i}: bias {:?} does not match weight {:?}",
                    l.bias.shape(),
                    l.weight.shape()
                )));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {i}: fan-in {} does not follow width {}",
                    l.weight.rows(),
                    layers[i - 1].weight.cols()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// Rebuilds from the flat `[w0, b0, w1, b1, ...]` list of [`Mlp::tensors`].
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self, NnError> {
        if !tensors.len().is_multiple_of(2) {
            return Err(NnError::InvalidArchitecture(
                "tensor list must alternate weight and bias".into(),
            ));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            layers.push(Linear { weight, bias });
        }
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.cols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.cols()));
        w
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Inserts the parameters into `g` as trainable or constant leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.parameter(l.weight.clone()), g.parameter(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { layers }
    }

    /// Forward pass without a graph; same arithmetic as [`MlpVars::forward`].
    pub fn forward_plain(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&l.weight);
            let cols = z.cols();
            for (k, v) in z.data_mut().iter_mut().enumerate() {
                *v += l.bias.data()[k % cols];
                if i < last && *v <= 0.0 {
                    *v = 0.0;
                }
            }
            h = z;
        }
        h
    }
}

/// Graph handles for one bound [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub(crate) layers: Vec<(Var, Var)>,
}

impl MlpVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w)?;
            let shape = g.shape(z);
            let bb = g.broadcast(b, shape)?;
            let z = g.add(z, bb)?;
            h = if i < last { g.relu(z)? } else { z };
        }
        Ok(h)
    }

    /// Flat `[w0, b0, w1, b1, ...]`, matching [`Mlp::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Swaps the `k`-th entry of [`MlpVars::vars`] for `v`.
    pub(crate) fn replace(&mut self, k: usize, v: Var) {
        let l = &mut self.layers[k / 2];
        if k.is_multiple_of(2) {
            l.0 = v;
        } else {
            l.1 = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::init(&[3, 8, 8, 1], 42).unwrap();
        let b = Mlp::init(&[3, 8, 8, 1], 42).unwrap();
        let c = Mlp::init(&[3, 8, 8, 1], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_bounds_weights_by_fan_in() {
        let m = Mlp::init(&[4, 64, 1], 0).unwrap();
        let w = &m.layers()[0].weight;
        assert!(w.data().iter().all(|v| (-0.5..=0.5).contains(v)));
        assert!(w.data().iter().any(|v| v.abs() > 0.4));
        assert!(m.layers()[0].bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_degenerate_widths() {
        assert!(Mlp::init(&[4], 0).is_err());
        assert!(Mlp::init(&[], 0).is_err());
        assert!(Mlp::init(&[4, 0, 1], 0).is_err());
    }

    #[test]
    fn plain_forward_matches_graph_forward_bitwise() {
        let m = Mlp::init(&[3, 16, 16, 2], 9).unwrap();
        let x = Tensor::new([5, 3], (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let mut g = Graph::new();
        let vars = m.bind(&mut g, true);
        let xv = g.constant(x.clone());
        let out = vars.forward(&mut g, xv).unwrap();
        assert_eq!(g.value(out), &m.forward_plain(&x));
    }

    #[test]
    fn tensor_round_trip() {
        let m = Mlp::init(&[2, 5, 3], 1).unwrap();
        let flat: Vec<Tensor> = m.tensors().into_iter().cloned().collect();
        assert_eq!(Mlp::from_tensors(flat).unwrap(), m);
        let bad = vec![Tensor::zeros([2, 5]), Tensor::zeros([1, 4])];
        assert!(Mlp::from_tensors(bad).is_err());
    }
}
