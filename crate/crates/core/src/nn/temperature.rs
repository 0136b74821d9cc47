use serde::{Deserialize, Serialize};

use super::{Adam, NnError};
use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureMode {
    Fixed,
    Auto,
}

/// Entropy coefficient β, stored as `log β` so it stays positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Temperature {
    mode: TemperatureMode,
    log_beta: Tensor,
    pub target_entropy: f64,
    opt: Adam,
}

impl Temperature {
    pub fn fixed(beta: f64) -> Result<Self, NnError> {
        Self::build(TemperatureMode::Fixed, beta, 0.0, 0.0)
    }

    /// Auto-tuned β with target entropy `-action_dim`.
    pub fn auto(initial_beta: f64, action_dim: usize, lr: f64) -> Result<Self, NnError> {
        Self::build(
            TemperatureMode::Auto,
            initial_beta,
            -(action_dim as f64),
            lr,
        )
    }

    pub fn build(
        mode: TemperatureMode,
        beta: f64,
        target_entropy: f64,
        lr: f64,
    ) -> Result<Self, NnError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(NnError::InvalidTemperature(beta));
        }
        Ok(Temperature {
            mode,
            log_beta: Tensor::scalar(beta.ln()),
            target_entropy,
            opt: Adam::new(lr, &[[1, 1]]),
        })
    }

    pub fn mode(&self) -> TemperatureMode {
        self.mode
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.item().exp()
    }

    pub fn log_beta(&self) -> &Tensor {
        &self.log_beta
    }

    pub fn set_log_beta(&mut self, v: f64) {
        self.log_beta = Tensor::scalar(v);
    }

    /// Gradient of `mean(β·(-log π - target))` with respect to `log β`.
    pub fn loss_gradient(&self, log_probs: &[f64]) -> f64 {
        let n = log_probs.len().max(1) as f64;
        let m = log_probs
            .iter()
            .map(|lp| -lp - self.target_entropy)
            .sum::<f64>()
            / n;
        self.beta() * m
    }

    /// One descent step on `log β`; no-op in fixed mode. Returns the loss value.
    pub fn update(&mut self, log_probs: &[f64]) -> f64 {
        let grad = self.loss_gradient(log_probs);
        if self.mode == TemperatureMode::Auto {
            self.opt
                .update(vec![&mut self.log_beta], &[&Tensor::scalar(grad)]);
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_mode_never_moves() {
        let mut t = Temperature::fixed(0.2).unwrap();
        t.update(&[5.0, -3.0]);
        assert!((t.beta() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        assert!(Temperature::fixed(0.0).is_err());
        assert!(Temperature::fixed(-1.0).is_err());
        assert!(Temperature::fixed(f64::NAN).is_err());
    }

    #[test]
    fn auto_mode_moves_toward_target_entropy() {
        // entropy estimate −mean(log π) = 3 > target −1: β should shrink
        let mut t = Temperature::auto(1.0, 1, 0.01).unwrap();
        for _ in 0..100 {
            t.update(&[-3.0, -3.0]);
        }
        assert!(t.beta() < 1.0 && t.beta() > 0.0);

        // entropy below target: β grows
        let mut t = Temperature::auto(1.0, 1, 0.01).unwrap();
        for _ in 0..100 {
            t.update(&[4.0]);
        }
        assert!(t.beta() > 1.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let t = Temperature::auto(0.7, 2, 0.0).unwrap();
        let lps = [0.3, -1.2, 2.5];
        let loss =
            |lb: f64| lb.exp() * lps.iter().map(|lp| -lp - t.target_entropy).sum::<f64>() / 3.0;
        let lb = t.log_beta().item();
        let h = 1e-6;
        let fd = (loss(lb + h) - loss(lb - h)) / (2.0 * h);
        assert!((t.loss_gradient(&lps) - fd).abs() < 1e-8);
    }
}
