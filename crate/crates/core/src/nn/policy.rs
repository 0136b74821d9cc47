use std::f64::consts::PI;

use super::{Mlp, MlpVars, NnError};
use crate::autodiff::{Axis, Graph, Tensor, Var};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const SQUASH_EPS: f64 = 1e-6;
/// `tanh` of anything beyond this rounds to ±1 in f64.
pub const PRE_SQUASH_LIMIT: f64 = 18.0;

/// Tanh-squashed diagonal Gaussian policy. The trunk maps a state to
/// `[μ, log σ]` (each of action dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    trunk: Mlp,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Added inside `log(1 - tanh(u)² + eps)` of the change-of-variables term.
    pub squash_eps: f64,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut widths = vec![state_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * action_dim);
        Self::from_trunk(Mlp::init(&widths, seed)?)
    }

    pub fn from_trunk(trunk: Mlp) -> Result<Self, NnError> {
        if !trunk.output_dim().is_multiple_of(2) {
            return Err(NnError::InvalidArchitecture(format!(
                "policy trunk output {} is not 2 × action_dim",
                trunk.output_dim()
            )));
        }
        Ok(GaussianPolicy {
            trunk,
            log_std_min: LOG_STD_MIN,
            log_std_max: LOG_STD_MAX,
            squash_eps: SQUASH_EPS,
        })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.trunk.output_dim() / 2
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> PolicyVars {
        PolicyVars {
            trunk: self.trunk.bind(g, trainable),
            action_dim: self.action_dim(),
            log_std_min: self.log_std_min,
            log_std_max: self.log_std_max,
            squash_eps: self.squash_eps,
        }
    }

    /// `tanh(μ(s))` row by row.
    pub fn deterministic_action(&self, states: &Tensor) -> Tensor {
        let out = self.trunk.forward_plain(states);
        let a = self.action_dim();
        let mut data = Vec::with_capacity(states.rows() * a);
        for i in 0..out.rows() {
            data.extend(
                out.row_slice(i)[..a]
                    .iter()
                    .map(|m| m.clamp(-PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT).tanh()),
            );
        }
        Tensor::new([out.rows(), a], data).expect("shape")
    }

    /// One reparametrized action for a single state; same arithmetic as
    /// [`PolicyVars::sample`] without the log-density.
    pub fn act(&self, obs: &[f64], noise: &[f64]) -> Vec<f64> {
        let out = self.trunk.forward_plain(&Tensor::row(obs.to_vec()));
        let a = self.action_dim();
        let row = out.row_slice(0);
        (0..a)
            .map(|k| {
                let std = row[a + k].clamp(self.log_std_min, self.log_std_max).exp();
                (row[k] + std * noise[k])
                    .clamp(-PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)
                    .tanh()
            })
            .collect()
    }

    /// Reparametrized sample and its log-density, without building a graph.
    pub fn sample(&self, states: &Tensor, noise: &Tensor) -> Result<(Tensor, Tensor), NnError> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let s = g.constant(states.clone());
        let (a, lp) = vars.sample(&mut g, s, noise)?;
        Ok((g.evaluate(a), g.evaluate(lp)))
    }
}

#[derive(Clone, Debug)]
pub struct PolicyVars {
    trunk: MlpVars,
    action_dim: usize,
    log_std_min: f64,
    log_std_max: f64,
    squash_eps: f64,
}

impl PolicyVars {
    pub fn vars(&self) -> Vec<Var> {
        self.trunk.vars()
    }

    pub(crate) fn replace(&mut self, k: usize, v: Var) {
        self.trunk.replace(k, v);
    }

    /// `(μ, log σ)` with log σ clamped.
    pub fn mean_log_std(&self, g: &mut Graph, states: Var) -> Result<(Var, Var), NnError> {
        let out = self.trunk.forward(g, states)?;
        let mu = g.slice(out, Axis::Cols, 0, self.action_dim)?;
        let raw = g.slice(out, Axis::Cols, self.action_dim, self.action_dim)?;
        let log_std = g.clamp(raw, self.log_std_min, self.log_std_max)?;
        Ok((mu, log_std))
    }

    /// Returns `(action [B, A], log_prob [B, 1])` for injected standard-normal
    /// `noise`: `action = tanh(μ + σ·noise)` and
    /// `log_prob = Σ log N(u; μ, σ) - Σ log(1 - tanh(u)² + eps)`.
    pub fn sample(
        &self,
        g: &mut Graph,
        states: Var,
        noise: &Tensor,
    ) -> Result<(Var, Var), NnError> {
        let (mu, log_std) = self.mean_log_std(g, states)?;
        let shape = g.shape(mu);
        if noise.shape() != shape {
            return Err(NnError::DimensionMismatch {
                what: "policy noise",
                expected: shape,
                found: noise.shape(),
            });
        }
        let std = g.exp(log_std)?;
        let n = g.constant(noise.clone());
        let scaled = g.mul(std, n)?;
        let u = g.add(mu, scaled)?;
        let u = g.clamp(u, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)?;
        let action = g.tanh(u)?;

        // (u - μ)/σ is the noise itself, so the quadratic term is constant.
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let quad = g.constant(noise.map(|z| -0.5 * z * z - half_log_2pi));
        let gauss = g.sub(quad, log_std)?;
        let a2 = g.square(action)?;
        let neg = g.neg(a2)?;
        let inner = g.offset(neg, 1.0 + self.squash_eps)?;
        let log_det = g.log(inner)?;
        let per_dim = g.sub(gauss, log_det)?;
        let log_prob = g.sum_axis(per_dim, Axis::Cols)?;
        Ok((action, log_prob))
    }
}
