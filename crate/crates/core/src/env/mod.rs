//! Deterministic continuous-control toys with actions in `[-1, 1]^d` and
//! non-positive quadratic rewards, plus the random/expert score normalisation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment {0:?}; known: pointmass1d, pointmass2d, pendulum")]
    UnknownEnv(String),
    #[error("non-finite {what} at step {t}: {values:?}")]
    NonFinite {
        what: &'static str,
        t: usize,
        values: Vec<f64>,
    },
    #[error("expected {what} of length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("degenerate score anchors: expert_ref {expert} must exceed random_ref {random}")]
    DegenerateAnchors { random: f64, expert: f64 },
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dynamics {
    /// State `[pos (d), vel (d)]`; `pos' = pos + dt·vel`,
    /// `vel' = vel + dt·(a/mass − damping·vel)`.
    PointMass {
        dt: f64,
        mass: f64,
        damping: f64,
        goal: Vec<f64>,
        action_cost: f64,
    },
    /// State `[cos θ, sin θ, θ̇]`, θ = 0 upright;
    /// `θ̈ = (g/l)·sin θ + torque/(m·l²)`, `torque = max_torque·a`.
    Pendulum {
        dt: f64,
        gravity: f64,
        length: f64,
        mass: f64,
        max_torque: f64,
        max_speed: f64,
        velocity_cost: f64,
        action_cost: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub dynamics: Dynamics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub obs: Vec<f64>,
    /// Steps taken so far in the episode.
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    /// True exactly when `state.t == horizon`.
    pub done: bool,
}

impl EnvSpec {
    pub fn pointmass(dim: usize) -> Self {
        EnvSpec {
            name: format!("pointmass{dim}d"),
            state_dim: 2 * dim,
            action_dim: dim,
            horizon: 100,
            gamma: 0.99,
            dynamics: Dynamics::PointMass {
                dt: 0.05,
                mass: 1.0,
                damping: 0.1,
                goal: vec![0.0; dim],
                action_cost: 0.01,
            },
        }
    }

    pub fn pendulum() -> Self {
        EnvSpec {
            name: "pendulum".into(),
            state_dim: 3,
            action_dim: 1,
            horizon: 200,
            gamma: 0.99,
            dynamics: Dynamics::Pendulum {
                dt: 0.05,
                gravity: 10.0,
                length: 1.0,
                mass: 1.0,
                max_torque: 2.0,
                max_speed: 8.0,
                velocity_cost: 0.1,
                action_cost: 0.001,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self, EnvError> {
        match name {
            "pointmass1d" | "pointmass-1d" => Ok(Self::pointmass(1)),
            "pointmass2d" | "pointmass-2d" => Ok(Self::pointmass(2)),
            "pendulum" => Ok(Self::pendulum()),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidSpec(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        match &self.dynamics {
            Dynamics::PointMass { goal, mass, .. } => {
                if self.action_dim == 0
                    || goal.len() != self.action_dim
                    || self.state_dim != 2 * self.action_dim
                {
                    return bad("point mass needs state_dim = 2·action_dim = 2·goal.len()".into());
                }
                if *mass <= 0.0 {
                    return bad("mass must be positive".into());
                }
            }
            Dynamics::Pendulum { mass, length, .. } => {
                if self.state_dim != 3 || self.action_dim != 1 {
                    return bad("pendulum has state_dim 3 and action_dim 1".into());
                }
                if *mass <= 0.0 || *length <= 0.0 {
                    return bad("pendulum mass and length must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Deterministic initial state. Point mass: positions uniform in `[-1, 1]`,
    /// zero velocity. Pendulum: θ uniform in `[-π, π]`, θ̇ uniform in `[-1, 1]`.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = match &self.dynamics {
            Dynamics::PointMass { .. } => {
                let d = self.action_dim;
                let mut o: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                o.extend(std::iter::repeat_n(0.0, d));
                o
            }
            Dynamics::Pendulum { .. } => {
                let theta: f64 = rng.random_range(-PI..=PI);
                let omega: f64 = rng.random_range(-1.0..=1.0);
                vec![theta.cos(), theta.sin(), omega]
            }
        };
        EnvState { obs, t: 0 }
    }

    /// One transition. Actions are clipped to `[-1, 1]`; the result depends
    /// only on `(state, action)`.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<StepResult, EnvError> {
        if state.obs.len() != self.state_dim {
            return Err(EnvError::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                found: state.obs.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(EnvError::DimensionMismatch {
                what: "action",
                expected: self.action_dim,
                found: action.len(),
            });
        }
        if state.obs.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFinite {
                what: "state",
                t: state.t,
                values: state.obs.clone(),
            });
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFinite {
                what: "action",
                t: state.t,
                values: action.to_vec(),
            });
        }
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let (obs, reward) = match &self.dynamics {
            Dynamics::PointMass {
                dt,
                mass,
                damping,
                goal,
                action_cost,
            } => {
                let d = self.action_dim;
                let (pos, vel) = state.obs.split_at(d);
                let dist2: f64 = pos.iter().zip(goal).map(|(p, g)| (p - g) * (p - g)).sum();
                let act2: f64 = a.iter().map(|x| x * x).sum();
                let mut next = Vec::with_capacity(2 * d);
                next.extend((0..d).map(|i| pos[i] + dt * vel[i]));
                next.extend((0..d).map(|i| vel[i] + dt * (a[i] / mass - damping * vel[i])));
                (next, -dist2 - action_cost * act2)
            }
            Dynamics::Pendulum {
                dt,
                gravity,
                length,
                mass,
                max_torque,
                max_speed,
                velocity_cost,
                action_cost,
            } => {
                let theta = state.obs[1].atan2(state.obs[0]);
                let omega = state.obs[2];
                let torque = max_torque * a[0];
                let reward = -(theta * theta
                    + velocity_cost * omega * omega
                    + action_cost * torque * torque);
                let acc = gravity / length * theta.sin() + torque / (mass * length * length);
                let omega2 = (omega + dt * acc).clamp(-max_speed, *max_speed);
                let theta2 = theta + dt * omega2;
                (vec![theta2.cos(), theta2.sin(), omega2], reward)
            }
        };
        if obs.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(EnvError::NonFinite {
                what: "next state",
                t: state.t + 1,
                values: obs,
            });
        }
        let t = state.t + 1;
        Ok(StepResult {
            state: EnvState { obs, t },
            reward,
            done: t == self.horizon,
        })
    }

    /// Smallest reward reachable from any reset state under actions in `[-1, 1]`.
    pub fn reward_lower_bound(&self) -> f64 {
        match &self.dynamics {
            Dynamics::PointMass {
                dt,
                mass,
                goal,
                action_cost,
                ..
            } => {
                // damping only shrinks |vel|, so |vel_t| ≤ t·dt/mass
                let h = self.horizon as f64;
                let reach = 1.0 + dt * dt / mass * h * (h - 1.0) / 2.0;
                let dist2: f64 = goal.iter().map(|g| (reach + g.abs()).powi(2)).sum();
                -dist2 - action_cost * self.action_dim as f64
            }
            Dynamics::Pendulum {
                max_torque,
                max_speed,
                velocity_cost,
                action_cost,
                ..
            } => {
                -(PI * PI
                    + velocity_cost * max_speed * max_speed
                    + action_cost * max_torque * max_torque)
            }
        }
    }

    /// Analytic envelope `[H·r_min, 0]` of undiscounted episode returns.
    pub fn return_bounds(&self) -> (f64, f64) {
        (self.horizon as f64 * self.reward_lower_bound(), 0.0)
    }

    /// Envelope of discounted values `Σ γ^k r_k` from any state.
    pub fn value_bounds(&self) -> (f64, f64) {
        let h = self.horizon as f64;
        let mass = if self.gamma < 1.0 {
            (1.0 - self.gamma.powf(h)) / (1.0 - self.gamma)
        } else {
            h
        };
        (mass * self.reward_lower_bound(), 0.0)
    }
}

/// Runs one episode to the horizon; returns the undiscounted return.
pub fn rollout(
    spec: &EnvSpec,
    reset_seed: u64,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<f64, EnvError> {
    let mut state = spec.reset(reset_seed);
    let mut ret = 0.0;
    loop {
        let a = policy(&state.obs);
        let step = spec.step(&state, &a)?;
        ret += step.reward;
        state = step.state;
        if step.done {
            return Ok(ret);
        }
    }
}

/// Reset seed of the `i`-th episode of an evaluation seeded by `seed`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

/// Per-episode returns of the uniform random policy.
pub fn random_policy_returns(
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    (0..episodes)
        .map(|i| {
            rollout(spec, episode_seed(seed, i), |_| {
                (0..spec.action_dim)
                    .map(|_| rng.random_range(-1.0..=1.0))
                    .collect()
            })
        })
        .collect()
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreAnchors {
    pub random_ref: f64,
    pub expert_ref: f64,
}

impl ScoreAnchors {
    pub fn new(random_ref: f64, expert_ref: f64) -> Result<Self, EnvError> {
        let a = ScoreAnchors {
            random_ref,
            expert_ref,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.expert_ref > self.random_ref
            && self.expert_ref.is_finite()
            && self.random_ref.is_finite()
        {
            Ok(())
        } else {
            Err(EnvError::DegenerateAnchors {
                random: self.random_ref,
                expert: self.expert_ref,
            })
        }
    }
}

/// `100 · (ret − random_ref) / (expert_ref − random_ref)`.
pub fn normalized_score(ret: f64, anchors: &ScoreAnchors) -> Result<f64, EnvError> {
    anchors.validate()?;
    Ok(100.0 * (ret - anchors.random_ref) / (anchors.expert_ref - anchors.random_ref))
}
