use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::env::{EnvSpec, ScoreAnchors};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Random,
    Medium,
    Expert,
    MediumExpert,
    MediumReplay,
    FullReplay,
}

impl Tier {
    pub const ALL: [Tier; 6] = [
        Tier::Random,
        Tier::Medium,
        Tier::Expert,
        Tier::MediumExpert,
        Tier::MediumReplay,
        Tier::FullReplay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Random => "random",
            Tier::Medium => "medium",
            Tier::Expert => "expert",
            Tier::MediumExpert => "medium-expert",
            Tier::MediumReplay => "medium-replay",
            Tier::FullReplay => "full-replay",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| DatagenError::UnknownTier(s.to_string()))
    }
}

/// Column-major store of `(s, a, r, s', done)` records.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
}

/// Borrowed view of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<'a> {
    pub s: &'a [f64],
    pub a: &'a [f64],
    pub r: f64,
    pub s_next: &'a [f64],
    pub done: bool,
}

impl Transitions {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Transitions {
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(
        &mut self,
        s: &[f64],
        a: &[f64],
        r: f64,
        s_next: &[f64],
        done: bool,
    ) -> Result<(), DatagenError> {
        let check = |what: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(DatagenError::DimensionMismatch {
                    what,
                    expected,
                    found,
                })
            }
        };
        check("state", self.state_dim, s.len())?;
        check("action", self.action_dim, a.len())?;
        check("next state", self.state_dim, s_next.len())?;
        if !r.is_finite() {
            return Err(DatagenError::NonFiniteReward(self.len()));
        }
        self.states.extend_from_slice(s);
        self.actions.extend_from_slice(a);
        self.rewards.push(r);
        self.next_states.extend_from_slice(s_next);
        self.dones.push(if done { 1.0 } else { 0.0 });
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition<'_> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            s: &self.states[i * sd..(i + 1) * sd],
            a: &self.actions[i * ad..(i + 1) * ad],
            r: self.rewards[i],
            s_next: &self.next_states[i * sd..(i + 1) * sd],
            done: self.dones[i] != 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition<'_>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn extend_from(&mut self, other: &Transitions) -> Result<(), DatagenError> {
        for t in other.iter() {
            self.push(t.s, t.a, t.r, t.s_next, t.done)?;
        }
        Ok(())
    }

    /// First `n` records.
    pub fn truncated(&self, n: usize) -> Transitions {
        let n = n.min(self.len());
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transitions {
            state_dim: sd,
            action_dim: ad,
            states: self.states[..n * sd].to_vec(),
            actions: self.actions[..n * ad].to_vec(),
            rewards: self.rewards[..n].to_vec(),
            next_states: self.next_states[..n * sd].to_vec(),
            dones: self.dones[..n].to_vec(),
        }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn next_states(&self) -> &[f64] {
        &self.next_states
    }

    pub fn dones(&self) -> &[f64] {
        &self.dones
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len().max(1) as f64
    }
}

/// Contents of the `<path>.meta.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub tier: Tier,
    pub seed: u64,
    pub anchors: ScoreAnchors,
    pub env: EnvSpec,
    /// Checkpoint files of the policies that generated the data, relative to
    /// the dataset directory.
    #[serde(default)]
    pub behavior_policies: Vec<String>,
    /// Normalized scores of those policies, in the same order.
    #[serde(default)]
    pub behavior_scores: Vec<f64>,
    /// Normalized mean return of the complete episodes in the data, when the
    /// tier has any.
    #[serde(default)]
    pub dataset_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Transitions,
    pub meta: DatasetMeta,
}
