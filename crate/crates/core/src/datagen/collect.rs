use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DatagenError, DatasetMeta, OfflineDataset, Tier, Transitions};
use crate::algorithms::{Algorithm, BetaSetting, TrainConfig, TrainerState};
use crate::autodiff::Tensor;
use crate::env::{
    episode_seed, mean_and_stderr, normalized_score, random_policy_returns, EnvSpec, ScoreAnchors,
};
use crate::nn::GaussianPolicy;

/// Who picks the actions during collection.
#[derive(Clone, Copy, Debug)]
pub enum Behavior<'a> {
    Uniform,
    /// Stochastic (sampled) actions of a policy.
    Policy(&'a GaussianPolicy),
}

impl Behavior<'_> {
    fn act(&self, obs: &[f64], action_dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Behavior::Uniform => (0..action_dim)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect(),
            Behavior::Policy(p) => {
                let z: Vec<f64> = (0..action_dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                p.act(obs, &z)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollouts {
    pub transitions: Transitions,
    /// Undiscounted returns of the episodes that ran to the horizon.
    pub episode_returns: Vec<f64>,
}

/// Runs `behavior` from seeded resets until `n` transitions are stored; the
/// last episode may be cut short. Horizon timeouts are stored with `done = false`
/// because they are truncations, not terminal states.
pub fn collect_rollouts(
    spec: &EnvSpec,
    behavior: Behavior<'_>,
    n: usize,
    seed: u64,
) -> Result<Rollouts, DatagenError> {
    if n == 0 {
        return Err(DatagenError::Empty);
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Transitions::new(spec.state_dim, spec.action_dim);
    let mut episode_returns = Vec::new();
    let mut episode = 0;
    let mut state = spec.reset(episode_seed(seed, episode));
    let mut ret = 0.0;
    while transitions.len() < n {
        let a = behavior.act(&state.obs, spec.action_dim, &mut rng);
        let step = spec.step(&state, &a)?;
        transitions.push(&state.obs, &a, step.reward, &step.state.obs, false)?;
        ret += step.reward;
        if step.done {
            episode_returns.push(ret);
            ret = 0.0;
            episode += 1;
            state = spec.reset(episode_seed(seed, episode));
        } else {
            state = step.state;
        }
    }
    Ok(Rollouts {
        transitions,
        episode_returns,
    })
}

/// Undiscounted returns over `episodes` seeded resets, all advancing in
/// lockstep so `act` maps a `[episodes, state_dim]` batch once per step.
fn lockstep_returns(
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    mut act: impl FnMut(&Tensor) -> Result<Tensor, DatagenError>,
) -> Result<Vec<f64>, DatagenError> {
    let mut states: Vec<_> = (0..episodes)
        .map(|i| spec.reset(episode_seed(seed, i)))
        .collect();
    let mut returns = vec![0.0; episodes];
    let mut obs = Vec::with_capacity(episodes * spec.state_dim);
    for _ in 0..spec.horizon {
        obs.clear();
        for st in &states {
            obs.extend_from_slice(&st.obs);
        }
        let actions = act(&Tensor::new([episodes, spec.state_dim], obs.clone()).expect("shape"))?;
        for (i, st) in states.iter_mut().enumerate() {
            let step = spec.step(st, actions.row_slice(i))?;
            returns[i] += step.reward;
            *st = step.state;
        }
    }
    Ok(returns)
}

/// Undiscounted returns of `tanh(μ(s))` over `episodes` seeded resets.
pub fn deterministic_returns(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, DatagenError> {
    lockstep_returns(spec, episodes, seed, |s| Ok(policy.deterministic_action(s)))
}

/// Undiscounted returns of the sampling policy (the behavior that collects
/// data) over `episodes` seeded resets; noise comes from a stream keyed by `seed`.
pub fn stochastic_returns(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM);
    lockstep_returns(spec, episodes, seed, |s| {
        let z: Vec<f64> = (0..episodes * spec.action_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let noise = Tensor::new([episodes, spec.action_dim], z).expect("shape");
        let (a, _) = policy
            .sample(s, &noise)
            .map_err(|e| DatagenError::Reference(e.to_string()))?;
        Ok(a)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceConfig {
    /// Online learner; `algorithm` must be `sac`.
    pub train: TrainConfig,
    pub env_steps: usize,
    /// Uniform-action steps before the first gradient update.
    pub warmup_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Episodes behind each anchor and each confirmation of a medium candidate.
    pub anchor_episodes: usize,
    pub medium_band: (f64, f64),
    pub medium_fallback_band: (f64, f64),
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            train: TrainConfig {
                algorithm: Algorithm::Sac,
                n: 2,
                eta: 0.0,
                beta: BetaSetting::Auto,
                batch_size: 128,
                hidden: vec![32, 32],
                lr_q: 1e-4,
                lr_policy: 1e-4,
                ..TrainConfig::default()
            },
            env_steps: 20_000,
            warmup_steps: 1_000,
            eval_every: 100,
            eval_episodes: 200,
            anchor_episodes: 500,
            medium_band: (30.0, 40.0),
            medium_fallback_band: (25.0, 45.0),
        }
    }
}

/// Policy snapshot taken during the online run.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub env_steps: usize,
    pub mean_return: f64,
    pub policy: GaussianPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePolicies {
    pub expert: GaussianPolicy,
    pub medium: GaussianPolicy,
    /// Normalized behavior (sampling-policy) scores on episodes disjoint from
    /// the anchor episodes.
    pub expert_score: f64,
    pub medium_score: f64,
    pub anchors: ScoreAnchors,
    /// Replay buffer up to the medium snapshot.
    pub medium_replay: Transitions,
    /// Entire replay buffer of the run.
    pub full_replay: Transitions,
    pub curve: Vec<(usize, f64)>,
}

// Disjoint reset-seed streams for the different evaluations of one run.
const ANCHOR_STREAM: u64 = 0x5EED_A11C;
const CONFIRM_STREAM: u64 = 0x5EED_C0F1;
const SCORE_STREAM: u64 = 0x5EED_5C0E;
const EVAL_STREAM: u64 = 0x5EED_E7A1;
const NOISE_STREAM: u64 = 0x5EED_9015;

/// Online SAC on `spec`. Every score here is that of the sampling policy, the
/// behavior that later collects the data. The expert is the best-evaluated
/// snapshot; the medium policy is the first snapshot whose normalized score
/// lands in `medium_band` (then `medium_fallback_band`) on a confirmation
/// evaluation.
pub fn train_reference_policies(
    spec: &EnvSpec,
    seed: u64,
    cfg: &ReferenceConfig,
) -> Result<ReferencePolicies, DatagenError> {
    spec.validate()?;
    if cfg.train.algorithm != Algorithm::Sac {
        return Err(DatagenError::Reference(
            "reference learner must be sac".into(),
        ));
    }
    if cfg.eval_every == 0 || cfg.env_steps <= cfg.warmup_steps {
        return Err(DatagenError::Reference(
            "env_steps must exceed warmup_steps and eval_every must be positive".into(),
        ));
    }
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let mut learner = TrainerState::new(train, spec.state_dim, spec.action_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0417_11E5);
    let mut buffer = Transitions::new(spec.state_dim, spec.action_dim);
    let mut snapshots = Vec::new();
    let mut episode = 0;
    let mut state = spec.reset(episode_seed(seed, episode));
    for t in 0..cfg.env_steps {
        let a = if t < cfg.warmup_steps {
            Behavior::Uniform.act(&state.obs, spec.action_dim, &mut rng)
        } else {
            Behavior::Policy(&learner.policy).act(&state.obs, spec.action_dim, &mut rng)
        };
        let step = spec.step(&state, &a)?;
        buffer.push(&state.obs, &a, step.reward, &step.state.obs, false)?;
        if step.done {
            episode += 1;
            state = spec.reset(episode_seed(seed, episode));
        } else {
            state = step.state;
        }
        if t >= cfg.warmup_steps {
            learner.train_step(&buffer)?;
        }
        if t + 1 >= cfg.warmup_steps && (t + 1) % cfg.eval_every == 0 {
            {
                let returns = stochastic_returns(
                    spec,
                    &learner.policy,
                    cfg.eval_episodes,
                    seed ^ EVAL_STREAM,
                )?;
                snapshots.push(Snapshot {
                    env_steps: t + 1,
                    mean_return: mean_and_stderr(&returns).0,
                    policy: learner.policy.clone(),
                });
            }
        }
    }
    let best = snapshots
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
            Some((_, r)) if r >= s.mean_return => acc,
            _ => Some((i, s.mean_return)),
        })
        .ok_or_else(|| DatagenError::Reference("no evaluation snapshots".into()))?
        .0;
    let expert = snapshots[best].policy.clone();
    let random_ref = mean_and_stderr(&random_policy_returns(
        spec,
        cfg.anchor_episodes,
        seed ^ ANCHOR_STREAM,
    )?)
    .0;
    let expert_ref = mean_and_stderr(&stochastic_returns(
        spec,
        &expert,
        cfg.anchor_episodes,
        seed ^ ANCHOR_STREAM,
    )?)
    .0;
    let anchors = ScoreAnchors::new(random_ref, expert_ref)?;
    let score = |p: &GaussianPolicy, stream: u64| -> Result<f64, DatagenError> {
        let r = stochastic_returns(spec, p, cfg.anchor_episodes, seed ^ stream)?;
        Ok(normalized_score(mean_and_stderr(&r).0, &anchors)?)
    };
    let curve: Vec<(usize, f64)> = snapshots
        .iter()
        .map(|s| Ok((s.env_steps, normalized_score(s.mean_return, &anchors)?)))
        .collect::<Result<_, DatagenError>>()?;

    let mut medium = None;
    'bands: for (lo, hi) in [cfg.medium_band, cfg.medium_fallback_band] {
        for (snap, &(_, quick)) in snapshots[..best].iter().zip(&curve) {
            if (lo..=hi).contains(&quick) {
                let confirmed = score(&snap.policy, CONFIRM_STREAM)?;
                if (lo..=hi).contains(&confirmed) {
                    medium = Some(snap);
                    break 'bands;
                }
            }
        }
    }
    let medium = medium.ok_or_else(|| DatagenError::MediumNotReached {
        curve: curve
            .iter()
            .map(|(t, s)| format!("{t}:{s:.1}"))
            .collect::<Vec<_>>()
            .join(" "),
    })?;
    Ok(ReferencePolicies {
        expert_score: score(&expert, SCORE_STREAM)?,
        medium_score: score(&medium.policy, SCORE_STREAM)?,
        expert,
        medium: medium.policy.clone(),
        anchors,
        medium_replay: buffer.truncated(medium.env_steps),
        full_replay: buffer,
        curve,
    })
}

/// Normalized mean return of the complete episodes in a collection, if any.
fn rollout_score(r: &Rollouts, anchors: &ScoreAnchors) -> Result<Option<f64>, DatagenError> {
    if r.episode_returns.is_empty() {
        return Ok(None);
    }
    Ok(Some(normalized_score(
        mean_and_stderr(&r.episode_returns).0,
        anchors,
    )?))
}

/// Builds the dataset of one tier. Replay tiers ignore `n` and keep the whole
/// buffer; the others store exactly `n` transitions. `behavior_policies` in the
/// returned metadata names the policies as `medium` / `expert`; callers that
/// persist them rewrite the names to file paths.
pub fn collect(
    spec: &EnvSpec,
    tier: Tier,
    n: usize,
    seed: u64,
    refs: &ReferencePolicies,
) -> Result<OfflineDataset, DatagenError> {
    let (transitions, names, scores, dataset_score): (
        Transitions,
        Vec<&str>,
        Vec<f64>,
        Option<f64>,
    ) = match tier {
        Tier::Random => {
            let r = collect_rollouts(spec, Behavior::Uniform, n, seed)?;
            let s = rollout_score(&r, &refs.anchors)?;
            (r.transitions, vec![], vec![], s)
        }
        Tier::Medium | Tier::Expert => {
            let (p, name, sc) = if tier == Tier::Medium {
                (&refs.medium, "medium", refs.medium_score)
            } else {
                (&refs.expert, "expert", refs.expert_score)
            };
            let r = collect_rollouts(spec, Behavior::Policy(p), n, seed)?;
            let s = rollout_score(&r, &refs.anchors)?;
            (r.transitions, vec![name], vec![sc], s)
        }
        Tier::MediumExpert => {
            let half = n / 2;
            if half == 0 {
                return Err(DatagenError::Empty);
            }
            let m = collect_rollouts(spec, Behavior::Policy(&refs.medium), half, seed)?;
            let e = collect_rollouts(
                spec,
                Behavior::Policy(&refs.expert),
                n - half,
                seed.wrapping_add(1),
            )?;
            let mut all = m.transitions;
            all.extend_from(&e.transitions)?;
            let joined = Rollouts {
                transitions: Transitions::new(spec.state_dim, spec.action_dim),
                episode_returns: m
                    .episode_returns
                    .into_iter()
                    .chain(e.episode_returns)
                    .collect(),
            };
            let s = rollout_score(&joined, &refs.anchors)?;
            (
                all,
                vec!["medium", "expert"],
                vec![refs.medium_score, refs.expert_score],
                s,
            )
        }
        Tier::MediumReplay => (
            refs.medium_replay.clone(),
            vec!["medium"],
            vec![refs.medium_score],
            None,
        ),
        Tier::FullReplay => (
            refs.full_replay.clone(),
            vec!["expert"],
            vec![refs.expert_score],
            None,
        ),
    };
    Ok(OfflineDataset {
        transitions,
        meta: DatasetMeta {
            tier,
            seed,
            anchors: refs.anchors,
            env: spec.clone(),
            behavior_policies: names.into_iter().map(String::from).collect(),
            behavior_scores: scores,
            dataset_score,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, EnvState};

    fn fake_refs(spec: &EnvSpec) -> ReferencePolicies {
        let medium = GaussianPolicy::new(spec.state_dim, spec.action_dim, &[8], 1).unwrap();
        let expert = GaussianPolicy::new(spec.state_dim, spec.action_dim, &[8], 2).unwrap();
        let replay = collect_rollouts(spec, Behavior::Uniform, 300, 5)
            .unwrap()
            .transitions;
        ReferencePolicies {
            expert,
            medium,
            expert_score: 97.0,
            medium_score: 33.0,
            anchors: ScoreAnchors::new(-40.0, -5.0).unwrap(),
            medium_replay: replay.truncated(120),
            full_replay: replay,
            curve: vec![],
        }
    }

    #[test]
    fn uniform_collection_shape_and_bounds() {
        let spec = EnvSpec::pointmass(1);
        let r = collect_rollouts(&spec, Behavior::Uniform, 1000, 3).unwrap();
        assert_eq!(r.transitions.len(), 1000);
        assert_eq!(r.episode_returns.len(), 10);
        assert!(r
            .transitions
            .actions()
            .iter()
            .all(|a| (-1.0..=1.0).contains(a)));
        assert!(
            r.transitions.actions().iter().any(|a| *a > 0.9)
                && r.transitions.actions().iter().any(|a| *a < -0.9)
        );
        assert!(r.transitions.dones().iter().all(|&d| d == 0.0));
        assert!(matches!(
            collect_rollouts(&spec, Behavior::Uniform, 0, 3),
            Err(DatagenError::Empty)
        ));
    }

    #[test]
    fn stored_transitions_replay_exactly() {
        for spec in [EnvSpec::pointmass(1), EnvSpec::pendulum()] {
            let p = GaussianPolicy::new(spec.state_dim, spec.action_dim, &[8], 4).unwrap();
            for behavior in [Behavior::Uniform, Behavior::Policy(&p)] {
                let r = collect_rollouts(&spec, behavior, 450, 11).unwrap();
                for t in r.transitions.iter() {
                    let out = spec
                        .step(
                            &EnvState {
                                obs: t.s.to_vec(),
                                t: 0,
                            },
                            t.a,
                        )
                        .unwrap();
                    assert_eq!(out.state.obs, t.s_next);
                    assert_eq!(out.reward, t.r);
                }
            }
        }
    }

    #[test]
    fn collection_is_seed_deterministic() {
        let spec = EnvSpec::pointmass(1);
        let p = GaussianPolicy::new(2, 1, &[8], 4).unwrap();
        let a = collect_rollouts(&spec, Behavior::Policy(&p), 500, 7).unwrap();
        let b = collect_rollouts(&spec, Behavior::Policy(&p), 500, 7).unwrap();
        let c = collect_rollouts(&spec, Behavior::Policy(&p), 500, 8).unwrap();
        assert_eq!(
            super::super::format::encode(&a.transitions).unwrap(),
            super::super::format::encode(&b.transitions).unwrap()
        );
        assert_ne!(a.transitions, c.transitions);
        assert!(a.transitions.actions().iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn batched_evaluation_matches_sequential_rollouts() {
        let spec = EnvSpec::pointmass(2);
        let p = GaussianPolicy::new(4, 2, &[16, 16], 6).unwrap();
        let batched = deterministic_returns(&spec, &p, 12, 21).unwrap();
        for (i, r) in batched.iter().enumerate() {
            let seq = rollout(&spec, episode_seed(21, i), |obs| p.act(obs, &[0.0, 0.0])).unwrap();
            assert!((r - seq).abs() <= 1e-9 * (1.0 + seq.abs()), "{r} vs {seq}");
        }
    }

    #[test]
    fn stochastic_evaluation_matches_sequential_rollouts_with_the_same_noise() {
        let spec = EnvSpec::pointmass(2);
        let p = GaussianPolicy::new(4, 2, &[16, 16], 6).unwrap();
        let (episodes, seed) = (7, 33);
        let batched = stochastic_returns(&spec, &p, episodes, seed).unwrap();
        // Noise layout: step-major, then episode, then action coordinate.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM);
        let noise: Vec<f64> = (0..spec.horizon * episodes * 2)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        for (i, r) in batched.iter().enumerate() {
            let mut t = 0;
            let seq = rollout(&spec, episode_seed(seed, i), |obs| {
                let k = (t * episodes + i) * 2;
                t += 1;
                p.act(obs, &noise[k..k + 2])
            })
            .unwrap();
            assert!((r - seq).abs() <= 1e-9 * (1.0 + seq.abs()), "{r} vs {seq}");
        }
        assert_ne!(
            batched,
            deterministic_returns(&spec, &p, episodes, seed).unwrap()
        );
    }

    #[test]
    fn tier_semantics() {
        let spec = EnvSpec::pointmass(1);
        let refs = fake_refs(&spec);
        let random = collect(&spec, Tier::Random, 1000, 1, &refs).unwrap();
        assert_eq!(random.transitions.len(), 1000);
        assert!(random.meta.behavior_policies.is_empty());
        assert!(random.meta.dataset_score.is_some());

        let me = collect(&spec, Tier::MediumExpert, 1001, 1, &refs).unwrap();
        assert_eq!(me.transitions.len(), 1001);
        assert_eq!(me.meta.behavior_policies, ["medium", "expert"]);
        let medium = collect_rollouts(&spec, Behavior::Policy(&refs.medium), 500, 1).unwrap();
        assert_eq!(me.transitions.truncated(500), medium.transitions);

        let mr = collect(&spec, Tier::MediumReplay, 5, 1, &refs).unwrap();
        assert_eq!(mr.transitions, refs.medium_replay);
        let fr = collect(&spec, Tier::FullReplay, 5, 1, &refs).unwrap();
        assert_eq!(fr.transitions, refs.full_replay);
        assert_eq!(fr.meta.anchors, refs.anchors);
        assert_eq!(fr.meta.env, spec);
    }

    #[test]
    fn reference_config_is_checked() {
        let spec = EnvSpec::pointmass(1);
        let mut cfg = ReferenceConfig::default();
        cfg.train.algorithm = Algorithm::SacN;
        assert!(matches!(
            train_reference_policies(&spec, 0, &cfg),
            Err(DatagenError::Reference(_))
        ));
        let cfg = ReferenceConfig {
            env_steps: 10,
            warmup_steps: 10,
            ..ReferenceConfig::default()
        };
        assert!(matches!(
            train_reference_policies(&spec, 0, &cfg),
            Err(DatagenError::Reference(_))
        ));
    }
}
