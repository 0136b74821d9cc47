//! Reference-policy training and tier construction on pointmass-1d.

use edac_core::algorithms::TrainConfig;
use edac_core::datagen::{collect, train_reference_policies, ReferenceConfig, Tier};
use edac_core::env::EnvSpec;

#[test]
fn reference_policies_hit_their_score_bands() {
    let spec = EnvSpec::pointmass(1);
    for seed in 1..=3 {
        let refs = train_reference_policies(&spec, seed, &ReferenceConfig::default()).unwrap();
        assert!(
            refs.expert_score >= 90.0,
            "seed {seed}: expert {}",
            refs.expert_score
        );
        assert!(
            (25.0..=45.0).contains(&refs.medium_score),
            "seed {seed}: medium {}",
            refs.medium_score
        );
        assert!(refs.anchors.expert_ref > refs.anchors.random_ref);
        assert!(refs.medium_replay.len() < refs.full_replay.len());

        if seed == 1 {
            let n = 20_000;
            let mean = |t| {
                collect(&spec, t, n, 1, &refs)
                    .unwrap()
                    .transitions
                    .mean_reward()
            };
            let (m, e, me) = (
                mean(Tier::Medium),
                mean(Tier::Expert),
                mean(Tier::MediumExpert),
            );
            assert!(m < e, "medium {m} expert {e}");
            assert!(
                m < me && me < e,
                "medium {m} < medium-expert {me} < expert {e}"
            );
        }
    }
}

#[test]
fn reference_training_is_deterministic() {
    let spec = EnvSpec::pointmass(1);
    // Short but fast-learning, so the expert still clears the random anchor.
    let base = ReferenceConfig::default();
    let cfg = ReferenceConfig {
        train: TrainConfig {
            lr_q: 1e-3,
            lr_policy: 1e-3,
            ..base.train.clone()
        },
        env_steps: 3_000,
        warmup_steps: 500,
        eval_every: 250,
        eval_episodes: 20,
        anchor_episodes: 50,
        medium_band: (-1e9, 1e9),
        ..base
    };
    let a = train_reference_policies(&spec, 4, &cfg).unwrap();
    let b = train_reference_policies(&spec, 4, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train_reference_policies(&spec, 5, &cfg).unwrap();
    assert_ne!(a.expert, c.expert);
}
