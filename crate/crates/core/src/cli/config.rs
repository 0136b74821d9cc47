use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::algorithms::TrainConfig;
use crate::datagen::Tier;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            name: "pointmass1d".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub tier: Tier,
    pub n: usize,
    pub seed: u64,
    /// Dataset file read by `train`/`analyze` and written by `gen-data`.
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            tier: Tier::Medium,
            n: 20_000,
            seed: 0,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Whole-run configuration; every section and key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::algorithms::{Algorithm, BetaSetting};
    use proptest::prelude::*;

    #[test]
    fn defaults_follow_the_hyperparameter_tables() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.train.gamma, 0.99);
        assert_eq!(c.train.rho, 0.995);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.train.total_steps, 50_000);
        assert_eq!(c.train.checkpoint_every, 5_000);
        assert_eq!(c.data.n, 20_000);
    }

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let c = RunConfig::from_json(
            r#"{"env": {"name": "pendulum"}, "data": {"tier": "medium-expert", "n": 10, "seed": 3, "path": "d.odrl"},
                "train": {"algorithm": "sac-n", "N": 5, "eta": 0, "beta": "auto", "total_steps": 7},
                "eval": {"episodes": 4, "seed": 9}, "output": {"dir": "out"}}"#,
        )
        .unwrap();
        assert_eq!(c.env.name, "pendulum");
        assert_eq!(c.data.tier, Tier::MediumExpert);
        assert_eq!(
            (c.train.algorithm, c.train.n, c.train.beta),
            (Algorithm::SacN, 5, BetaSetting::Auto)
        );
        assert_eq!(c.eval.episodes, 4);
        for bad in [
            r#"{"surprise": 1}"#,
            r#"{"train": {"lr": 1}}"#,
            r#"{"data": {"tier": "great"}}"#,
            r#"{"env": {"name": "x", "extra": 0}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(bad), Err(CliError::Config(_))),
                "{bad}"
            );
        }
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::sample::select(Tier::ALL.to_vec()),
            1usize..100_000,
            any::<u64>(),
            prop::sample::select(vec![
                Algorithm::Sac,
                Algorithm::SacN,
                Algorithm::Edac,
                Algorithm::Rem,
            ]),
            2usize..20,
            0.0f64..5.0,
            prop_oneof![
                Just(BetaSetting::Auto),
                (1e-3f64..2.0).prop_map(BetaSetting::Fixed)
            ],
            (1e-5f64..1e-2, 0.5f64..1.0),
            prop::collection::vec(1usize..300, 1..4),
            (1usize..50, any::<u64>(), prop::option::of("[a-z]{1,8}")),
        )
            .prop_map(
                |(
                    tier,
                    n,
                    seed,
                    algorithm,
                    nn,
                    eta,
                    beta,
                    (lr, gamma),
                    hidden,
                    (eps, eseed, dir),
                )| {
                    let mut c = RunConfig::default();
                    c.data = DataSection {
                        tier,
                        n,
                        seed,
                        path: dir.clone().map(|d| PathBuf::from(format!("{d}.odrl"))),
                    };
                    c.train.algorithm = algorithm;
                    c.train.n = nn;
                    c.train.eta = eta;
                    c.train.beta = beta;
                    c.train.lr_q = lr;
                    c.train.gamma = gamma;
                    c.train.hidden = hidden;
                    c.eval = EvalSection {
                        episodes: eps,
                        seed: eseed,
                    };
                    c.output.dir = dir.map(PathBuf::from);
                    c
                },
            )
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(c in arb_config()) {
            let once = RunConfig::from_json(&c.to_json()).unwrap();
            prop_assert_eq!(&once, &c);
            prop_assert_eq!(RunConfig::from_json(&once.to_json()).unwrap(), once);
        }
    }
}
