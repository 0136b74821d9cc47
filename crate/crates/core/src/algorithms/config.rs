use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AlgoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Clipped double-Q SAC with exactly two critics.
    Sac,
    SacN,
    Edac,
    Rem,
    CqlLite,
    VarReg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sac,
        Algorithm::SacN,
        Algorithm::Edac,
        Algorithm::Rem,
        Algorithm::CqlLite,
        Algorithm::VarReg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::SacN => "sac-n",
            Algorithm::Edac => "edac",
            Algorithm::Rem => "rem",
            Algorithm::CqlLite => "cql-lite",
            Algorithm::VarReg => "var-reg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                AlgoError::InvalidConfig(format!(
                "unknown algorithm {s:?}; expected one of sac, sac-n, edac, rem, cql-lite, var-reg"
            ))
            })
    }
}

/// `"auto"` or a fixed positive β.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSetting {
    Auto,
    Fixed(f64),
}

impl Serialize for BetaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BetaSetting::Auto => s.serialize_str("auto"),
            BetaSetting::Fixed(b) => s.serialize_f64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(BetaSetting::Fixed(b)),
            Raw::Str(s) if s == "auto" => Ok(BetaSetting::Auto),
            Raw::Str(s) => s.parse::<f64>().map(BetaSetting::Fixed).map_err(|_| {
                serde::de::Error::custom(format!("beta must be a number or \"auto\", got {s:?}"))
            }),
        }
    }
}

impl FromStr for BetaSetting {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(BetaSetting::Auto);
        }
        s.parse::<f64>().map(BetaSetting::Fixed).map_err(|_| {
            AlgoError::InvalidConfig(format!("beta must be a number or \"auto\", got {s:?}"))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    #[serde(rename = "N")]
    pub n: usize,
    pub eta: f64,
    pub beta: BetaSetting,
    /// Starting β in auto mode.
    pub initial_beta: f64,
    pub lr_beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Cosine (normalized) input-gradient similarity; `false` uses the raw inner product.
    pub es_normalize: bool,
    /// Treat the gradient norms in the cosine as constants.
    pub es_stop_normalizer: bool,
    pub cql_alpha: f64,
    pub cql_samples: usize,
    pub var_reg_c: f64,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Edac,
            n: 10,
            eta: 1.0,
            beta: BetaSetting::Auto,
            initial_beta: 1.0,
            lr_beta: 3e-4,
            gamma: 0.99,
            rho: 0.995,
            lr_q: 3e-4,
            lr_policy: 3e-4,
            batch_size: 256,
            total_steps: 50_000,
            seed: 0,
            hidden: vec![256, 256, 256],
            es_normalize: true,
            es_stop_normalizer: false,
            cql_alpha: 5.0,
            cql_samples: 10,
            var_reg_c: 1.0,
            checkpoint_every: 5_000,
            log_every: 1_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |m: String| Err(AlgoError::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if self.algorithm == Algorithm::Sac && self.n != 2 {
            return bad(format!(
                "algorithm sac uses exactly 2 critics, got N = {}",
                self.n
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be a finite value ≥ 0, got {}", self.eta));
        }
        if self.algorithm != Algorithm::Edac && self.eta != 0.0 {
            return bad(format!(
                "eta = {} is only meaningful for edac; {} requires eta = 0",
                self.eta, self.algorithm
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if let BetaSetting::Fixed(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("beta must be positive, got {b}"));
            }
        }
        if !(self.initial_beta > 0.0 && self.initial_beta.is_finite()) {
            return bad(format!(
                "initial_beta must be positive, got {}",
                self.initial_beta
            ));
        }
        for (name, v) in [
            ("lr_q", self.lr_q),
            ("lr_policy", self.lr_policy),
            ("lr_beta", self.lr_beta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value ≥ 0, got {v}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if self.cql_alpha < 0.0 || self.var_reg_c < 0.0 {
            return bad("cql_alpha and var_reg_c must be ≥ 0".into());
        }
        if self.algorithm == Algorithm::CqlLite && self.cql_samples < 2 {
            return bad("cql_samples must be at least 2 (half uniform, half policy)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sac_n_rejects_positive_eta() {
        let c = TrainConfig {
            algorithm: Algorithm::SacN,
            eta: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig { eta: 0.0, ..c };
        c.validate().unwrap();
    }

    #[test]
    fn invariants_are_enforced() {
        let base = TrainConfig::default();
        base.validate().unwrap();
        for bad in [
            TrainConfig {
                n: 1,
                ..base.clone()
            },
            TrainConfig {
                eta: -0.1,
                ..base.clone()
            },
            TrainConfig {
                gamma: 0.0,
                ..base.clone()
            },
            TrainConfig {
                gamma: 1.01,
                ..base.clone()
            },
            TrainConfig {
                rho: 1.5,
                ..base.clone()
            },
            TrainConfig {
                beta: BetaSetting::Fixed(0.0),
                ..base.clone()
            },
            TrainConfig {
                algorithm: Algorithm::Sac,
                eta: 0.0,
                n: 3,
                ..base.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let c = TrainConfig {
            beta: BetaSetting::Fixed(0.2),
            ..TrainConfig::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"N\":10"));
        let back: TrainConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let auto: TrainConfig =
            serde_json::from_str(r#"{"beta": "auto", "algorithm": "sac-n", "eta": 0}"#).unwrap();
        assert_eq!(auto.beta, BetaSetting::Auto);
        assert_eq!(auto.algorithm, Algorithm::SacN);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"etaa": 1}"#).is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"beta": "sometimes"}"#).is_err());
    }
}
