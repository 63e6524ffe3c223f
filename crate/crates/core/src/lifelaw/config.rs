//! JSON model files.
//!
//! ```json
//! {"variant": "bellman_harris",
//!  "life": {"kind": "quadratic_tail", "d": 1.0, "t_min": 1},
//!  "offspring": [0.5, 0.0, 0.5]}
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Atom, LifeLaw, LifeLengthLaw, OffspringPmf, Schedule, TableRule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LifeConfig {
    /// `pmf[l - 1] = P(L = l)`
    Finite { pmf: Vec<f64> },
    QuadraticTail {
        d: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_min: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub prob: f64,
    pub birth_ages: Vec<u64>,
    pub life: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub prob: f64,
    pub birth_ages: Vec<u64>,
}

/// Serialized form of a [`LifeLaw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Tabulated {
        atoms: Vec<AtomConfig>,
    },
    BellmanHarris {
        life: LifeConfig,
        offspring: Vec<f64>,
    },
    /// Galton-Watson shorthand: Bellman-Harris with unit life.
    GaltonWatson {
        offspring: Vec<f64>,
    },
    Sevastyanov {
        life: LifeConfig,
        /// `offspring_by_life[l - 1]` is the law of `N` given `L = l`.
        offspring_by_life: Vec<Vec<f64>>,
        /// Law of `N` given `L = l` for `l` past the table.
        offspring_default: Vec<f64>,
    },
    DelayedDeath {
        schedules: Vec<ScheduleConfig>,
        residual: LifeConfig,
    },
}

impl LifeConfig {
    pub fn build(&self) -> Result<LifeLengthLaw> {
        match self {
            Self::Finite { pmf } => LifeLengthLaw::finite(pmf.clone()),
            Self::QuadraticTail { d, t_min } => LifeLengthLaw::quadratic_tail(*d, *t_min),
        }
    }
}

impl From<&LifeLengthLaw> for LifeConfig {
    fn from(life: &LifeLengthLaw) -> Self {
        match life {
            LifeLengthLaw::Finite(_) => {
                let n = life.max_life().unwrap_or(1);
                Self::Finite { pmf: (1..=n).map(|l| life.pmf(l)).collect() }
            }
            LifeLengthLaw::QuadraticTail(q) => Self::QuadraticTail { d: q.d(), t_min: Some(q.t_min()) },
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("model file: {e}")))
    }

    pub fn build(&self) -> Result<LifeLaw> {
        match self {
            Self::Tabulated { atoms } => LifeLaw::tabulated(
                atoms
                    .iter()
                    .map(|a| Atom { prob: a.prob, birth_ages: a.birth_ages.clone(), life: a.life })
                    .collect(),
            ),
            Self::BellmanHarris { life, offspring } => {
                Ok(LifeLaw::bellman_harris(life.build()?, OffspringPmf::new(offspring.clone())?))
            }
            Self::GaltonWatson { offspring } => Ok(LifeLaw::galton_watson(OffspringPmf::new(offspring.clone())?)),
            Self::Sevastyanov { life, offspring_by_life, offspring_default } => {
                let by_life = offspring_by_life
                    .iter()
                    .map(|p| OffspringPmf::new(p.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let rule = TableRule::new(by_life, OffspringPmf::new(offspring_default.clone())?);
                Ok(LifeLaw::sevastyanov(life.build()?, Arc::new(rule)))
            }
            Self::DelayedDeath { schedules, residual } => LifeLaw::delayed_death(
                schedules
                    .iter()
                    .map(|s| Schedule { prob: s.prob, birth_ages: s.birth_ages.clone() })
                    .collect(),
                residual.build()?,
            ),
        }
    }

    /// Serializable form of a model; `None` for Sevastyanov rules given by closures.
    pub fn from_model(model: &LifeLaw) -> Option<Self> {
        Some(match model {
            LifeLaw::Tabulated { atoms, .. } => Self::Tabulated {
                atoms: atoms
                    .iter()
                    .map(|a| AtomConfig { prob: a.prob, birth_ages: a.birth_ages.clone(), life: a.life })
                    .collect(),
            },
            LifeLaw::BellmanHarris { life, offspring } => {
                Self::BellmanHarris { life: life.into(), offspring: offspring.probs().to_vec() }
            }
            LifeLaw::Sevastyanov { life, rule } => {
                let (offspring_by_life, offspring_default) = rule.to_config()?;
                Self::Sevastyanov { life: life.into(), offspring_by_life, offspring_default }
            }
            LifeLaw::DelayedDeath { schedules, residual, .. } => Self::DelayedDeath {
                schedules: schedules
                    .iter()
                    .map(|s| ScheduleConfig { prob: s.prob, birth_ages: s.birth_ages.clone() })
                    .collect(),
                residual: residual.into(),
            },
        })
    }
}
