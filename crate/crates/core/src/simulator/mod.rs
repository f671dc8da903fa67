//! Exact continuous-time simulation of the open and closed systems.
//!
//! The engine uses a single exponential clock at the total event rate and
//! a categorical draw over event channels. All randomness comes from one
//! `ChaCha8Rng` seeded by `(seed, stream)`, so runs are reproducible.

mod engine;
mod output;
mod placement;
mod state;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config_space::{Config, ConfigSpace, SpaceSpec};
use crate::error::{Error, Result};
use crate::optimizer::{Demand, DemandSpec};

pub use engine::{run, run_with_reference, Engine, Reference};
pub use output::{write_snapshots_csv, EdgeCounters, EventCounts, Snapshot, Summary, SIM_SCHEMA_VERSION};
pub use placement::{
    place_alt, place_greedy_ac, place_greedy_d, place_greedy_i, AcScore, AltPlacement, Placement,
};
pub use state::{CompleteConfig, CompleteTable, SystemState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fixed population; every departing customer is placed again at once.
    Closed,
    /// Poisson arrivals at rate `lambda_i r`.
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discipline {
    GreedyI,
    GreedyD,
    GreedyDm,
    GreedyIAc,
    GreedyDAc,
    GreedyDmAc,
}

impl Discipline {
    /// Whether departures leave tokens behind.
    pub fn uses_tokens(self) -> bool {
        matches!(self, Self::GreedyDm | Self::GreedyDmAc)
    }

    pub fn is_aggregate(self) -> bool {
        matches!(self, Self::GreedyIAc | Self::GreedyDAc | Self::GreedyDmAc)
    }
}

/// Initial server population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `round(rho_i r)` customers of each type, one per server.
    Singletons,
    Empty,
    /// Server counts per configuration.
    Explicit(Vec<(Config, u64)>),
}

fn default_alpha() -> f64 {
    1.0
}

fn default_batches() -> usize {
    20
}

/// Scalar run parameters; together with a space and a demand they form a
/// [`SimConfig`]. Unset times default to multiples of `1 / min_i mu_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub r: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub mode: Mode,
    pub discipline: Discipline,
    #[serde(default)]
    pub token_rate: Option<f64>,
    #[serde(default)]
    pub alt_placement: Option<AltPlacement>,
    #[serde(default)]
    pub seed: u64,
    /// RNG stream; the harness uses it to separate replications.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub sample_interval: Option<f64>,
    #[serde(default)]
    pub initial: Option<InitialState>,
    /// Batches used for the standard errors in the summary.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

impl SimParams {
    pub fn new(r: f64, mode: Mode, discipline: Discipline) -> Self {
        Self {
            r,
            alpha: 1.0,
            mode,
            discipline,
            token_rate: None,
            alt_placement: None,
            seed: 0,
            stream: 0,
            horizon: None,
            burn_in: None,
            sample_interval: None,
            initial: None,
            batches: default_batches(),
        }
    }
}

/// JSON form of a simulation config.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimSpec {
    pub space: SpaceSpec,
    pub demand: DemandSpec,
    #[serde(flatten)]
    pub params: SimParams,
}

/// A validated simulation config.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub space: Arc<ConfigSpace>,
    pub demand: Demand,
    pub params: SimParams,
}

impl SimConfig {
    pub fn new(space: Arc<ConfigSpace>, demand: Demand, params: SimParams) -> Result<Self> {
        let cfg = Self {
            space,
            demand,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_spec(spec: SimSpec) -> Result<Self> {
        let space = Arc::new(spec.space.build()?);
        let demand = Demand::try_from(spec.demand)?;
        Self::new(space, demand, spec.params)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.demand.num_types() != self.space.num_types() {
            return bad(format!(
                "demand has {} types but the space has {}",
                self.demand.num_types(),
                self.space.num_types()
            ));
        }
        if !(p.r.is_finite() && p.r > 0.0) {
            return bad(format!("scale r must be positive, got {}", p.r));
        }
        if !(p.alpha.is_finite() && p.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", p.alpha));
        }
        let tokens = p.discipline.uses_tokens();
        if tokens && p.mode == Mode::Closed {
            return bad("token disciplines need the open system".into());
        }
        match p.token_rate {
            Some(_) if !tokens => return bad("token_rate applies to token disciplines only".into()),
            Some(m) if !(m.is_finite() && m > 0.0) => {
                return bad(format!("token_rate must be positive, got {m}"))
            }
            _ => {}
        }
        if let Some(alt) = &p.alt_placement {
            let allowed = p.discipline == Discipline::GreedyDm
                || (p.discipline == Discipline::GreedyD && p.mode == Mode::Closed);
            if !allowed {
                return bad("alt_placement needs closed greedy-d or greedy-dm".into());
            }
            if !(alt.epsilon > 0.0 && alt.epsilon < 1.0) {
                return bad(format!("alt epsilon must lie in (0, 1), got {}", alt.epsilon));
            }
            if !(0.0..=1.0).contains(&alt.mix) {
                return bad(format!("alt mix must lie in [0, 1], got {}", alt.mix));
            }
        }
        for (name, v) in [("horizon", p.horizon), ("burn_in", p.burn_in)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return bad(format!("{name} must be nonnegative, got {v}"));
                }
            }
        }
        if let Some(v) = p.sample_interval {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("sample_interval must be positive, got {v}"));
            }
        }
        if p.batches == 0 {
            return bad("batches must be at least 1".into());
        }
        if let Some(InitialState::Explicit(list)) = &p.initial {
            for (k, _) in list {
                if k.len() != self.space.num_types() || self.space.index_of(k).is_none() {
                    return bad(format!("initial configuration {k:?} is not in the space"));
                }
            }
        }
        Ok(())
    }

    pub fn token_rate(&self) -> f64 {
        self.params.token_rate.unwrap_or_else(|| self.demand.min_mu())
    }

    pub fn burn_in(&self) -> f64 {
        self.params.burn_in.unwrap_or(10.0 / self.demand.min_mu())
    }

    pub fn horizon(&self) -> f64 {
        self.params
            .horizon
            .unwrap_or_else(|| self.burn_in() + 100.0 / self.demand.min_mu())
    }

    pub fn sample_interval(&self) -> f64 {
        self.params
            .sample_interval
            .unwrap_or(0.1 / self.demand.min_mu())
    }

    pub fn initial(&self) -> InitialState {
        self.params.initial.clone().unwrap_or(match self.params.mode {
            Mode::Closed => InitialState::Singletons,
            Mode::Open => InitialState::Empty,
        })
    }

    /// `round(rho_i r)` with halves rounded up.
    pub fn population(&self) -> Vec<u64> {
        self.demand
            .rho()
            .iter()
            .map(|rho| (rho * self.params.r + 0.5).floor() as u64)
            .collect()
    }
}
