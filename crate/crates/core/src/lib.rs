pub mod calibrate;
pub mod config;
pub mod engine;
pub mod error;
pub mod gcmg;
pub mod mg;
pub mod par;
pub mod phase;
pub mod pricer;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod strategy;

pub use config::{ActivationRule, GameConfig, GameKind};
pub use engine::{estimate_sigma, SigmaEstimate, Windows};
pub use error::{Error, Result};
pub use par::Execution;
pub use phase::{sweep_phase, sweep_phase_gcmg, CriticalPoint, PhaseCurve, PhasePoint, SweepOptions};
pub use strategy::{generate_strategies, reduced_stats, ReducedStats, StrategyTable};
