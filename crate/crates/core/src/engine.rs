//! Running either game for a fixed number of steps and estimating σ²_N.

use serde::{Deserialize, Serialize};

use crate::config::{GameConfig, GameKind};
use crate::error::{Error, Result};
use crate::gcmg::{gcmg_step, GcmgState};
use crate::mg::{mg_step, MgState};
use crate::rng::GameStreams;
use crate::stats::BatchAccumulator;
use crate::strategy::StrategyTable;

/// Batches used for the batch-means standard error.
pub const BATCHES: usize = 10;
/// Minimum steps per batch so that `measure >= 10 * BATCHES`.
pub const MIN_STEPS_PER_BATCH: usize = 10;

/// Burn-in and measurement lengths in game steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub burn_in: usize,
    pub measure: usize,
}

impl Windows {
    pub fn new(burn_in: usize, measure: usize) -> Self {
        Self { burn_in, measure }
    }

    /// `200 P` burn-in steps and `1000 P` measured steps.
    pub fn for_states(p: usize) -> Self {
        Self::scaled(p, 200, 1000)
    }

    pub fn scaled(p: usize, burn_per_state: usize, measure_per_state: usize) -> Self {
        Self {
            burn_in: burn_per_state * p,
            measure: measure_per_state * p,
        }
    }

    /// Raise both windows to at least the given floors.
    pub fn at_least(self, burn_in: usize, measure: usize) -> Self {
        Self {
            burn_in: self.burn_in.max(burn_in),
            measure: self.measure.max(measure),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    /// `(1/w²)` times the time average of `B²`.
    pub sigma2_n: f64,
    pub per_n: f64,
    /// Batch-means standard error of `sigma2_n`.
    pub stderr: f64,
    pub burn_in: usize,
    pub measured: usize,
}

/// A game instance bound to its table, advanced one step at a time.
#[derive(Debug, Clone)]
pub enum GameRun<'a> {
    Mg {
        state: MgState,
        table: &'a StrategyTable,
        config: &'a GameConfig,
    },
    Gcmg {
        state: GcmgState,
        table: &'a StrategyTable,
        config: &'a GameConfig,
    },
}

impl<'a> GameRun<'a> {
    pub fn new(config: &'a GameConfig, table: &'a StrategyTable) -> Self {
        match config.kind {
            GameKind::Mg => GameRun::Mg {
                state: MgState::new(config.n),
                table,
                config,
            },
            GameKind::Gcmg => GameRun::Gcmg {
                state: GcmgState::new(config.n),
                table,
                config,
            },
        }
    }

    /// Advance one step, returning `(B, μ)`.
    #[inline]
    pub fn step(&mut self, streams: &mut GameStreams) -> (f64, usize) {
        match self {
            GameRun::Mg { state, table, config } => {
                let s = mg_step(state, table, config, streams);
                (s.attendance, s.mu)
            }
            GameRun::Gcmg { state, table, config } => {
                let s = gcmg_step(state, table, config, streams);
                (s.attendance, s.mu)
            }
        }
    }

    /// Current `y` vector of the game.
    pub fn y(&self) -> Vec<f64> {
        match self {
            GameRun::Mg { state, config, .. } => state.y(config.gamma),
            GameRun::Gcmg { state, config, .. } => state.y(config.gamma),
        }
    }
}

/// Attendance and information sequences of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub attendance: Vec<f64>,
    pub mu: Vec<usize>,
}

/// Run `burn_in` discarded steps, then record `steps` steps, using the
/// game streams of `replica`.
pub fn run_trajectory(
    config: &GameConfig,
    table: &StrategyTable,
    burn_in: usize,
    steps: usize,
    replica: u64,
) -> Result<Trajectory> {
    config.validate()?;
    let mut streams = GameStreams::new(config.seed, replica);
    let mut run = GameRun::new(config, table);
    for _ in 0..burn_in {
        run.step(&mut streams);
    }
    let mut attendance = Vec::with_capacity(steps);
    let mut mu = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (b, m) = run.step(&mut streams);
        attendance.push(b);
        mu.push(m);
    }
    Ok(Trajectory { attendance, mu })
}

/// σ²_N of one run from the game streams of replica 0.
pub fn estimate_sigma(config: &GameConfig, table: &StrategyTable, windows: Windows) -> Result<SigmaEstimate> {
    estimate_sigma_replica(config, table, windows, 0)
}

pub fn estimate_sigma_replica(
    config: &GameConfig,
    table: &StrategyTable,
    windows: Windows,
    replica: u64,
) -> Result<SigmaEstimate> {
    config.validate()?;
    let min = BATCHES * MIN_STEPS_PER_BATCH;
    if windows.measure < min {
        return Err(Error::WindowTooShort {
            measure: windows.measure,
            min,
            batches: BATCHES,
        });
    }
    if table.n() != config.n || table.p() != config.p {
        return Err(Error::Shape("strategy table does not match config".into()));
    }
    let mut streams = GameStreams::new(config.seed, replica);
    let mut run = GameRun::new(config, table);
    for _ in 0..windows.burn_in {
        run.step(&mut streams);
    }
    let inv_w2 = 1.0 / (config.w * config.w);
    let mut acc = BatchAccumulator::new(windows.measure, BATCHES);
    for _ in 0..windows.measure {
        let (b, _) = run.step(&mut streams);
        acc.push(b * b * inv_w2);
    }
    let est = acc.finish();
    Ok(SigmaEstimate {
        sigma2_n: est.mean,
        per_n: est.mean / config.n as f64,
        stderr: est.stderr,
        burn_in: windows.burn_in,
        measured: windows.measure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{generate_strategies, StrategyTable};

    #[test]
    fn degenerate_single_agent() {
        let table = StrategyTable::from_signs(&[vec![vec![1, -1], vec![1, -1]]], 1.0).unwrap();
        let cfg = GameConfig::mg(1, 2, 4);
        let est = estimate_sigma(&cfg, &table, Windows::new(10, 1000)).unwrap();
        assert_eq!(est.sigma2_n, 1.0);
        assert_eq!(est.per_n, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.measured, 1000);
    }

    #[test]
    fn rejects_short_window() {
        let cfg = GameConfig::mg(3, 2, 1);
        let table = generate_strategies(&cfg).unwrap();
        assert!(matches!(
            estimate_sigma(&cfg, &table, Windows::new(0, 99)),
            Err(Error::WindowTooShort { .. })
        ));
        assert!(estimate_sigma(&cfg, &table, Windows::new(0, 100)).is_ok());
    }

    #[test]
    fn default_windows_scale_with_states() {
        assert_eq!(Windows::for_states(8), Windows::new(1600, 8000));
        assert_eq!(Windows::for_states(8).at_least(5000, 10), Windows::new(5000, 8000));
    }

    #[test]
    fn trajectory_is_reproducible() {
        let cfg = GameConfig::gcmg(10, 5, 5, 0.01, 17);
        let table = generate_strategies(&cfg).unwrap();
        let a = run_trajectory(&cfg, &table, 50, 300, 3).unwrap();
        let b = run_trajectory(&cfg, &table, 50, 300, 3).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&cfg, &table, 50, 300, 4).unwrap();
        assert_ne!(a.attendance, c.attendance);
    }
}
