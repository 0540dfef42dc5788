//! Discrete-time Grand Canonical Minority Game.

use rand::Rng;

use crate::config::{ActivationRule, GameConfig};
use crate::rng::GameStreams;
use crate::strategy::StrategyTable;

#[derive(Debug, Clone, PartialEq)]
pub struct GcmgState {
    /// Score `U_i`; only speculators' entries evolve.
    pub scores: Vec<f64>,
    pub t: u64,
    pub attendance_history: Vec<f64>,
    pub activity_history: Vec<usize>,
    record: bool,
}

impl GcmgState {
    pub fn new(n: usize) -> Self {
        Self {
            scores: vec![0.0; n],
            t: 0,
            attendance_history: Vec::new(),
            activity_history: Vec::new(),
            record: false,
        }
    }

    pub fn with_history(n: usize) -> Self {
        Self {
            record: true,
            ..Self::new(n)
        }
    }

    /// `y_i = Γ U_i`.
    pub fn y(&self, gamma: f64) -> Vec<f64> {
        self.scores.iter().map(|u| gamma * u).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcmgStep {
    pub attendance: f64,
    pub mu: usize,
    /// Number of agents that traded, producers included.
    pub active: usize,
}

/// Logistic `1/(1+e^{-x})`, evaluated without overflow for either sign.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a speculator with score `u` trades.
#[inline]
pub fn activation_probability(rule: ActivationRule, gamma: f64, u: f64) -> f64 {
    match rule {
        ActivationRule::Logistic => logistic(gamma * u),
        ActivationRule::Literal => logistic(-gamma * u),
    }
}

/// One round: draw μ, decide which speculators trade, aggregate the bids
/// and update every speculator's score with the threshold penalty.
pub fn gcmg_step(
    state: &mut GcmgState,
    table: &StrategyTable,
    config: &GameConfig,
    streams: &mut GameStreams,
) -> GcmgStep {
    let n = table.n();
    let n_s = config.n_s.min(n);
    let mu = streams.mu.random_range(0..table.p());
    let signs = table.state_signs(mu);
    let mut sum = 0i64;
    let mut active = 0usize;
    for (i, &u) in state.scores.iter().enumerate().take(n_s) {
        let prob = activation_probability(config.activation, config.gamma, u);
        let draw: f64 = streams.choice.random();
        if draw < prob {
            sum += i64::from(signs[i]);
            active += 1;
        }
    }
    for &sign in &signs[n_s..n] {
        sum += i64::from(sign);
    }
    active += n - n_s;

    let w = table.w();
    let attendance = w * sum as f64;
    let inv_p = 1.0 / table.p() as f64;
    let scale = w * attendance * inv_p;
    let penalty = config.epsilon * inv_p;
    for (i, u) in state.scores.iter_mut().enumerate().take(n_s) {
        *u -= f64::from(signs[i]) * scale + penalty;
    }
    state.t += 1;
    if state.record {
        state.attendance_history.push(attendance);
        state.activity_history.push(active);
    }
    GcmgStep { attendance, mu, active }
}
