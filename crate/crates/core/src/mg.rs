//! Discrete-time Minority Game with finite learning rate.

use rand::Rng;

use crate::config::GameConfig;
use crate::rng::GameStreams;
use crate::strategy::{StrategyTable, MINUS, PLUS};

/// Scores `(U_+, U_-)` of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct MgState {
    pub scores: Vec<[f64; 2]>,
    pub t: u64,
    /// Attendance of every step taken, when recording is enabled.
    pub attendance_history: Vec<f64>,
    record: bool,
}

impl MgState {
    /// All scores zero, no history kept.
    pub fn new(n: usize) -> Self {
        Self {
            scores: vec![[0.0; 2]; n],
            t: 0,
            attendance_history: Vec::new(),
            record: false,
        }
    }

    pub fn with_history(n: usize) -> Self {
        Self {
            record: true,
            ..Self::new(n)
        }
    }

    pub fn from_scores(scores: Vec<[f64; 2]>) -> Self {
        Self {
            scores,
            ..Self::new(0)
        }
    }

    /// `y_i = Γ (U_{+,i} - U_{-,i}) / 2`.
    pub fn y(&self, gamma: f64) -> Vec<f64> {
        self.scores.iter().map(|u| gamma * (u[PLUS] - u[MINUS]) / 2.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub attendance: f64,
    pub mu: usize,
}

/// Softmax choice probabilities `(P(+), P(-))` with the larger exponent
/// subtracted first.
#[inline]
pub fn choice_probabilities(gamma: f64, u_plus: f64, u_minus: f64) -> (f64, f64) {
    let (x_plus, x_minus) = (gamma * u_plus, gamma * u_minus);
    let m = x_plus.max(x_minus);
    let (e_plus, e_minus) = ((x_plus - m).exp(), (x_minus - m).exp());
    let z = e_plus + e_minus;
    (e_plus / z, e_minus / z)
}

/// One round: draw μ, let every agent pick a strategy, then score both
/// strategies of every agent against the attendance.
pub fn mg_step(state: &mut MgState, table: &StrategyTable, config: &GameConfig, streams: &mut GameStreams) -> Step {
    let n = table.n();
    let mu = streams.mu.random_range(0..table.p());
    let signs = table.state_signs(mu);
    let mut sum = 0i64;
    for (i, u) in state.scores.iter().enumerate().take(n) {
        let (p_plus, _) = choice_probabilities(config.gamma, u[PLUS], u[MINUS]);
        let draw: f64 = streams.choice.random();
        let s = if draw < p_plus { PLUS } else { MINUS };
        sum += i64::from(signs[2 * i + s]);
    }
    let w = table.w();
    let attendance = w * sum as f64;
    let scale = w * attendance / table.p() as f64;
    for (i, u) in state.scores.iter_mut().enumerate().take(n) {
        u[PLUS] -= f64::from(signs[2 * i + PLUS]) * scale;
        u[MINUS] -= f64::from(signs[2 * i + MINUS]) * scale;
    }
    state.t += 1;
    if state.record {
        state.attendance_history.push(attendance);
    }
    Step { attendance, mu }
}
