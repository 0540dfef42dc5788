//! Quenched strategy tables and their exact finite-P averages.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::{GameConfig, GameKind};
use crate::error::{Error, Result};
use crate::rng::{substream, Substream};

/// Strategy `+` (index 0) and strategy `-` (index 1) of an MG agent.
pub const PLUS: usize = 0;
pub const MINUS: usize = 1;

/// Fixed random strategies `a[i][s][μ] ∈ {-w, +w}`.
///
/// Stored as signs in `[μ][i][s]` order so one information state's
/// actions for all agents are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    n: usize,
    s: usize,
    p: usize,
    w: f64,
    signs: Vec<i8>,
}

impl StrategyTable {
    /// Build a table from explicit signs indexed `signs[i][s][μ]`.
    pub fn from_signs(signs: &[Vec<Vec<i8>>], w: f64) -> Result<Self> {
        let n = signs.len();
        if n == 0 {
            return Err(Error::Shape("no agents".into()));
        }
        let s = signs[0].len();
        if s == 0 || s > 2 {
            return Err(Error::Shape(format!("{s} strategies per agent")));
        }
        let p = signs[0][0].len();
        if p == 0 {
            return Err(Error::Shape("no information states".into()));
        }
        let mut flat = vec![0i8; n * s * p];
        for (i, agent) in signs.iter().enumerate() {
            if agent.len() != s {
                return Err(Error::Shape(format!("agent {i} has {} strategies", agent.len())));
            }
            for (k, strat) in agent.iter().enumerate() {
                if strat.len() != p {
                    return Err(Error::Shape(format!("agent {i} strategy {k} has {} states", strat.len())));
                }
                for (mu, &sign) in strat.iter().enumerate() {
                    if sign != 1 && sign != -1 {
                        return Err(Error::Shape(format!("sign {sign} at ({i},{k},{mu})")));
                    }
                    flat[(mu * n + i) * s + k] = sign;
                }
            }
        }
        Ok(Self { n, s, p, w, signs: flat })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn strategies(&self) -> usize {
        self.s
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn sign(&self, i: usize, s: usize, mu: usize) -> i8 {
        self.signs[(mu * self.n + i) * self.s + s]
    }

    #[inline]
    pub fn action(&self, i: usize, s: usize, mu: usize) -> f64 {
        self.w * f64::from(self.sign(i, s, mu))
    }

    /// Signs of every agent and strategy at state `mu`, laid out `[i][s]`.
    #[inline]
    pub fn state_signs(&self, mu: usize) -> &[i8] {
        let len = self.n * self.s;
        &self.signs[mu * len..(mu + 1) * len]
    }

    /// `ξ_i^μ = (a_{+,i}^μ - a_{-,i}^μ)/2`; zero for single-strategy tables.
    pub fn xi(&self, i: usize, mu: usize) -> f64 {
        if self.s < 2 {
            return 0.0;
        }
        0.5 * (self.action(i, PLUS, mu) - self.action(i, MINUS, mu))
    }

    /// `Θ^μ = Σ_i (a_{+,i}^μ + a_{-,i}^μ)/2`.
    pub fn theta(&self, mu: usize) -> f64 {
        if self.s < 2 {
            return (0..self.n).map(|i| self.action(i, 0, mu)).sum();
        }
        (0..self.n)
            .map(|i| 0.5 * (self.action(i, PLUS, mu) + self.action(i, MINUS, mu)))
            .sum()
    }

    /// `N × P` matrix of `ξ_i^μ`.
    pub fn xi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p, |i, mu| self.xi(i, mu))
    }

    /// `N × P` matrix of the first strategy's actions `a_i^μ`.
    pub fn action_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p, |i, mu| self.action(i, 0, mu))
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |mu, _| self.theta(mu))
    }
}

/// Draw the quenched strategies of `config` from its strategy substream.
pub fn generate_strategies(config: &GameConfig) -> Result<StrategyTable> {
    config.validate()?;
    let (n, s, p) = (config.n, config.strategies_per_agent(), config.p);
    let mut rng = substream(config.seed, Substream::Strategies, 0);
    let signs = (0..n * s * p)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    Ok(StrategyTable {
        n,
        s,
        p,
        w: config.w,
        signs,
    })
}

/// Exact averages over the `P` information states.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedStats {
    Mg {
        /// `(1/P) Σ_μ ξ_i^μ Θ^μ`.
        xi_theta: DVector<f64>,
        /// `(1/P) Σ_μ ξ_i^μ ξ_j^μ`.
        xi_xi: DMatrix<f64>,
    },
    Gcmg {
        /// `(1/P) Σ_μ a_i^μ a_j^μ`.
        a_a: DMatrix<f64>,
    },
}

impl ReducedStats {
    /// The symmetric coupling table entering both drift and diffusion.
    pub fn coupling(&self) -> &DMatrix<f64> {
        match self {
            ReducedStats::Mg { xi_xi, .. } => xi_xi,
            ReducedStats::Gcmg { a_a } => a_a,
        }
    }
}

pub fn reduced_stats(table: &StrategyTable, config: &GameConfig) -> Result<ReducedStats> {
    if table.n() != config.n || table.p() != config.p || table.strategies() != config.strategies_per_agent() {
        return Err(Error::Shape(format!(
            "table is {}x{}x{}, config wants {}x{}x{}",
            table.n(),
            table.strategies(),
            table.p(),
            config.n,
            config.strategies_per_agent(),
            config.p
        )));
    }
    let inv_p = 1.0 / table.p() as f64;
    Ok(match config.kind {
        GameKind::Mg => {
            let xi = table.xi_matrix();
            let xi_theta = &xi * table.theta_vector() * inv_p;
            let xi_xi = &xi * xi.transpose() * inv_p;
            ReducedStats::Mg { xi_theta, xi_xi }
        }
        GameKind::Gcmg => {
            let a = table.action_matrix();
            ReducedStats::Gcmg {
                a_a: &a * a.transpose() * inv_p,
            }
        }
    })
}
