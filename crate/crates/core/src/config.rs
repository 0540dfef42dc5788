//! Game parameterization and its flat key-value file form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Mg,
    Gcmg,
}

impl GameKind {
    pub fn label(self) -> &'static str {
        match self {
            GameKind::Mg => "mg",
            GameKind::Gcmg => "gcmg",
        }
    }
}

/// Speculator activation law for the GCMG.
///
/// `Logistic` trades with probability `1/(1+exp(-Γ U))`, so a larger score
/// makes trading more likely. `Literal` is the mirrored form
/// `1/(1+exp(Γ U))`, kept for auditing against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationRule {
    #[default]
    Logistic,
    Literal,
}

pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_W: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub kind: GameKind,
    /// Total number of agents.
    pub n: usize,
    /// Number of information states.
    pub p: usize,
    /// Memory length when `p` was given as `2^m`.
    pub memory: Option<u32>,
    pub gamma: f64,
    pub w: f64,
    /// Speculator threshold (GCMG only).
    pub epsilon: f64,
    /// Speculators occupy agent indices `0..n_s` (GCMG only).
    pub n_s: usize,
    /// Producers occupy agent indices `n_s..n` (GCMG only).
    pub n_p: usize,
    pub seed: u64,
    pub activation: ActivationRule,
}

impl GameConfig {
    pub fn mg(n: usize, p: usize, seed: u64) -> Self {
        Self {
            kind: GameKind::Mg,
            n,
            p,
            memory: None,
            gamma: DEFAULT_GAMMA,
            w: DEFAULT_W,
            epsilon: 0.0,
            n_s: n,
            n_p: 0,
            seed,
            activation: ActivationRule::default(),
        }
    }

    pub fn mg_with_memory(n: usize, m: u32, seed: u64) -> Self {
        let mut cfg = Self::mg(n, 1usize << m, seed);
        cfg.memory = Some(m);
        cfg
    }

    pub fn gcmg(n_s: usize, n_p: usize, p: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            kind: GameKind::Gcmg,
            n: n_s + n_p,
            p,
            memory: None,
            gamma: DEFAULT_GAMMA,
            w: DEFAULT_W,
            epsilon,
            n_s,
            n_p,
            seed,
            activation: ActivationRule::default(),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: ActivationRule) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", self.n, "need at least one agent"));
        }
        if self.p == 0 {
            return Err(Error::invalid("p", self.p, "need at least one information state"));
        }
        if let Some(m) = self.memory {
            if m >= usize::BITS || (1usize << m) != self.p {
                return Err(Error::invalid("memory", m, format!("2^m must equal p = {}", self.p)));
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", self.gamma, "must be positive and finite"));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::invalid("w", self.w, "must be positive and finite"));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon", self.epsilon, "must be finite"));
        }
        if self.kind == GameKind::Gcmg && self.n_s + self.n_p != self.n {
            return Err(Error::invalid(
                "n",
                self.n,
                format!("must equal n_s + n_p = {}", self.n_s + self.n_p),
            ));
        }
        Ok(())
    }

    /// Strategies per agent: two in the MG, one in the GCMG.
    pub fn strategies_per_agent(&self) -> usize {
        match self.kind {
            GameKind::Mg => 2,
            GameKind::Gcmg => 1,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn speculator_density(&self) -> f64 {
        self.n_s as f64 / self.p as f64
    }

    pub fn producer_density(&self) -> f64 {
        self.n_p as f64 / self.p as f64
    }

    /// `1/(n_s + n_p)`, which equals `P/N` when the populations add up.
    pub fn alpha_ns(&self) -> f64 {
        1.0 / (self.speculator_density() + self.producer_density())
    }

    /// `L = P * N_s`.
    pub fn l(&self) -> usize {
        self.p * self.n_s
    }

    /// The control parameter of the phase diagram: α for the MG, α_ns for the GCMG.
    pub fn control(&self) -> f64 {
        match self.kind {
            GameKind::Mg => self.alpha(),
            GameKind::Gcmg => self.alpha_ns(),
        }
    }

    pub fn is_speculator(&self, agent: usize) -> bool {
        agent < self.n_s
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.into_config()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let raw = ConfigFile {
            kind: self.kind,
            n: Some(self.n),
            p: Some(self.p),
            m: self.memory,
            gamma: self.gamma,
            w: self.w,
            epsilon: self.epsilon,
            n_s: Some(self.n_s),
            n_p: Some(self.n_p),
            seed: self.seed,
            activation: self.activation,
        };
        toml::to_string(&raw).expect("flat config always serializes")
    }
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_w() -> f64 {
    DEFAULT_W
}

/// On-disk layout: one `key = value` per line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    kind: GameKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default = "default_w")]
    w: f64,
    #[serde(default)]
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_p: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    activation: ActivationRule,
}

impl ConfigFile {
    fn into_config(self) -> Result<GameConfig> {
        let p = match (self.p, self.m) {
            (Some(p), Some(m)) => {
                if m >= usize::BITS || 1usize << m != p {
                    return Err(Error::Config(format!("p = {p} disagrees with m = {m}")));
                }
                p
            }
            (Some(p), None) => p,
            (None, Some(m)) if m < usize::BITS => 1usize << m,
            (None, Some(m)) => return Err(Error::Config(format!("memory m = {m} too large"))),
            (None, None) => return Err(Error::Config("one of `p` or `m` is required".into())),
        };
        let (n, n_s, n_p) = match self.kind {
            GameKind::Mg => {
                let n = self.n.ok_or_else(|| Error::Config("`n` is required".into()))?;
                (n, self.n_s.unwrap_or(n), self.n_p.unwrap_or(0))
            }
            GameKind::Gcmg => {
                let n_s = self.n_s.ok_or_else(|| Error::Config("`n_s` is required for gcmg".into()))?;
                let n_p = self.n_p.ok_or_else(|| Error::Config("`n_p` is required for gcmg".into()))?;
                (self.n.unwrap_or(n_s + n_p), n_s, n_p)
            }
        };
        let cfg = GameConfig {
            kind: self.kind,
            n,
            p,
            memory: self.m,
            gamma: self.gamma,
            w: self.w,
            epsilon: self.epsilon,
            n_s,
            n_p,
            seed: self.seed,
            activation: self.activation,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
