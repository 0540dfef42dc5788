//! Continuum-limit score dynamics and the price paths built on them.
//!
//! The MG state is `y_i = Γ(U_+ - U_-)/2` for every agent; the GCMG state is
//! `y_i = Γ U_i` for the speculators only, since producers always trade and
//! carry no score.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ActivationRule, GameConfig, GameKind};
use crate::error::{Error, Result};
use crate::gcmg::activation_probability;
use crate::par::Execution;
use crate::rng::{substream, StreamRng, Substream};
use crate::stats::{mean, sample_variance};
use crate::strategy::{reduced_stats, ReducedStats, StrategyTable};

/// Cholesky jitter ladder, relative to the largest diagonal entry.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-14, 1e-12, 1e-10];
/// Most negative eigenvalue (relative) tolerated before giving up.
const MAX_NEGATIVE_EIGEN: f64 = 1e-6;
/// Replicas per random substream in the terminal sampler.
const TERMINAL_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSpec {
    pub kind: GameKind,
    pub stats: ReducedStats,
    pub epsilon: f64,
    /// σ²_N frozen at its stationary estimate.
    pub sigma2_n: f64,
    pub gamma: f64,
    /// α for the MG, α_ns for the GCMG.
    pub control: f64,
    pub n: usize,
    pub w: f64,
    /// Agents `0..speculators` carry a `y` coordinate (all agents in the MG).
    pub speculators: usize,
    pub activation: ActivationRule,
}

impl SdeSpec {
    pub fn from_game(config: &GameConfig, table: &StrategyTable, sigma2_n: f64) -> Result<Self> {
        config.validate()?;
        let stats = reduced_stats(table, config)?;
        let spec = Self {
            kind: config.kind,
            stats,
            epsilon: config.epsilon,
            sigma2_n,
            gamma: config.gamma,
            control: config.control(),
            n: config.n,
            w: config.w,
            speculators: match config.kind {
                GameKind::Mg => config.n,
                GameKind::Gcmg => config.n_s,
            },
            activation: config.activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_n.is_finite() && self.sigma2_n > 0.0) {
            return Err(Error::invalid("sigma2_n", self.sigma2_n, "must be positive"));
        }
        if !(self.control.is_finite() && self.control > 0.0) {
            return Err(Error::invalid("control", self.control, "must be positive"));
        }
        let c = self.stats.coupling();
        if c.nrows() != self.n || c.ncols() != self.n || self.speculators > self.n {
            return Err(Error::Shape(format!(
                "coupling is {}x{} for {} agents",
                c.nrows(),
                c.ncols(),
                self.n
            )));
        }
        Ok(())
    }

    /// Dimension of the `y` state.
    pub fn dim(&self) -> usize {
        self.speculators
    }

    /// `Γ σ²_N w² / (α N)`; for the GCMG `1/α_ns = n_s + n_p`.
    pub fn diffusion_scale(&self) -> f64 {
        self.gamma * self.sigma2_n * self.w * self.w / (self.control * self.n as f64)
    }

    /// `AA'`: the diffusion scale times the coupling table on the `y` block.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.stats.coupling().view((0, 0), (d, d)) * self.diffusion_scale()
    }

    /// Drift of `y` at `y`, written into `out`.
    pub fn drift(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.stats {
            ReducedStats::Mg { xi_theta, xi_xi } => {
                let t = y.map(f64::tanh);
                xi_xi.mul_to(&t, out);
                *out += xi_theta;
                out.neg_mut();
            }
            ReducedStats::Gcmg { a_a } => {
                let h = DVector::from_fn(self.n, |j, _| {
                    if j < self.speculators {
                        activation_probability(self.activation, 1.0, y[j])
                    } else {
                        1.0
                    }
                });
                let coupled = a_a.rows(0, self.speculators) * h;
                for i in 0..self.speculators {
                    out[i] = -coupled[i] - self.epsilon;
                }
            }
        }
    }

    /// Per-step weights `g^μ` that project `Δy` onto the log price: `ξ^μ`
    /// for the MG, the speculators' `a^μ` for the GCMG.
    pub fn projection(&self, table: &StrategyTable, mu: usize) -> DVector<f64> {
        match self.kind {
            GameKind::Mg => DVector::from_fn(self.dim(), |i, _| table.xi(i, mu)),
            GameKind::Gcmg => DVector::from_fn(self.dim(), |i, _| table.action(i, 0, mu)),
        }
    }

    /// Prefactor `c` in `Δ log p = -c Σ_i g_i^μ Δy_i`.
    pub fn price_prefactor(&self) -> f64 {
        let w3 = self.w.powi(3);
        match self.kind {
            GameKind::Mg => 2.0 * self.control / (w3 * self.gamma * self.n as f64),
            GameKind::Gcmg => self.control / (w3 * self.gamma * self.n as f64),
        }
    }

    /// Variance per unit `y`-time of the noise part of `d log p` when μ is
    /// uniform and independent of the Wiener increments:
    /// `c² (1/P) Σ_μ g^μ' AA' g^μ`.
    pub fn log_price_noise_rate(&self, table: &StrategyTable) -> f64 {
        let cov = self.covariance();
        let c = self.price_prefactor();
        let total: f64 = (0..table.p())
            .map(|mu| {
                let g = self.projection(table, mu);
                (g.transpose() * &cov * &g)[(0, 0)]
            })
            .sum();
        c * c * total / table.p() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMethod {
    Cholesky,
    Eigen,
}

/// `A` with `A A' ≈ cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub a: DMatrix<f64>,
    /// Diagonal jitter actually added, relative to `scale`.
    pub jitter: f64,
    pub scale: f64,
    pub method: FactorMethod,
}

impl PsdFactor {
    pub fn reconstruction_error(&self, cov: &DMatrix<f64>) -> f64 {
        (&self.a * self.a.transpose() - cov).amax()
    }
}

/// Factor a symmetric positive semidefinite matrix.
///
/// Tries Cholesky with an escalating diagonal jitter, then a clipped
/// symmetric eigendecomposition. Fails if an eigenvalue is more negative
/// than `1e-6` of the largest diagonal entry.
pub fn factorize_psd(cov: &DMatrix<f64>) -> Result<PsdFactor> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Shape(format!("covariance is {}x{}", n, cov.ncols())));
    }
    let scale = cov.diagonal().amax();
    if scale == 0.0 {
        return Ok(PsdFactor {
            a: DMatrix::zeros(n, n),
            jitter: 0.0,
            scale,
            method: FactorMethod::Cholesky,
        });
    }
    for &jitter in &JITTER_LADDER {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += jitter * scale;
        }
        if let Some(ch) = m.cholesky() {
            let a = ch.l();
            let factor = PsdFactor {
                a,
                jitter,
                scale,
                method: FactorMethod::Cholesky,
            };
            if factor.reconstruction_error(cov) <= 1e-9 * scale {
                return Ok(factor);
            }
        }
    }
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if min < -MAX_NEGATIVE_EIGEN * scale {
        return Err(Error::Factorization(format!(
            "smallest eigenvalue {min:.3e} against largest diagonal {scale:.3e}; \
             the covariance is not positive semidefinite"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let a = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok(PsdFactor {
        a,
        jitter: 0.0,
        scale,
        method: FactorMethod::Eigen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diffusion {
    On,
    Off,
}

/// Explicit Euler–Maruyama integrator for one spec.
#[derive(Debug, Clone)]
pub struct YIntegrator<'a> {
    spec: &'a SdeSpec,
    factor: PsdFactor,
    diffusion: Diffusion,
}

impl<'a> YIntegrator<'a> {
    pub fn new(spec: &'a SdeSpec, diffusion: Diffusion) -> Result<Self> {
        spec.validate()?;
        let factor = factorize_psd(&spec.covariance())?;
        Ok(Self {
            spec,
            factor,
            diffusion,
        })
    }

    pub fn factor(&self) -> &PsdFactor {
        &self.factor
    }

    /// `y ← y + drift(y) dt + A sqrt(dt) z`.
    pub fn step(&self, y: &mut DVector<f64>, dt: f64, rng: &mut StreamRng, scratch: &mut DVector<f64>) {
        self.spec.drift(y, scratch);
        y.axpy(dt, scratch, 1.0);
        if self.diffusion == Diffusion::On {
            let z = DVector::from_fn(y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            self.factor.a.mul_to(&z, scratch);
            y.axpy(dt.sqrt(), scratch, 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YPath {
    pub times: Vec<f64>,
    pub y: Vec<DVector<f64>>,
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", dt, "must be positive"));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::invalid("horizon", horizon, format!("must be at least dt = {dt}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Integrate `y` from `y0` over `horizon` with step `dt`, keeping every state.
pub fn integrate_y(
    spec: &SdeSpec,
    y0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    diffusion: Diffusion,
    rng: &mut StreamRng,
) -> Result<YPath> {
    let steps = step_count(horizon, dt)?;
    if y0.len() != spec.dim() || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("y0 must be {} finite values", spec.dim())));
    }
    let integ = YIntegrator::new(spec, diffusion)?;
    let mut y = y0.clone();
    let mut scratch = DVector::zeros(y.len());
    let mut path = YPath {
        times: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    path.times.push(0.0);
    path.y.push(y.clone());
    for k in 1..=steps {
        integ.step(&mut y, dt, rng, &mut scratch);
        path.times.push(k as f64 * dt);
        path.y.push(y.clone());
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMode {
    DiscreteAttendance,
    Continuum,
    RiskNeutralTerminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub times: Vec<f64>,
    pub log_price: Vec<f64>,
    pub y_snapshot: Option<DVector<f64>>,
    pub mode: PathMode,
}

impl PricePath {
    pub fn terminal_log_return(&self) -> f64 {
        self.log_price[self.log_price.len() - 1] - self.log_price[0]
    }

    /// Per-step log returns.
    pub fn returns(&self) -> Vec<f64> {
        self.log_price.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,log_price")?;
        for (t, lp) in self.times.iter().zip(&self.log_price) {
            writeln!(out, "{t},{lp}")?;
        }
        Ok(())
    }
}

/// `log p(t+1) = log p(t) + B(t)/(N w)`.
pub fn price_path_discrete(attendance: &[f64], config: &GameConfig, p0: f64) -> Result<PricePath> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::invalid("p0", p0, "must be positive"));
    }
    let volume = config.n as f64 * config.w;
    let mut log_price = Vec::with_capacity(attendance.len() + 1);
    let mut lp = p0.ln();
    log_price.push(lp);
    for &b in attendance {
        lp += b / volume;
        log_price.push(lp);
    }
    Ok(PricePath {
        times: (0..log_price.len()).map(|k| k as f64).collect(),
        log_price,
        y_snapshot: None,
        mode: PathMode::DiscreteAttendance,
    })
}

/// Log price driven by the `y` increments, projected on the current state μ.
pub fn price_path_continuum(
    spec: &SdeSpec,
    path: &YPath,
    mus: &[usize],
    table: &StrategyTable,
    p0: f64,
) -> Result<PricePath> {
    if path.y.len() != mus.len() + 1 || path.times.len() != path.y.len() {
        return Err(Error::Shape(format!(
            "{} y states need {} information states, got {}",
            path.y.len(),
            path.y.len().saturating_sub(1),
            mus.len()
        )));
    }
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::invalid("p0", p0, "must be positive"));
    }
    if let Some(&bad) = mus.iter().find(|&&m| m >= table.p()) {
        return Err(Error::Shape(format!("information state {bad} out of range")));
    }
    let c = spec.price_prefactor();
    let mut lp = p0.ln();
    let mut log_price = Vec::with_capacity(path.y.len());
    log_price.push(lp);
    for (k, &mu) in mus.iter().enumerate() {
        let g = spec.projection(table, mu);
        let dy = &path.y[k + 1] - &path.y[k];
        lp -= c * g.dot(&dy);
        log_price.push(lp);
    }
    Ok(PricePath {
        times: path.times.clone(),
        log_price,
        y_snapshot: path.y.last().cloned(),
        mode: PathMode::Continuum,
    })
}

/// `steps` uniform information states from the μ substream of `replica`.
pub fn draw_states(seed: u64, replica: u64, p: usize, steps: usize) -> Vec<usize> {
    let mut rng = substream(seed, Substream::Mu, replica);
    (0..steps).map(|_| rng.random_range(0..p)).collect()
}

/// Terminal log return of one continuum path of `steps` steps, with μ drawn
/// uniformly on its own substream. Nothing but the running state is kept.
pub fn continuum_log_return(
    integ: &YIntegrator<'_>,
    table: &StrategyTable,
    y0: &DVector<f64>,
    steps: usize,
    dt: f64,
    seed: u64,
    replica: u64,
) -> f64 {
    let spec = integ.spec;
    let mut wiener = substream(seed, Substream::Wiener, replica);
    let mut mu_rng = substream(seed, Substream::Mu, replica);
    let c = spec.price_prefactor();
    let mut y = y0.clone();
    let mut prev = y.clone();
    let mut scratch = DVector::zeros(y.len());
    let mut log_return = 0.0;
    for _ in 0..steps {
        let mu = mu_rng.random_range(0..table.p());
        prev.copy_from(&y);
        integ.step(&mut y, dt, &mut wiener, &mut scratch);
        let g = spec.projection(table, mu);
        log_return -= c * (g.dot(&y) - g.dot(&prev));
    }
    log_return
}

/// Samples of `p(T) = p_t exp((r - ν/2) θ + sqrt(ν θ) Z)`.
///
/// Sample `k` always comes from substream chunk `k / 65536`, so results do
/// not depend on the thread count.
pub fn risk_neutral_terminal(
    p_t: f64,
    r: f64,
    theta: f64,
    nu: f64,
    n_samples: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<f64>> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::invalid("nu", nu, "variance must be non-negative"));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid("theta", theta, "must be positive"));
    }
    if !(p_t.is_finite() && p_t > 0.0) {
        return Err(Error::invalid("p_t", p_t, "must be positive"));
    }
    let drift = (r - 0.5 * nu) * theta;
    let vol = (nu * theta).sqrt();
    let chunks = n_samples.div_ceil(TERMINAL_CHUNK);
    let parts = execution.map_range(chunks, |c| {
        let len = TERMINAL_CHUNK.min(n_samples - c * TERMINAL_CHUNK);
        let mut rng = substream(seed, Substream::Terminal, c as u64);
        (0..len)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                p_t * (drift + vol * z).exp()
            })
            .collect::<Vec<f64>>()
    });
    Ok(parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSummary {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
    pub seed: u64,
}

impl TerminalSummary {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        Self {
            mean: mean(samples),
            variance: sample_variance(samples),
            count: samples.len(),
            seed,
        }
    }
}
