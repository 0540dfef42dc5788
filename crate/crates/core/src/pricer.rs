//! European call pricing under the game-implied lognormal law.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::config::GameKind;
use crate::error::{Error, Result};

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingInput {
    pub spot: f64,
    pub strike: f64,
    /// Continuously compounded rate per year.
    pub rate: f64,
    /// Time to maturity in years.
    pub theta: f64,
    /// Variance per unit time of the log price.
    pub nu: f64,
}

impl PricingInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::invalid("spot", self.spot, "must be positive"));
        }
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(Error::invalid("strike", self.strike, "must be positive"));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid("rate", self.rate, "must be finite"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::invalid("theta", self.theta, "must be positive"));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::invalid("nu", self.nu, "must be non-negative"));
        }
        Ok(())
    }

    pub fn with_nu(self, nu: f64) -> Self {
        Self { nu, ..self }
    }

    pub fn discounted_strike(&self) -> f64 {
        self.strike * (-self.rate * self.theta).exp()
    }

    /// `(max(p - K e^{-rθ}, 0), p)`.
    pub fn no_arbitrage_bounds(&self) -> (f64, f64) {
        ((self.spot - self.discounted_strike()).max(0.0), self.spot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameVarianceParams {
    pub kind: GameKind,
    /// α for the MG, α_ns for the GCMG.
    pub control: f64,
    pub sigma2_n: f64,
    pub w: f64,
    pub n: usize,
}

/// `ν = control · σ²_N / (w² N²)`, the same shape for both games.
pub fn game_nu(params: &GameVarianceParams) -> Result<f64> {
    if !(params.w.is_finite() && params.w > 0.0) {
        return Err(Error::invalid("w", params.w, "must be positive"));
    }
    if params.n == 0 {
        return Err(Error::invalid("n", params.n, "must be positive"));
    }
    if !(params.control.is_finite() && params.control >= 0.0) {
        return Err(Error::invalid("control", params.control, "must be non-negative"));
    }
    if !(params.sigma2_n.is_finite() && params.sigma2_n >= 0.0) {
        return Err(Error::invalid("sigma2_n", params.sigma2_n, "must be non-negative"));
    }
    let n = params.n as f64;
    Ok(params.control * params.sigma2_n / (params.w * params.w * n * n))
}

/// `d = [ln(p/K) + (r + ν/2) θ] / sqrt(ν θ)`.
pub fn d_plus(inp: &PricingInput) -> f64 {
    ((inp.spot / inp.strike).ln() + (inp.rate + 0.5 * inp.nu) * inp.theta) / (inp.nu * inp.theta).sqrt()
}

/// `c = p Φ(d) - K e^{-rθ} Φ(d - sqrt(νθ))`; the forward intrinsic value when ν = 0.
pub fn call_price(inp: &PricingInput) -> Result<f64> {
    inp.validate()?;
    Ok(call_price_unchecked(inp))
}

fn call_price_unchecked(inp: &PricingInput) -> f64 {
    let total_sd = (inp.nu * inp.theta).sqrt();
    let kd = inp.discounted_strike();
    if total_sd == 0.0 {
        return (inp.spot - kd).max(0.0);
    }
    let d = d_plus(inp);
    let c = inp.spot * norm_cdf(d) - kd * norm_cdf(d - total_sd);
    c.clamp((inp.spot - kd).max(0.0), inp.spot)
}

/// Sensitivity of the price to total standard deviation `s = sqrt(νθ)`.
fn dprice_dsd(inp: &PricingInput) -> f64 {
    let d = d_plus(inp);
    inp.spot * (-0.5 * d * d).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// ν reproducing `target`. The price is strictly increasing in ν, so the
/// root is unique; it is bracketed in total standard deviation and refined
/// with safeguarded Newton steps.
pub fn implied_nu(target: f64, inp: &PricingInput) -> Result<f64> {
    inp.with_nu(0.0).validate()?;
    let (lower, upper) = inp.no_arbitrage_bounds();
    if !(target.is_finite() && target > lower && target < upper) {
        return Err(Error::ArbitrageBounds { target, lower, upper });
    }
    let price_at = |sd: f64| call_price_unchecked(&inp.with_nu(sd * sd / inp.theta));
    let mut lo = 0.0;
    let mut hi = 1.0;
    while price_at(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::NoConvergence(format!("no volatility below {hi} reaches {target}")));
        }
    }
    let tol = 1e-10 * inp.spot;
    let mut sd = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = price_at(sd) - target;
        if f > 0.0 {
            hi = sd;
        } else {
            lo = sd;
        }
        let vega = dprice_dsd(&inp.with_nu(sd * sd / inp.theta));
        let newton = sd - f / vega;
        let next = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged_price = f.abs() <= tol;
        let converged_sd = (next - sd).abs() <= 1e-15 * sd.max(1e-300) || hi - lo <= 1e-15 * hi;
        sd = next;
        if converged_price && converged_sd {
            return Ok(sd * sd / inp.theta);
        }
    }
    if (price_at(sd) - target).abs() <= tol {
        return Ok(sd * sd / inp.theta);
    }
    Err(Error::NoConvergence(format!("implied variance for price {target}")))
}
