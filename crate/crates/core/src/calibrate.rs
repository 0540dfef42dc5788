//! Two-step calibration: `w̄` from the minimum of a volatility index, then
//! the control parameter from an option chain by least squares along the
//! asymmetric branch of a phase curve.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::GameKind;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::phase::{PhaseCurve, PhasePoint};
use crate::rng::{substream, Substream};

/// Moneyness triples used by the bundled fixtures.
pub const MONEYNESS_A: [f64; 3] = [1.06, 1.00, 0.94];
pub const MONEYNESS_B: [f64; 3] = [1.1, 0.98, 0.88];
/// Minimum of the reference volatility index.
pub const ANCHOR_MIN_VOL: f64 = 0.1098;

const GOLDEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolObservation {
    pub date: NaiveDate,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolIndexSeries {
    pub observations: Vec<VolObservation>,
    pub min_value: f64,
}

impl VolIndexSeries {
    pub fn new(observations: Vec<VolObservation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Empty("volatility index has no observations".into()));
        }
        for (k, o) in observations.iter().enumerate() {
            if !(o.level > 0.0 && o.level < 5.0) {
                return Err(Error::invalid("level", o.level, "must lie in (0, 5)"));
            }
            if k > 0 && o.date <= observations[k - 1].date {
                return Err(Error::invalid("date", o.date, "dates must be strictly increasing"));
            }
        }
        let min_value = observations.iter().map(|o| o.level).fold(f64::INFINITY, f64::min);
        Ok(Self {
            observations,
            min_value,
        })
    }

    /// Single-observation series carrying only a minimum level.
    pub fn from_min(level: f64) -> Result<Self> {
        Self::new(vec![VolObservation {
            date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
            level,
        }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub spot: f64,
    pub strike: f64,
    pub maturity_years: f64,
    pub rate: f64,
    pub market_iv: f64,
}

impl OptionQuote {
    pub fn moneyness(&self) -> f64 {
        self.spot / self.strike
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::invalid("spot", self.spot, "must be positive"));
        }
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(Error::invalid("strike", self.strike, "must be positive"));
        }
        if !(self.maturity_years.is_finite() && self.maturity_years > 0.0) {
            return Err(Error::invalid("maturity_years", self.maturity_years, "must be positive"));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid("rate", self.rate, "must be finite"));
        }
        if !(self.market_iv.is_finite() && self.market_iv > 0.0) {
            return Err(Error::invalid("market_iv", self.market_iv, "must be positive"));
        }
        Ok(())
    }
}

/// How the agent count enters the model volatility of each quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FitMode {
    /// One volatility for the whole chain at the curve's `N`.
    #[default]
    Flat,
    /// `N_j = max(n_min, round(θ_j / time_scale))` per quote.
    MaturityScaled { time_scale: f64, n_min: usize },
}

impl FitMode {
    pub fn label(&self) -> &'static str {
        match self {
            FitMode::Flat => "flat",
            FitMode::MaturityScaled { .. } => "maturity_scaled",
        }
    }

    pub fn agents_for(&self, n: usize, quote: &OptionQuote) -> usize {
        match *self {
            FitMode::Flat => n,
            FitMode::MaturityScaled { time_scale, n_min } => {
                ((quote.maturity_years / time_scale).round() as usize).max(n_min).max(1)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let FitMode::MaturityScaled { time_scale, .. } = *self {
            if !(time_scale.is_finite() && time_scale > 0.0) {
                return Err(Error::invalid("time_scale", time_scale, "must be positive"));
            }
        }
        Ok(())
    }
}

/// The asymmetric branch of a phase curve: nodes from the critical point on.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub alpha_c: f64,
    nodes: Vec<PhasePoint>,
}

impl Branch {
    pub fn new(curve: &PhaseCurve) -> Result<Self> {
        let c = curve.critical.ok_or(Error::NoCriticalPoint)?;
        let nodes = curve.points[c.index..].to_vec();
        if nodes.len() < 2 {
            return Err(Error::Empty(format!(
                "phase curve has no branch above the critical point {}",
                c.control
            )));
        }
        Ok(Self {
            alpha_c: c.control,
            nodes,
        })
    }

    pub fn max_control(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].control
    }

    pub fn controls(&self) -> Vec<f64> {
        self.nodes.iter().map(|p| p.control).collect()
    }

    fn check(&self, control: f64) -> Result<()> {
        if control < self.alpha_c {
            return Err(Error::CrowdedBranch {
                control,
                alpha_c: self.alpha_c,
            });
        }
        if !(control <= self.max_control()) {
            return Err(Error::invalid("control", control, format!("above the curve maximum {}", self.max_control())));
        }
        Ok(())
    }

    /// Segment index `k` with `nodes[k].control <= control <= nodes[k+1].control`.
    fn segment(&self, control: f64) -> usize {
        let k = self.nodes.partition_point(|p| p.control <= control);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// `σ²_N / N` by linear interpolation between nodes.
    pub fn per_n(&self, control: f64) -> Result<f64> {
        self.check(control)?;
        let k = self.segment(control);
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        if control == a.control {
            return Ok(a.sigma2_over_n);
        }
        if control == b.control {
            return Ok(b.sigma2_over_n);
        }
        let t = (control - a.control) / (b.control - a.control);
        Ok(a.sigma2_over_n + t * (b.sigma2_over_n - a.sigma2_over_n))
    }
}

/// `w̄ = sqrt(α_c) σ_c / (N · min level)`.
pub fn calibrate_w(series: &VolIndexSeries, curve: &PhaseCurve, n: usize) -> Result<f64> {
    let c = curve.critical.ok_or(Error::NoCriticalPoint)?;
    if series.observations.is_empty() {
        return Err(Error::Empty("volatility index has no observations".into()));
    }
    if n == 0 {
        return Err(Error::invalid("n", n, "must be positive"));
    }
    Ok(c.control.sqrt() * c.sigma_c / (n as f64 * series.min_value))
}

/// Game-implied volatility `sqrt(control σ²_N) / (w̄ N)` for one quote.
pub fn model_iv(control: f64, curve: &PhaseCurve, w_bar: f64, n: usize, quote: &OptionQuote, mode: FitMode) -> Result<f64> {
    model_iv_on(&Branch::new(curve)?, control, w_bar, n, quote, mode)
}

/// As [`model_iv`] with a prebuilt branch.
pub fn model_iv_on(branch: &Branch, control: f64, w_bar: f64, n: usize, quote: &OptionQuote, mode: FitMode) -> Result<f64> {
    let per_n = branch.per_n(control)?;
    Ok(vol_from(control, per_n, w_bar, mode.agents_for(n, quote)))
}

fn vol_from(control: f64, per_n: f64, w_bar: f64, n_j: usize) -> f64 {
    let n_j = n_j as f64;
    (control * per_n * n_j).sqrt() / (w_bar * n_j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionFit {
    pub quote: OptionQuote,
    pub model_iv: f64,
    /// `model_iv - market_iv`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub chain_sha256: String,
    pub curve_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub kind: GameKind,
    pub w_bar: f64,
    pub fitted_control: f64,
    #[serde(rename = "fitted_sigma2_N")]
    pub fitted_sigma2_n: f64,
    pub sse: f64,
    pub per_option: Vec<OptionFit>,
    pub alpha_c: f64,
    pub critical_gap: f64,
    pub w_unrescaled: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub mode: FitMode,
    /// The minimum sits on an end of the search interval.
    pub at_boundary: bool,
    pub digests: InputDigests,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(value)?)))
}

/// Digest of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

struct Objective<'a> {
    branch: &'a Branch,
    chain: &'a [OptionQuote],
    agents: Vec<usize>,
    w_bar: f64,
}

impl Objective<'_> {
    fn sse(&self, control: f64) -> f64 {
        let per_n = self.branch.per_n(control).expect("control inside the branch");
        self.chain
            .iter()
            .zip(&self.agents)
            .map(|(q, &n_j)| {
                let r = vol_from(control, per_n, self.w_bar, n_j) - q.market_iv;
                r * r
            })
            .sum()
    }

    /// Exact minimizer within segment `k`. Every model vol is `c_j g(x)`
    /// with `g² = x · per_n(x)` quadratic on the segment, so the optimum
    /// over `g` is closed-form and is mapped back through the quadratic.
    fn segment_candidates(&self, k: usize) -> Vec<f64> {
        let (a, b) = (&self.branch.nodes[k], &self.branch.nodes[k + 1]);
        let (x0, x1) = (a.control, b.control);
        let mut out = vec![x0, x1];
        let (mut sc, mut cc) = (0.0, 0.0);
        for (q, &n_j) in self.chain.iter().zip(&self.agents) {
            let c = 1.0 / (self.w_bar * (n_j as f64).sqrt());
            sc += q.market_iv * c;
            cc += c * c;
        }
        let g2 = (sc / cc).powi(2);
        // per_n(x) = p0 + s (x - x0); x (p0 - s x0) + s x² = g2
        let s = (b.sigma2_over_n - a.sigma2_over_n) / (x1 - x0);
        let lin = a.sigma2_over_n - s * x0;
        let roots: Vec<f64> = if s == 0.0 {
            if lin != 0.0 {
                vec![g2 / lin]
            } else {
                vec![]
            }
        } else {
            let disc = lin * lin + 4.0 * s * g2;
            if disc < 0.0 {
                vec![]
            } else {
                let sq = disc.sqrt();
                // numerically stable pair
                let qq = -0.5 * (lin + lin.signum() * sq);
                let mut r = Vec::new();
                if qq != 0.0 {
                    r.push(qq / s);
                    r.push(-g2 / qq);
                } else {
                    r.push((-lin + sq) / (2.0 * s));
                }
                r
            }
        };
        out.extend(roots.into_iter().filter(|r| r.is_finite() && *r > x0 && *r < x1));
        out
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let tol = GOLDEN_TOL * hi.abs().max(1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares fit of the control parameter on `[α_c, max]`.
///
/// The coarse pass scores every branch node; golden-section search then
/// runs between the neighbours of the best node, and the result is
/// polished with the exact per-segment minimizer. Ties go to the smaller
/// control.
pub fn calibrate_chain(
    chain: &[OptionQuote],
    curve: &PhaseCurve,
    w_bar: f64,
    n: usize,
    mode: FitMode,
) -> Result<CalibrationResult> {
    if chain.is_empty() {
        return Err(Error::Empty("option chain has no quotes".into()));
    }
    for q in chain {
        q.validate()?;
    }
    if !(w_bar.is_finite() && w_bar > 0.0) {
        return Err(Error::invalid("w_bar", w_bar, "must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("n", n, "must be positive"));
    }
    mode.validate()?;
    let branch = Branch::new(curve)?;
    let obj = Objective {
        branch: &branch,
        chain,
        agents: chain.iter().map(|q| mode.agents_for(n, q)).collect(),
        w_bar,
    };

    let nodes = branch.controls();
    let node_sse: Vec<f64> = Execution::default().map(&nodes, |&x| obj.sse(x));
    let mut best = 0;
    for (k, &v) in node_sse.iter().enumerate() {
        if v < node_sse[best] {
            best = k;
        }
    }

    let lo = nodes[best.saturating_sub(1)];
    let hi = nodes[(best + 1).min(nodes.len() - 1)];
    let golden = golden_section(&|x| obj.sse(x), lo, hi);
    let mut candidates = vec![nodes[best], golden];
    for k in best.saturating_sub(1)..(best + 1).min(nodes.len() - 1) {
        candidates.extend(obj.segment_candidates(k));
    }
    candidates.retain(|&x| x >= lo && x <= hi);
    candidates.sort_by(f64::total_cmp);
    let mut fitted = candidates[0];
    let mut sse = obj.sse(fitted);
    for &x in &candidates[1..] {
        let v = obj.sse(x);
        if v < sse {
            fitted = x;
            sse = v;
        }
    }

    let per_n = branch.per_n(fitted)?;
    let per_option: Vec<OptionFit> = chain
        .iter()
        .zip(&obj.agents)
        .map(|(q, &n_j)| {
            let model_iv = vol_from(fitted, per_n, w_bar, n_j);
            OptionFit {
                quote: *q,
                model_iv,
                residual: model_iv - q.market_iv,
            }
        })
        .collect();

    Ok(CalibrationResult {
        kind: curve.meta.kind,
        w_bar,
        fitted_control: fitted,
        fitted_sigma2_n: per_n * n as f64,
        sse,
        per_option,
        alpha_c: branch.alpha_c,
        critical_gap: fitted - branch.alpha_c,
        w_unrescaled: w_bar * (n as f64).sqrt(),
        n,
        mode,
        at_boundary: fitted == branch.alpha_c || fitted == branch.max_control(),
        digests: InputDigests {
            chain_sha256: sha256_json(chain)?,
            curve_sha256: sha256_json(&curve.points)?,
        },
    })
}

fn parse_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, source: &str, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| parse_error(source, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got.is_empty() || got == [""] {
        return Err(Error::Empty(format!("{source}: file is empty")));
    }
    if got != expected {
        return Err(parse_error(source, 1, format!("expected header `{}`, got `{}`", expected.join(","), got.join(","))));
    }
    Ok(())
}

/// Option chain CSV: `spot,strike,maturity_years,rate,market_iv`.
pub fn read_chain<R: Read>(input: R, source: &str) -> Result<Vec<OptionQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, source, &["spot", "strike", "maturity_years", "rate", "market_iv"])?;
    let mut quotes = Vec::new();
    for (k, row) in rdr.deserialize::<OptionQuote>().enumerate() {
        let line = k + 2;
        let q = row.map_err(|e| parse_error(source, line, e.to_string()))?;
        q.validate().map_err(|e| parse_error(source, line, e.to_string()))?;
        quotes.push(q);
    }
    if quotes.is_empty() {
        return Err(Error::Empty(format!("{source}: option chain has no quotes")));
    }
    Ok(quotes)
}

pub fn ingest_chain(path: &Path) -> Result<Vec<OptionQuote>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_chain(file, &path.display().to_string())
}

pub fn write_chain<W: std::io::Write>(chain: &[OptionQuote], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for q in chain {
        wtr.serialize(q).map_err(|e| Error::Config(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::Config(e.to_string()))
}

#[derive(Deserialize)]
struct VolRow {
    date: String,
    level: f64,
}

/// Volatility index CSV: `date,level` with ISO dates.
pub fn read_vol_index<R: Read>(input: R, source: &str) -> Result<VolIndexSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, source, &["date", "level"])?;
    let mut obs: Vec<VolObservation> = Vec::new();
    for (k, row) in rdr.deserialize::<VolRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| parse_error(source, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| parse_error(source, line, format!("bad date `{}`: {e}", row.date)))?;
        if !(row.level > 0.0 && row.level < 5.0) {
            return Err(parse_error(source, line, format!("level {} outside (0, 5)", row.level)));
        }
        if let Some(prev) = obs.last() {
            if date <= prev.date {
                return Err(parse_error(source, line, format!("date {date} does not follow {}", prev.date)));
            }
        }
        obs.push(VolObservation { date, level: row.level });
    }
    if obs.is_empty() {
        return Err(Error::Empty(format!("{source}: volatility index has no rows")));
    }
    VolIndexSeries::new(obs)
}

pub fn ingest_vol_index(path: &Path) -> Result<VolIndexSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_vol_index(file, &path.display().to_string())
}

/// Parameters of a synthetic chain built from the model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticChain {
    pub spot: f64,
    pub rate: f64,
    pub moneyness: Vec<f64>,
    pub maturities: Vec<f64>,
    /// Relative IV perturbation; each quote gets `±noise` with a random sign.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticChain {
    /// 18 quotes: both moneyness triples at maturities 0.1, 0.5 and 2 years.
    fn default() -> Self {
        Self {
            spot: 100.0,
            rate: 0.02,
            moneyness: MONEYNESS_A.iter().chain(&MONEYNESS_B).copied().collect(),
            maturities: vec![0.1, 0.5, 2.0],
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticChain {
    pub fn generate(&self, control: f64, curve: &PhaseCurve, w_bar: f64, n: usize, mode: FitMode) -> Result<Vec<OptionQuote>> {
        let branch = Branch::new(curve)?;
        let mut rng = substream(self.seed, Substream::Fixture, 0);
        let mut chain = Vec::with_capacity(self.moneyness.len() * self.maturities.len());
        for &theta in &self.maturities {
            for &m in &self.moneyness {
                let mut q = OptionQuote {
                    spot: self.spot,
                    strike: self.spot / m,
                    maturity_years: theta,
                    rate: self.rate,
                    market_iv: 0.0,
                };
                let iv = model_iv_on(&branch, control, w_bar, n, &q, mode)?;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                q.market_iv = iv * (1.0 + sign * self.noise);
                chain.push(q);
            }
        }
        Ok(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::CurveMeta;

    fn curve() -> PhaseCurve {
        let pts: Vec<PhasePoint> = [(0.1, 5.0), (0.2, 0.4), (0.3, 0.2), (0.5, 0.3), (1.0, 0.6), (2.0, 0.8), (4.0, 0.9)]
            .iter()
            .map(|&(c, v)| PhasePoint {
                control: c,
                sigma2_over_n: v,
                stderr: 0.001,
                n_seeds: 8,
                n_agents: 100,
            })
            .collect();
        let meta = CurveMeta {
            kind: GameKind::Mg,
            n: 100,
            gamma: 1.0,
            w: 1.0,
            l: None,
            n_p: None,
            epsilon: None,
        };
        PhaseCurve::new(meta, pts)
    }

    fn quote() -> OptionQuote {
        OptionQuote {
            spot: 100.0,
            strike: 100.0,
            maturity_years: 0.5,
            rate: 0.01,
            market_iv: 0.2,
        }
    }

    #[test]
    fn w_bar_normalization_and_scaling() {
        let c = curve();
        let crit = c.critical.unwrap();
        let unit = VolIndexSeries::from_min(crit.control.sqrt() * crit.sigma_c / 100.0).unwrap();
        assert!((calibrate_w(&unit, &c, 100).unwrap() - 1.0).abs() < 1e-15);
        let s = VolIndexSeries::from_min(ANCHOR_MIN_VOL).unwrap();
        let w1 = calibrate_w(&s, &c, 100).unwrap();
        let w2 = calibrate_w(&s, &c, 200).unwrap();
        assert_eq!(w1, 2.0 * w2);
    }

    #[test]
    fn model_iv_at_critical_reproduces_minimum() {
        let c = curve();
        let s = VolIndexSeries::from_min(ANCHOR_MIN_VOL).unwrap();
        let w = calibrate_w(&s, &c, 100).unwrap();
        let v = model_iv(c.critical.unwrap().control, &c, w, 100, &quote(), FitMode::Flat).unwrap();
        assert!((v - ANCHOR_MIN_VOL).abs() <= 1e-12 * ANCHOR_MIN_VOL);
    }

    #[test]
    fn interpolation_nodes_and_midpoint() {
        let c = curve();
        let b = Branch::new(&c).unwrap();
        assert_eq!(b.alpha_c, 0.3);
        assert_eq!(b.per_n(1.0).unwrap(), 0.6);
        assert!((b.per_n(1.5).unwrap() - 0.7).abs() < 1e-15);
        let w = 0.01;
        let v = model_iv(1.5, &c, w, 100, &quote(), FitMode::Flat).unwrap();
        let oracle = (1.5f64 * 0.7 * 100.0).sqrt() / (w * 100.0);
        assert!((v - oracle).abs() < 1e-12 * oracle);
        assert!(matches!(b.per_n(0.2), Err(Error::CrowdedBranch { .. })));
        assert!(b.per_n(4.5).is_err());
    }

    #[test]
    fn maturity_scaled_agents() {
        let mode = FitMode::MaturityScaled {
            time_scale: 0.01,
            n_min: 20,
        };
        let mut q = quote();
        assert_eq!(mode.agents_for(100, &q), 50);
        q.maturity_years = 0.1;
        assert_eq!(mode.agents_for(100, &q), 20);
        assert_eq!(FitMode::Flat.agents_for(100, &q), 100);
    }

    #[test]
    fn exact_recovery_flat_and_scaled() {
        let c = curve();
        let w = 0.02;
        for mode in [
            FitMode::Flat,
            FitMode::MaturityScaled {
                time_scale: 0.01,
                n_min: 10,
            },
        ] {
            let chain = SyntheticChain::default().generate(0.7, &c, w, 100, mode).unwrap();
            assert_eq!(chain.len(), 18);
            let r = calibrate_chain(&chain, &c, w, 100, mode).unwrap();
            assert!((r.fitted_control - 0.7).abs() < 1e-9, "{mode:?}: {}", r.fitted_control);
            assert!(r.sse < 1e-18);
            assert!(r.critical_gap > 0.0);
        }
    }

    #[test]
    fn low_market_pins_to_critical() {
        let c = curve();
        let w = 0.02;
        let floor = model_iv(0.3, &c, w, 100, &quote(), FitMode::Flat).unwrap();
        let chain: Vec<OptionQuote> = (0..4)
            .map(|k| OptionQuote {
                market_iv: floor * (0.5 + 0.1 * k as f64),
                ..quote()
            })
            .collect();
        let r = calibrate_chain(&chain, &c, w, 100, FitMode::Flat).unwrap();
        assert_eq!(r.fitted_control, 0.3);
        assert!(r.at_boundary);
        assert!(r.per_option.iter().all(|o| o.residual > 0.0));
    }

    #[test]
    fn errors() {
        let c = curve();
        assert!(matches!(calibrate_chain(&[], &c, 0.1, 100, FitMode::Flat), Err(Error::Empty(_))));
        let mut flat = c.clone();
        flat.critical = None;
        assert!(calibrate_w(&VolIndexSeries::from_min(0.1).unwrap(), &flat, 100).is_err());
        let mut edge = c.clone();
        let mut crit = edge.critical.unwrap();
        crit.index = edge.points.len() - 1;
        edge.critical = Some(crit);
        assert!(calibrate_chain(&[quote()], &edge, 0.1, 100, FitMode::Flat).is_err());
    }

    #[test]
    fn chain_csv_parsing() {
        let text = "spot,strike,maturity_years,rate,market_iv\n100,94.3,0.5,0.02,0.15\n";
        let q = read_chain(text.as_bytes(), "c.csv").unwrap();
        assert_eq!(q.len(), 1);
        assert!((q[0].moneyness() - 100.0 / 94.3).abs() < 1e-15);
        let bad = "spot,strike,maturity_years,rate,market_iv\n100,94.3,0.5,0.02,0.15\n100,90,0.5,0.02,0\n";
        assert!(matches!(read_chain(bad.as_bytes(), "c.csv"), Err(Error::Parse { line: 3, .. })));
        let junk = "spot,strike,maturity_years,rate,market_iv\n100,x,0.5,0.02,0.1\n";
        assert!(matches!(read_chain(junk.as_bytes(), "c.csv"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_chain("".as_bytes(), "c.csv"), Err(Error::Empty(_))));
    }

    #[test]
    fn vol_index_parsing() {
        let text = "date,level\n2004-01-02,0.21\n2004-01-05,0.1098\n2004-01-06,0.12\n";
        let s = read_vol_index(text.as_bytes(), "v.csv").unwrap();
        assert_eq!(s.min_value, 0.1098);
        let back = "date,level\n2004-01-02,0.21\n2004-01-02,0.2\n";
        assert!(matches!(read_vol_index(back.as_bytes(), "v.csv"), Err(Error::Parse { line: 3, .. })));
        let bad = "date,level\n2004-13-02,0.21\n";
        assert!(matches!(read_vol_index(bad.as_bytes(), "v.csv"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_vol_index("".as_bytes(), "v.csv"), Err(Error::Empty(_))));
        assert!(matches!(read_vol_index("date,level\n".as_bytes(), "v.csv"), Err(Error::Empty(_))));
    }

    #[test]
    fn deterministic_result() {
        let c = curve();
        let chain = SyntheticChain {
            noise: 0.002,
            seed: 9,
            ..Default::default()
        }
        .generate(1.2, &c, 0.02, 100, FitMode::Flat)
        .unwrap();
        let a = calibrate_chain(&chain, &c, 0.02, 100, FitMode::Flat).unwrap();
        let b = calibrate_chain(&chain, &c, 0.02, 100, FitMode::Flat).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_option.len(), chain.len());
    }
}
