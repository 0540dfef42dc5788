//! Phase curves: σ²_N/N against the control parameter, sweeps that
//! produce them, and critical-point detection.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ActivationRule, GameConfig, GameKind, DEFAULT_GAMMA, DEFAULT_W};
use crate::engine::{estimate_sigma, SigmaEstimate, Windows, BATCHES, MIN_STEPS_PER_BATCH};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{replica_seed, substream, Substream};
use crate::stats::mean_stderr;
use crate::strategy::generate_strategies;

/// Parametric bootstrap resamples used for the critical-location error.
const BOOTSTRAP_RESAMPLES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub control: f64,
    pub sigma2_over_n: f64,
    pub stderr: f64,
    pub n_seeds: usize,
    /// Agents at this point; it varies along a GCMG sweep.
    pub n_agents: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub control: f64,
    /// `sqrt(N * σ²_N/N)` at the detected node.
    pub sigma_c: f64,
    pub index: usize,
    pub per_n: f64,
    /// Minimum lies strictly inside the grid and below both end values.
    pub interior: bool,
    /// Spread of the detected location under resampling of the point errors.
    pub control_stderr: f64,
}

/// Parameters shared by every point of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub kind: GameKind,
    /// Agent count used for `sigma_c` (the critical node's, for the GCMG).
    pub n: usize,
    pub gamma: f64,
    pub w: f64,
    pub l: Option<usize>,
    pub n_p: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCurve {
    pub meta: CurveMeta,
    /// Sorted by increasing control.
    pub points: Vec<PhasePoint>,
    pub critical: Option<CriticalPoint>,
}

impl PhaseCurve {
    /// Sort the points and detect the critical point.
    pub fn new(mut meta: CurveMeta, mut points: Vec<PhasePoint>) -> Self {
        points.sort_by(|a, b| a.control.total_cmp(&b.control));
        let critical = detect_critical(&points);
        if let Some(c) = &critical {
            meta.n = points[c.index].n_agents;
        }
        Self { meta, points, critical }
    }

    pub fn controls(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.control).collect()
    }

    pub fn control_label(&self) -> &'static str {
        match self.meta.kind {
            GameKind::Mg => "control",
            GameKind::Gcmg => "alpha_ns",
        }
    }
}

/// Three-point moving average (two points at the ends).
pub fn smooth3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Index of the smallest value; ties go to the lower index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Critical point as the argmin of the smoothed σ²_N/N; `None` below
/// three points. Points must be sorted by control.
pub fn detect_critical(points: &[PhasePoint]) -> Option<CriticalPoint> {
    if points.len() < 3 {
        return None;
    }
    let values: Vec<f64> = points.iter().map(|p| p.sigma2_over_n).collect();
    let index = argmin(&smooth3(&values));
    let last = values.len() - 1;
    let per_n = values[index];
    let interior = index != 0 && index != last && per_n < values[0] && per_n < values[last];

    let mut rng = substream(0, Substream::Bootstrap, points.len() as u64);
    let mut locations = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resampled = vec![0.0; values.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for (r, p) in resampled.iter_mut().zip(points) {
            let z: f64 = rng.sample(StandardNormal);
            *r = p.sigma2_over_n + p.stderr * z;
        }
        locations.push(points[argmin(&smooth3(&resampled))].control);
    }
    let spread = mean_stderr(&locations).stderr * (locations.len() as f64).sqrt();

    Some(CriticalPoint {
        control: points[index].control,
        sigma_c: (points[index].n_agents as f64 * per_n).sqrt(),
        index,
        per_n,
        interior,
        control_stderr: spread,
    })
}

/// Burn-in and measurement windows as multiples of `P`, with floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub burn_per_state: usize,
    pub measure_per_state: usize,
    pub min_burn: usize,
    pub min_measure: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            burn_per_state: 200,
            measure_per_state: 1000,
            min_burn: 0,
            min_measure: BATCHES * MIN_STEPS_PER_BATCH,
        }
    }
}

impl WindowPolicy {
    pub fn windows(&self, p: usize) -> Windows {
        Windows::scaled(p, self.burn_per_state, self.measure_per_state).at_least(self.min_burn, self.min_measure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Independent realizations (strategy tables and streams) per point.
    pub seeds: usize,
    pub windows: WindowPolicy,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            seeds: 8,
            windows: WindowPolicy::default(),
            execution: Execution::Parallel,
        }
    }
}

/// σ²_N estimates for every seed of one point.
pub fn run_point(config: &GameConfig, opts: &SweepOptions) -> Result<Vec<SigmaEstimate>> {
    let windows = opts.windows.windows(config.p);
    opts.execution
        .map_range(opts.seeds, |k| {
            let cfg = config.clone().with_seed(replica_seed(config.seed, k as u64));
            let table = generate_strategies(&cfg)?;
            estimate_sigma(&cfg, &table, windows)
        })
        .into_iter()
        .collect()
}

fn aggregate(config: &GameConfig, estimates: &[SigmaEstimate]) -> PhasePoint {
    let per_n: Vec<f64> = estimates.iter().map(|e| e.per_n).collect();
    let stat = mean_stderr(&per_n);
    let stderr = if estimates.len() >= 2 {
        stat.stderr
    } else {
        estimates[0].stderr / config.n as f64
    };
    PhasePoint {
        control: config.control(),
        sigma2_over_n: stat.mean,
        stderr,
        n_seeds: estimates.len(),
        n_agents: config.n,
    }
}

/// Sweep over `configs`, skipping points whose control already appears in
/// `resume` and reporting each freshly finished point to `on_point`.
pub fn sweep_resumable(
    configs: &[GameConfig],
    opts: &SweepOptions,
    resume: &[PhasePoint],
    on_point: &(dyn Fn(&PhasePoint) + Sync),
) -> Result<PhaseCurve> {
    let first = configs.first().ok_or_else(|| Error::Empty("sweep grid".into()))?;
    if opts.seeds == 0 {
        return Err(Error::invalid("seeds", 0, "need at least one seed per point"));
    }
    for cfg in configs {
        cfg.validate()?;
        if cfg.kind != first.kind || cfg.w != first.w || cfg.gamma != first.gamma {
            return Err(Error::invalid(
                "configs",
                cfg.control(),
                "every point must share kind, w and gamma",
            ));
        }
    }
    let fresh: Vec<&GameConfig> = configs
        .iter()
        .filter(|c| !resume.iter().any(|r| r.control == c.control()))
        .collect();
    let computed: Vec<Result<PhasePoint>> = opts.execution.map(&fresh, |cfg| {
        let point = aggregate(cfg, &run_point(cfg, opts)?);
        on_point(&point);
        Ok(point)
    });
    let mut points: Vec<PhasePoint> = resume.to_vec();
    for p in computed {
        points.push(p?);
    }
    let meta = CurveMeta {
        kind: first.kind,
        n: first.n,
        gamma: first.gamma,
        w: first.w,
        l: None,
        n_p: None,
        epsilon: None,
    };
    Ok(PhaseCurve::new(meta, points))
}

pub fn sweep(configs: &[GameConfig], opts: &SweepOptions) -> Result<PhaseCurve> {
    sweep_resumable(configs, opts, &[], &|_| {})
}

/// MG sweep: every config must be an MG.
pub fn sweep_phase(configs: &[GameConfig], opts: &SweepOptions) -> Result<PhaseCurve> {
    if let Some(c) = configs.iter().find(|c| c.kind != GameKind::Mg) {
        return Err(Error::invalid("kind", c.kind.label(), "sweep_phase expects MG configs"));
    }
    sweep(configs, opts)
}

/// MG grid at fixed `n` with `P = round(α n)` (at least 1) for each α.
pub fn mg_grid(n: usize, alphas: &[f64], gamma: f64, w: f64, seed: u64) -> Vec<GameConfig> {
    let mut configs: Vec<GameConfig> = alphas
        .iter()
        .map(|&a| {
            let p = ((a * n as f64).round() as usize).max(1);
            GameConfig::mg(n, p, seed).with_gamma(gamma).with_w(w)
        })
        .collect();
    configs.dedup_by_key(|c| c.p);
    configs
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// GCMG sweep at fixed `L = P N_s` and producer density `n_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcmgSweepSpec {
    pub l: usize,
    pub n_p: f64,
    pub epsilon: f64,
    pub n_s_grid: Vec<f64>,
    pub gamma: f64,
    pub w: f64,
    pub seed: u64,
    pub activation: ActivationRule,
}

impl GcmgSweepSpec {
    pub fn new(l: usize, n_p: f64, epsilon: f64, n_s_grid: Vec<f64>) -> Self {
        Self {
            l,
            n_p,
            epsilon,
            n_s_grid,
            gamma: DEFAULT_GAMMA,
            w: DEFAULT_W,
            seed: 0,
            activation: ActivationRule::default(),
        }
    }
}

/// How a requested speculator density was realized on integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcmgGridPoint {
    pub requested_n_s: f64,
    pub p: usize,
    pub speculators: usize,
    pub producers: usize,
    /// `P * N_s` actually used.
    pub l: usize,
    pub realized_n_s: f64,
    /// `|realized - requested| / requested`.
    pub n_s_deviation: f64,
}

/// Nearest integral `(P, N_s, N_p)` with `P N_s ≈ L` and `N_s / P ≈ n_s`.
pub fn gcmg_grid_point(l: usize, n_s: f64, n_p: f64) -> Result<GcmgGridPoint> {
    if l == 0 {
        return Err(Error::invalid("L", l, "must be positive"));
    }
    if !(n_s.is_finite() && n_s > 0.0) {
        return Err(Error::invalid("n_s", n_s, "must be positive"));
    }
    if !(n_p.is_finite() && n_p >= 0.0) {
        return Err(Error::invalid("n_p", n_p, "must be non-negative"));
    }
    let p = ((l as f64 / n_s).sqrt().round() as usize).max(1);
    let speculators = ((l as f64 / p as f64).round() as usize).max(1);
    let producers = (n_p * p as f64).round() as usize;
    let realized = speculators as f64 / p as f64;
    Ok(GcmgGridPoint {
        requested_n_s: n_s,
        p,
        speculators,
        producers,
        l: p * speculators,
        realized_n_s: realized,
        n_s_deviation: (realized - n_s).abs() / n_s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcmgSweep {
    pub curve: PhaseCurve,
    pub grid: Vec<GcmgGridPoint>,
}

impl GcmgSweepSpec {
    pub fn configs(&self) -> Result<(Vec<GameConfig>, Vec<GcmgGridPoint>)> {
        let mut grid = Vec::with_capacity(self.n_s_grid.len());
        let mut configs = Vec::with_capacity(self.n_s_grid.len());
        for &n_s in &self.n_s_grid {
            let g = gcmg_grid_point(self.l, n_s, self.n_p)?;
            if grid.iter().any(|h: &GcmgGridPoint| h.p == g.p && h.speculators == g.speculators) {
                continue;
            }
            configs.push(
                GameConfig::gcmg(g.speculators, g.producers, g.p, self.epsilon, self.seed)
                    .with_gamma(self.gamma)
                    .with_w(self.w)
                    .with_activation(self.activation),
            );
            grid.push(g);
        }
        Ok((configs, grid))
    }
}

pub fn sweep_phase_gcmg(spec: &GcmgSweepSpec, opts: &SweepOptions) -> Result<GcmgSweep> {
    sweep_phase_gcmg_resumable(spec, opts, &[], &|_| {})
}

pub fn sweep_phase_gcmg_resumable(
    spec: &GcmgSweepSpec,
    opts: &SweepOptions,
    resume: &[PhasePoint],
    on_point: &(dyn Fn(&PhasePoint) + Sync),
) -> Result<GcmgSweep> {
    let (configs, grid) = spec.configs()?;
    let mut curve = sweep_resumable(&configs, opts, resume, on_point)?;
    curve.meta.l = Some(spec.l);
    curve.meta.n_p = Some(spec.n_p);
    curve.meta.epsilon = Some(spec.epsilon);
    Ok(GcmgSweep { curve, grid })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    control: f64,
    sigma2_over_n: f64,
    stderr: f64,
    n_seeds: usize,
}

/// JSON sidecar carrying the critical point and curve parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: GameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_ns_c: Option<f64>,
    pub sigma_c: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma: f64,
    pub w: f64,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub critical_index: Option<usize>,
    pub per_n_c: Option<f64>,
    pub interior: Option<bool>,
    pub control_c_stderr: Option<f64>,
}

impl Sidecar {
    pub fn from_curve(curve: &PhaseCurve) -> Self {
        let c = curve.critical.as_ref();
        let control = c.map(|c| c.control);
        let (alpha_c, alpha_ns_c) = match curve.meta.kind {
            GameKind::Mg => (control, None),
            GameKind::Gcmg => (None, control),
        };
        Self {
            kind: curve.meta.kind,
            alpha_c,
            alpha_ns_c,
            sigma_c: c.map(|c| c.sigma_c),
            n: curve.meta.n,
            gamma: curve.meta.gamma,
            w: curve.meta.w,
            l: curve.meta.l,
            n_p: curve.meta.n_p,
            epsilon: curve.meta.epsilon,
            critical_index: c.map(|c| c.index),
            per_n_c: c.map(|c| c.per_n),
            interior: c.map(|c| c.interior),
            control_c_stderr: c.map(|c| c.control_stderr),
        }
    }
}

pub fn write_curve_csv<W: Write>(curve: &PhaseCurve, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Config(e.to_string());
    wtr.write_record([curve.control_label(), "sigma2_over_N", "stderr", "n_seeds"])
        .map_err(csv_err)?;
    for p in &curve.points {
        wtr.serialize(CsvRow {
            control: p.control,
            sigma2_over_n: p.sigma2_over_n,
            stderr: p.stderr,
            n_seeds: p.n_seeds,
        })
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Parse curve rows; `n_agents` of each point is set to `n`.
pub fn read_curve_csv<R: Read>(input: R, source: &str, n: usize) -> Result<(GameKind, Vec<PhasePoint>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| parse_error(source, 1, e.to_string()))?
        .clone();
    let kind = match headers.get(0) {
        Some("control") => GameKind::Mg,
        Some("alpha_ns") => GameKind::Gcmg,
        other => return Err(parse_error(source, 1, format!("unexpected first column {other:?}"))),
    };
    let mut points = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_error(source, line, e.to_string()))?;
        let field = |col: usize| -> Result<f64> {
            record
                .get(col)
                .ok_or_else(|| parse_error(source, line, format!("missing column {col}")))?
                .parse::<f64>()
                .map_err(|e| parse_error(source, line, e.to_string()))
        };
        let n_seeds = record
            .get(3)
            .ok_or_else(|| parse_error(source, line, "missing n_seeds".into()))?
            .parse::<usize>()
            .map_err(|e| parse_error(source, line, e.to_string()))?;
        points.push(PhasePoint {
            control: field(0)?,
            sigma2_over_n: field(1)?,
            stderr: field(2)?,
            n_seeds,
            n_agents: n,
        });
    }
    if points.is_empty() {
        return Err(Error::Empty(format!("{source}: phase curve has no rows")));
    }
    Ok((kind, points))
}

fn parse_error(path: &str, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message,
    }
}

/// Write `<stem>.csv` and `<stem>.json` next to each other.
pub fn save_curve(curve: &PhaseCurve, csv_path: &Path, json_path: &Path) -> Result<()> {
    let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    write_curve_csv(curve, std::io::BufWriter::new(file))?;
    let json = serde_json::to_string_pretty(&Sidecar::from_curve(curve))?;
    std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))
}

/// Load a curve; the critical point comes from the sidecar as written.
pub fn load_curve(csv_path: &Path, json_path: &Path) -> Result<PhaseCurve> {
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let side: Sidecar = serde_json::from_str(&text)?;
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let (kind, mut points) = read_curve_csv(file, &csv_path.display().to_string(), side.n)?;
    if kind != side.kind {
        return Err(Error::Config(format!(
            "{} is a {} curve but its sidecar says {}",
            csv_path.display(),
            kind.label(),
            side.kind.label()
        )));
    }
    points.sort_by(|a, b| a.control.total_cmp(&b.control));
    let control = side.alpha_c.or(side.alpha_ns_c);
    let critical = match (control, side.sigma_c) {
        (Some(control), Some(sigma_c)) => {
            let index = side
                .critical_index
                .or_else(|| points.iter().position(|p| p.control == control))
                .ok_or_else(|| Error::Config("critical control is not a curve node".into()))?;
            Some(CriticalPoint {
                control,
                sigma_c,
                index,
                per_n: side.per_n_c.unwrap_or(points[index].sigma2_over_n),
                interior: side.interior.unwrap_or(false),
                control_stderr: side.control_c_stderr.unwrap_or(0.0),
            })
        }
        _ => None,
    };
    Ok(PhaseCurve {
        meta: CurveMeta {
            kind,
            n: side.n,
            gamma: side.gamma,
            w: side.w,
            l: side.l,
            n_p: side.n_p,
            epsilon: side.epsilon,
        },
        points,
        critical,
    })
}
