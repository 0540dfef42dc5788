use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mgmarket::calibrate::{calibrate_chain, calibrate_w, ingest_chain, ingest_vol_index, CalibrationResult, FitMode};
use mgmarket::engine::{estimate_sigma, run_trajectory, Windows};
use mgmarket::phase::{
    load_curve, mg_grid, save_curve, sweep_phase_gcmg_resumable, sweep_resumable, GcmgSweepSpec, PhaseCurve, PhasePoint,
    SweepOptions, WindowPolicy,
};
use mgmarket::pricer::{call_price, d_plus, game_nu, implied_nu, GameVarianceParams, PricingInput};
use mgmarket::rng::{substream, Substream};
use mgmarket::sde::{draw_states, integrate_y, price_path_continuum, price_path_discrete, risk_neutral_terminal, Diffusion, SdeSpec, TerminalSummary};
use mgmarket::{generate_strategies, Execution, GameConfig, GameKind};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::fail::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::{
    parse_grid, CalibrateArgs, Cli, Command, FigureArgs, FitModeArg, ImpliedArgs, KindArg, PathModeArg, PriceArgs,
    SimulateArgs, SweepArgs, TerminalArgs,
};

pub fn run(cli: &Cli) -> CliResult<()> {
    let out = &cli.out_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    match &cli.command {
        Command::Sweep(a) => sweep(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Terminal(a) => terminal(a, out),
        Command::Price(a) => price(a, out),
        Command::Implied(a) => implied(a, out),
        Command::Calibrate(a) => calibrate(a, out),
        Command::Figure(a) => figure(a, out),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn finish(m: ManifestBuilder, out: &Path, stem: &str) -> CliResult<()> {
    let path = m.finish(out, stem)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PartialRow {
    control: f64,
    sigma2_over_n: f64,
    stderr: f64,
    n_seeds: usize,
    n_agents: usize,
}

impl From<&PhasePoint> for PartialRow {
    fn from(p: &PhasePoint) -> Self {
        Self {
            control: p.control,
            sigma2_over_n: p.sigma2_over_n,
            stderr: p.stderr,
            n_seeds: p.n_seeds,
            n_agents: p.n_agents,
        }
    }
}

fn read_partial(path: &Path) -> CliResult<Vec<PhasePoint>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (k, row) in rdr.deserialize::<PartialRow>().enumerate() {
        let row = row.map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), k + 2)))?;
        points.push(PhasePoint {
            control: row.control,
            sigma2_over_n: row.sigma2_over_n,
            stderr: row.stderr,
            n_seeds: row.n_seeds,
            n_agents: row.n_agents,
        });
    }
    Ok(points)
}

fn base_config(path: Option<&PathBuf>) -> CliResult<Option<GameConfig>> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingInput(format!("{}: not found", p.display())));
            }
            Ok(Some(GameConfig::load(p)?))
        }
        None => Ok(None),
    }
}

fn sweep(a: &SweepArgs, out: &Path) -> CliResult<()> {
    let base = base_config(a.config.as_ref())?;
    let gamma = a.gamma.or(base.as_ref().map(|c| c.gamma)).unwrap_or(1.0);
    let w = a.w.or(base.as_ref().map(|c| c.w)).unwrap_or(1.0);
    let seed = a.seed.or(base.as_ref().map(|c| c.seed)).unwrap_or(0);
    let activation = base.as_ref().map(|c| c.activation).unwrap_or_default();
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let opts = SweepOptions {
        seeds: a.seeds,
        windows: WindowPolicy {
            burn_per_state: a.burn_per_state,
            measure_per_state: a.measure_per_state,
            ..WindowPolicy::default()
        },
        execution: if a.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let stem = a.name.clone().unwrap_or_else(|| match a.kind {
        KindArg::Mg => format!("mg_N{}", a.n),
        KindArg::Gcmg => format!("gcmg_L{}_eps{}", a.l, a.epsilon),
    });
    let grid = match a.kind {
        KindArg::Mg => parse_grid(&a.alpha, "alpha")?,
        KindArg::Gcmg => parse_grid(&a.n_s, "ns")?,
    };
    let partial = out.join(format!("{stem}.partial.csv"));
    let resume = if a.resume && partial.exists() {
        read_partial(&partial)?
    } else {
        Vec::new()
    };
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(
            std::fs::OpenOptions::new()
                .create(true)
                .append(!resume.is_empty())
                .write(true)
                .truncate(resume.is_empty())
                .open(&partial)
                .map_err(|e| CliError::io(&partial, e))?,
        );
    if resume.is_empty() {
        wtr.write_record(["control", "sigma2_over_n", "stderr", "n_seeds", "n_agents"])
            .and_then(|_| wtr.flush().map_err(Into::into))
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let wtr = Mutex::new(wtr);
    let on_point = |p: &PhasePoint| {
        let mut w = wtr.lock().expect("partial writer");
        let _ = w.serialize(PartialRow::from(p));
        let _ = w.flush();
    };

    let mut m = ManifestBuilder::new("sweep", a, Some(seed));
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    let curve: PhaseCurve = match a.kind {
        KindArg::Mg => {
            let configs: Vec<GameConfig> = mg_grid(a.n, &grid, gamma, w, seed)
                .into_iter()
                .map(|c| c.with_activation(activation))
                .collect();
            sweep_resumable(&configs, &opts, &resume, &on_point)?
        }
        KindArg::Gcmg => {
            let mut spec = GcmgSweepSpec::new(a.l, a.n_p, a.epsilon, grid);
            spec.gamma = gamma;
            spec.w = w;
            spec.seed = seed;
            spec.activation = activation;
            let s = sweep_phase_gcmg_resumable(&spec, &opts, &resume, &on_point)?;
            let grid_path = out.join(format!("{stem}.grid.json"));
            write_json(&grid_path, &s.grid)?;
            m.output(&grid_path);
            s.curve
        }
    };
    drop(wtr);
    let (csv_path, json_path) = (out.join(format!("{stem}.csv")), out.join(format!("{stem}.json")));
    save_curve(&curve, &csv_path, &json_path)?;
    let _ = std::fs::remove_file(&partial);
    m.output(&csv_path);
    m.output(&json_path);
    match curve.critical {
        Some(c) => println!(
            "{} points; critical {} = {:.6} (sigma_c {:.6}, interior {})",
            curve.points.len(),
            curve.control_label(),
            c.control,
            c.sigma_c,
            c.interior
        ),
        None => println!("{} points; no critical point detected", curve.points.len()),
    }
    finish(m, out, &stem)
}

fn simulate(a: &SimulateArgs, out: &Path) -> CliResult<()> {
    let cfg = base_config(Some(&a.config))?.expect("config given");
    let table = generate_strategies(&cfg)?;
    let burn = a.burn_in.unwrap_or(200 * cfg.p);
    let stem = a.name.clone().unwrap_or_else(|| format!("{}_path", cfg.kind.label()));
    let path = match a.mode {
        PathModeArg::Discrete => {
            let traj = run_trajectory(&cfg, &table, burn, a.steps, 0)?;
            price_path_discrete(&traj.attendance, &cfg, a.p0)?
        }
        PathModeArg::Continuum => {
            let est = estimate_sigma(&cfg, &table, Windows::for_states(cfg.p).at_least(burn, 0))?;
            let spec = SdeSpec::from_game(&cfg, &table, est.sigma2_n)?;
            let dt = a.dt.unwrap_or(0.01 / cfg.gamma);
            let y0 = DVector::zeros(spec.dim());
            let mut wiener = substream(cfg.seed, Substream::Wiener, 0);
            let y = integrate_y(&spec, &y0, a.steps as f64 * dt, dt, Diffusion::On, &mut wiener)?;
            let mus = draw_states(cfg.seed, 1, table.p(), y.y.len() - 1);
            price_path_continuum(&spec, &y, &mus, &table, a.p0)?
        }
    };
    let file = out.join(format!("{stem}.csv"));
    let f = File::create(&file).map_err(|e| CliError::io(&file, e))?;
    path.write_csv(BufWriter::new(f)).map_err(|e| CliError::io(&file, e))?;
    let mut m = ManifestBuilder::new("simulate", a, Some(cfg.seed));
    m.input(&a.config)?;
    m.output(&file);
    println!("terminal log return {:.6e} over {} steps", path.terminal_log_return(), path.times.len() - 1);
    finish(m, out, &stem)
}

#[derive(Serialize)]
struct TerminalRecord {
    spot: f64,
    rate: f64,
    theta: f64,
    nu: f64,
    #[serde(flatten)]
    summary: TerminalSummary,
}

fn terminal(a: &TerminalArgs, out: &Path) -> CliResult<()> {
    let samples = risk_neutral_terminal(a.spot, a.rate, a.theta, a.nu, a.samples, a.seed, Execution::Parallel)?;
    let rec = TerminalRecord {
        spot: a.spot,
        rate: a.rate,
        theta: a.theta,
        nu: a.nu,
        summary: TerminalSummary::from_samples(&samples, a.seed),
    };
    let stem = a.name.clone().unwrap_or_else(|| "terminal".into());
    let file = out.join(format!("{stem}.json"));
    write_json(&file, &rec)?;
    println!("{}", serde_json::to_string(&rec).expect("record"));
    let mut m = ManifestBuilder::new("terminal", a, Some(a.seed));
    m.output(&file);
    finish(m, out, &stem)
}

#[derive(Serialize)]
struct PriceRecord {
    spot: f64,
    strike: f64,
    rate: f64,
    theta: f64,
    nu: f64,
    price: f64,
    d: Option<f64>,
}

fn price(a: &PriceArgs, out: &Path) -> CliResult<()> {
    let nu = match a.nu {
        Some(nu) => nu,
        None => {
            let missing = || CliError::Usage("give --nu or all of --control, --sigma2-N, --w and --N".into());
            game_nu(&GameVarianceParams {
                kind: match a.kind {
                    KindArg::Mg => GameKind::Mg,
                    KindArg::Gcmg => GameKind::Gcmg,
                },
                control: a.control.ok_or_else(missing)?,
                sigma2_n: a.sigma2_n.ok_or_else(missing)?,
                w: a.w.ok_or_else(missing)?,
                n: a.n.ok_or_else(missing)?,
            })?
        }
    };
    let inp = PricingInput {
        spot: a.market.spot,
        strike: a.market.strike,
        rate: a.market.rate,
        theta: a.market.theta,
        nu,
    };
    let c = call_price(&inp)?;
    let rec = PriceRecord {
        spot: inp.spot,
        strike: inp.strike,
        rate: inp.rate,
        theta: inp.theta,
        nu,
        price: c,
        d: (nu > 0.0).then(|| d_plus(&inp)),
    };
    let stem = a.name.clone().unwrap_or_else(|| "price".into());
    let file = out.join(format!("{stem}.json"));
    write_json(&file, &rec)?;
    println!("{}", serde_json::to_string(&rec).expect("record"));
    let mut m = ManifestBuilder::new("price", a, None);
    m.output(&file);
    finish(m, out, &stem)
}

#[derive(Serialize)]
struct ImpliedRecord {
    spot: f64,
    strike: f64,
    rate: f64,
    theta: f64,
    price: f64,
    nu: f64,
    implied_vol: f64,
}

fn implied(a: &ImpliedArgs, out: &Path) -> CliResult<()> {
    let inp = PricingInput {
        spot: a.market.spot,
        strike: a.market.strike,
        rate: a.market.rate,
        theta: a.market.theta,
        nu: 0.0,
    };
    let nu = implied_nu(a.price, &inp)?;
    let rec = ImpliedRecord {
        spot: inp.spot,
        strike: inp.strike,
        rate: inp.rate,
        theta: inp.theta,
        price: a.price,
        nu,
        implied_vol: nu.sqrt(),
    };
    let stem = a.name.clone().unwrap_or_else(|| "implied".into());
    let file = out.join(format!("{stem}.json"));
    write_json(&file, &rec)?;
    println!("{}", serde_json::to_string(&rec).expect("record"));
    let mut m = ManifestBuilder::new("implied", a, None);
    m.output(&file);
    finish(m, out, &stem)
}

#[derive(Serialize)]
struct CalibrationRecord<'a> {
    #[serde(flatten)]
    result: &'a CalibrationResult,
    min_market_vol: f64,
}

fn calibrate(a: &CalibrateArgs, out: &Path) -> CliResult<()> {
    let sidecar = a.sidecar.clone().unwrap_or_else(|| a.curve.with_extension("json"));
    for p in [&a.chain, &a.vol_index, &a.curve, &sidecar] {
        if !p.exists() {
            return Err(CliError::MissingInput(format!("{}: not found", p.display())));
        }
    }
    let curve = load_curve(&a.curve, &sidecar)?;
    let chain = ingest_chain(&a.chain)?;
    let series = ingest_vol_index(&a.vol_index)?;
    let n = a.n.unwrap_or(curve.meta.n);
    let mode = match a.mode {
        FitModeArg::Flat => FitMode::Flat,
        FitModeArg::MaturityScaled => FitMode::MaturityScaled {
            time_scale: a.time_scale,
            n_min: a.n_min,
        },
    };
    let w = calibrate_w(&series, &curve, n)?;
    let result = calibrate_chain(&chain, &curve, w, n, mode)?;
    let file = out.join(format!("{}.json", a.name));
    write_json(
        &file,
        &CalibrationRecord {
            result: &result,
            min_market_vol: series.min_value,
        },
    )?;
    println!(
        "w_bar {:.6e}, fitted control {:.6} (critical gap {:.6}), sse {:.3e}",
        result.w_bar, result.fitted_control, result.critical_gap, result.sse
    );
    let mut m = ManifestBuilder::new("calibrate", a, None);
    for p in [&a.chain, &a.vol_index, &a.curve, &sidecar] {
        m.input(p)?;
    }
    m.output(&file);
    finish(m, out, &a.name)
}

fn figure(a: &FigureArgs, out: &Path) -> CliResult<()> {
    let rows = crate::figure::rows(a)?;
    let stem = a.name.clone().unwrap_or_else(|| format!("figure{}", a.id));
    let file = out.join(format!("{stem}.csv"));
    crate::figure::write(&file, &rows)?;
    let mut m = ManifestBuilder::new("figure", a, None);
    for p in a.curves.iter().chain(&a.results) {
        m.input(p)?;
    }
    m.output(&file);
    println!("{} rows", rows.len());
    finish(m, out, &stem)
}
