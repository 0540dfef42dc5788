//! Tidy plot data (`series,x,y`) for each figure.

use std::path::{Path, PathBuf};

use mgmarket::calibrate::CalibrationResult;
use mgmarket::phase::load_curve;
use mgmarket::GameKind;

use crate::fail::{CliError, CliResult};
use crate::FigureArgs;

pub struct Row {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

fn row(series: impl Into<String>, x: f64, y: f64) -> Row {
    Row {
        series: series.into(),
        x,
        y,
    }
}

fn load_result(path: &PathBuf) -> CliResult<CalibrationResult> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn xs_for(a: &FigureArgs, count: usize) -> CliResult<Vec<f64>> {
    if a.xs.is_empty() {
        return Ok((1..=count).map(|k| k as f64).collect());
    }
    if a.xs.len() != count {
        return Err(CliError::Usage(format!("{} --x values for {count} results", a.xs.len())));
    }
    Ok(a.xs.clone())
}

fn need_results(a: &FigureArgs) -> CliResult<Vec<CalibrationResult>> {
    if a.results.is_empty() {
        return Err(CliError::MissingInput(format!("figure {} needs at least one --result", a.id)));
    }
    a.results.iter().map(load_result).collect()
}

pub fn rows(a: &FigureArgs) -> CliResult<Vec<Row>> {
    let mut out = Vec::new();
    match a.id {
        1 => {
            if a.curves.is_empty() {
                return Err(CliError::MissingInput("figure 1 needs at least one --curve".into()));
            }
            for path in &a.curves {
                let curve = load_curve(path, &path.with_extension("json"))?;
                let label = match curve.meta.kind {
                    GameKind::Mg => format!("mg N={}", curve.meta.n),
                    GameKind::Gcmg => format!("gcmg eps={}", curve.meta.epsilon.unwrap_or(0.0)),
                };
                for p in &curve.points {
                    out.push(row(label.clone(), p.control, p.sigma2_over_n));
                }
            }
        }
        2 => {
            let results = need_results(a)?;
            let xs = xs_for(a, results.len())?;
            for (r, &x) in results.iter().zip(&xs) {
                out.push(row("fitted", x, r.fitted_control));
                out.push(row("critical", x, r.alpha_c));
            }
        }
        3..=7 => {
            let results = need_results(a)?;
            for r in &results {
                let mut fits = r.per_option.clone();
                fits.sort_by(|p, q| {
                    q.quote
                        .moneyness()
                        .total_cmp(&p.quote.moneyness())
                        .then(p.quote.maturity_years.total_cmp(&q.quote.maturity_years))
                });
                for f in &fits {
                    let m = (f.quote.moneyness() * 1e4).round() / 1e4;
                    out.push(row(format!("market m={m}"), f.quote.maturity_years, f.quote.market_iv));
                    out.push(row(format!("game m={m}"), f.quote.maturity_years, f.model_iv));
                }
            }
        }
        8 => {
            let results = need_results(a)?;
            let xs = xs_for(a, results.len())?;
            for (r, &x) in results.iter().zip(&xs) {
                out.push(row("w_bar", x, r.w_bar));
                out.push(row("w_unrescaled", x, r.w_unrescaled));
            }
        }
        other => return Err(CliError::Usage(format!("unknown figure {other}"))),
    }
    Ok(out)
}

pub fn write(path: &Path, rows: &[Row]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::MissingInput(format!("{}: {e}", path.display()));
    wtr.write_record(["series", "x", "y"]).map_err(err)?;
    for r in rows {
        wtr.write_record([r.series.clone(), r.x.to_string(), r.y.to_string()]).map_err(err)?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}
