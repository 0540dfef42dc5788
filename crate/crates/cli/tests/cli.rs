use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgmarket::calibrate::{write_chain, FitMode, SyntheticChain, ANCHOR_MIN_VOL};
use mgmarket::phase::{save_curve, CurveMeta, PhaseCurve, PhasePoint};
use mgmarket::GameKind;
use serde_json::Value;

const N: usize = 101;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgmarket"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn norm_cdf(x: f64) -> f64 {
    // Taylor series for erf, ample at these arguments
    let z = x / std::f64::consts::SQRT_2;
    let mut term = z;
    let mut sum = z;
    for k in 1..200 {
        term *= -z * z / k as f64;
        sum += term / (2 * k + 1) as f64;
    }
    0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
}

fn curve() -> PhaseCurve {
    let alphas = [0.05, 0.08, 0.13, 0.2, 0.32, 0.5, 0.8, 1.3, 2.0, 3.2, 5.0, 8.0];
    let values = [6.7, 4.0, 1.9, 0.6, 0.16, 0.2, 0.33, 0.5, 0.64, 0.74, 0.81, 0.86];
    let pts = alphas
        .iter()
        .zip(values)
        .map(|(&a, v)| PhasePoint {
            control: a,
            sigma2_over_n: v,
            stderr: 0.01,
            n_seeds: 8,
            n_agents: N,
        })
        .collect();
    PhaseCurve::new(
        CurveMeta {
            kind: GameKind::Mg,
            n: N,
            gamma: 1.0,
            w: 1.0,
            l: None,
            n_p: None,
            epsilon: None,
        },
        pts,
    )
}

/// Curve files, a noiseless chain generated at `control`, and a vol index.
fn fixtures(dir: &Path, control: f64) -> (PathBuf, PathBuf, PathBuf) {
    let c = curve();
    let crit = c.critical.unwrap();
    let w_bar = crit.control.sqrt() * crit.sigma_c / (N as f64 * ANCHOR_MIN_VOL);
    let curve_csv = dir.join("curve.csv");
    save_curve(&c, &curve_csv, &dir.join("curve.json")).unwrap();
    let chain = SyntheticChain::default().generate(control, &c, w_bar, N, FitMode::Flat).unwrap();
    let chain_csv = dir.join("chain.csv");
    write_chain(&chain, std::fs::File::create(&chain_csv).unwrap()).unwrap();
    let vol = dir.join("vol_index.csv");
    std::fs::write(&vol, format!("date,level\n2024-01-02,0.1520\n2024-01-03,{ANCHOR_MIN_VOL}\n2024-01-04,0.1301\n")).unwrap();
    (chain_csv, vol, curve_csv)
}

#[test]
fn price_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["price", "--spot", "100", "--strike", "100", "--rate", "0.02", "--theta", "1", "--nu", "0.04"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("price.json"));
    let (s, k, r, t, nu): (f64, f64, f64, f64, f64) = (100.0, 100.0, 0.02, 1.0, 0.04);
    let sd = (nu * t).sqrt();
    let d1 = ((s / k).ln() + r * t + 0.5 * nu * t) / sd;
    let expect = s * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d1 - sd);
    let got = v["price"].as_f64().unwrap();
    assert!((got - expect).abs() <= 1e-10 * expect, "{got} vs {expect}");
    assert!(dir.path().join("price.manifest.json").exists());
}

#[test]
fn price_from_game_parameters_equals_explicit_nu() {
    let dir = tempfile::tempdir().unwrap();
    let market = ["--spot", "100", "--strike", "95", "--rate", "0.01", "--theta", "0.5"];
    let mut a = vec!["price", "--name", "game"];
    a.extend(market);
    a.extend(["--kind", "mg", "--control", "2", "--sigma2-N", "30", "--w", "1", "--N", "101"]);
    assert_eq!(code(&run(dir.path(), &a)), 0);
    let nu = 2.0 * 30.0 / (101.0f64 * 101.0);
    let nu_s = nu.to_string();
    let mut b = vec!["price", "--name", "direct", "--nu", &nu_s];
    b.extend(market);
    assert_eq!(code(&run(dir.path(), &b)), 0);
    let g = json(&dir.path().join("game.json"));
    let d = json(&dir.path().join("direct.json"));
    assert!((g["nu"].as_f64().unwrap() - nu).abs() <= 1e-15);
    assert!((g["price"].as_f64().unwrap() - d["price"].as_f64().unwrap()).abs() <= 1e-12);
}

#[test]
fn zero_variance_gives_discounted_intrinsic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["price", "--spot", "100", "--strike", "90", "--rate", "0.02", "--theta", "1", "--nu", "0"]);
    assert_eq!(code(&o), 0);
    let got = json(&dir.path().join("price.json"))["price"].as_f64().unwrap();
    let expect = 100.0 - 90.0 * (-0.02f64).exp();
    assert!((got - expect).abs() <= 1e-12);
}

#[test]
fn implied_round_trip_and_arbitrage_exit() {
    let dir = tempfile::tempdir().unwrap();
    let p = run(dir.path(), &["price", "--spot", "100", "--strike", "110", "--rate", "0.03", "--theta", "2", "--nu", "0.09"]);
    assert_eq!(code(&p), 0);
    let price = json(&dir.path().join("price.json"))["price"].as_f64().unwrap().to_string();
    let o = run(dir.path(), &["implied", "--spot", "100", "--strike", "110", "--rate", "0.03", "--theta", "2", "--price", &price]);
    assert_eq!(code(&o), 0);
    let nu = json(&dir.path().join("implied.json"))["nu"].as_f64().unwrap();
    assert!((nu - 0.09).abs() <= 1e-8 * 0.09, "{nu}");

    let bad = run(dir.path(), &["implied", "--spot", "100", "--strike", "100", "--rate", "0.02", "--theta", "1", "--price", "101"]);
    assert_eq!(code(&bad), 4);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["sweep", "--kind", "mg", "--alpha", "4:1:5"])), 2);
    assert_eq!(code(&run(dir.path(), &["sweep", "--kind", "mg", "--alpha", "0:1:5"])), 2);
    assert_eq!(code(&run(dir.path(), &["sweep", "--kind", "mg", "--alpha", "garbage"])), 2);
    assert_eq!(code(&run(dir.path(), &["figure", "--id", "9"])), 2);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 2);
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["calibrate", "--chain", "nope.csv", "--vol-index", "nope2.csv", "--curve", "nope3.csv"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&run(d, &["figure", "--id", "3"])), 3);
    assert_eq!(code(&run(d, &["figure", "--id", "1"])), 3);
}

fn small_sweep(out: &Path, extra: &[&str]) -> Output {
    let mut a = vec!["sweep", "--kind", "mg", "--N", "21", "--alpha", "0.1:4:6", "--seeds", "2", "--measure-per-state", "100", "--seed", "11"];
    a.extend_from_slice(extra);
    run(out, &a)
}

#[test]
fn sweep_writes_curve_sidecar_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = small_sweep(d, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("mg_N21.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "control,sigma2_over_N,stderr,n_seeds");
    assert_eq!(csv.lines().count(), 7);
    let side = json(&d.join("mg_N21.json"));
    for key in ["alpha_c", "sigma_c", "N", "gamma", "w"] {
        assert!(side.get(key).is_some(), "sidecar lacks {key}");
    }
    let man = json(&d.join("mg_N21.manifest.json"));
    for key in ["command", "config_digest", "seed", "started_at", "finished_at", "outputs", "tool_version"] {
        assert!(man.get(key).is_some(), "manifest lacks {key}");
    }
    assert!(!d.join("mg_N21.partial.csv").exists());
}

#[test]
fn gcmg_sweep_labels_alpha_ns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["sweep", "--kind", "gcmg", "--L", "400", "--ns", "0.5:20:4", "--seeds", "2", "--eps", "-0.01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("gcmg_L400_eps-0.01.csv")).unwrap();
    assert!(csv.starts_with("alpha_ns,sigma2_over_N,stderr,n_seeds"));
    let side = json(&d.join("gcmg_L400_eps-0.01.json"));
    for key in ["alpha_ns_c", "sigma_c", "L", "n_p", "epsilon"] {
        assert!(side.get(key).is_some(), "sidecar lacks {key}");
    }
}

#[test]
fn resumed_sweep_matches_full_run() {
    let full = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_sweep(full.path(), &[])), 0);
    let reference = std::fs::read_to_string(full.path().join("mg_N21.csv")).unwrap();

    // a partial file holding the first three points, as left by an interrupted run
    let part = tempfile::tempdir().unwrap();
    let lines: Vec<&str> = reference.lines().collect();
    let mut partial = String::from("control,sigma2_over_n,stderr,n_seeds,n_agents\n");
    for l in &lines[1..4] {
        partial.push_str(&format!("{l},21\n"));
    }
    std::fs::write(part.path().join("mg_N21.partial.csv"), partial).unwrap();
    let o = small_sweep(part.path(), &["--resume"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(part.path().join("mg_N21.csv")).unwrap(), reference);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_sweep(a.path(), &[])), 0);
    assert_eq!(code(&small_sweep(b.path(), &["--sequential"])), 0);
    for f in ["mg_N21.csv", "mg_N21.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let cfg = a.path().join("mg.toml");
    std::fs::write(&cfg, "kind = \"mg\"\nn = 21\np = 42\nseed = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    for mode in ["discrete", "continuum"] {
        assert_eq!(code(&run(a.path(), &["simulate", "--config", cfg, "--mode", mode, "--steps", "300", "--name", "x"])), 0);
        assert_eq!(code(&run(b.path(), &["simulate", "--config", cfg, "--mode", mode, "--steps", "300", "--name", "x"])), 0);
        assert_eq!(std::fs::read(a.path().join("x.csv")).unwrap(), std::fs::read(b.path().join("x.csv")).unwrap(), "{mode}");
    }
}

#[test]
fn simulate_writes_price_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("mg.toml");
    std::fs::write(&cfg, "kind = \"mg\"\nn = 21\np = 42\nseed = 5\n").unwrap();
    let o = run(d, &["simulate", "--config", cfg.to_str().unwrap(), "--steps", "500", "--p0", "50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stem = std::fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let text = std::fs::read_to_string(stem).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time,log_price");
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 50f64.ln()]);
    assert_eq!(text.lines().count(), 502);
}

#[test]
fn terminal_summary_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["terminal", "--spot", "100", "--rate", "0.02", "--theta", "1", "--nu", "0.04", "--samples", "200000", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let v = json(&dir.path().join("terminal.json"));
    let mean = v["mean"].as_f64().unwrap();
    let var = v["variance"].as_f64().unwrap();
    assert_eq!(v["count"].as_u64(), Some(200_000));
    assert_eq!(v["seed"].as_u64(), Some(3));
    let forward = 100.0 * 0.02f64.exp();
    let se = (var / 200_000.0).sqrt();
    assert!((mean - forward).abs() <= 5.0 * se, "{mean} vs {forward}");
}

#[test]
fn calibrate_recovers_synthetic_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let target = (0.8f64 * 1.3).sqrt();
    let (chain, vol, curve) = fixtures(d, target);
    let o = run(
        d,
        &["calibrate", "--chain", chain.to_str().unwrap(), "--vol-index", vol.to_str().unwrap(), "--curve", curve.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.join("calibration.json"));
    assert!((r["fitted_control"].as_f64().unwrap() - target).abs() <= 1e-6);
    assert!(r["critical_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(r["per_option"].as_array().unwrap().len(), 18);
    assert!(r["digests"]["chain_sha256"].as_str().unwrap().len() == 64);
    let alpha_c = 0.5f64;
    let sigma_c = (N as f64 * 0.2).sqrt();
    let w_bar = alpha_c.sqrt() * sigma_c / (N as f64 * ANCHOR_MIN_VOL);
    assert!((r["w_bar"].as_f64().unwrap() - w_bar).abs() <= 1e-14 * w_bar);
    let man = json(&d.join("calibration.manifest.json"));
    assert_eq!(man["inputs"].as_array().unwrap().len(), 4);

    // figure data from the result
    let res = d.join("calibration.json");
    let o = run(d, &["figure", "--id", "3", "--result", res.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fig = std::fs::read_to_string(d.join("figure3.csv")).unwrap();
    assert_eq!(fig.lines().next().unwrap(), "series,x,y");
    assert_eq!(fig.lines().count(), 1 + 36);
    let o = run(d, &["figure", "--id", "8", "--result", res.to_str().unwrap(), "--x", "101"]);
    assert_eq!(code(&o), 0);
    let fig = std::fs::read_to_string(d.join("figure8.csv")).unwrap();
    assert!(fig.contains("w_unrescaled,101,"));
}

#[test]
fn figure_one_from_two_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&small_sweep(d, &[])), 0);
    let o = run(d, &["sweep", "--kind", "gcmg", "--L", "400", "--ns", "0.5:20:4", "--seeds", "2"]);
    assert_eq!(code(&o), 0);
    let a = d.join("mg_N21.csv");
    let b = d.join("gcmg_L400_eps0.01.csv");
    let o = run(d, &["figure", "--id", "1", "--curve", a.to_str().unwrap(), "--curve", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fig = std::fs::read_to_string(d.join("figure1.csv")).unwrap();
    let series: std::collections::BTreeSet<&str> = fig.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(series.len(), 2);
    assert_eq!(fig.lines().count(), 1 + 6 + 4);
}
