#![allow(dead_code)]

/// Discounted call payoff integrated against the lognormal law of the
/// terminal price with composite Simpson from `z*` to far in the tail, where
/// `z*` is the exercise kink (`K` reached). Independent of any closed form.
pub fn call_by_quadrature(spot: f64, strike: f64, rate: f64, theta: f64, nu: f64) -> f64 {
    let disc = (-rate * theta).exp();
    let drift = (rate - 0.5 * nu) * theta;
    let sd = (nu * theta).sqrt();
    if sd == 0.0 {
        return (spot * (drift).exp() - strike).max(0.0) * disc;
    }
    let kink = ((strike / spot).ln() - drift) / sd;
    let lo = kink.max(-12.0);
    let hi = (lo + 12.0).max(12.0);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        let payoff = (spot * (drift + sd * z).exp() - strike).max(0.0);
        payoff * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + k as f64 * h);
    }
    disc * s * h / 3.0
}

/// Classical fourth-order Runge–Kutta for `y' = f(y)` on a fine grid.
pub fn rk4<F: Fn(&[f64]) -> Vec<f64>>(f: F, y0: &[f64], horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let mut y = y0.to_vec();
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, d)| x + c * d).collect() };
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, 0.5 * h));
        let k3 = f(&add(&y, &k2, 0.5 * h));
        let k4 = f(&add(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Mean and standard error from `batches` contiguous batch means.
pub fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&v[b * len..(b + 1) * len])).collect();
    (mean(v), (var(&means) / batches as f64).sqrt())
}
