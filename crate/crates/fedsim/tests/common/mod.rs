//! Shared oracles for the integration suites. These stay independent of the
//! library's gradient implementations: finite differences only touch the
//! objective value.

use fedsim::numerics::ParamVector;
use fedsim::problems::Objective;

/// Central-difference gradient of the deterministic objective value.
#[allow(dead_code)]
pub fn central_difference_gradient(p: &dyn Objective, x: &ParamVector, h: f64) -> ParamVector {
    let d = p.dim();
    let mut g = vec![0.0; d];
    for (j, slot) in g.iter_mut().enumerate() {
        let mut plus = x.clone();
        plus.0[j] += h;
        let mut minus = x.clone();
        minus.0[j] -= h;
        *slot = (p.value(&plus) - p.value(&minus)) / (2.0 * h);
    }
    ParamVector::from_vec(g)
}

#[allow(dead_code)]
pub fn rel_err(a: &ParamVector, b: &ParamVector) -> f64 {
    let diff: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b
        .as_slice()
        .iter()
        .map(|y| y * y)
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    diff / scale
}

/// Least-squares slope of ln(y) against ln(x).
#[allow(dead_code)]
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Runs one criterion closure and prints a single pass/fail line.
#[allow(dead_code)]
pub fn criterion(name: &str, f: impl FnOnce() -> Result<(), String>) {
    match f() {
        Ok(()) => println!("ACCEPTANCE {name}: PASS"),
        Err(msg) => {
            println!("ACCEPTANCE {name}: FAIL - {msg}");
            panic!("{name}: {msg}");
        }
    }
}
