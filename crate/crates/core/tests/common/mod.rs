//! Oracles shared by the integration suites.
#![allow(dead_code)]

/// Weighted least-squares projection onto nondecreasing sequences by
/// enumerating every partition into consecutive blocks.
pub fn isotonic_brute_force(y: &[f64], w: &[f64]) -> Vec<f64> {
    let d = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << (d - 1)) {
        let mut fit = vec![0.0; d];
        let mut start = 0;
        for i in 0..d {
            let cut = i == d - 1 || mask & (1 << i) != 0;
            if cut {
                let (sw, swy) = (start..=i).fold((0.0, 0.0), |(a, b), k| (a + w[k], b + w[k] * y[k]));
                for v in &mut fit[start..=i] {
                    *v = swy / sw;
                }
                start = i + 1;
            }
        }
        if fit.windows(2).any(|p| p[1] < p[0]) {
            continue;
        }
        let obj: f64 = (0..d).map(|k| w[k] * (y[k] - fit[k]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, fit));
        }
    }
    best.expect("the single-block fit is always feasible").1
}

pub fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub fn wnorm(w: &[f64], a: &[f64]) -> f64 {
    wdot(w, a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}
