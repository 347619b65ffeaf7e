//! Weighted pool-adjacent-violators.

/// Weighted least-squares projection of `y` onto nondecreasing sequences:
/// minimizes `sum w_i (x_i - y_i)^2` subject to `x_1 <= ... <= x_m`.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(y.len(), w.len());
    // Blocks as (weighted sum, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        let mut cur = (wi * yi, wi, 1usize);
        while let Some(&(s, ww, len)) = blocks.last() {
            if s / ww > cur.0 / cur.1 {
                cur = (cur.0 + s, cur.1 + ww, cur.2 + len);
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, ww, len) in blocks {
        out.extend(std::iter::repeat_n(s / ww, len));
    }
    out
}

/// Weighted mean and weighted sum of squared deviations of `y` over a block.
pub(crate) fn block_spread(y: &[f64], w: &[f64]) -> (f64, f64) {
    let tw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / tw;
    let ss = y.iter().zip(w).map(|(a, b)| b * (a - mean) * (a - mean)).sum();
    (mean, ss)
}
