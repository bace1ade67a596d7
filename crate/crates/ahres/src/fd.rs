//! Finite-difference weights.

/// Fornberg's algorithm: weights `w[m][j]` such that
/// `f⁽ᵐ⁾(x0) ≈ Σⱼ w[m][j] f(nodes[j])` for `m = 0..=max_order`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Symmetric stencil `x0 + k·step`, `k = -half..=half`.
pub fn symmetric_nodes(x0: f64, step: f64, half: usize) -> Vec<f64> {
    (-(half as i64)..=half as i64).map(|k| x0 + k as f64 * step).collect()
}

/// Taylor coefficients `f⁽ᵐ⁾(x0)/m!` for `m = 0..=max_order` from a
/// symmetric stencil of `2·half + 1` samples.
pub fn taylor_coefficients<F: FnMut(f64) -> f64>(mut f: F, x0: f64, step: f64, half: usize, max_order: usize) -> Vec<f64> {
    let nodes = symmetric_nodes(x0, step, half);
    let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    let w = fornberg_weights(x0, &nodes, max_order);
    let mut fact = 1.0;
    (0..=max_order)
        .map(|m| {
            if m > 0 {
                fact *= m as f64;
            }
            w[m].iter().zip(&values).map(|(a, b)| a * b).sum::<f64>() / fact
        })
        .collect()
}
