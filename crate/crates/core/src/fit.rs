//! Least-squares slope fitting for decay- and growth-rate experiments.

/// Result of a straight-line fit y = slope * x + intercept.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of a ~95% confidence interval on the slope
    /// (twice the standard error).
    pub half_width: f64,
    /// Set when the y-sequence is not monotone along increasing x.
    pub non_monotone: bool,
}

/// Ordinary least squares on (x, y) pairs; panics on fewer than 3 points.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> SlopeFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 3, "slope fit needs at least 3 points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let dof = (xs.len() - 2).max(1) as f64;
    let se = (ss_res / dof / sxx).sqrt();

    let increasing = ys.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let decreasing = ys.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    SlopeFit {
        slope,
        intercept,
        half_width: 2.0 * se,
        non_monotone: !(increasing || decreasing),
    }
}

/// Convenience: fit log(y) against log(x).
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> SlopeFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_slope(&lx, &ly)
}
