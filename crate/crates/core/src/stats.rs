//! Small sample statistics: Kendall's tau, Kolmogorov distance to the
//! uniform law, order-statistic quantiles and log-log rate slopes.

/// Kendall's tau-b in `O(n log n)`.
///
/// Panics if the slices differ in length.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "kendall_tau needs paired samples");
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tied = |run: usize| (run * (run - 1) / 2) as u64;
    let (mut ties_x, mut ties_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1usize, 1usize);
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            run_x += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                run_xy += 1;
            } else {
                ties_xy += tied(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tied(run_x);
            ties_xy += tied(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += tied(run_x);
    ties_xy += tied(run_xy);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut run_y = 1usize;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run_y += 1;
        } else {
            ties_y += tied(run_y);
            run_y = 1;
        }
    }
    ties_y += tied(run_y);

    let total = tied(n);
    let concordant_minus_discordant =
        total as i128 - ties_x as i128 - ties_y as i128 + ties_xy as i128 - 2 * swaps as i128;
    let denom = (((total - ties_x) as f64) * ((total - ties_y) as f64)).sqrt();
    concordant_minus_discordant as f64 / denom
}

/// Merge sort counting strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kolmogorov distance between the empirical cdf of `x` and Uniform(0,1).
pub fn ks_uniform(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Lower order-statistic quantile `sorted[floor((len - 1) q)]`.
///
/// Returns `None` for an empty input.
pub fn lower_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((s.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    Some(s[idx])
}

/// Median under the lower order-statistic convention.
pub fn median(values: &[f64]) -> Option<f64> {
    lower_quantile(values, 0.5)
}

/// Outcome of a log-log slope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slope {
    Fitted(f64),
    /// Some value was zero or negative; no slope is reported.
    Degenerate,
}

impl Slope {
    pub fn value(&self) -> Option<f64> {
        match self {
            Slope::Fitted(s) => Some(*s),
            Slope::Degenerate => None,
        }
    }
}

/// Least-squares slope of `ln value` against `ln n`; needs at least three points.
pub fn rate_slope(points: &[(f64, f64)]) -> crate::Result<Slope> {
    if points.len() < 3 {
        return Err(crate::Error::Usage(format!(
            "a rate slope needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(n, v)| !(n > 0.0) || !(v > 0.0) || !v.is_finite()) {
        return Ok(Slope::Degenerate);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Ok(Slope::Degenerate);
    }
    Ok(Slope::Fitted(sxy / sxx))
}
