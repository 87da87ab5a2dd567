use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeHistogram {
    pub mode: String,
    pub bins: Vec<HistogramBin>,
}

/// Fixed-width bins over `[0, max]` where `max` is the largest value across
/// all series, so every mode shares the same edges. A series of zeros lands
/// entirely in the first bin.
pub fn shared_histogram(series: &[(String, Vec<f64>)], n_bins: usize) -> Vec<ModeHistogram> {
    let n_bins = n_bins.max(1);
    let max = series
        .iter()
        .flat_map(|(_, xs)| xs.iter().copied())
        .fold(0.0f64, f64::max);
    let upper = if max > 0.0 { max } else { 1.0 };
    let width = upper / n_bins as f64;
    series
        .iter()
        .map(|(mode, xs)| {
            let mut counts = vec![0usize; n_bins];
            for &x in xs {
                let i = ((x / width).floor() as usize).min(n_bins - 1);
                counts[i] += 1;
            }
            ModeHistogram {
                mode: mode.clone(),
                bins: counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, count)| HistogramBin {
                        low: i as f64 * width,
                        high: if i + 1 == n_bins { upper } else { (i + 1) as f64 * width },
                        count,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Linear-interpolated quantile of `xs` (`q` in [0, 1]); `None` when empty.
pub fn quantile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}
