//! Detrended fluctuation analysis and recurrence period density entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfaConfig {
    pub min_window: usize,
    pub max_window: usize,
    pub n_windows: usize,
}

impl Default for DfaConfig {
    fn default() -> Self {
        Self {
            min_window: 50,
            max_window: 1000,
            n_windows: 20,
        }
    }
}

/// Log-spaced, de-duplicated window sizes.
pub fn dfa_window_sizes(cfg: &DfaConfig) -> Vec<usize> {
    let (lo, hi) = ((cfg.min_window as f64).ln(), (cfg.max_window as f64).ln());
    let n = cfg.n_windows.max(2);
    let mut sizes: Vec<usize> = (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp().round() as usize)
        .collect();
    sizes.dedup();
    sizes
}

/// Root-mean-square residual of linearly detrended, non-overlapping windows
/// of the integrated profile.
pub fn dfa_fluctuation(profile: &[f64], n: usize) -> f64 {
    let windows = profile.len() / n;
    let nf = n as f64;
    // t = 0..n-1
    let st = nf * (nf - 1.0) / 2.0;
    let stt = (nf - 1.0) * nf * (2.0 * nf - 1.0) / 6.0;
    let det = nf * stt - st * st;
    let mut rss = 0.0;
    for w in 0..windows {
        let seg = &profile[w * n..(w + 1) * n];
        let (mut sy, mut sty, mut syy) = (0.0, 0.0, 0.0);
        for (t, &y) in seg.iter().enumerate() {
            sy += y;
            sty += t as f64 * y;
            syy += y * y;
        }
        let slope = (nf * sty - st * sy) / det;
        let icpt = (sy - slope * st) / nf;
        // Σ (y - a - b t)^2 expanded.
        let r = syy - 2.0 * icpt * sy - 2.0 * slope * sty
            + nf * icpt * icpt
            + 2.0 * icpt * slope * st
            + slope * slope * stt;
        rss += r.max(0.0);
    }
    (rss / (windows * n) as f64).sqrt()
}

/// Raw DFA scaling exponent α (slope of log F(n) against log n).
pub fn dfa_alpha(x: &[f64], cfg: &DfaConfig) -> Result<f64> {
    if cfg.min_window < 3 || cfg.max_window <= cfg.min_window {
        return Err(Error::invalid("DFA window range is degenerate"));
    }
    if x.len() < cfg.max_window {
        return Err(Error::TooShort(format!(
            "{} samples, DFA needs at least {}",
            x.len(),
            cfg.max_window
        )));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut acc = 0.0;
    let profile: Vec<f64> = x
        .iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect();
    let points: Vec<(f64, f64)> = dfa_window_sizes(cfg)
        .into_iter()
        .map(|n| ((n as f64).ln(), dfa_fluctuation(&profile, n)))
        .filter(|(_, f)| *f > 0.0)
        .map(|(ln_n, f)| (ln_n, f.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::not_computable("signal has no fluctuation"));
    }
    Ok(least_squares_slope(&points))
}

/// DFA exponent mapped into (0, 1) as α / (1 + α).
pub fn dfa(x: &[f64], cfg: &DfaConfig) -> Result<f64> {
    let alpha = dfa_alpha(x, cfg)?;
    Ok(alpha / (1.0 + alpha))
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpdeConfig {
    pub dim: usize,
    pub delay: usize,
    /// Ball radius as a fraction of the peak absolute amplitude.
    pub epsilon: f64,
    /// Longest return searched for, in samples.
    pub horizon: usize,
}

impl Default for RpdeConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            delay: 7,
            epsilon: 0.12,
            horizon: 10_000,
        }
    }
}

/// Close-return periods of the delay embedding. A return is timed at the
/// closest approach of the first excursion back into the ε-ball after the
/// trajectory has left it.
pub fn recurrence_periods(x: &[f64], cfg: &RpdeConfig) -> Result<Vec<usize>> {
    if cfg.dim == 0 || cfg.delay == 0 || !(cfg.epsilon > 0.0) {
        return Err(Error::invalid("RPDE embedding parameters must be positive"));
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 0.0 {
        return Err(Error::not_computable("silent signal has no recurrences"));
    }
    let span = (cfg.dim - 1) * cfg.delay;
    if x.len() <= span + 1 {
        return Err(Error::TooShort("signal shorter than one embedding vector".into()));
    }
    let n = x.len() - span;
    let eps2 = (cfg.epsilon * scale).powi(2);
    let dist2 = |i: usize, j: usize| -> f64 {
        (0..cfg.dim)
            .map(|k| {
                let d = x[i + k * cfg.delay] - x[j + k * cfg.delay];
                d * d
            })
            .sum()
    };

    let mut periods = Vec::new();
    for i in 0..n {
        let limit = (i + cfg.horizon).min(n - 1);
        let mut j = i + 1;
        while j <= limit && dist2(i, j) < eps2 {
            j += 1;
        }
        while j <= limit && dist2(i, j) >= eps2 {
            j += 1;
        }
        if j > limit {
            continue;
        }
        let mut best = j;
        let mut best_d = dist2(i, j);
        j += 1;
        while j <= limit {
            let d = dist2(i, j);
            if d >= eps2 || d > best_d {
                break;
            }
            if d < best_d {
                best = j;
                best_d = d;
            }
            j += 1;
        }
        periods.push(best - i);
    }
    Ok(periods)
}

/// Normalised entropy of the return-period histogram, H / ln(T_max), with
/// T_max the longest observed return.
pub fn rpde(x: &[f64], cfg: &RpdeConfig) -> Result<f64> {
    let periods = recurrence_periods(x, cfg)?;
    let t_max = periods.iter().copied().max().unwrap_or(0);
    if periods.is_empty() {
        return Err(Error::not_computable("no recurrences found"));
    }
    if t_max < 2 {
        return Ok(0.0);
    }
    let mut hist = vec![0usize; t_max + 1];
    for p in &periods {
        hist[*p] += 1;
    }
    let total = periods.len() as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok((h / (t_max as f64).ln()).clamp(0.0, 1.0))
}
