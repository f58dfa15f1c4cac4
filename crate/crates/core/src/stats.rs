//! Sample summaries and the chi-square goodness-of-fit test used by the
//! Monte Carlo oracles.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl Estimate {
    /// Mean and standard error, summed in sample order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            estimate: mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
        }
    }

    /// `|estimate - exact| <= k stderr`, with a round-off floor for
    /// zero-variance samples.
    pub fn agrees(&self, exact: f64, k: f64) -> bool {
        let floor = 1e-12 * (1.0 + exact.abs());
        (self.estimate - exact).abs() <= k * self.stderr + floor
    }

    pub fn z_score(&self, exact: f64) -> f64 {
        let d = self.estimate - exact;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d.abs() <= 1e-12 * (1.0 + exact.abs()) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `counts` against cell probabilities `probs`. Cells with an
/// expected count below 5 are pooled, smallest first, until every cell
/// reaches 5.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if counts.len() != probs.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    let mass: f64 = probs.iter().sum();
    if total == 0 || !(mass > 0.0) {
        return Err(Error::Invalid("chi-square needs samples and positive mass".into()));
    }
    let nf = total as f64;
    let mut cells: Vec<(f64, f64)> = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64, nf * p / mass))
        .collect();
    cells.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (i, &(c, e)) in cells.iter().enumerate() {
        acc.0 += c;
        acc.1 += e;
        let rest: f64 = cells[i + 1..].iter().map(|x| x.1).sum();
        if acc.1 >= 5.0 || rest == 0.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    let mut statistic = 0.0;
    for &(c, e) in &pooled {
        if e > 0.0 {
            statistic += (c - e).powi(2) / e;
        } else if c > 0.0 {
            statistic = f64::INFINITY;
        }
    }
    let dof = pooled.len().saturating_sub(1);
    let p_value = if dof == 0 {
        if statistic.is_finite() {
            1.0
        } else {
            0.0
        }
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Invalid(e.to_string()))?;
        1.0 - dist.cdf(statistic)
    };
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Aitken's delta-squared on the last three terms; falls back to the last
/// term when the second difference vanishes.
pub fn aitken(seq: &[f64]) -> Option<f64> {
    if seq.len() < 3 {
        return seq.last().copied();
    }
    let k = seq.len();
    let (a, b, c) = (seq[k - 3], seq[k - 2], seq[k - 1]);
    let denom = (c - b) - (b - a);
    if denom.abs() <= 1e-300 || !denom.is_finite() {
        return Some(c);
    }
    Some(c - (c - b).powi(2) / denom)
}

/// Richardson extrapolation for a sequence sampled at `h_n = 2^{-n}` whose
/// error is `sum_k c_k h_n^{p_k}`: eliminates one known exponent per pass,
/// so `exps.len() + 1` trailing terms are used.
pub fn richardson(seq: &[f64], exps: &[f64]) -> Option<f64> {
    let tail = &seq[seq.len().saturating_sub(exps.len() + 1)..];
    let mut t = tail.to_vec();
    for &p in exps {
        if t.len() < 2 {
            break;
        }
        let r = 0.5f64.powf(p);
        t = t.windows(2).map(|w| (w[1] - r * w[0]) / (1.0 - r)).collect();
    }
    t.last().copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_removes_known_powers() {
        let seq: Vec<f64> = (1..=8)
            .map(|n| {
                let h = 0.5f64.powi(n);
                0.3 + 2.0 * h.powf(0.25) - h.powf(1.25)
            })
            .collect();
        assert!((richardson(&seq, &[0.25, 1.25]).unwrap() - 0.3).abs() < 1e-13);
        assert!((aitken(&seq).unwrap() - 0.3).abs() > 1e-4);
        assert_eq!(richardson(&[], &[1.0]), None);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!((e.estimate, e.stderr), (2.0, 0.0));
        assert!(e.agrees(2.0, 3.0));
        assert!(!e.agrees(2.1, 3.0));
    }

    #[test]
    fn chi_square_exact_counts() {
        let r = chi_square(&[50, 30, 20], &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_known_value() {
        // (60-50)^2/50 + (40-50)^2/50 = 4, one degree of freedom: p = 0.0455
        let r = chi_square(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.04550026).abs() < 1e-6);
    }

    #[test]
    fn small_cells_are_pooled() {
        // the two tiny cells merge into the 0.49 cell
        let r = chi_square(&[100, 1, 0, 99], &[0.5, 0.005, 0.005, 0.49]).unwrap();
        assert_eq!(r.dof, 1);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn aitken_is_exact_on_geometric_tails() {
        let seq: Vec<f64> = (0..6).map(|k| 3.0 + 0.7f64.powi(k)).collect();
        assert!((aitken(&seq).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(aitken(&[1.0, 1.0, 1.0]), Some(1.0));
    }

    #[test]
    fn slope_of_line() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-14);
    }
}
