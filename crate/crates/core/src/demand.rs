//! Discrete demand distributions and first-order loss functions.
//!
//! Demand is always an integer-valued random variable with finite support
//! `0..=max_value`. The same kernel feeds the dynamic program, the exact plan
//! evaluator and the piecewise-linear bounds used by the MILP builder.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Tolerance on the total mass of a user-supplied pmf.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("pmf is empty")]
    Empty,
    #[error("pmf entry {index} is {value}, probabilities must be finite and non-negative")]
    InvalidProbability { index: usize, value: f64 },
    #[error("pmf sums to {sum}, expected 1 within {PMF_SUM_TOLERANCE}")]
    NotNormalized { sum: f64 },
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
}

/// Probability mass function over the integers `0..=max_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DemandDistribution {
    pmf: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DemandDistribution {
    type Error = DemandError;

    fn try_from(pmf: Vec<f64>) -> Result<Self, Self::Error> {
        DemandDistribution::from_pmf(pmf)
    }
}

impl From<DemandDistribution> for Vec<f64> {
    fn from(d: DemandDistribution) -> Self {
        d.pmf
    }
}

impl DemandDistribution {
    pub fn from_pmf(mut pmf: Vec<f64>) -> Result<Self, DemandError> {
        if pmf.is_empty() {
            return Err(DemandError::Empty);
        }
        if let Some((index, &value)) = pmf.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(DemandError::InvalidProbability { index, value });
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(DemandError::NotNormalized { sum });
        }
        while pmf.len() > 1 && pmf[pmf.len() - 1] == 0.0 {
            pmf.pop();
        }
        Ok(Self { pmf })
    }

    /// Builds a distribution from non-negative weights, normalizing them.
    fn from_weights(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        while weights.len() > 1 && weights[weights.len() - 1] == 0.0 {
            weights.pop();
        }
        Self { pmf: weights }
    }

    pub fn point_mass(value: u32) -> Self {
        let mut pmf = vec![0.0; value as usize + 1];
        pmf[value as usize] = 1.0;
        Self { pmf }
    }

    /// Poisson(mean) restricted to `0..=truncate_at` and renormalized.
    pub fn truncated_poisson(mean: f64, truncate_at: u32) -> Result<Self, DemandError> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(DemandError::InvalidParameter(format!(
                "poisson mean must be finite and non-negative, got {mean}"
            )));
        }
        // Unnormalized terms m^k / k!; the e^{-m} factor cancels in the normalization.
        let mut weights = Vec::with_capacity(truncate_at as usize + 1);
        let mut term = 1.0;
        weights.push(term);
        for k in 1..=truncate_at {
            term *= mean / k as f64;
            weights.push(term);
        }
        Ok(Self::from_weights(weights))
    }

    /// Normal(mean, sd) discretized onto multiples of `bucket_width`.
    ///
    /// Mass below the first half-bucket is folded onto zero and the upper tail is
    /// cut at six standard deviations before renormalizing.
    pub fn discretized_normal(mean: f64, sd: f64, bucket_width: u32) -> Result<Self, DemandError> {
        if bucket_width == 0 {
            return Err(DemandError::InvalidParameter("bucket width must be positive".into()));
        }
        if !(sd.is_finite() && sd > 0.0 && mean.is_finite()) {
            return Err(DemandError::InvalidParameter(format!(
                "normal demand needs finite mean and positive sd, got ({mean}, {sd})"
            )));
        }
        let normal = Normal::new(mean, sd).map_err(|e| DemandError::InvalidParameter(e.to_string()))?;
        let width = bucket_width as f64;
        let upper = (mean + 6.0 * sd).max(0.0);
        let buckets = (upper / width).ceil() as usize;
        let mut weights = vec![0.0; buckets * bucket_width as usize + 1];
        for j in 0..=buckets {
            let hi = normal.cdf((j as f64 + 0.5) * width);
            let lo = if j == 0 { 0.0 } else { normal.cdf((j as f64 - 0.5) * width) };
            weights[j * bucket_width as usize] = (hi - lo).max(0.0);
        }
        Ok(Self::from_weights(weights))
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max_value(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn prob(&self, value: u32) -> f64 {
        self.pmf.get(value as usize).copied().unwrap_or(0.0)
    }

    /// Support points with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(k, p)| (k as u32, *p))
    }

    pub fn support_size(&self) -> usize {
        self.pmf.iter().filter(|p| **p > 0.0).count()
    }

    pub fn is_deterministic(&self) -> bool {
        self.support_size() == 1
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pmf.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p).sum()
    }

    /// Exact distribution of the sum of two independent demands.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut pmf = vec![0.0; self.pmf.len() + other.pmf.len() - 1];
        for (i, a) in self.pmf.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.pmf.iter().enumerate() {
                pmf[i + j] += a * b;
            }
        }
        Self { pmf }
    }

    /// Distributions of cumulative demand `d_1 + ... + d_t` for every prefix.
    pub fn cumulative(periods: &[DemandDistribution]) -> Vec<DemandDistribution> {
        let mut out: Vec<DemandDistribution> = Vec::with_capacity(periods.len());
        for d in periods {
            let next = match out.last() {
                Some(prev) => prev.convolve(d),
                None => d.clone(),
            };
            out.push(next);
        }
        out
    }

    /// First-order loss `E[max(d - q, 0)]`.
    pub fn loss(&self, q: f64) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| p * (k as f64 - q).max(0.0)).sum()
    }

    /// Complementary first-order loss `E[max(q - d, 0)]`.
    pub fn complementary_loss(&self, q: f64) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| p * (q - k as f64).max(0.0)).sum()
    }

    /// `P(d > q)`, the negated right derivative of the loss function at `q`.
    pub fn tail_above(&self, q: f64) -> f64 {
        self.pmf.iter().enumerate().filter(|(k, _)| *k as f64 > q).map(|(_, p)| p).sum()
    }

    /// Inverse-CDF sampling from a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        for (k, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u32;
            }
        }
        // Rounding can leave the cumulative mass a hair below one.
        self.support().last().map(|(k, _)| k).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Expected shortage `E[max(d - q, 0)]`.
    Loss,
    /// Expected leftover `E[max(q - d, 0)]`.
    Complementary,
}

/// One affine piece `slope * q + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn at(&self, q: f64) -> f64 {
        self.slope * q + self.intercept
    }
}

/// Convex piecewise-linear lower bound of a loss function.
///
/// Stored as the upper envelope of its supporting lines, sorted by slope.
/// Every line touches the exact function somewhere, so every line is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearLoss {
    pub kind: LossKind,
    pub lines: Vec<Line>,
    /// Kinks of the envelope as `(q, value)`, strictly increasing in `q`.
    pub breakpoints: Vec<(f64, f64)>,
    /// Largest pointwise distance to the exact function.
    pub max_gap: f64,
}

impl PiecewiseLinearLoss {
    pub fn segment_count(&self) -> usize {
        self.lines.len()
    }

    pub fn value(&self, q: f64) -> f64 {
        self.lines.iter().map(|l| l.at(q)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the line attaining the envelope at `q` (lowest index on ties).
    pub fn active_line(&self, q: f64) -> usize {
        let mut best = 0;
        for (i, l) in self.lines.iter().enumerate() {
            if l.at(q) > self.lines[best].at(q) + 1e-12 {
                best = i;
            }
        }
        best
    }
}

fn tangent_to_loss(dist: &DemandDistribution, q: f64) -> Line {
    let slope = -dist.tail_above(q);
    Line { slope, intercept: dist.loss(q) - slope * q }
}

/// Sorts, dedups and intersects supporting lines into their upper envelope.
fn envelope(mut lines: Vec<Line>) -> (Vec<Line>, Vec<(f64, f64)>) {
    lines.sort_by(|a, b| a.slope.total_cmp(&b.slope));
    // Two tangents of a convex function with the same slope are the same line.
    lines.dedup_by(|a, b| (a.slope - b.slope).abs() <= 1e-12);
    let breakpoints = lines
        .windows(2)
        .map(|pair| {
            let q = (pair[1].intercept - pair[0].intercept) / (pair[0].slope - pair[1].slope);
            (q, pair[0].at(q))
        })
        .collect();
    (lines, breakpoints)
}

/// Piecewise-linear under-approximation of the loss (or complementary loss).
///
/// Starts from the tangent at `E[d]` between the asymptotes `E[d] - q` and `0`.
/// Each further segment adds the tangent at the envelope kink farthest below
/// the exact function, so a finer approximation contains every line of a
/// coarser one.
pub fn piecewise_linearize(dist: &DemandDistribution, segments: usize, kind: LossKind) -> PiecewiseLinearLoss {
    let segments = segments.max(1);
    let support = dist.support_size();
    let regions = if segments > support {
        if support > 1 {
            log::warn!("{segments} segments requested for a support of {support} points, clamping");
        }
        support
    } else {
        segments
    };

    let mean = dist.mean();
    let gap_at =
        |lines: &[Line], q: f64| dist.loss(q) - lines.iter().map(|l| l.at(q)).fold(f64::NEG_INFINITY, f64::max);
    let (mut lines, mut breakpoints) = envelope(vec![
        Line { slope: -1.0, intercept: mean },
        Line { slope: 0.0, intercept: 0.0 },
        tangent_to_loss(dist, mean),
    ]);
    for _ in 1..regions {
        let worst = breakpoints.iter().map(|b| (b.0, gap_at(&lines, b.0))).max_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((q, gap)) if gap > 1e-12 => {
                lines.push(tangent_to_loss(dist, q));
                (lines, breakpoints) = envelope(lines);
            }
            _ => break,
        }
    }

    // Exact and approximate functions are both piecewise linear, so the gap is
    // maximal at a kink of one of them.
    let max_gap = (0..=dist.max_value())
        .map(f64::from)
        .chain(breakpoints.iter().map(|b| b.0))
        .map(|q| gap_at(&lines, q))
        .fold(0.0, f64::max);

    if kind == LossKind::Complementary {
        // L^(q) = L(q) + q - E[d]
        for l in &mut lines {
            l.slope += 1.0;
            l.intercept -= mean;
        }
        for b in &mut breakpoints {
            b.1 += b.0 - mean;
        }
    }

    PiecewiseLinearLoss { kind, lines, breakpoints, max_gap }
}
