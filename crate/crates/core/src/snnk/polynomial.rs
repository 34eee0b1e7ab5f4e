//! Random features for dot-product kernels `f(xᵀy)` from Taylor series,
//! split into the nonnegative parts `f = f₁ - f₂`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SnnkError};
use crate::rng::stream_rng;

/// Taylor coefficients `a_0..=a_n` of tanh at 0.
pub fn tanh_series_coeffs(n: usize) -> Vec<f64> {
    // tanh' = 1 - tanh²  =>  (k+1) a_{k+1} = [k = 0] - Σ_{i<=k} a_i a_{k-i}
    let mut a = vec![0.0; n + 1];
    for k in 0..n {
        let conv: f64 = (0..=k).map(|i| a[i] * a[k - i]).sum();
        let delta = if k == 0 { 1.0 } else { 0.0 };
        a[k + 1] = (delta - conv) / (k + 1) as f64;
    }
    a
}

/// How degrees are drawn for each feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegreeSampling {
    /// `p(n) ∝ 2^{-(n+1)}` over degrees with a nonzero coefficient.
    #[default]
    Rejection,
    /// `p(n) = 2^{-(n+1)}` over all degrees; features of zero-coefficient
    /// degrees are 0.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSplitKernel {
    pub coeff_pos: Vec<f64>,
    pub coeff_neg: Vec<f64>,
    /// Share Rademacher vectors and degree uniforms between the two parts.
    pub shared: bool,
    pub sampling: DegreeSampling,
}

impl TaylorSplitKernel {
    /// Splits `coeffs` by sign.
    pub fn from_series(coeffs: &[f64]) -> Self {
        TaylorSplitKernel {
            coeff_pos: coeffs.iter().map(|&a| a.max(0.0)).collect(),
            coeff_neg: coeffs.iter().map(|&a| (-a).max(0.0)).collect(),
            shared: true,
            sampling: DegreeSampling::Rejection,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeff_pos.len().max(self.coeff_neg.len()).saturating_sub(1)
    }

    /// `Σ a_n tⁿ` for the full signed series.
    pub fn series_value(&self, t: f64) -> f64 {
        let p: f64 = self.coeff_pos.iter().rev().fold(0.0, |acc, a| acc * t + a);
        let n: f64 = self.coeff_neg.iter().rev().fold(0.0, |acc, a| acc * t + a);
        p - n
    }
}

/// Degree distribution of one part, as `(degree, probability)` pairs.
fn degree_law(coeffs: &[f64], sampling: DegreeSampling) -> Vec<(usize, f64)> {
    let all: Vec<(usize, f64)> = (0..coeffs.len()).map(|n| (n, 0.5f64.powi(n as i32 + 1))).collect();
    match sampling {
        DegreeSampling::Plain => all,
        DegreeSampling::Rejection => {
            let kept: Vec<(usize, f64)> = all.into_iter().filter(|&(n, _)| coeffs[n] > 0.0).collect();
            let z: f64 = kept.iter().map(|p| p.1).sum();
            kept.into_iter().map(|(n, p)| (n, p / z)).collect()
        }
    }
}

/// Inverse CDF; under the plain law, mass beyond the cutoff maps to `None`.
fn pick(law: &[(usize, f64)], u: f64) -> Option<(usize, f64)> {
    let mut acc = 0.0;
    for &(n, p) in law {
        acc += p;
        if u < acc {
            return Some((n, p));
        }
    }
    None
}

/// Features of `x` and `y` for both parts of the split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeatures {
    pub pos_x: Vec<f64>,
    pub pos_y: Vec<f64>,
    pub neg_x: Vec<f64>,
    pub neg_y: Vec<f64>,
}

impl SplitFeatures {
    /// `⟨[Φ₁(x) | Φ₂(x)], [Φ₁(y) | -Φ₂(y)]⟩`.
    pub fn estimate(&self) -> f64 {
        let neg_y: Vec<f64> = self.neg_y.iter().map(|v| -v).collect();
        dot(&self.pos_x, &self.pos_y) + dot(&self.neg_x, &neg_y)
    }

    pub fn estimate_pos(&self) -> f64 {
        dot(&self.pos_x, &self.pos_y)
    }

    pub fn estimate_neg(&self) -> f64 {
        dot(&self.neg_x, &self.neg_y)
    }

    /// Fraction of exactly-zero entries across all four vectors.
    pub fn zero_fraction(&self) -> f64 {
        let all = [&self.pos_x, &self.pos_y, &self.neg_x, &self.neg_y];
        let total: usize = all.iter().map(|v| v.len()).sum();
        let zeros: usize = all.iter().map(|v| v.iter().filter(|&&e| e == 0.0).count()).sum();
        zeros as f64 / total.max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws `num_features` features per part for the pair `(x, y)`.
pub fn kar_karnick_features(k: &TaylorSplitKernel, x: &[f64], y: &[f64], num_features: usize, seed: u64) -> Result<SplitFeatures> {
    if x.len() != y.len() {
        return shape_err(format!("dims {} and {}", x.len(), y.len()));
    }
    if num_features == 0 {
        return Err(SnnkError::InvalidConfig("need at least one feature".into()));
    }
    if k.coeff_pos.iter().chain(&k.coeff_neg).any(|&a| a < 0.0 || !a.is_finite()) {
        return Err(SnnkError::InvalidConfig("split coefficients must be finite and nonnegative".into()));
    }
    let dim = x.len();
    let scale = 1.0 / (num_features as f64).sqrt();
    let laws = [degree_law(&k.coeff_pos, k.sampling), degree_law(&k.coeff_neg, k.sampling)];
    let coeffs = [&k.coeff_pos, &k.coeff_neg];
    let mut out = [(vec![], vec![]), (vec![], vec![])];
    let mut omega = vec![0.0; dim];

    for i in 0..num_features as u64 {
        for part in 0..2 {
            // shared: both parts read the same stream for feature i
            let stream = if k.shared { 0 } else { part as u64 + 1 };
            let mut rng = stream_rng(seed, &[stream, i]);
            let u: f64 = rng.random();
            let (mut fx, mut fy) = (0.0, 0.0);
            if let Some((n, p)) = pick(&laws[part], u) {
                let a = coeffs[part].get(n).copied().unwrap_or(0.0);
                if a > 0.0 {
                    let (mut px, mut py) = (1.0, 1.0);
                    for _ in 0..n {
                        omega.iter_mut().for_each(|w| *w = if rng.random::<bool>() { 1.0 } else { -1.0 });
                        px *= dot(&omega, x);
                        py *= dot(&omega, y);
                    }
                    let c = (a / p).sqrt() * scale;
                    fx = c * px;
                    fy = c * py;
                }
            }
            out[part].0.push(fx);
            out[part].1.push(fy);
        }
    }
    let [(pos_x, pos_y), (neg_x, neg_y)] = out;
    Ok(SplitFeatures { pos_x, pos_y, neg_x, neg_y })
}

/// Unbiased estimate of the truncated series `Σ a_n (xᵀy)ⁿ`.
pub fn kar_karnick_estimate(k: &TaylorSplitKernel, x: &[f64], y: &[f64], num_features: usize, seed: u64) -> Result<f64> {
    Ok(kar_karnick_features(k, x, y, num_features, seed)?.estimate())
}
