//! Per-sample weight laws and recent-mass analysis.
//!
//! A weight scheme assigns sample `i` (1-based arrival order) a scalar
//! weight. Three laws are supported:
//!
//! - `uniform`: every sample weighs 1,
//! - `exponential(theta)`: sample `i` weighs `theta^(i-1)`, `theta >= 1`,
//! - `polynomial(k)`: sample `i` weighs `i^k`, `k >= 1`.
//!
//! The interesting quantity for drift adaptation is the proportion of total
//! weight carried by the newest `L` samples of a length-`n` stream. For the
//! exponential law this proportion converges to the stream-length-independent
//! constant `1 - theta^(-L)`, so the newest window keeps a fixed share of
//! influence forever. For the polynomial law the total weight grows like
//! `n^(k+1)/(k+1) + n^k/2 + O(n^(k-1))` (Faulhaber's formula), while the
//! newest-`L` share decays like `(k+1)·L/n`, so the window's influence
//! vanishes as the stream grows. `proportion_recent` computes both by exact
//! or numerically stable summation rather than the asymptotic expansion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample weight law over arrival order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    /// Every sample weighs 1.
    Uniform,
    /// Sample `i` weighs `theta^(i-1)`; newer samples weigh more when
    /// `theta > 1`. `theta = 1` degenerates to the uniform law.
    Exponential { theta: f64 },
    /// Sample `i` weighs `i^k`.
    Polynomial { k: u32 },
}

impl WeightScheme {
    /// Exponential law with validation (`theta >= 1` and finite).
    pub fn exponential(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta < 1.0 {
            return Err(Error::invalid(format!(
                "exponential scheme requires finite theta >= 1, got {theta}"
            )));
        }
        Ok(WeightScheme::Exponential { theta })
    }

    /// Polynomial law with validation (`k >= 1`).
    pub fn polynomial(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("polynomial scheme requires k >= 1"));
        }
        Ok(WeightScheme::Polynomial { k })
    }

    /// Re-checks the invariants of an already constructed scheme
    /// (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightScheme::Uniform => Ok(()),
            WeightScheme::Exponential { theta } => Self::exponential(theta).map(|_| ()),
            WeightScheme::Polynomial { k } => Self::polynomial(k).map(|_| ()),
        }
    }

    /// Weight of the `i`-th sample, 1-based.
    pub fn weight_at(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Err(Error::invalid("sample index is 1-based; got 0"));
        }
        Ok(match *self {
            WeightScheme::Uniform => 1.0,
            WeightScheme::Exponential { theta } => theta.powi((i - 1) as i32),
            WeightScheme::Polynomial { k } => (i as f64).powi(k as i32),
        })
    }

    /// Proportion of total weight held by the newest `l` samples of a
    /// length-`n` stream: `p = (sum of w_i, i = n-l+1..n) / (sum of w_i, i = 1..n)`.
    ///
    /// Exponential uses the closed geometric form
    /// `p = (1 - theta^(-l)) / (1 - theta^(-n))`, evaluated through `exp_m1`
    /// so it stays accurate when `theta - 1` is tiny. Polynomial sums are
    /// exact in integer arithmetic while they fit `u128` and fall back to
    /// compensated floating summation beyond.
    pub fn proportion_recent(&self, n: usize, l: usize) -> Result<ProportionReport> {
        if l == 0 || n == 0 {
            return Err(Error::invalid("proportion_recent requires n >= 1 and l >= 1"));
        }
        if l > n {
            return Err(Error::invalid(format!(
                "window l = {l} exceeds stream length n = {n}"
            )));
        }
        let (p, limit) = match *self {
            WeightScheme::Uniform => (l as f64 / n as f64, None),
            WeightScheme::Exponential { theta } => {
                if theta == 1.0 {
                    (l as f64 / n as f64, Some(0.0))
                } else {
                    let ln_theta = theta.ln();
                    // 1 - theta^(-x) = -expm1(-x ln theta), accurate for small ln theta.
                    let num = -(-(l as f64) * ln_theta).exp_m1();
                    let den = -(-(n as f64) * ln_theta).exp_m1();
                    ((num / den).min(1.0), Some(num))
                }
            }
            WeightScheme::Polynomial { k } => {
                let p = match (
                    sum_powers_exact(n - l + 1, n, k),
                    sum_powers_exact(1, n, k),
                ) {
                    (Some(recent), Some(all)) => recent as f64 / all as f64,
                    _ => {
                        sum_powers_compensated(n - l + 1, n, k)
                            / sum_powers_compensated(1, n, k)
                    }
                };
                (p, Some(0.0))
            }
        };
        Ok(ProportionReport { n, l, p, limit })
    }
}

/// Result of a recent-mass computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    /// Stream length.
    pub n: usize,
    /// Window length (newest `l` samples).
    pub l: usize,
    /// Share of total weight in the window, in `[0, 1]`.
    pub p: f64,
    /// Limit of `p` as `n` grows with `l` fixed: `1 - theta^(-l)` for the
    /// exponential law, `0` for the polynomial law, `None` for uniform
    /// (no fixed limit other than the trivial `l/n -> 0`).
    pub limit: Option<f64>,
}

/// Limiting proportion of the newest `l` samples under the exponential law:
/// `1 - theta^(-l)`. Requires `theta > 1`; at `theta = 1` the limit
/// degenerates to 0 and carries no calibration information.
pub fn limit_proportion(theta: f64, l: usize) -> Result<f64> {
    if !theta.is_finite() || theta <= 1.0 {
        return Err(Error::invalid(format!(
            "limit proportion requires theta > 1, got {theta}"
        )));
    }
    if l == 0 {
        return Err(Error::invalid("window length l must be >= 1"));
    }
    Ok(-(-(l as f64) * theta.ln()).exp_m1())
}

/// Smallest exponential base giving the newest `l` samples an asymptotic
/// share `alpha` of the total weight: `theta = (1 - alpha)^(-1/l)`.
///
/// Inverse of [`limit_proportion`]; always returns `theta > 1` for
/// `alpha` in (0, 1).
pub fn calibrate_theta(alpha: f64, l: usize) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::invalid(format!(
            "target proportion must lie strictly inside (0, 1), got {alpha}"
        )));
    }
    if l == 0 {
        return Err(Error::invalid("window length l must be >= 1"));
    }
    // (1 - alpha)^(-1/l) = exp(-ln(1 - alpha) / l), with ln1p for accuracy
    // near alpha = 0.
    Ok((-(-alpha).ln_1p() / l as f64).exp())
}

/// Exact `sum_{i=from..=to} i^k` in u128, or `None` on overflow.
fn sum_powers_exact(from: usize, to: usize, k: u32) -> Option<u128> {
    let mut acc: u128 = 0;
    for i in from..=to {
        let mut term: u128 = 1;
        for _ in 0..k {
            term = term.checked_mul(i as u128)?;
        }
        acc = acc.checked_add(term)?;
    }
    Some(acc)
}

/// Neumaier-compensated `sum_{i=from..=to} i^k` for ranges whose exact sum
/// does not fit u128.
fn sum_powers_compensated(from: usize, to: usize, k: u32) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in from..=to {
        let term = (i as f64).powi(k as i32);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
