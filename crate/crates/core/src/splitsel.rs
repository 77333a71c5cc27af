//! Impurity-based multinomial selection of split features and split values.
//!
//! Both mechanisms follow the same recipe: min-max normalize the raw impurity
//! decreases to `[0, 1]`, turn them into probabilities with
//! `softmax(B/2 * x)`, and draw one index by inverse CDF. `B = 0` gives a
//! uniform draw and `B = inf` a uniform draw over the maximizers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A non-negative sharpness parameter that may be infinite.
///
/// Infinity is its own variant rather than a large float so that the argmax
/// limit is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Finite(f64),
    Infinite,
}

impl Scale {
    pub const ZERO: Scale = Scale::Finite(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            Err(Error::Domain(format!("scale must be non-negative, got {value}")))
        } else if value.is_infinite() {
            Ok(Scale::Infinite)
        } else {
            Ok(Scale::Finite(value))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Scale::Infinite)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Scale::Finite(v) => v,
            Scale::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Scale::Finite(v) => Some(v),
            Scale::Infinite => None,
        }
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale::ZERO
    }
}

impl From<f64> for Scale {
    /// Panics on negative or NaN input; use [`Scale::new`] for untrusted values.
    fn from(v: f64) -> Self {
        Scale::new(v).expect("invalid scale")
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Scale::Infinite),
            t => {
                let v: f64 = t.parse().map_err(|_| Error::Config(format!("invalid scale {s:?}")))?;
                Scale::new(v)
            }
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Finite(v) => write!(f, "{v}"),
            Scale::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Scale::Finite(v) => s.serialize_f64(*v),
            Scale::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Scale::new(v).map_err(de::Error::custom),
            Raw::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

/// `(v - min) / (max - min)` elementwise; all zeros when every value is equal.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    // NaN ranges fall through here too.
    if range.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / range).collect()
}

/// `softmax(B/2 * x)` with max subtraction. `Scale::Infinite` spreads the
/// mass uniformly over the entries equal to the maximum.
pub fn softmax_scaled(normalized: &[f64], scale: Scale) -> Vec<f64> {
    let m = normalized.len();
    if m == 0 {
        return Vec::new();
    }
    let max = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match scale {
        Scale::Infinite => {
            let ties = normalized.iter().filter(|&&x| x == max).count() as f64;
            normalized
                .iter()
                .map(|&x| if x == max { 1.0 / ties } else { 0.0 })
                .collect()
        }
        Scale::Finite(b) => {
            let half = b / 2.0;
            let weights: Vec<f64> = normalized.iter().map(|&x| (half * (x - max)).exp()).collect();
            let z: f64 = weights.iter().sum();
            weights.into_iter().map(|w| w / z).collect()
        }
    }
}

/// Inverse-CDF draw: index `i` with probability `p[i]`. Zero-mass entries are
/// never returned.
pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    debug_assert!(!probabilities.is_empty());
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            cumulative += p;
            last_positive = i;
            if u < cumulative {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the final cumulative sum
    last_positive
}

/// Feature selection probabilities from the per-feature best decreases.
pub fn feature_probabilities(best_per_feature: &[f64], b1: Scale) -> Vec<f64> {
    softmax_scaled(&normalize(best_per_feature), b1)
}

/// Draws a split feature from `softmax(B1/2 * normalize(I))`, where `I[j]` is
/// the best impurity decrease available on feature `j`.
pub fn select_feature<R: Rng + ?Sized>(best_per_feature: &[f64], b1: Scale, rng: &mut R) -> Result<usize> {
    if best_per_feature.is_empty() {
        return Err(Error::NoChoices);
    }
    Ok(sample_index(&feature_probabilities(best_per_feature, b1), rng))
}

/// Draws a split value index from `softmax(B2/2 * normalize(I_j))` over the
/// decreases of every candidate threshold on the chosen feature.
pub fn select_value<R: Rng + ?Sized>(decreases: &[f64], b2: Scale, rng: &mut R) -> Result<usize> {
    if decreases.is_empty() {
        return Err(Error::NoChoices);
    }
    Ok(sample_index(&softmax_scaled(&normalize(decreases), b2), rng))
}

/// Lower and upper bounds on the probability that any one of `d` features is
/// selected at a node: `1 / (1 + (d-1) e^B1)` and `e^B1 / (e^B1 + d - 1)`.
pub fn feature_probability_bounds(d: usize, b1: f64) -> (f64, f64) {
    let others = d.saturating_sub(1) as f64;
    let e = b1.exp();
    (1.0 / (1.0 + others * e), e / (e + others))
}

/// Lower bound `((N-2)/N) e^{-2 B2}` on the probability that a split value
/// avoids the two outermost of `N` equal-width bins.
pub fn value_region_bound(bins: usize, b2: f64) -> Result<f64> {
    if bins < 3 {
        return Err(Error::Domain(format!("need at least 3 bins, got {bins}")));
    }
    let n = bins as f64;
    Ok((n - 2.0) / n * (-2.0 * b2).exp())
}
