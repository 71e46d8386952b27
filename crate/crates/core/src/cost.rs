//! Weighted L0/L1/L2 distance between states.
//!
//! Per feature, `p = 0` adds the weight when the value changed, `p = 1` adds
//! `w * |d|` and `p = 2` adds `w * d^2`, with no root taken. For numeric and
//! ordinal features `d` is the raw difference divided by the feature's
//! normalization range; for categorical features `d` is 0 or 1.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::{FeatureKind, Schema, State, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Norm {
    L0,
    L1,
    L2,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L0, Norm::L1, Norm::L2];
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L0 => "L0",
            Norm::L1 => "L1",
            Norm::L2 => "L2",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" | "0" => Ok(Norm::L0),
            "l1" | "1" => Ok(Norm::L1),
            "l2" | "2" => Ok(Norm::L2),
            _ => Err(Error::InvalidConfig(format!("unknown norm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub norm: Norm,
    pub total: f64,
    /// Contribution of each feature, in schema order.
    pub per_feature: Vec<f64>,
}

/// Normalized difference used by L1/L2; categorical features give 0 or 1.
pub fn feature_delta(schema: &Schema, i: usize, a: &State, b: &State) -> f64 {
    let f = schema.feature(i);
    let (x, y) = (a.get(i), b.get(i));
    match f.kind {
        FeatureKind::Categorical => {
            if x == y {
                0.0
            } else {
                1.0
            }
        }
        _ => (y.as_f64() - x.as_f64()) / f.norm_range(),
    }
}

pub(crate) fn weighted_lp_unchecked(
    schema: &Schema,
    s: &State,
    s_prime: &State,
    weights: &Weights,
    norm: Norm,
) -> CostBreakdown {
    let per_feature: Vec<f64> = (0..schema.len())
        .map(|i| {
            let w = weights.get(i);
            match norm {
                Norm::L0 => {
                    if s.get(i) != s_prime.get(i) {
                        w
                    } else {
                        0.0
                    }
                }
                Norm::L1 => w * feature_delta(schema, i, s, s_prime).abs(),
                Norm::L2 => {
                    let d = feature_delta(schema, i, s, s_prime);
                    w * d * d
                }
            }
        })
        .collect();
    CostBreakdown {
        norm,
        total: per_feature.iter().sum(),
        per_feature,
    }
}

pub fn compute_weighted_lp(
    schema: &Schema,
    s: &State,
    s_prime: &State,
    weights: &Weights,
    norm: Norm,
) -> Result<CostBreakdown> {
    schema.check(s)?;
    schema.check(s_prime)?;
    weights.validate(schema)?;
    Ok(weighted_lp_unchecked(schema, s, s_prime, weights, norm))
}

/// Baseline cost that charges every changed feature at its schema weight,
/// whether or not the change was causally induced.
pub fn standard_cost(
    schema: &Schema,
    s: &State,
    s_prime: &State,
    norm: Norm,
) -> Result<CostBreakdown> {
    compute_weighted_lp(schema, s, s_prime, &schema.weights(), norm)
}
