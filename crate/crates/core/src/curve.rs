//! Observation curves and the success condition.
//!
//! A [`Curve`] is the accuracy sequence produced by running one sampled
//! configuration, one value per step. A [`CurveDataset`] is the empirical
//! prior: policies are fitted on it and the simulator samples from it with
//! replacement.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One seed's observation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub id: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

impl Curve {
    pub fn new(id: impl Into<String>, values: Vec<f64>, costs: Option<Vec<f64>>) -> Result<Self> {
        let curve = Curve {
            id: id.into(),
            values,
            costs,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Unit-cost curve.
    pub fn unit(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(id, values, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidCurve(format!("curve {:?} is empty", self.id)));
        }
        if let Some(t) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!(
                "curve {:?} has non-finite value at step {}",
                self.id,
                t + 1
            )));
        }
        if let Some(costs) = &self.costs {
            if costs.len() != self.values.len() {
                return Err(Error::InvalidCurve(format!(
                    "curve {:?} has {} costs for {} values",
                    self.id,
                    costs.len(),
                    self.values.len()
                )));
            }
            if let Some(t) = costs.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::InvalidCurve(format!(
                    "curve {:?} has non-positive cost at step {}",
                    self.id,
                    t + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cost of the observation at 0-based step index `t`.
    #[inline]
    pub fn cost(&self, t: usize) -> f64 {
        match &self.costs {
            Some(costs) => costs[t],
            None => 1.0,
        }
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("curve is non-empty")
    }
}

/// A non-empty collection of curves with distinct ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDataset {
    curves: Vec<Curve>,
    horizon: usize,
}

impl CurveDataset {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::param("dataset has no curves"));
        }
        let mut seen = HashSet::with_capacity(curves.len());
        for curve in &curves {
            curve.validate()?;
            if !seen.insert(curve.id.as_str()) {
                return Err(Error::InvalidCurve(format!(
                    "duplicate curve id {:?}",
                    curve.id
                )));
            }
        }
        let horizon = curves.iter().map(Curve::len).max().unwrap_or(0);
        Ok(CurveDataset { curves, horizon })
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn into_curves(self) -> Vec<Curve> {
        self.curves
    }

    /// Subset of curves by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<CurveDataset> {
        CurveDataset::new(indices.iter().map(|&i| self.curves[i].clone()).collect())
    }

    pub fn final_values(&self) -> Vec<f64> {
        self.curves.iter().map(Curve::final_value).collect()
    }
}

/// Success condition: the first step whose value reaches `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessSpec {
    pub target: f64,
}

impl SuccessSpec {
    pub fn new(target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::param("target must be finite"));
        }
        Ok(SuccessSpec { target })
    }

    #[inline]
    pub fn is_success(&self, value: f64) -> bool {
        value >= self.target
    }
}

/// First 1-based step at which the curve reaches the target.
pub fn success_time(curve: &Curve, spec: &SuccessSpec) -> Option<usize> {
    curve
        .values
        .iter()
        .position(|&v| spec.is_success(v))
        .map(|t| t + 1)
}

/// Per-step lower medians over the curves still running at each step.
pub fn population_medians(dataset: &CurveDataset) -> Vec<f64> {
    let mut column = Vec::with_capacity(dataset.len());
    (0..dataset.horizon())
        .map(|t| {
            column.clear();
            column.extend(
                dataset
                    .curves()
                    .iter()
                    .filter_map(|c| c.values.get(t).copied()),
            );
            column.sort_by(f64::total_cmp);
            column[(column.len() - 1) / 2]
        })
        .collect()
}

/// Nearest-rank percentile (`p` in [0, 100]) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::param(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.saturating_sub(1).min(sorted.len() - 1)])
}
