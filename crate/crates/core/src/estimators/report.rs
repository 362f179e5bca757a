//! Per-cloud estimator output.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::{EstimatorKind, EstimatorParams, PointEstimate};

/// Pointwise estimates over a cloud plus evaluation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LidReport {
    pub kind: EstimatorKind,
    pub params: EstimatorParams,
    pub estimates: Vec<f64>,
    pub true_lid: Option<Vec<u32>>,
    pub score_evals: Vec<u64>,
    pub jvp_evals: Vec<u64>,
    pub runtime_ms: f64,
}

impl LidReport {
    pub fn new(
        kind: EstimatorKind,
        params: EstimatorParams,
        points: Vec<PointEstimate>,
        true_lid: Option<Vec<u32>>,
        runtime_ms: f64,
    ) -> Self {
        let negative = points.iter().filter(|p| p.value < 0.0).count();
        if negative > 0 {
            log::warn!("{}: {negative} negative estimates", kind.name());
        }
        Self {
            kind,
            params,
            estimates: points.iter().map(|p| p.value).collect(),
            true_lid,
            score_evals: points.iter().map(|p| p.score_evals).collect(),
            jvp_evals: points.iter().map(|p| p.jvp_evals).collect(),
            runtime_ms,
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.estimates.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// Sample standard deviation (`N − 1` normalization).
    pub fn stddev(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.estimates.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Standard error of [`LidReport::mean`].
    pub fn standard_error(&self) -> f64 {
        self.stddev() / (self.len().max(1) as f64).sqrt()
    }

    /// Mean absolute error against the labels, when present.
    pub fn mae(&self) -> Option<f64> {
        let labels = self.true_lid.as_ref()?;
        if labels.len() != self.len() || labels.is_empty() {
            return None;
        }
        let total: f64 = self
            .estimates
            .iter()
            .zip(labels)
            .map(|(e, &t)| (e - f64::from(t)).abs())
            .sum();
        Some(total / self.len() as f64)
    }

    pub fn negative_count(&self) -> usize {
        self.estimates.iter().filter(|v| **v < 0.0).count()
    }

    pub fn total_score_evals(&self) -> u64 {
        self.score_evals.iter().sum()
    }

    pub fn total_jvp_evals(&self) -> u64 {
        self.jvp_evals.iter().sum()
    }

    /// `point_index,estimate,true_lid,score_evals,jvp_evals`; an unlabeled
    /// cloud leaves `true_lid` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_index,estimate,true_lid,score_evals,jvp_evals\n");
        for i in 0..self.len() {
            let label = self
                .true_lid
                .as_ref()
                .and_then(|l| l.get(i))
                .map(|t| t.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{i},{},{label},{},{}",
                self.estimates[i], self.score_evals[i], self.jvp_evals[i]
            );
        }
        out
    }

    fn params_json(&self) -> Value {
        match self.kind {
            EstimatorKind::Mle { k } | EstimatorKind::TwoNn { k } => json!({ "k": k }),
            _ => serde_json::to_value(&self.params).unwrap_or(Value::Null),
        }
    }

    /// JSON summary. Wall time is reported as 0 unless `include_timing`, so
    /// that summaries of identical runs are byte-identical.
    pub fn summary(&self, include_timing: bool) -> Value {
        json!({
            "estimator": self.kind.name(),
            "params": self.params_json(),
            "n_points": self.len(),
            "mae": self.mae(),
            "mean": self.mean(),
            "stddev": self.stddev(),
            "negative_estimates": self.negative_count(),
            "score_evals": self.total_score_evals(),
            "jvp_evals": self.total_jvp_evals(),
            "runtime_ms": if include_timing { self.runtime_ms } else { 0.0 },
        })
    }
}
