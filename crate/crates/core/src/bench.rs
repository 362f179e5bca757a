//! Grid runner: manifolds × estimators × noise levels × sample counts.
//!
//! Cells are evaluated in grid order and every random draw is keyed by
//! `(seed, purpose, index)`, so the rendered CSV depends only on the config.
//! Wall times are reported as 0 unless timing is requested.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LidError, Result};
use crate::estimators::{estimate_cloud, EstimatorKind, EstimatorParams, LidReport, ScoreField};
use crate::manifolds::{Manifold, ManifoldSpec, PointCloud};
use crate::model::{self, Activation, MLPConfig, MLPModel, SigmaEmbedding, Target, TrainConfig};
use crate::oracle::{oracle_for_cloud, OracleKind};

pub const CSV_HEADER: &str =
    "manifold,d,n,estimator,sigma,m,mae,mean,stddev,score_evals,jvp_evals,runtime_ms";

fn default_sigmas() -> Vec<f64> {
    vec![0.01, 0.02, 0.05]
}

fn default_ms() -> Vec<usize> {
    vec![8]
}

fn default_width() -> usize {
    256
}

fn default_depth() -> usize {
    4
}

/// Network and training settings for trained-model benches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_embedding")]
    pub embedding: SigmaEmbedding,
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_activation() -> Activation {
    Activation::Silu
}
fn default_embedding() -> SigmaEmbedding {
    SigmaEmbedding::Sinusoidal(16)
}
fn default_target() -> Target {
    Target::Epsilon
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            width: default_width(),
            depth: default_depth(),
            activation: default_activation(),
            embedding: default_embedding(),
            target: default_target(),
            train: TrainConfig::default(),
        }
    }
}

impl ModelSpec {
    pub fn config(&self, n: usize) -> MLPConfig {
        MLPConfig {
            n,
            width: self.width,
            depth: self.depth,
            activation: self.activation,
            embedding: self.embedding,
            target: self.target,
        }
    }
}

/// Where the score field of each manifold comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    Oracle(OracleKind),
    Mlp(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub manifolds: Vec<ManifoldSpec>,
    /// Estimator names as accepted by [`EstimatorKind::parse`], e.g. `dsm`,
    /// `flipd`, `mle_k50`.
    pub estimators: Vec<String>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_ms")]
    pub m: Vec<usize>,
    /// Required only when a parametric estimator is listed.
    #[serde(default)]
    pub field: Option<FieldSource>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn kinds(&self) -> Result<Vec<EstimatorKind>> {
        self.estimators
            .iter()
            .map(|e| EstimatorKind::parse(e, 50))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifolds.is_empty() || self.estimators.is_empty() {
            return Err(LidError::Param("bench grid is empty".into()));
        }
        for spec in &self.manifolds {
            spec.validate()?;
        }
        let kinds = self.kinds()?;
        if kinds.iter().any(|k| k.is_parametric()) {
            if self.sigmas.is_empty() || self.m.is_empty() {
                return Err(LidError::Param(
                    "sigma and m grids must be non-empty".into(),
                ));
            }
            if self.field.is_none() {
                return Err(LidError::Param(
                    "parametric estimators need a `field` source".into(),
                ));
            }
            for &s in &self.sigmas {
                EstimatorParams::new(s).validate()?;
            }
            if self.m.contains(&0) {
                return Err(LidError::Param("m must be >= 1".into()));
            }
        }
        if let Some(FieldSource::Mlp(spec)) = &self.field {
            spec.train.validate()?;
            spec.config(1).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub mae: f64,
    pub mean: f64,
    pub stddev: f64,
    pub score_evals: u64,
    pub jvp_evals: u64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub manifold: String,
    pub d: usize,
    pub n: usize,
    pub estimator: String,
    /// Absent for nearest-neighbor estimators.
    pub sigma: Option<f64>,
    pub m: Option<usize>,
    pub outcome: std::result::Result<CellStats, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Training loss traces by manifold label.
    pub loss_traces: Vec<(String, Vec<f64>)>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let stats = match &r.outcome {
                Ok(s) => format!(
                    "{},{},{},{},{},{}",
                    s.mae,
                    s.mean,
                    s.stddev,
                    s.score_evals,
                    s.jvp_evals,
                    if include_timing { s.runtime_ms } else { 0.0 }
                ),
                Err(_) => "NaN,NaN,NaN,0,0,0".to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{stats}",
                r.manifold,
                r.d,
                r.n,
                r.estimator,
                opt(r.sigma),
                opt(r.m)
            );
        }
        out
    }

    /// Column label of a row in the rendered table.
    fn column(r: &BenchRow) -> String {
        match (r.sigma, r.m) {
            (Some(s), Some(m)) => format!("{} σ={s} m={m}", r.estimator),
            _ => r.estimator.clone(),
        }
    }

    /// MAE table with one line per manifold, one column per estimator
    /// setting, and a final `Average` line.
    pub fn render_table(&self) -> String {
        let mut columns: Vec<String> = Vec::new();
        let mut lines: Vec<String> = Vec::new();
        for r in &self.rows {
            let c = Self::column(r);
            if !columns.contains(&c) {
                columns.push(c);
            }
            let label = format!("{} (d={}, n={})", r.manifold, r.d, r.n);
            if !lines.contains(&label) {
                lines.push(label);
            }
        }
        let cell = |line: &str, col: &str| -> Option<&BenchRow> {
            self.rows.iter().find(|r| {
                format!("{} (d={}, n={})", r.manifold, r.d, r.n) == line && Self::column(r) == col
            })
        };
        let first = lines
            .iter()
            .map(|l| l.chars().count())
            .max()
            .unwrap_or(0)
            .max(7);
        let widths: Vec<usize> = columns.iter().map(|c| c.chars().count().max(6)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", "manifold");
        for (c, w) in columns.iter().zip(&widths) {
            let _ = write!(out, " | {c:>w$}");
        }
        out.push('\n');
        let rule = first + widths.iter().map(|w| w + 3).sum::<usize>();
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        let mut sums = vec![(0.0, 0usize); columns.len()];
        for line in &lines {
            let _ = write!(out, "{line:<first$}");
            for (j, (c, w)) in columns.iter().zip(&widths).enumerate() {
                let text = match cell(line, c).map(|r| &r.outcome) {
                    Some(Ok(s)) => {
                        sums[j].0 += s.mae;
                        sums[j].1 += 1;
                        format!("{:.2}", s.mae)
                    }
                    Some(Err(_)) => "fail".to_string(),
                    None => "-".to_string(),
                };
                let _ = write!(out, " | {text:>w$}");
            }
            out.push('\n');
        }
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        let _ = write!(out, "{:<first$}", "Average");
        for ((total, count), w) in sums.iter().zip(&widths) {
            let text = if *count > 0 {
                format!("{:.2}", total / *count as f64)
            } else {
                "-".to_string()
            };
            let _ = write!(out, " | {text:>w$}");
        }
        out.push('\n');
        out
    }

    /// Mean MAE of the successful rows of one estimator.
    pub fn average_mae(&self, estimator: &str) -> Option<f64> {
        let maes: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.mae))
            .collect();
        (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64)
    }
}

fn stats(report: &LidReport) -> Result<CellStats> {
    Ok(CellStats {
        mae: report
            .mae()
            .ok_or_else(|| LidError::Param("cloud has no labels".into()))?,
        mean: report.mean(),
        stddev: report.stddev(),
        score_evals: report.total_score_evals(),
        jvp_evals: report.total_jvp_evals(),
        runtime_ms: report.runtime_ms,
    })
}

/// Train a model of `spec` on `cloud`.
pub fn train_for_cloud(
    spec: &ModelSpec,
    cloud: &PointCloud,
    seed: u64,
) -> Result<model::TrainOutcome> {
    let net = MLPModel::new(spec.config(cloud.dim()), seed)?;
    let mut tc = spec.train.clone();
    tc.seed = seed;
    model::train(net, cloud, &tc)
}

/// Run every cell of the grid. Field construction or training failures mark
/// that manifold's parametric rows as failed.
pub fn run(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let kinds = config.kinds()?;
    let mut result = BenchResult::default();
    for spec in &config.manifolds {
        let start = Instant::now();
        let manifold = Manifold::new(spec)?;
        let cloud = manifold.sample()?;
        let label = spec.label();
        let needs_field = kinds.iter().any(|k| k.is_parametric());
        let field: std::result::Result<Option<Box<dyn ScoreField>>, String> = if needs_field {
            match config.field.as_ref().expect("validated") {
                FieldSource::Oracle(kind) => oracle_for_cloud(*kind, &cloud)
                    .map(Some)
                    .map_err(|e| e.to_string()),
                FieldSource::Mlp(ms) => match train_for_cloud(ms, &cloud, config.seed) {
                    Ok(outcome) => {
                        log::info!("{label}: trained in {:.1} s", start.elapsed().as_secs_f64());
                        result.loss_traces.push((label.clone(), outcome.losses));
                        Ok(Some(Box::new(outcome.model)))
                    }
                    Err(e) => Err(e.to_string()),
                },
            }
        } else {
            Ok(None)
        };
        let cells: Vec<(EstimatorKind, Option<f64>, Option<usize>)> = kinds
            .iter()
            .flat_map(|&kind| -> Vec<_> {
                if kind.is_parametric() {
                    config
                        .sigmas
                        .iter()
                        .flat_map(|&s| config.m.iter().map(move |&m| (kind, Some(s), Some(m))))
                        .collect()
                } else {
                    vec![(kind, None, None)]
                }
            })
            .collect();
        // Cells run concurrently; collecting keeps them in grid order.
        let rows: Vec<BenchRow> = cells
            .into_par_iter()
            .map(|(kind, sigma, m)| {
                let outcome = match (&field, kind.is_parametric()) {
                    (Err(e), true) => Err(e.clone()),
                    _ => {
                        let params = EstimatorParams::new(sigma.unwrap_or(0.05))
                            .with_m(m.unwrap_or(8))
                            .with_seed(config.seed);
                        let f = field.as_ref().ok().and_then(|f| f.as_deref());
                        estimate_cloud(f, &cloud, kind, &params)
                            .and_then(|r| stats(&r))
                            .map_err(|e| e.to_string())
                    }
                };
                if let Err(e) = &outcome {
                    log::warn!("{label} {}: {e}", kind.name());
                }
                BenchRow {
                    manifold: label.clone(),
                    d: spec.d,
                    n: spec.n,
                    estimator: kind.name(),
                    sigma,
                    m,
                    outcome,
                }
            })
            .collect();
        result.rows.extend(rows);
    }
    if !result.rows.is_empty() && result.failures() == result.rows.len() {
        return Err(LidError::Evaluation("every bench cell failed".into()));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::Family;

    fn oracle_config() -> BenchConfig {
        BenchConfig {
            manifolds: vec![
                ManifoldSpec::new(Family::AffineGaussian, 2, 6).with_count(200),
                ManifoldSpec::new(Family::AffineGaussian, 4, 8).with_count(200),
            ],
            estimators: vec!["dsm".into(), "flipd".into(), "mle_k10".into()],
            sigmas: vec![0.01, 0.05],
            m: vec![128],
            field: Some(FieldSource::Oracle(OracleKind::Affine)),
            seed: 3,
            output_dir: None,
        }
    }

    #[test]
    fn grid_shape_and_schema() {
        let res = run(&oracle_config()).unwrap();
        assert_eq!(res.rows.len(), 2 * (2 + 2 + 1));
        let csv = res.to_csv(false);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), 1 + res.rows.len());
        assert!(res.average_mae("dsm").unwrap() <= 0.3);
        let table = res.render_table();
        assert!(table.lines().last().unwrap().starts_with("Average"));
    }

    #[test]
    fn output_is_deterministic() {
        let a = run(&oracle_config()).unwrap().to_csv(false);
        let b = run(&oracle_config()).unwrap().to_csv(false);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let mut c = oracle_config();
        c.estimators.clear();
        assert!(run(&c).is_err());
        let mut c = oracle_config();
        c.sigmas.clear();
        assert!(run(&c).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c = BenchConfig::from_json(
            r#"{"manifolds":[{"family":"hypersphere","d":2,"n":4}],
                "estimators":["dsm"],"field":{"oracle":"affine"}}"#,
        )
        .unwrap();
        assert_eq!(c.sigmas, vec![0.01, 0.02, 0.05]);
        assert_eq!(c.m, vec![8]);
        assert_eq!(c.manifolds[0].count, 2000);
        let mlp = BenchConfig::from_json(
            r#"{"manifolds":[],"estimators":[],"field":{"mlp":{"width":32,"train":{"batches":10}}}}"#,
        )
        .unwrap();
        match mlp.field {
            Some(FieldSource::Mlp(s)) => {
                assert_eq!((s.width, s.depth, s.train.batches), (32, 4, 10));
                assert_eq!(s.train.batch_size, 100);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failed_field_marks_rows() {
        let mut c = oracle_config();
        c.manifolds
            .push(ManifoldSpec::new(Family::Hypersphere, 1, 2).with_count(50));
        c.field = Some(FieldSource::Oracle(OracleKind::Affine));
        let res = run(&c).unwrap();
        assert_eq!(res.rows.len(), 3 * 5);
    }
}
