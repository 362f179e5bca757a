//! Denoising (or flow-matching) training with Adam and cosine annealing.

use serde::{Deserialize, Serialize};

use super::mlp::{Batch, MLPModel, Target};
use crate::error::{LidError, Result};
use crate::manifolds::PointCloud;
use crate::numerics::{Domain, Matrix, RngStream};

/// Loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Velocity models are trained on `σ < 1`; larger bounds are clamped here.
const VELOCITY_SIGMA_CAP: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the end of the cosine schedule.
    pub lr_min: f64,
    /// `σ` is drawn log-uniformly on `[sigma_min, sigma_max]` per example.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batches: 20_000,
            batch_size: 100,
            lr: 1e-3,
            lr_min: 1e-5,
            sigma_min: 0.005,
            sigma_max: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 || self.batch_size == 0 {
            return Err(LidError::Param(
                "batches and batch size must be >= 1".into(),
            ));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite())
        {
            return Err(LidError::Param(format!(
                "need 0 < sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.lr > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return Err(LidError::Param("need 0 <= lr_min <= lr, lr > 0".into()));
        }
        Ok(())
    }

    /// Cosine-annealed learning rate at batch `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let frac = t as f64 / self.batches.max(1) as f64;
        self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    fn sigma_bounds(&self, target: Target) -> (f64, f64) {
        match target {
            Target::Epsilon => (self.sigma_min, self.sigma_max),
            Target::Velocity => {
                let hi = self.sigma_max.min(VELOCITY_SIGMA_CAP);
                (self.sigma_min.min(hi), hi)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MLPModel,
    /// Batch loss per step.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Mean loss over the first and the last `window` batches.
    pub fn window_means(&self, window: usize) -> (f64, f64) {
        let w = window.clamp(1, self.losses.len().max(1));
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (
            mean(&self.losses[..w.min(self.losses.len())]),
            mean(&self.losses[self.losses.len().saturating_sub(w)..]),
        )
    }
}

/// The batch drawn at step `t`, from its own substream.
pub fn draw_batch(cloud: &PointCloud, cfg: &TrainConfig, target: Target, t: usize) -> Batch {
    let n = cloud.dim();
    let mut rng = RngStream::derived(cfg.seed, Domain::Training, t as u64);
    let (lo, hi) = cfg.sigma_bounds(target);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut x = Matrix::zeros(cfg.batch_size, n);
    let mut eps = Matrix::zeros(cfg.batch_size, n);
    let mut sigma = Vec::with_capacity(cfg.batch_size);
    for b in 0..cfg.batch_size {
        let i = rng.below(cloud.len() as u64) as usize;
        x.row_mut(b).copy_from_slice(cloud.point(i));
        for e in eps.row_mut(b) {
            *e = rng.normal();
        }
        sigma.push((llo + (lhi - llo) * rng.uniform()).exp());
    }
    Batch { x, eps, sigma }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Train `model` on `cloud`. Identical inputs give bit-identical parameters.
pub fn train(mut model: MLPModel, cloud: &PointCloud, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(LidError::Param("cannot train on an empty cloud".into()));
    }
    if cloud.dim() != model.config().n {
        return Err(LidError::Shape(format!(
            "cloud dimension {} does not match model input {}",
            cloud.dim(),
            model.config().n
        )));
    }
    let target = model.config().target;
    let mut adam = Adam::new(model.param_count());
    let mut losses = Vec::with_capacity(cfg.batches);
    let report_every = (cfg.batches / 10).max(1);
    for t in 0..cfg.batches {
        let batch = draw_batch(cloud, cfg, target, t);
        let (loss, grad) = model.loss_and_grad(&batch)?;
        if !(loss <= DIVERGENCE_LOSS) || grad.iter().any(|g| !g.is_finite()) {
            return Err(LidError::TrainingDiverged { batch: t, loss });
        }
        adam.step(model.params_mut(), &grad, cfg.lr_at(t));
        losses.push(loss);
        if (t + 1) % report_every == 0 {
            let w = &losses[losses.len().saturating_sub(report_every)..];
            log::info!(
                "batch {}/{}: mean loss {:.4}",
                t + 1,
                cfg.batches,
                w.iter().sum::<f64>() / w.len() as f64
            );
        }
    }
    let (lo, hi) = cfg.sigma_bounds(target);
    model.set_sigma_range(lo, hi);
    Ok(TrainOutcome { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{dsm_lid, EstimatorParams};
    use crate::manifolds::{Family, ManifoldSpec};
    use crate::model::MLPConfig;

    fn quick(batches: usize) -> TrainConfig {
        TrainConfig {
            batches,
            batch_size: 64,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = quick(100);
        assert_eq!(c.lr_at(0), 1e-3);
        assert!((c.lr_at(100) - 1e-5).abs() < 1e-15);
        assert!(c.lr_at(50) < 1e-3 && c.lr_at(50) > 1e-5);
    }

    #[test]
    fn validation() {
        assert!(quick(0).validate().is_err());
        let mut c = quick(10);
        c.sigma_min = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let spec = ManifoldSpec::new(Family::AffineGaussian, 2, 4).with_count(200);
        let cloud = crate::manifolds::sample(&spec).unwrap();
        let cfg = MLPConfig::new(4).with_width(16).with_depth(2);
        let a = train(MLPModel::new(cfg, 1).unwrap(), &cloud, &quick(300)).unwrap();
        let b = train(MLPModel::new(cfg, 1).unwrap(), &cloud, &quick(300)).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        let (first, last) = a.window_means(50);
        assert!(last <= first, "{first} -> {last}");
    }

    #[test]
    fn point_mass_is_learned() {
        // Single anchor at the origin: the optimal prediction is x̃/σ.
        let mut spec = ManifoldSpec::new(Family::PointMixture, 0, 3).with_count(100);
        spec.anchors = 1;
        spec.anchor_scale = 0.0;
        let cloud = crate::manifolds::sample(&spec).unwrap();
        let cfg = MLPConfig::new(3).with_width(16).with_depth(1);
        let tc = TrainConfig {
            lr: 1e-2,
            ..quick(1500)
        };
        let out = train(MLPModel::new(cfg, 2).unwrap(), &cloud, &tc).unwrap();
        let m = &out.model;
        let sigma = 0.05;
        let mut rng = RngStream::new(3, 0);
        for _ in 0..20 {
            let xt: Vec<f64> = (0..3)
                .map(|_| sigma * rng.normal().clamp(-1.1, 1.1))
                .collect();
            let pred = m.forward(&xt, sigma).unwrap();
            let want: Vec<f64> = xt.iter().map(|v| v / sigma).collect();
            let err: f64 = pred
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 0.05 * norm.max(0.5), "{pred:?} vs {want:?}");
        }
        let p = EstimatorParams::new(sigma);
        let dsm: f64 = (0..cloud.len())
            .map(|i| dsm_lid(m, cloud.point(i), i, &p).unwrap().value)
            .sum::<f64>()
            / cloud.len() as f64;
        assert!(dsm <= 0.5, "{dsm}");
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ManifoldSpec::new(Family::AffineGaussian, 1, 2).with_count(20);
        let mut cloud = crate::manifolds::sample(&spec).unwrap();
        cloud.points.scale(1e5);
        let model = MLPModel::new(MLPConfig::new(2).with_width(4).with_depth(1), 0).unwrap();
        let mut c = quick(50);
        c.lr = 1.0;
        c.lr_min = 1.0;
        let err = train(model, &cloud, &c).unwrap_err();
        assert!(matches!(err, LidError::TrainingDiverged { .. }), "{err}");
    }
}
