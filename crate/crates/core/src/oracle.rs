//! Closed-form scores of Gaussian-smoothed distributions.
//!
//! [`AffineGaussianOracle`] is the pushforward of `z ~ N(0, I_d)` through
//! `z ↦ Uz + b`, convolved with `N(0, σ²I_n)`. Its covariance is
//! `Σ = UUᵀ + σ²I`, inverted in Woodbury form
//! `Σ⁻¹ = σ⁻²(I − UUᵀ/(1 + σ²))`.
//!
//! [`PointMixtureOracle`] is a weighted set of point masses convolved with
//! `N(0, σ²I_n)`; responsibilities are evaluated with log-sum-exp.

use serde::{Deserialize, Serialize};

use crate::error::{LidError, Result};
use crate::estimators::field::{check_input, check_sigma};
use crate::estimators::{Capabilities, ScoreField};
use crate::manifolds::{Family, Manifold, PointCloud};
use crate::numerics::{axpy, dot, norm_sq, sym_eig_full, Matrix};

const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AffineGaussianOracle {
    frame: Matrix,
    offset: Vec<f64>,
}

impl AffineGaussianOracle {
    /// `frame` is `n × d` with orthonormal columns; `offset` is an `n`-vector.
    pub fn new(frame: Matrix, offset: Vec<f64>) -> Result<Self> {
        let (n, d) = (frame.rows(), frame.cols());
        if offset.len() != n {
            return Err(LidError::Shape(format!(
                "offset has length {}, frame has {n} rows",
                offset.len()
            )));
        }
        let utu = frame.gram();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                if (utu[(i, j)] - want).abs() > FRAME_TOL {
                    return Err(LidError::Domain("frame columns are not orthonormal".into()));
                }
            }
        }
        Ok(Self { frame, offset })
    }

    /// `N(0, I_n)` smoothed: the full-rank case `U = I`.
    pub fn standard(n: usize) -> Self {
        Self {
            frame: Matrix::identity(n),
            offset: vec![0.0; n],
        }
    }

    /// Exact oracle of a generated affine-Gaussian manifold.
    pub fn from_manifold(manifold: &Manifold) -> Result<Self> {
        let n = manifold.spec().n;
        Self::new(manifold.affine_frame()?, vec![0.0; n])
    }

    /// Recover the oracle of an affine-Gaussian cloud of intrinsic dimension
    /// `d`. The support is the span of the top `d` principal directions;
    /// the offset is the normal component of the sample mean, the tangential
    /// part taken as zero (the latent Gaussian is centered).
    pub fn fit(cloud: &PointCloud, d: usize) -> Result<Self> {
        let (count, n) = (cloud.len(), cloud.dim());
        if d > n {
            return Err(LidError::Param(format!(
                "d = {d} exceeds ambient dimension {n}"
            )));
        }
        if count == 0 {
            return Err(LidError::Param(
                "cannot fit an oracle to an empty cloud".into(),
            ));
        }
        let mut mean = vec![0.0; n];
        for r in cloud.points.iter_rows() {
            axpy(1.0 / count as f64, r, &mut mean);
        }
        let mut centered = cloud.points.clone();
        for i in 0..count {
            for (x, m) in centered.row_mut(i).iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        let eig = sym_eig_full(&centered.gram())?;
        let mut frame = Matrix::zeros(n, d);
        for j in 0..d {
            for i in 0..n {
                frame[(i, j)] = eig.vectors[(i, j)];
            }
        }
        let tangential = frame.tr_matvec(&mean);
        let mut offset = mean;
        axpy(-1.0, &frame.matvec(&tangential), &mut offset);
        Self::new(frame, offset)
    }

    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.frame.cols()
    }

    /// `Σ⁻¹ v` via the Woodbury form.
    fn apply_precision(&self, v: &[f64], sigma: f64) -> Vec<f64> {
        let s2 = sigma * sigma;
        let t = self.frame.tr_matvec(v);
        let ut = self.frame.matvec(&t);
        v.iter()
            .zip(&ut)
            .map(|(vi, ui)| (vi - ui / (1.0 + s2)) / s2)
            .collect()
    }

    /// `−Σ⁻¹(x̃ − b)`
    pub fn affine_score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_input(x, self.dim())?;
        let r: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        Ok(self
            .apply_precision(&r, sigma)
            .into_iter()
            .map(|v| -v)
            .collect())
    }

    /// `−Σ⁻¹ v`; the score is affine so this does not depend on `x̃`.
    pub fn affine_score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_input(x, self.dim())?;
        check_input(v, self.dim())?;
        Ok(self
            .apply_precision(v, sigma)
            .into_iter()
            .map(|g| -g)
            .collect())
    }

    /// `log N(x̃; b, Σ)`
    pub fn log_density(&self, x: &[f64], sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let (n, d) = (self.dim() as f64, self.intrinsic_dim() as f64);
        let r: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        let quad = dot(&r, &self.apply_precision(&r, sigma));
        let s2 = sigma * sigma;
        let logdet = d * (1.0 + s2).ln() + (n - d) * s2.ln();
        Ok(-0.5 * quad - 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }
}

impl ScoreField for AffineGaussianOracle {
    fn dim(&self) -> usize {
        self.frame.rows()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.affine_score(x, sigma)
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.affine_score_jvp(x, sigma, v)
    }
}

#[derive(Debug, Clone)]
pub struct PointMixtureOracle {
    anchors: Matrix,
    weights: Vec<f64>,
}

impl PointMixtureOracle {
    pub fn new(anchors: Matrix, weights: Vec<f64>) -> Result<Self> {
        if anchors.rows() == 0 || anchors.rows() != weights.len() {
            return Err(LidError::Shape(format!(
                "{} anchors with {} weights",
                anchors.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(LidError::Domain(
                "mixture weights must be non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LidError::Domain(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { anchors, weights })
    }

    pub fn uniform(anchors: Matrix) -> Result<Self> {
        let k = anchors.rows();
        Self::new(anchors, vec![1.0 / k.max(1) as f64; k])
    }

    pub fn from_manifold(manifold: &Manifold) -> Result<Self> {
        Self::uniform(manifold.mixture_anchors()?)
    }

    /// Distinct points of the cloud as equally weighted anchors.
    pub fn fit(cloud: &PointCloud) -> Result<Self> {
        let mut rows: Vec<&[f64]> = cloud.points.iter_rows().collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup();
        let owned: Vec<Vec<f64>> = rows.into_iter().map(<[f64]>::to_vec).collect();
        Self::uniform(Matrix::from_rows(&owned)?)
    }

    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    /// Posterior responsibilities of each anchor given `x̃`.
    fn responsibilities(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let s2 = sigma * sigma;
        let logits: Vec<f64> = self
            .anchors
            .iter_rows()
            .zip(&self.weights)
            .map(|(a, &w)| {
                let dist2: f64 = a.iter().zip(x).map(|(ai, xi)| (ai - xi) * (ai - xi)).sum();
                if w > 0.0 {
                    w.ln() - dist2 / (2.0 * s2)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut r: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= total);
        r
    }

    fn posterior_mean(&self, r: &[f64]) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for (a, &w) in self.anchors.iter_rows().zip(r) {
            axpy(w, a, &mut mean);
        }
        mean
    }

    /// `Σ_i w̃_i (a_i − x̃)/σ²`
    pub fn mixture_score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_input(x, self.dim())?;
        let mean = self.posterior_mean(&self.responsibilities(x, sigma));
        let s2 = sigma * sigma;
        Ok(mean.iter().zip(x).map(|(m, xi)| (m - xi) / s2).collect())
    }

    /// Jacobian-vector product `(Cov_w̃[a] v)/σ⁴ − v/σ²`.
    pub fn mixture_score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_input(x, self.dim())?;
        check_input(v, self.dim())?;
        let r = self.responsibilities(x, sigma);
        let mean = self.posterior_mean(&r);
        let s2 = sigma * sigma;
        let mut out: Vec<f64> = v.iter().map(|vi| -vi / s2).collect();
        for (a, &w) in self.anchors.iter_rows().zip(&r) {
            if w == 0.0 {
                continue;
            }
            let dev: Vec<f64> = a.iter().zip(&mean).map(|(ai, mi)| ai - mi).collect();
            axpy(w * dot(&dev, v) / (s2 * s2), &dev, &mut out);
        }
        Ok(out)
    }

    pub fn log_density(&self, x: &[f64], sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let n = self.dim() as f64;
        let s2 = sigma * sigma;
        let logits: Vec<f64> = self
            .anchors
            .iter_rows()
            .zip(&self.weights)
            .map(|(a, &w)| {
                let d2: f64 = a.iter().zip(x).map(|(ai, xi)| (ai - xi) * (ai - xi)).sum();
                w.ln() - d2 / (2.0 * s2)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(lse - 0.5 * n * (2.0 * std::f64::consts::PI * s2).ln())
    }
}

impl ScoreField for PointMixtureOracle {
    fn dim(&self) -> usize {
        self.anchors.cols()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.mixture_score(x, sigma)
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.mixture_score_jvp(x, sigma, v)
    }
}

/// Relative error `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_sq(&diff).sqrt() / norm_sq(b).sqrt().max(1e-300)
}

/// Closed-form field families available for a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Affine,
    Mixture,
}

impl std::str::FromStr for OracleKind {
    type Err = LidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(OracleKind::Affine),
            "mixture" => Ok(OracleKind::Mixture),
            other => Err(LidError::Param(format!("unknown oracle `{other}`"))),
        }
    }
}

/// The oracle of `kind` for `cloud`. Generated clouds of the matching family
/// use their exact generator; anything else is fitted to the points, with
/// the affine dimension taken from the most common label.
pub fn oracle_for_cloud(kind: OracleKind, cloud: &PointCloud) -> Result<Box<dyn ScoreField>> {
    let generated = cloud.spec.as_ref().map(Manifold::new).transpose()?;
    match kind {
        OracleKind::Affine => {
            if let Some(m) = generated.filter(|m| m.spec().family == Family::AffineGaussian) {
                return Ok(Box::new(AffineGaussianOracle::from_manifold(&m)?));
            }
            Ok(Box::new(AffineGaussianOracle::fit(
                cloud,
                modal_label(cloud) as usize,
            )?))
        }
        OracleKind::Mixture => {
            if let Some(m) = generated.filter(|m| m.spec().family == Family::PointMixture) {
                return Ok(Box::new(PointMixtureOracle::from_manifold(&m)?));
            }
            Ok(Box::new(PointMixtureOracle::fit(cloud)?))
        }
    }
}

fn modal_label(cloud: &PointCloud) -> u32 {
    let mut counts = std::collections::BTreeMap::new();
    for &l in &cloud.true_lid {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .unwrap_or(0)
}
