//! The score-field interface shared by analytic oracles and trained models.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{LidError, Result};
use crate::numerics::Matrix;

/// What a field can evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub score: bool,
    pub epsilon: bool,
    pub jvp: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        score: true,
        epsilon: true,
        jvp: true,
    };

    pub fn any_prediction(self) -> bool {
        self.score || self.epsilon
    }
}

/// How a clean point is corrupted at noise level `σ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Noising {
    /// `x + σε`
    #[default]
    Additive,
    /// `(1 − σ)x + σε`, the rectified-flow interpolation.
    Rectified,
}

impl Noising {
    pub fn perturb(self, x: &[f64], eps: &[f64], sigma: f64) -> Vec<f64> {
        let a = match self {
            Noising::Additive => 1.0,
            Noising::Rectified => 1.0 - sigma,
        };
        x.iter()
            .zip(eps)
            .map(|(xi, ei)| a * xi + sigma * ei)
            .collect()
    }
}

/// A (possibly learned) score of the `σ`-smoothed data density.
///
/// Implementors override at least one of [`ScoreField::score`] and
/// [`ScoreField::epsilon`]; each defaults to the other through
/// `ε(x̃) = −σ · s(x̃)`.
pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn noising(&self) -> Noising {
        Noising::Additive
    }

    /// `∇ log p_σ(x̃)`
    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let eps = self.epsilon(x, sigma)?;
        Ok(eps.into_iter().map(|e| -e / sigma).collect())
    }

    /// Noise prediction `ε(x̃) = −σ · s(x̃)`.
    fn epsilon(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let s = self.score(x, sigma)?;
        Ok(s.into_iter().map(|v| -sigma * v).collect())
    }

    /// Directional derivative of the score along `v`.
    fn score_jvp(&self, _x: &[f64], _sigma: f64, _v: &[f64]) -> Result<Vec<f64>> {
        Err(LidError::Capability("field does not expose JVPs".into()))
    }

    /// Directional derivatives along each row of `dirs` (`k × n`), returned
    /// as the rows of a `k × n` matrix. Counts as `k` JVPs.
    fn score_jvp_rows(&self, x: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(dirs.rows(), dirs.cols());
        for (i, v) in dirs.iter_rows().enumerate() {
            out.row_mut(i)
                .copy_from_slice(&self.score_jvp(x, sigma, v)?);
        }
        Ok(out)
    }

    /// Noise predictions for every row of `xs` (`k × n`). Counts as `k`
    /// evaluations.
    fn epsilon_rows(&self, xs: &Matrix, sigma: f64) -> Result<Matrix> {
        let mut out = Matrix::zeros(xs.rows(), xs.cols());
        for (i, x) in xs.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.epsilon(x, sigma)?);
        }
        Ok(out)
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(LidError::Domain(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

pub(crate) fn check_input(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(LidError::Shape(format!(
            "expected {n}-vector, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LidError::Evaluation("non-finite input".into()));
    }
    Ok(())
}

/// Wraps a field and counts every evaluation that reaches it.
pub struct CountingField<F> {
    inner: F,
    predictions: AtomicU64,
    jvps: AtomicU64,
}

impl<F: ScoreField> CountingField<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            predictions: AtomicU64::new(0),
            jvps: AtomicU64::new(0),
        }
    }

    pub fn prediction_count(&self) -> u64 {
        self.predictions.load(Ordering::Relaxed)
    }

    pub fn jvp_count(&self) -> u64 {
        self.jvps.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.predictions.store(0, Ordering::Relaxed);
        self.jvps.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: ScoreField> ScoreField for CountingField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn noising(&self) -> Noising {
        self.inner.noising()
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.predictions.fetch_add(1, Ordering::Relaxed);
        self.inner.score(x, sigma)
    }

    fn epsilon(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.predictions.fetch_add(1, Ordering::Relaxed);
        self.inner.epsilon(x, sigma)
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.jvps.fetch_add(1, Ordering::Relaxed);
        self.inner.score_jvp(x, sigma, v)
    }

    fn score_jvp_rows(&self, x: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        self.jvps.fetch_add(dirs.rows() as u64, Ordering::Relaxed);
        self.inner.score_jvp_rows(x, sigma, dirs)
    }

    fn epsilon_rows(&self, xs: &Matrix, sigma: f64) -> Result<Matrix> {
        self.predictions
            .fetch_add(xs.rows() as u64, Ordering::Relaxed);
        self.inner.epsilon_rows(xs, sigma)
    }
}

/// `s(x̃) + c` for a fixed vector `c`.
pub struct Shifted<F> {
    pub inner: F,
    pub shift: Vec<f64>,
}

impl<F: ScoreField> ScoreField for Shifted<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn capabilities(&self) -> Capabilities {
        let c = self.inner.capabilities();
        Capabilities {
            score: c.any_prediction(),
            epsilon: c.any_prediction(),
            jvp: c.jvp,
        }
    }

    fn noising(&self) -> Noising {
        self.inner.noising()
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let mut s = self.inner.score(x, sigma)?;
        s.iter_mut().zip(&self.shift).for_each(|(a, b)| *a += b);
        Ok(s)
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.inner.score_jvp(x, sigma, v)
    }
}

/// `factor · s(x̃)`
pub struct Scaled<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: ScoreField> ScoreField for Scaled<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn noising(&self) -> Noising {
        self.inner.noising()
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .score(x, sigma)?
            .into_iter()
            .map(|v| self.factor * v)
            .collect())
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .score_jvp(x, sigma, v)?
            .into_iter()
            .map(|g| self.factor * g)
            .collect())
    }
}

/// `s(x̃) + A x̃` for a fixed square matrix `A`.
pub struct LinearlyPerturbed<F> {
    pub inner: F,
    pub matrix: Matrix,
}

impl<F: ScoreField> ScoreField for LinearlyPerturbed<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn noising(&self) -> Noising {
        self.inner.noising()
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let mut s = self.inner.score(x, sigma)?;
        s.iter_mut()
            .zip(self.matrix.matvec(x))
            .for_each(|(a, b)| *a += b);
        Ok(s)
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.inner.score_jvp(x, sigma, v)?;
        g.iter_mut()
            .zip(self.matrix.matvec(v))
            .for_each(|(a, b)| *a += b);
        Ok(g)
    }
}

impl<F: ScoreField + ?Sized> ScoreField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn noising(&self) -> Noising {
        (**self).noising()
    }
    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (**self).score(x, sigma)
    }
    fn epsilon(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (**self).epsilon(x, sigma)
    }
    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        (**self).score_jvp(x, sigma, v)
    }
    fn score_jvp_rows(&self, x: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        (**self).score_jvp_rows(x, sigma, dirs)
    }
    fn epsilon_rows(&self, xs: &Matrix, sigma: f64) -> Result<Matrix> {
        (**self).epsilon_rows(xs, sigma)
    }
}

impl<F: ScoreField + ?Sized> ScoreField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn noising(&self) -> Noising {
        (**self).noising()
    }
    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (**self).score(x, sigma)
    }
    fn epsilon(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (**self).epsilon(x, sigma)
    }
    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        (**self).score_jvp(x, sigma, v)
    }
    fn score_jvp_rows(&self, x: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        (**self).score_jvp_rows(x, sigma, dirs)
    }
    fn epsilon_rows(&self, xs: &Matrix, sigma: f64) -> Result<Matrix> {
        (**self).epsilon_rows(xs, sigma)
    }
}
