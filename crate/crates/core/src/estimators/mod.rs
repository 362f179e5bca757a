//! Parametric LID estimators on top of a [`ScoreField`].
//!
//! All estimators at a given `(seed, point index)` draw their Gaussian noise
//! from the same counter-based substream, so the DSM loss, the ESM loss and
//! the error-bundle spectrum at one point see identical perturbations.

pub mod field;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{
    Capabilities, CountingField, LinearlyPerturbed, Noising, Scaled, ScoreField, Shifted,
};
pub use report::LidReport;

use crate::error::{LidError, Result};
use crate::manifolds::PointCloud;
use crate::nonparametric;
use crate::numerics::{norm_sq, sym_eig, Domain, Matrix, RngStream, Spectrum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMethod {
    /// `n` coordinate JVPs.
    #[default]
    Exact,
    /// `k` Rademacher probes.
    Hutchinson(usize),
}

/// How singular values of a noise-prediction matrix are judged negligible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbCutoff {
    /// RMS prediction magnitude `s_i / √m` above `τ`. Noise predictions are
    /// unit-scale along normal directions.
    #[default]
    UnitNoise,
    /// `s_i > τ · s_max`.
    RelativeToMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub sigma: f64,
    /// Noise samples per point.
    pub m: usize,
    pub divergence: DivergenceMethod,
    /// Normal-bundle / error-bundle threshold `τ ∈ (0, 1)`.
    pub tau: f64,
    pub cutoff: NbCutoff,
    pub seed: u64,
    /// Evaluate FLIPD at `x + σε₁` instead of the clean point.
    pub noised_flipd: bool,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            m: 8,
            divergence: DivergenceMethod::Exact,
            tau: 0.1,
            cutoff: NbCutoff::UnitNoise,
            seed: 0,
            noised_flipd: false,
        }
    }
}

impl EstimatorParams {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_divergence(mut self, method: DivergenceMethod) -> Self {
        self.divergence = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        field::check_sigma(self.sigma)?;
        if self.m == 0 {
            return Err(LidError::Param("m must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(LidError::Param(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if let DivergenceMethod::Hutchinson(0) = self.divergence {
            return Err(LidError::Param(
                "Hutchinson probe count must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One pointwise estimate with the evaluations it cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub score_evals: u64,
    pub jvp_evals: u64,
}

fn require_prediction(field: &dyn ScoreField) -> Result<()> {
    if field.capabilities().any_prediction() {
        Ok(())
    } else {
        Err(LidError::Capability(
            "field exposes neither score nor epsilon".into(),
        ))
    }
}

fn require_jvp(field: &dyn ScoreField) -> Result<()> {
    let caps = field.capabilities();
    if caps.jvp && caps.any_prediction() {
        Ok(())
    } else {
        Err(LidError::Capability("estimator needs score JVPs".into()))
    }
}

/// The `m` Gaussian noise vectors used at `point_index`.
pub fn noise_draws(params: &EstimatorParams, point_index: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rng = RngStream::derived(params.seed, Domain::Noise, point_index as u64);
    (0..params.m)
        .map(|_| (0..n).map(|_| rng.normal()).collect())
        .collect()
}

/// Rademacher / other probe stream for `point_index`.
pub fn probe_stream(params: &EstimatorParams, point_index: usize) -> RngStream {
    RngStream::derived(params.seed, Domain::Probes, point_index as u64)
}

/// Noise predictions at `x` perturbed by each noise vector.
fn predict_noised(
    field: &dyn ScoreField,
    x: &[f64],
    noise: &[Vec<f64>],
    sigma: f64,
) -> Result<Matrix> {
    let noised: Vec<Vec<f64>> = noise
        .iter()
        .map(|eps| field.noising().perturb(x, eps, sigma))
        .collect();
    field.epsilon_rows(&Matrix::from_rows(&noised)?, sigma)
}

/// Denoising residuals `ε_j − ε_θ(x̃_j)` as the rows of an `m × n` matrix.
pub fn dsm_residuals(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<Matrix> {
    params.validate()?;
    require_prediction(field)?;
    field::check_input(x, field.dim())?;
    let n = field.dim();
    let noise = noise_draws(params, point_index, n);
    let pred = predict_noised(field, x, &noise, params.sigma)?;
    let mut b = Matrix::zeros(params.m, n);
    for (j, eps) in noise.iter().enumerate() {
        for ((out, e), p) in b.row_mut(j).iter_mut().zip(eps).zip(pred.row(j)) {
            *out = e - p;
        }
    }
    if !b.is_finite() {
        return Err(LidError::Evaluation("non-finite noise prediction".into()));
    }
    Ok(b)
}

/// Pointwise denoising loss `(1/m) Σ_j ‖ε_j − ε_θ(x + σε_j)‖²`.
pub fn dsm_lid(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<PointEstimate> {
    let b = dsm_residuals(field, x, point_index, params)?;
    let value = b.iter_rows().map(norm_sq).sum::<f64>() / params.m as f64;
    Ok(PointEstimate {
        value,
        score_evals: params.m as u64,
        jvp_evals: 0,
    })
}

/// Spectrum of `C′ = BᵀB/m` for the residual matrix `B` of [`dsm_residuals`].
/// Its trace equals [`dsm_lid`] at the same point.
pub fn error_bundle_spectrum(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<Spectrum> {
    let mut b = dsm_residuals(field, x, point_index, params)?;
    b.scale(1.0 / (params.m as f64).sqrt());
    gram_spectrum(&b)
}

/// Eigenvalues of `BᵀB`, computed on whichever of `BᵀB`, `BBᵀ` is smaller.
/// The trace is that of `BᵀB`.
fn gram_spectrum(b: &Matrix) -> Result<Spectrum> {
    let n = b.cols();
    if b.rows() < n {
        let small = sym_eig(&b.transpose().gram())?;
        let mut eigenvalues = small.eigenvalues;
        eigenvalues.resize(n, 0.0);
        Ok(Spectrum {
            eigenvalues,
            trace: small.trace,
        })
    } else {
        sym_eig(&b.gram())
    }
}

/// Count of eigenvalues (of a Gram matrix scaled by `1/m`) judged
/// non-negligible under `cutoff`.
fn significant_count(spectrum: &Spectrum, tau: f64, cutoff: NbCutoff) -> usize {
    let max = spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    if max.sqrt() < 1e-12 {
        return 0;
    }
    let threshold = match cutoff {
        NbCutoff::UnitNoise => tau * tau,
        NbCutoff::RelativeToMax => tau * tau * max,
    };
    spectrum.count_above(threshold)
}

/// Error-bundle LID: count of non-negligible eigenvalues of `C′`.
pub fn error_bundle_lid(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<(usize, Spectrum)> {
    let spectrum = error_bundle_spectrum(field, x, point_index, params)?;
    Ok((
        significant_count(&spectrum, params.tau, params.cutoff),
        spectrum,
    ))
}

/// Explicit score-matching loss `(σ²/m) Σ_j ‖s_θ(x̃_j) − s(x̃_j)‖²` against a
/// reference score, over the same noise as [`dsm_lid`].
pub fn esm_loss(
    field: &dyn ScoreField,
    oracle: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<PointEstimate> {
    params.validate()?;
    require_prediction(field)?;
    if !oracle.capabilities().any_prediction() {
        return Err(LidError::Capability("reference field has no score".into()));
    }
    if oracle.dim() != field.dim() {
        return Err(LidError::Shape(
            "field and reference dimensions differ".into(),
        ));
    }
    field::check_input(x, field.dim())?;
    let s2 = params.sigma * params.sigma;
    let mut total = 0.0;
    for eps in noise_draws(params, point_index, field.dim()) {
        let xt = field.noising().perturb(x, &eps, params.sigma);
        let a = field.score(&xt, params.sigma)?;
        let b = oracle.score(&xt, params.sigma)?;
        total += a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>();
    }
    Ok(PointEstimate {
        value: s2 * total / params.m as f64,
        score_evals: 2 * params.m as u64,
        jvp_evals: 0,
    })
}

/// `∇ · s(x̃)` and the number of JVPs it took.
pub fn divergence(
    field: &dyn ScoreField,
    x: &[f64],
    sigma: f64,
    method: DivergenceMethod,
    rng: &mut RngStream,
) -> Result<(f64, u64)> {
    require_jvp(field)?;
    let n = field.dim();
    let dirs = match method {
        DivergenceMethod::Exact => Matrix::identity(n),
        DivergenceMethod::Hutchinson(0) => {
            return Err(LidError::Param(
                "Hutchinson probe count must be >= 1".into(),
            ))
        }
        DivergenceMethod::Hutchinson(k) => {
            let mut m = Matrix::zeros(k, n);
            m.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = rng.rademacher());
            m
        }
    };
    let jv = field.score_jvp_rows(x, sigma, &dirs)?;
    let k = dirs.rows();
    let total: f64 = dirs
        .iter_rows()
        .zip(jv.iter_rows())
        .map(|(v, g)| crate::numerics::dot(v, g))
        .sum();
    let div = match method {
        DivergenceMethod::Exact => total,
        DivergenceMethod::Hutchinson(_) => total / k as f64,
    };
    if !div.is_finite() {
        return Err(LidError::Evaluation("non-finite divergence".into()));
    }
    Ok((div, k as u64))
}

/// Pointwise implicit score-matching integrand `σ²(∇·s + ½‖s‖²)` at `x̃`.
pub fn ism_value(
    field: &dyn ScoreField,
    x_noisy: &[f64],
    sigma: f64,
    method: DivergenceMethod,
    rng: &mut RngStream,
) -> Result<PointEstimate> {
    field::check_sigma(sigma)?;
    field::check_input(x_noisy, field.dim())?;
    let (div, jvps) = divergence(field, x_noisy, sigma, method, rng)?;
    let s = field.score(x_noisy, sigma)?;
    Ok(PointEstimate {
        value: sigma * sigma * (div + 0.5 * norm_sq(&s)),
        score_evals: 1,
        jvp_evals: jvps,
    })
}

/// `FLIPD = L_ISM + (σ²/2)‖s‖² + n = σ²∇·s + σ²‖s‖² + n` at the point `x`
/// as given. Negative values are returned unchanged.
pub fn flipd(
    field: &dyn ScoreField,
    x: &[f64],
    sigma: f64,
    method: DivergenceMethod,
    rng: &mut RngStream,
) -> Result<PointEstimate> {
    field::check_sigma(sigma)?;
    field::check_input(x, field.dim())?;
    let (div, jvps) = divergence(field, x, sigma, method, rng)?;
    let s = field.score(x, sigma)?;
    let s2 = sigma * sigma;
    Ok(PointEstimate {
        value: s2 * div + s2 * norm_sq(&s) + field.dim() as f64,
        score_evals: 1,
        jvp_evals: jvps,
    })
}

/// FLIPD at a data point, at its noise-level image under the field's
/// noising (the clean point for additive noise), or at one noised copy when
/// `params.noised_flipd` is set.
pub fn flipd_at(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<PointEstimate> {
    params.validate()?;
    let n = field.dim();
    field::check_input(x, n)?;
    let eps = if params.noised_flipd {
        noise_draws(params, point_index, n).swap_remove(0)
    } else {
        vec![0.0; n]
    };
    let at = field.noising().perturb(x, &eps, params.sigma);
    let mut rng = probe_stream(params, point_index);
    flipd(field, &at, params.sigma, params.divergence, &mut rng)
}

/// Normal-bundle estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBundle {
    pub lid: usize,
    /// Singular values of the `m × n` prediction matrix, descending.
    pub singular_values: Vec<f64>,
    /// Count implied by the largest ratio gap between consecutive singular
    /// values, for auditing the threshold.
    pub gap_count: Option<usize>,
}

/// Ambient dimension minus the number of non-negligible singular values of
/// the matrix of noise predictions `ε_θ(x + σε_j)`.
pub fn normal_bundle_lid(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    params: &EstimatorParams,
) -> Result<NormalBundle> {
    params.validate()?;
    require_prediction(field)?;
    let n = field.dim();
    field::check_input(x, n)?;
    if params.m < n {
        log::debug!(
            "normal bundle with m = {} < n = {n}: normal dimension may be underestimated",
            params.m
        );
    }
    let noise = noise_draws(params, point_index, n);
    let mut a = predict_noised(field, x, &noise, params.sigma)?;
    if !a.is_finite() {
        return Err(LidError::Evaluation("non-finite noise prediction".into()));
    }
    a.scale(1.0 / (params.m as f64).sqrt());
    let spectrum = gram_spectrum(&a)?;
    let singular_values: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .take(params.m.min(n))
        .map(|l| l.sqrt() * (params.m as f64).sqrt())
        .collect();
    let count = significant_count(&spectrum, params.tau, params.cutoff);
    let gap_count = spectrum.largest_gap(1e-24).map(|i| i + 1);
    Ok(NormalBundle {
        lid: n - count,
        singular_values,
        gap_count,
    })
}

/// Estimators selectable per cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Dsm,
    Flipd,
    NormalBundle,
    ErrorBundle,
    Mle { k: usize },
    TwoNn { k: usize },
}

impl EstimatorKind {
    pub fn is_parametric(self) -> bool {
        !matches!(
            self,
            EstimatorKind::Mle { .. } | EstimatorKind::TwoNn { .. }
        )
    }

    pub fn name(self) -> String {
        match self {
            EstimatorKind::Dsm => "dsm".into(),
            EstimatorKind::Flipd => "flipd".into(),
            EstimatorKind::NormalBundle => "nb".into(),
            EstimatorKind::ErrorBundle => "eb".into(),
            EstimatorKind::Mle { k } => format!("mle_k{k}"),
            EstimatorKind::TwoNn { k } => format!("twonn_k{k}"),
        }
    }

    /// Parse `dsm`, `flipd`, `nb`, `eb`, `mle`, `twonn`; `k` applies to the
    /// last two. `mle_k50` style names are accepted as well.
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        let (base, k) = match name.split_once("_k") {
            Some((b, kk)) => (
                b,
                kk.parse::<usize>()
                    .map_err(|_| LidError::Param(format!("bad neighbor count in `{name}`")))?,
            ),
            None => (name, k),
        };
        Ok(match base {
            "dsm" => EstimatorKind::Dsm,
            "flipd" => EstimatorKind::Flipd,
            "nb" | "normal_bundle" => EstimatorKind::NormalBundle,
            "eb" | "error_bundle" => EstimatorKind::ErrorBundle,
            "mle" => EstimatorKind::Mle { k },
            "twonn" => EstimatorKind::TwoNn { k },
            other => return Err(LidError::Param(format!("unknown estimator `{other}`"))),
        })
    }
}

/// Parametric estimate at one point.
pub fn estimate_point(
    field: &dyn ScoreField,
    x: &[f64],
    point_index: usize,
    kind: EstimatorKind,
    params: &EstimatorParams,
) -> Result<PointEstimate> {
    match kind {
        EstimatorKind::Dsm => dsm_lid(field, x, point_index, params),
        EstimatorKind::Flipd => flipd_at(field, x, point_index, params),
        EstimatorKind::NormalBundle => {
            let nb = normal_bundle_lid(field, x, point_index, params)?;
            Ok(PointEstimate {
                value: nb.lid as f64,
                score_evals: params.m as u64,
                jvp_evals: 0,
            })
        }
        EstimatorKind::ErrorBundle => {
            let (lid, _) = error_bundle_lid(field, x, point_index, params)?;
            Ok(PointEstimate {
                value: lid as f64,
                score_evals: params.m as u64,
                jvp_evals: 0,
            })
        }
        EstimatorKind::Mle { .. } | EstimatorKind::TwoNn { .. } => Err(LidError::Param(
            "non-parametric estimators run through estimate_cloud".into(),
        )),
    }
}

fn check_field_for(field: &dyn ScoreField, kind: EstimatorKind) -> Result<()> {
    match kind {
        EstimatorKind::Flipd => require_jvp(field),
        _ => require_prediction(field),
    }
}

/// Run `kind` over every point of `cloud`. Parametric estimators need a
/// field; the result does not depend on the number of worker threads.
pub fn estimate_cloud(
    field: Option<&dyn ScoreField>,
    cloud: &PointCloud,
    kind: EstimatorKind,
    params: &EstimatorParams,
) -> Result<LidReport> {
    let start = Instant::now();
    let estimates: Vec<PointEstimate> = if kind.is_parametric() {
        let field = field
            .ok_or_else(|| LidError::Capability(format!("{} needs a score field", kind.name())))?;
        params.validate()?;
        check_field_for(field, kind)?;
        if field.dim() != cloud.dim() {
            return Err(LidError::Shape(format!(
                "field dimension {} does not match cloud dimension {}",
                field.dim(),
                cloud.dim()
            )));
        }
        (0..cloud.len())
            .into_par_iter()
            .map(|i| {
                estimate_point(field, cloud.point(i), i, kind, params).map_err(|e| {
                    LidError::AtPoint {
                        index: i,
                        source: Box::new(e),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let values = match kind {
            EstimatorKind::Mle { k } => nonparametric::mle_cloud(cloud, k)?,
            EstimatorKind::TwoNn { k } => nonparametric::twonn_cloud(cloud, k)?,
            _ => unreachable!(),
        };
        values
            .into_iter()
            .map(|value| PointEstimate {
                value,
                score_evals: 0,
                jvp_evals: 0,
            })
            .collect()
    };
    Ok(LidReport::new(
        kind,
        params.clone(),
        estimates,
        Some(cloud.true_lid.clone()),
        start.elapsed().as_secs_f64() * 1e3,
    ))
}
