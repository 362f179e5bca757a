//! Residual MLP noise predictor with exact reverse- and forward-mode
//! derivatives.
//!
//! ```text
//! h₀ = W_in [x̃; emb(σ)] + b_in
//! h_l = h_{l−1} + act(W_l h_{l−1} + b_l)          l = 1..depth
//! out = W_out h_L + b_out + (S x̃ + c) / σ
//! ```
//!
//! The last term is a linear skip from the input to the output scaled by
//! `1/σ`. Along flat normal directions the optimal noise prediction is
//! exactly `P_N(x̃ − b)/σ`, which this path represents without the hidden
//! layers having to learn a `1/σ` gain. `W_out`, `b_out`, `S` and `c` start
//! at zero, so an untrained model predicts 0 everywhere.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{LidError, Result};
use crate::estimators::field::{check_input, check_sigma};
use crate::estimators::{Capabilities, Noising, ScoreField};
use crate::numerics::{gemm, Domain, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `a · sigmoid(a)`
    Silu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Silu => a / (1.0 + (-a).exp()),
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-a).exp());
                s * (1.0 + a * (1.0 - s))
            }
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => Activation::Silu,
            1 => Activation::Tanh,
            2 => Activation::Identity,
            _ => return Err(LidError::Format(format!("unknown activation code {c}"))),
        })
    }
}

/// Conditioning of the network on the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaEmbedding {
    /// `ln σ`
    Scalar,
    /// `sin(f_j ln σ), cos(f_j ln σ)` for `k` geometrically spaced
    /// frequencies between 0.1 and 10.
    Sinusoidal(usize),
}

impl SigmaEmbedding {
    pub fn dim(self) -> usize {
        match self {
            SigmaEmbedding::Scalar => 1,
            SigmaEmbedding::Sinusoidal(k) => 2 * k,
        }
    }

    fn features(self, sigma: f64, out: &mut [f64]) {
        let t = sigma.ln();
        match self {
            SigmaEmbedding::Scalar => out[0] = t,
            SigmaEmbedding::Sinusoidal(k) => {
                for j in 0..k {
                    let f = if k > 1 {
                        0.1 * 100f64.powf(j as f64 / (k - 1) as f64)
                    } else {
                        1.0
                    };
                    out[2 * j] = (f * t).sin();
                    out[2 * j + 1] = (f * t).cos();
                }
            }
        }
    }
}

/// What the network output represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Noise `ε` under `x̃ = x + σε`.
    Epsilon,
    /// Velocity `ε − x` under `x̃ = (1 − σ)x + σε`.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MLPConfig {
    pub n: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub embedding: SigmaEmbedding,
    pub target: Target,
}

impl MLPConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            width: 256,
            depth: 4,
            activation: Activation::Silu,
            embedding: SigmaEmbedding::Sinusoidal(16),
            target: Target::Epsilon,
        }
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LidError::EmptyDimension("n"));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(LidError::Param("width and depth must be >= 1".into()));
        }
        if self.embedding == SigmaEmbedding::Sinusoidal(0) {
            return Err(LidError::Param(
                "sinusoidal embedding needs >= 1 frequency".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.n + self.embedding.dim()
    }
}

/// Offsets of each tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub w_in: usize,
    pub b_in: usize,
    /// `(weight, bias)` offsets per hidden block.
    pub hidden: Vec<(usize, usize)>,
    pub w_out: usize,
    pub b_out: usize,
    pub skip_w: usize,
    pub skip_b: usize,
    pub total: usize,
}

impl Layout {
    fn new(c: &MLPConfig) -> Self {
        let (n, w, i) = (c.n, c.width, c.input_dim());
        let mut at = 0;
        let mut take = |len: usize| {
            let start = at;
            at += len;
            start
        };
        let w_in = take(w * i);
        let b_in = take(w);
        let hidden = (0..c.depth).map(|_| (take(w * w), take(w))).collect();
        let w_out = take(n * w);
        let b_out = take(n);
        let skip_w = take(n * n);
        let skip_b = take(n);
        Self {
            w_in,
            b_in,
            hidden,
            w_out,
            b_out,
            skip_w,
            skip_b,
            total: at,
        }
    }
}

/// Intermediate activations of a batched forward pass.
struct Tape {
    batch: usize,
    z0: Vec<f64>,
    /// `h_0 … h_L`
    h: Vec<Vec<f64>>,
    /// Pre-activations `W_l h_{l−1} + b_l`.
    a: Vec<Vec<f64>>,
    inv_sigma: Vec<f64>,
}

#[derive(Debug)]
pub struct MLPModel {
    config: MLPConfig,
    params: Vec<f64>,
    layout: Layout,
    sigma_range: (f64, f64),
    warned: AtomicBool,
}

impl Clone for MLPModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            params: self.params.clone(),
            layout: self.layout.clone(),
            sigma_range: self.sigma_range,
            warned: AtomicBool::new(self.warned.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for MLPModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.sigma_range == other.sigma_range
    }
}

/// One training batch: clean points, injected noise and noise levels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub eps: Matrix,
    pub sigma: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

impl MLPModel {
    /// Fan-in scaled Gaussian weights, zero biases, zero output layer and
    /// zero output skip.
    pub fn new(config: MLPConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = RngStream::derived(seed, Domain::ModelInit, 0);
        let (w, i) = (config.width, config.input_dim());
        let std_in = (1.0 / i as f64).sqrt();
        for p in &mut params[layout.w_in..layout.w_in + w * i] {
            *p = std_in * rng.normal();
        }
        let std_h = (1.0 / w as f64).sqrt();
        for &(wl, _) in &layout.hidden {
            for p in &mut params[wl..wl + w * w] {
                *p = std_h * rng.normal();
            }
        }
        Ok(Self {
            config,
            params,
            layout,
            sigma_range: (0.0, f64::INFINITY),
            warned: AtomicBool::new(false),
        })
    }

    pub(crate) fn from_parts(
        config: MLPConfig,
        params: Vec<f64>,
        sigma_range: (f64, f64),
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(LidError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LidError::Evaluation("non-finite parameter".into()));
        }
        Ok(Self {
            config,
            params,
            layout,
            sigma_range,
            warned: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &MLPConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Noise levels the model was trained on.
    pub fn sigma_range(&self) -> (f64, f64) {
        self.sigma_range
    }

    pub fn set_sigma_range(&mut self, lo: f64, hi: f64) {
        self.sigma_range = (lo, hi);
    }

    /// Zero every hidden-block weight and bias, leaving the skip paths.
    pub fn zero_hidden(&mut self) {
        let w = self.config.width;
        for &(wl, bl) in &self.layout.hidden {
            self.params[wl..wl + w * w].fill(0.0);
            self.params[bl..bl + w].fill(0.0);
        }
    }

    fn slice(&self, at: usize, len: usize) -> &[f64] {
        &self.params[at..at + len]
    }

    fn warn_sigma(&self, sigma: f64) {
        let (lo, hi) = self.sigma_range;
        if (sigma < lo || sigma > hi) && !self.warned.swap(true, Ordering::Relaxed) {
            log::warn!("σ = {sigma} outside the trained range [{lo}, {hi}]");
        }
    }

    fn forward_tape(&self, xt: &[f64], sigmas: &[f64]) -> (Vec<f64>, Tape) {
        let c = &self.config;
        let (n, w, i, bsz) = (c.n, c.width, c.input_dim(), sigmas.len());
        let mut z0 = vec![0.0; bsz * i];
        for b in 0..bsz {
            let row = &mut z0[b * i..(b + 1) * i];
            row[..n].copy_from_slice(&xt[b * n..(b + 1) * n]);
            c.embedding.features(sigmas[b], &mut row[n..]);
        }
        let mut h0 = tile(self.slice(self.layout.b_in, w), bsz);
        gemm(
            bsz,
            i,
            w,
            &z0,
            false,
            self.slice(self.layout.w_in, w * i),
            true,
            &mut h0,
            1.0,
        );
        let mut h = vec![h0];
        let mut a = Vec::with_capacity(c.depth);
        for &(wl, bl) in &self.layout.hidden {
            let prev = h.last().expect("h0 present");
            let mut al = tile(self.slice(bl, w), bsz);
            gemm(
                bsz,
                w,
                w,
                prev,
                false,
                self.slice(wl, w * w),
                true,
                &mut al,
                1.0,
            );
            let next: Vec<f64> = prev
                .iter()
                .zip(&al)
                .map(|(p, v)| p + c.activation.apply(*v))
                .collect();
            a.push(al);
            h.push(next);
        }
        let inv_sigma: Vec<f64> = sigmas.iter().map(|s| 1.0 / s).collect();
        let mut skip = tile(self.slice(self.layout.skip_b, n), bsz);
        gemm(
            bsz,
            n,
            n,
            xt,
            false,
            self.slice(self.layout.skip_w, n * n),
            true,
            &mut skip,
            1.0,
        );
        let mut out = tile(self.slice(self.layout.b_out, n), bsz);
        let last = h.last().expect("h0 present");
        gemm(
            bsz,
            w,
            n,
            last,
            false,
            self.slice(self.layout.w_out, n * w),
            true,
            &mut out,
            1.0,
        );
        for b in 0..bsz {
            for j in 0..n {
                out[b * n + j] += skip[b * n + j] * inv_sigma[b];
            }
        }
        (
            out,
            Tape {
                batch: bsz,
                z0,
                h,
                a,
                inv_sigma,
            },
        )
    }

    /// Raw network outputs for the rows of `xt`, each at its own `σ`.
    pub fn forward_batch(&self, xt: &Matrix, sigmas: &[f64]) -> Result<Matrix> {
        let n = self.config.n;
        if xt.cols() != n || xt.rows() != sigmas.len() {
            return Err(LidError::Shape(format!(
                "batch of {}×{} with {} noise levels for n = {n}",
                xt.rows(),
                xt.cols(),
                sigmas.len()
            )));
        }
        for &s in sigmas {
            check_sigma(s)?;
            self.warn_sigma(s);
        }
        if !xt.is_finite() {
            return Err(LidError::Evaluation("non-finite input".into()));
        }
        let (out, _) = self.forward_tape(xt.as_slice(), sigmas);
        let out = Matrix::from_vec(xt.rows(), n, out)?;
        if !out.is_finite() {
            return Err(LidError::Evaluation("non-finite network output".into()));
        }
        Ok(out)
    }

    /// Raw network output at one point.
    pub fn forward(&self, xt: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_input(xt, self.config.n)?;
        let m = Matrix::from_vec(1, self.config.n, xt.to_vec())?;
        Ok(self.forward_batch(&m, &[sigma])?.into_vec())
    }

    /// Noisy inputs and regression targets of a batch under the model's
    /// target parameterization.
    pub fn inputs_and_targets(&self, batch: &Batch) -> (Vec<f64>, Vec<f64>) {
        let n = self.config.n;
        let mut xt = vec![0.0; batch.len() * n];
        let mut target = vec![0.0; batch.len() * n];
        for b in 0..batch.len() {
            let s = batch.sigma[b];
            let (x, e) = (batch.x.row(b), batch.eps.row(b));
            for j in 0..n {
                match self.config.target {
                    Target::Epsilon => {
                        xt[b * n + j] = x[j] + s * e[j];
                        target[b * n + j] = e[j];
                    }
                    Target::Velocity => {
                        xt[b * n + j] = (1.0 - s) * x[j] + s * e[j];
                        target[b * n + j] = e[j] - x[j];
                    }
                }
            }
        }
        (xt, target)
    }

    /// Mean over the batch of `‖target − output‖²` and its exact gradient
    /// with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let n = self.config.n;
        if batch.is_empty() {
            return Err(LidError::Param("empty batch".into()));
        }
        if batch.x.cols() != n
            || batch.eps.cols() != n
            || batch.x.rows() != batch.len()
            || batch.eps.rows() != batch.len()
        {
            return Err(LidError::Shape("batch tensors disagree with model".into()));
        }
        let (xt, target) = self.inputs_and_targets(batch);
        let (out, tape) = self.forward_tape(&xt, &batch.sigma);
        let bsz = batch.len() as f64;
        let mut loss = 0.0;
        let mut dy = vec![0.0; out.len()];
        for ((d, o), t) in dy.iter_mut().zip(&out).zip(&target) {
            let r = o - t;
            loss += r * r;
            *d = 2.0 * r / bsz;
        }
        let grad = self.backward(&tape, &xt, &dy);
        Ok((loss / bsz, grad))
    }

    fn backward(&self, tape: &Tape, xt: &[f64], dy: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let l = &self.layout;
        let (n, w, i, bsz) = (c.n, c.width, c.input_dim(), tape.batch);
        let mut g = vec![0.0; self.params.len()];

        let last = tape.h.last().expect("h0 present");
        gemm(
            n,
            bsz,
            w,
            dy,
            true,
            last,
            false,
            &mut g[l.w_out..l.w_out + n * w],
            0.0,
        );
        col_sums(dy, bsz, n, &mut g[l.b_out..l.b_out + n]);

        let mut dys = dy.to_vec();
        for b in 0..bsz {
            dys[b * n..(b + 1) * n]
                .iter_mut()
                .for_each(|v| *v *= tape.inv_sigma[b]);
        }
        gemm(
            n,
            bsz,
            n,
            &dys,
            true,
            xt,
            false,
            &mut g[l.skip_w..l.skip_w + n * n],
            0.0,
        );
        col_sums(&dys, bsz, n, &mut g[l.skip_b..l.skip_b + n]);

        let mut dh = vec![0.0; bsz * w];
        gemm(
            bsz,
            n,
            w,
            dy,
            false,
            self.slice(l.w_out, n * w),
            false,
            &mut dh,
            0.0,
        );

        for (k, &(wl, bl)) in l.hidden.iter().enumerate().rev() {
            let da: Vec<f64> = dh
                .iter()
                .zip(&tape.a[k])
                .map(|(d, a)| d * c.activation.derivative(*a))
                .collect();
            gemm(
                w,
                bsz,
                w,
                &da,
                true,
                &tape.h[k],
                false,
                &mut g[wl..wl + w * w],
                0.0,
            );
            col_sums(&da, bsz, w, &mut g[bl..bl + w]);
            gemm(
                bsz,
                w,
                w,
                &da,
                false,
                self.slice(wl, w * w),
                false,
                &mut dh,
                1.0,
            );
        }

        gemm(
            w,
            bsz,
            i,
            &dh,
            true,
            &tape.z0,
            false,
            &mut g[l.w_in..l.w_in + w * i],
            0.0,
        );
        col_sums(&dh, bsz, w, &mut g[l.b_in..l.b_in + w]);
        g
    }

    /// Directional derivatives of the raw output with respect to the input
    /// `x̃` along each row of `dirs` (`k × n`), by forward-mode propagation.
    pub fn input_jvp_rows(&self, xt: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        let c = &self.config;
        let l = &self.layout;
        let (n, w, i, k) = (c.n, c.width, c.input_dim(), dirs.rows());
        check_sigma(sigma)?;
        check_input(xt, n)?;
        if dirs.cols() != n {
            return Err(LidError::Shape(format!(
                "directions have {} columns, expected {n}",
                dirs.cols()
            )));
        }
        self.warn_sigma(sigma);
        let (_, tape) = self.forward_tape(xt, &[sigma]);

        let mut dz = vec![0.0; k * i];
        for r in 0..k {
            dz[r * i..r * i + n].copy_from_slice(dirs.row(r));
        }
        let mut dh = vec![0.0; k * w];
        gemm(
            k,
            i,
            w,
            &dz,
            false,
            self.slice(l.w_in, w * i),
            true,
            &mut dh,
            0.0,
        );
        for (li, &(wl, _)) in l.hidden.iter().enumerate() {
            let mut da = vec![0.0; k * w];
            gemm(
                k,
                w,
                w,
                &dh,
                false,
                self.slice(wl, w * w),
                true,
                &mut da,
                0.0,
            );
            let slope: Vec<f64> = tape.a[li]
                .iter()
                .map(|a| c.activation.derivative(*a))
                .collect();
            for r in 0..k {
                for j in 0..w {
                    dh[r * w + j] += slope[j] * da[r * w + j];
                }
            }
        }
        let mut out = vec![0.0; k * n];
        gemm(
            k,
            n,
            n,
            dirs.as_slice(),
            false,
            self.slice(l.skip_w, n * n),
            true,
            &mut out,
            0.0,
        );
        out.iter_mut().for_each(|v| *v /= sigma);
        gemm(
            k,
            w,
            n,
            &dh,
            false,
            self.slice(l.w_out, n * w),
            true,
            &mut out,
            1.0,
        );
        let out = Matrix::from_vec(k, n, out)?;
        if !out.is_finite() {
            return Err(LidError::Evaluation("non-finite JVP".into()));
        }
        Ok(out)
    }

    pub fn input_jvp(&self, xt: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        let dirs = Matrix::from_vec(1, v.len(), v.to_vec())?;
        Ok(self.input_jvp_rows(xt, sigma, &dirs)?.into_vec())
    }

    /// Noise prediction from a velocity output: `(1 − σ)v + x̃`.
    pub fn to_epsilon(&self, v: &[f64], xt: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if self.config.target != Target::Velocity {
            return Err(LidError::Parameterization(
                "to_epsilon applies to velocity models".into(),
            ));
        }
        to_epsilon(v, xt, sigma)
    }
}

/// `ε = (1 − σ)v + x̃` for `σ ∈ (0, 1)`.
pub fn to_epsilon(v: &[f64], xt: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(LidError::Domain(format!(
            "velocity conversion needs σ in (0, 1), got {sigma}"
        )));
    }
    if v.len() != xt.len() {
        return Err(LidError::Shape("velocity and input lengths differ".into()));
    }
    Ok(v.iter()
        .zip(xt)
        .map(|(vi, xi)| (1.0 - sigma) * vi + xi)
        .collect())
}

fn tile(row: &[f64], times: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() * times);
    for _ in 0..times {
        out.extend_from_slice(row);
    }
    out
}

fn col_sums(m: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
}

impl ScoreField for MLPModel {
    fn dim(&self) -> usize {
        self.config.n
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn noising(&self) -> Noising {
        match self.config.target {
            Target::Epsilon => Noising::Additive,
            Target::Velocity => Noising::Rectified,
        }
    }

    fn epsilon(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let out = self.forward(x, sigma)?;
        match self.config.target {
            Target::Epsilon => Ok(out),
            Target::Velocity => to_epsilon(&out, x, sigma),
        }
    }

    fn epsilon_rows(&self, xs: &Matrix, sigma: f64) -> Result<Matrix> {
        let out = self.forward_batch(xs, &vec![sigma; xs.rows()])?;
        match self.config.target {
            Target::Epsilon => Ok(out),
            Target::Velocity => {
                let rows = xs
                    .iter_rows()
                    .zip(out.iter_rows())
                    .map(|(x, v)| to_epsilon(v, x, sigma))
                    .collect::<Result<Vec<_>>>()?;
                Matrix::from_rows(&rows)
            }
        }
    }

    fn score_jvp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        let dirs = Matrix::from_vec(1, v.len(), v.to_vec())?;
        Ok(self.score_jvp_rows(x, sigma, &dirs)?.into_vec())
    }

    /// `∂s = −∂ε/σ`, with `∂ε = (1 − σ)∂v + v_dir` for velocity models.
    fn score_jvp_rows(&self, x: &[f64], sigma: f64, dirs: &Matrix) -> Result<Matrix> {
        let mut j = self.input_jvp_rows(x, sigma, dirs)?;
        match self.config.target {
            Target::Epsilon => j.scale(-1.0 / sigma),
            Target::Velocity => {
                if !(sigma < 1.0) {
                    return Err(LidError::Domain("velocity model needs σ < 1".into()));
                }
                for (out, d) in j.as_mut_slice().iter_mut().zip(dirs.as_slice()) {
                    *out = -((1.0 - sigma) * *out + d) / sigma;
                }
            }
        }
        Ok(j)
    }
}
