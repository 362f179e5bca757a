//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde_json::json;

use lidkit::bench::{self, BenchConfig, FieldSource};
use lidkit::estimators::{
    dsm_lid, dsm_residuals, error_bundle_spectrum, estimate_cloud, flipd_at, normal_bundle_lid,
    CountingField, DivergenceMethod, EstimatorKind, EstimatorParams, NbCutoff, ScoreField,
};
use lidkit::io::{read_cloud, write_cloud};
use lidkit::manifolds::{Family, Manifold, ManifoldSpec, PointCloud};
use lidkit::model::{
    self, load_model, save_model, Activation, MLPConfig, MLPModel, SigmaEmbedding, Target,
    TrainConfig,
};
use lidkit::numerics::{norm_sq, Matrix};
use lidkit::oracle::{oracle_for_cloud, AffineGaussianOracle, OracleKind};

use super::{
    BenchArgs, EstimateArgs, Failure, FieldArgs, GenArgs, ScalingArgs, SpectrumArgs, TrainArgs,
};

type CmdResult = Result<(), Failure>;

/// Write to stdout, treating a closed reader (e.g. `| head`) as success.
fn emit(text: &str) -> CmdResult {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn gen(a: GenArgs) -> CmdResult {
    let family: Family = a.family.parse()?;
    let mut spec = ManifoldSpec::new(family, a.d, a.n)
        .with_count(a.count)
        .with_seed(a.seed);
    spec.permute_dims = a.permute_dims;
    spec.rotate = !a.no_rotate;
    if let Some(r) = a.radius {
        spec.radius = r;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(k) = a.anchors {
        spec.anchors = k;
    }
    if let Some(s) = a.anchor_scale {
        spec.anchor_scale = s;
    }
    let cloud = Manifold::new(&spec)?.sample()?;
    write_cloud(&a.out, &cloud)?;
    emit(&format!(
        "{}: {} points, n={}, true LID {} -> {}\n",
        spec.label(),
        cloud.len(),
        cloud.dim(),
        spec.true_lid(),
        a.out.display()
    ))?;
    Ok(())
}

fn parse_activation(s: &str) -> Result<Activation, Failure> {
    match s {
        "silu" => Ok(Activation::Silu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        other => Err(Failure::usage(anyhow!("unknown activation `{other}`"))),
    }
}

fn parse_target(s: &str) -> Result<Target, Failure> {
    match s {
        "epsilon" => Ok(Target::Epsilon),
        "velocity" => Ok(Target::Velocity),
        other => Err(Failure::usage(anyhow!("unknown target `{other}`"))),
    }
}

pub fn train(a: TrainArgs) -> CmdResult {
    let cloud = read_cloud(&a.cloud)?;
    let config = MLPConfig {
        n: cloud.dim(),
        width: a.width,
        depth: a.depth,
        activation: parse_activation(&a.activation)?,
        embedding: if a.frequencies == 0 {
            SigmaEmbedding::Scalar
        } else {
            SigmaEmbedding::Sinusoidal(a.frequencies)
        },
        target: parse_target(&a.target)?,
    };
    let tc = TrainConfig {
        batches: a.batches,
        batch_size: a.batch_size,
        lr: a.lr,
        lr_min: a.lr_min,
        sigma_min: a.sigma_min,
        sigma_max: a.sigma_max,
        seed: a.seed,
    };
    tc.validate()?;
    let outcome = model::train(MLPModel::new(config, a.seed)?, &cloud, &tc)?;
    save_model(&a.out, &outcome.model)?;
    let mut trace = String::from("batch,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        let _ = writeln!(trace, "{i},{l}");
    }
    let loss_path = a.loss_out.unwrap_or_else(|| with_ext(&a.out, "loss.csv"));
    fs::write(&loss_path, trace)?;
    let (first, last) = outcome.window_means(500);
    if last > first {
        log::warn!("final loss {last} exceeds initial loss {first}");
    }
    emit(&format!(
        "trained {} parameters for {} batches: loss {first:.4} -> {last:.4}; checkpoint {}\n",
        outcome.model.param_count(),
        tc.batches,
        a.out.display()
    ))?;
    Ok(())
}

fn build_field(
    args: &FieldArgs,
    cloud: &PointCloud,
) -> Result<Option<Box<dyn ScoreField>>, Failure> {
    if let Some(o) = &args.oracle {
        let kind: OracleKind = o.parse()?;
        return Ok(Some(oracle_for_cloud(kind, cloud)?));
    }
    if let Some(path) = &args.checkpoint {
        let model = load_model(path)?;
        if model.config().n != cloud.dim() {
            return Err(Failure::usage(anyhow!(
                "checkpoint input dimension {} does not match cloud dimension {}",
                model.config().n,
                cloud.dim()
            )));
        }
        return Ok(Some(Box::new(model)));
    }
    Ok(None)
}

fn divergence(name: &str, probes: usize) -> Result<DivergenceMethod, Failure> {
    match name {
        "exact" => Ok(DivergenceMethod::Exact),
        "hutchinson" => Ok(DivergenceMethod::Hutchinson(probes)),
        other => Err(Failure::usage(anyhow!(
            "unknown divergence method `{other}`"
        ))),
    }
}

pub fn estimate(a: EstimateArgs, timing: bool) -> CmdResult {
    let kind = EstimatorKind::parse(&a.estimator, a.k)?;
    let cloud = read_cloud(&a.cloud)?;
    let params = EstimatorParams {
        sigma: a.sigma,
        m: a.m,
        divergence: divergence(&a.divergence, a.probes)?,
        tau: a.tau,
        cutoff: match a.cutoff.as_str() {
            "unit" => NbCutoff::UnitNoise,
            "relative" => NbCutoff::RelativeToMax,
            other => return Err(Failure::usage(anyhow!("unknown cutoff `{other}`"))),
        },
        seed: a.seed,
        noised_flipd: a.noised_flipd,
    };
    params.validate()?;
    let field = if kind.is_parametric() {
        build_field(&a.field, &cloud)?
    } else {
        None
    };
    let report = estimate_cloud(field.as_deref(), &cloud, kind, &params)?;
    let summary = report.summary(timing);
    if let Some(prefix) = &a.out {
        fs::write(with_ext(prefix, "csv"), report.to_csv())?;
        write_json(&with_ext(prefix, "json"), &summary)?;
    }
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}

pub fn bench(a: BenchArgs, timing: bool) -> CmdResult {
    let text = fs::read_to_string(&a.config)?;
    let config = BenchConfig::from_json(&text)?;
    config.validate()?;
    let dir = a
        .out
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("bench_out"));
    fs::create_dir_all(&dir)?;
    let result = bench::run(&config)?;
    fs::write(dir.join("bench.csv"), result.to_csv(timing))?;
    let table = result.render_table();
    fs::write(dir.join("table.txt"), &table)?;
    if matches!(config.field, Some(FieldSource::Mlp(_))) {
        for (label, losses) in &result.loss_traces {
            let mut trace = String::from("batch,loss\n");
            for (i, l) in losses.iter().enumerate() {
                let _ = writeln!(trace, "{i},{l}");
            }
            fs::write(dir.join(format!("loss_{label}.csv")), trace)?;
        }
    }
    emit(&table)?;
    if result.failures() > 0 {
        eprintln!(
            "warning: {} of {} cells failed",
            result.failures(),
            result.rows.len()
        );
    }
    Ok(())
}

pub fn spectrum(a: SpectrumArgs) -> CmdResult {
    if a.m.is_empty() {
        return Err(Failure::usage(anyhow!("the m list must be non-empty")));
    }
    let cloud = read_cloud(&a.cloud)?;
    let field = build_field(&a.field, &cloud)?.ok_or_else(|| {
        Failure::from(lidkit::LidError::Capability(
            "spectrum needs --oracle or --checkpoint".into(),
        ))
    })?;
    if a.point >= cloud.len() {
        return Err(Failure::usage(anyhow!(
            "point {} out of range for {} points",
            a.point,
            cloud.len()
        )));
    }
    let x = cloud.point(a.point);
    let mut csv = String::from("m,rank,eigenvalue\n");
    let mut entries = Vec::new();
    for &m in &a.m {
        let mut params = EstimatorParams::new(a.sigma).with_m(m).with_seed(a.seed);
        params.tau = a.tau;
        let spec = error_bundle_spectrum(field.as_ref(), x, a.point, &params)?;
        let dsm = dsm_lid(field.as_ref(), x, a.point, &params)?.value;
        let per_sample: Vec<f64> = dsm_residuals(field.as_ref(), x, a.point, &params)?
            .iter_rows()
            .map(norm_sq)
            .collect();
        let se = if m > 1 {
            let var = per_sample.iter().map(|v| (v - dsm).powi(2)).sum::<f64>() / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            f64::NAN
        };
        let nb = normal_bundle_lid(field.as_ref(), x, a.point, &params)?;
        for (r, l) in spec.eigenvalues.iter().enumerate() {
            let _ = writeln!(csv, "{m},{},{l}", r + 1);
        }
        let max = spec.eigenvalues.first().copied().unwrap_or(0.0);
        entries.push(json!({
            "m": m,
            "trace": spec.trace,
            "dsm": dsm,
            "trace_se": if se.is_finite() { json!(se) } else { json!(null) },
            "trace_matches_dsm": (spec.trace - dsm).abs() <= 1e-9 * dsm.abs().max(1.0),
            "nonzero_eigenvalues": spec.count_above(1e-12 * max.max(1e-300)),
            "nb_lid": nb.lid,
        }));
    }
    fs::write(with_ext(&a.out, "csv"), csv)?;
    let summary = json!({
        "point": a.point,
        "sigma": a.sigma,
        "seed": a.seed,
        "spectra": entries,
    });
    write_json(&with_ext(&a.out, "json"), &summary)?;
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}

/// Peak resident set size in kB, where the platform reports it.
fn peak_rss_kb() -> u64 {
    fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("VmHWM:"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

pub fn scaling(a: ScalingArgs, timing: bool) -> CmdResult {
    if a.n.is_empty() {
        return Err(Failure::usage(anyhow!("the n list must be non-empty")));
    }
    let mut csv = String::from(
        "d,n,m,dsm_score_evals,flipd_exact_jvp_evals,flipd_hutchinson_jvp_evals,peak_rss_kb\n",
    );
    for &n in &a.n {
        if n < 2 || n % 2 != 0 {
            return Err(Failure::usage(anyhow!(
                "ambient dimensions must be even, got {n}"
            )));
        }
        let d = n / 2;
        let mut frame = Matrix::zeros(n, d);
        for j in 0..d {
            frame[(j, j)] = 1.0;
        }
        let field = CountingField::new(AffineGaussianOracle::new(frame, vec![0.0; n])?);
        let x = vec![0.0; n];
        let base = EstimatorParams::new(a.sigma).with_m(a.m).with_seed(a.seed);

        dsm_lid(&field, &x, 0, &base)?;
        let dsm_evals = field.prediction_count();
        field.reset();
        flipd_at(&field, &x, 0, &base)?;
        let exact_jvps = field.jvp_count();
        field.reset();
        let hutch = base
            .clone()
            .with_divergence(DivergenceMethod::Hutchinson(a.probes));
        hutch.validate()?;
        flipd_at(&field, &x, 0, &hutch)?;
        let hutch_jvps = field.jvp_count();
        let rss = if timing { peak_rss_kb() } else { 0 };
        let _ = writeln!(
            csv,
            "{d},{n},{},{dsm_evals},{exact_jvps},{hutch_jvps},{rss}",
            a.m
        );
    }
    fs::write(&a.out, &csv)?;
    emit(&csv)?;
    Ok(())
}
