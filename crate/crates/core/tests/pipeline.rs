use lidkit::estimators::{
    dsm_lid, error_bundle_spectrum, estimate_cloud, normal_bundle_lid, EstimatorKind,
    EstimatorParams, Scaled, Shifted,
};
use lidkit::io::{read_cloud, write_cloud};
use lidkit::manifolds::{sample, Family, ManifoldSpec};
use lidkit::model::{load_model, save_model, train, MLPConfig, MLPModel, TrainConfig};
use lidkit::oracle::{oracle_for_cloud, AffineGaussianOracle, OracleKind};
use proptest::prelude::*;

#[test]
fn cloud_model_and_estimates_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ManifoldSpec::new(Family::Hypersphere, 2, 5)
        .with_count(120)
        .with_seed(9);
    let cloud = sample(&spec).unwrap();
    let path = dir.path().join("c.lidc");
    write_cloud(&path, &cloud).unwrap();
    let cloud = read_cloud(&path).unwrap();

    let cfg = MLPConfig::new(5).with_width(16).with_depth(2);
    let tc = TrainConfig {
        batches: 60,
        batch_size: 16,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = train(MLPModel::new(cfg, 2).unwrap(), &cloud, &tc)
        .unwrap()
        .model;
    let mpath = dir.path().join("m.lidm");
    save_model(&mpath, &model).unwrap();
    let loaded = load_model(&mpath).unwrap();
    assert_eq!(loaded, model);

    let p = EstimatorParams::new(0.05).with_seed(3);
    for kind in [
        EstimatorKind::Dsm,
        EstimatorKind::Flipd,
        EstimatorKind::NormalBundle,
        EstimatorKind::ErrorBundle,
    ] {
        let a = estimate_cloud(Some(&model), &cloud, kind, &p).unwrap();
        let b = estimate_cloud(Some(&loaded), &cloud, kind, &p).unwrap();
        assert_eq!(a.estimates, b.estimates, "{}", kind.name());
    }
}

#[test]
fn fitted_oracle_matches_generating_oracle() {
    let spec = ManifoldSpec::new(Family::AffineGaussian, 3, 8)
        .with_count(400)
        .with_seed(4);
    let cloud = sample(&spec).unwrap();
    let exact = oracle_for_cloud(OracleKind::Affine, &cloud).unwrap();
    let fitted = AffineGaussianOracle::fit(&cloud, 3).unwrap();
    let p = EstimatorParams::new(0.01).with_m(64);
    let a = estimate_cloud(Some(&exact), &cloud, EstimatorKind::Dsm, &p).unwrap();
    let b = estimate_cloud(Some(&fitted), &cloud, EstimatorKind::Dsm, &p).unwrap();
    assert!(
        (a.mean() - b.mean()).abs() < 0.3,
        "{} vs {}",
        a.mean(),
        b.mean()
    );
    assert!((a.mean() - 3.0).abs() < 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dsm_is_trace_and_nonnegative(
        seed in 0u64..500,
        d in 1usize..4,
        extra in 1usize..4,
        shift in -2.0f64..2.0,
        factor in 0.5f64..1.5,
        sigma in 0.01f64..0.5,
    ) {
        let n = d + extra;
        let spec = ManifoldSpec::new(Family::AffineGaussian, d, n).with_count(3).with_seed(seed);
        let cloud = sample(&spec).unwrap();
        let oracle = oracle_for_cloud(OracleKind::Affine, &cloud).unwrap();
        let field = Shifted { inner: Scaled { inner: oracle, factor }, shift: vec![shift; n] };
        let p = EstimatorParams::new(sigma).with_m(6).with_seed(seed);
        for i in 0..cloud.len() {
            let x = cloud.point(i);
            let dsm = dsm_lid(&field, x, i, &p).unwrap().value;
            let eb = error_bundle_spectrum(&field, x, i, &p).unwrap();
            prop_assert!(dsm >= 0.0);
            prop_assert!((eb.trace - dsm).abs() <= 1e-9 * dsm.max(1.0));
            let nb = normal_bundle_lid(&field, x, i, &p).unwrap();
            prop_assert!(nb.lid <= n);
        }
    }
}
