//! Nearest-neighbor baselines: Levina–Bickel MLE and TwoNN.
//!
//! Both are applied pointwise. MLE uses the query's own `k` neighbor
//! distances; TwoNN pools the first/second-neighbor ratios of the query and
//! its `k − 1` nearest neighbors and fits the Pareto exponent in closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LidError, Result};
use crate::manifolds::PointCloud;
use crate::numerics::{knn, knn_distances, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    PerPoint,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodParams {
    pub k: usize,
    pub aggregation: Aggregation,
}

impl NeighborhoodParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            aggregation: Aggregation::PerPoint,
        }
    }

    pub fn validate(&self, count: usize) -> Result<()> {
        check_k(self.k, count)
    }
}

fn check_k(k: usize, count: usize) -> Result<()> {
    if k < 3 {
        return Err(LidError::Param(format!("k must be at least 3, got {k}")));
    }
    if k >= count {
        return Err(LidError::InsufficientPoints { k, n: count });
    }
    Ok(())
}

/// `[(1/(k−1)) Σ_{j<k} ln(T_k/T_j)]⁻¹` from ascending neighbor distances
/// `T_1 ≤ … ≤ T_k`. Zero distances are dropped and the normalizer shrinks
/// accordingly.
pub fn mle_from_distances(dists: &[f64], query: usize) -> Result<f64> {
    let (&tk, rest) = dists
        .split_last()
        .ok_or(LidError::DegenerateNeighborhood(query))?;
    if !(tk > 0.0) {
        return Err(LidError::DegenerateNeighborhood(query));
    }
    let kept: Vec<f64> = rest.iter().copied().filter(|&t| t > 0.0).collect();
    if kept.len() < rest.len() {
        log::warn!(
            "point {query}: {} zero neighbor distances excluded",
            rest.len() - kept.len()
        );
    }
    let total: f64 = kept.iter().map(|t| (tk / t).ln()).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(LidError::DegenerateNeighborhood(query));
    }
    Ok(kept.len() as f64 / total)
}

pub fn mle_lid(cloud: &PointCloud, query: usize, k: usize) -> Result<f64> {
    check_k(k, cloud.len())?;
    mle_from_distances(&knn_distances(&cloud.points, query, k)?, query)
}

/// `(r₁, r₂)` for every point.
pub fn two_nearest(points: &Matrix) -> Result<Vec<(f64, f64)>> {
    (0..points.rows())
        .into_par_iter()
        .map(|i| {
            let d = knn_distances(points, i, 2)?;
            Ok((d[0], d[1]))
        })
        .collect()
}

/// `count / Σ ln(r₂/r₁)` over the given pairs; pairs with `r₁ = 0` are
/// dropped, `μ = 1` is kept.
pub fn twonn_from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>, query: usize) -> Result<f64> {
    let (mut count, mut total) = (0usize, 0.0);
    for (r1, r2) in pairs {
        if r1 > 0.0 {
            count += 1;
            total += (r2 / r1).ln();
        }
    }
    if count == 0 || !(total > 0.0) {
        return Err(LidError::DegenerateNeighborhood(query));
    }
    Ok(count as f64 / total)
}

fn twonn_at(points: &Matrix, pairs: &[(f64, f64)], query: usize, k: usize) -> Result<f64> {
    let hood = knn(points, query, k - 1)?;
    let pool = std::iter::once(query)
        .chain(hood.iter().map(|nb| nb.index))
        .map(|i| pairs[i]);
    twonn_from_pairs(pool, query)
}

pub fn twonn_lid(cloud: &PointCloud, query: usize, k: usize) -> Result<f64> {
    check_k(k, cloud.len())?;
    let hood = knn(&cloud.points, query, k - 1)?;
    let pool = std::iter::once(query)
        .chain(hood.iter().map(|nb| nb.index))
        .map(|i| {
            let d = knn_distances(&cloud.points, i, 2)?;
            Ok((d[0], d[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    twonn_from_pairs(pool, query)
}

/// TwoNN pooled over the whole cloud.
pub fn twonn_global(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 3 {
        return Err(LidError::InsufficientPoints {
            k: 2,
            n: cloud.len(),
        });
    }
    twonn_from_pairs(two_nearest(&cloud.points)?, 0)
}

pub fn mle_cloud(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    check_k(k, cloud.len())?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| mle_lid(cloud, i, k))
        .collect()
}

pub fn twonn_cloud(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    check_k(k, cloud.len())?;
    let pairs = two_nearest(&cloud.points)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| twonn_at(&cloud.points, &pairs, i, k))
        .collect()
}

/// Per-point or global estimates; the global estimate is repeated for
/// every point.
pub fn estimate(
    cloud: &PointCloud,
    method: Method,
    params: NeighborhoodParams,
) -> Result<Vec<f64>> {
    match (method, params.aggregation) {
        (Method::Mle, Aggregation::PerPoint) => mle_cloud(cloud, params.k),
        (Method::TwoNn, Aggregation::PerPoint) => twonn_cloud(cloud, params.k),
        (Method::Mle, Aggregation::Global) => {
            let local = mle_cloud(cloud, params.k)?;
            // Inverse of the mean inverse, as in MacKay and Ghahramani.
            let inv: f64 = local.iter().map(|v| 1.0 / v).sum::<f64>() / local.len() as f64;
            Ok(vec![1.0 / inv; cloud.len()])
        }
        (Method::TwoNn, Aggregation::Global) => Ok(vec![twonn_global(cloud)?; cloud.len()]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mle,
    TwoNn,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{Family, ManifoldSpec};
    use crate::numerics::{random_orthogonal, RngStream};
    use proptest::prelude::*;

    fn cloud_of(rows: Vec<Vec<f64>>) -> PointCloud {
        let n = rows.len();
        PointCloud::new(Matrix::from_rows(&rows).unwrap(), vec![0; n]).unwrap()
    }

    #[test]
    fn mle_on_regular_grid() {
        let grid = cloud_of((0..20).map(|i| vec![i as f64 * 0.5]).collect());
        let v = mle_lid(&grid, 10, 5).unwrap();
        assert!((v - 2.0 / 4.5f64.ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn twonn_collinear_global() {
        let c = cloud_of(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let v = twonn_global(&c).unwrap();
        assert!((v - 3.0 / 9f64.ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mle_on_circle() {
        let mut rng = RngStream::new(1, 0);
        let rows = (0..2000)
            .map(|_| {
                let t = rng.uniform() * std::f64::consts::TAU;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let est = mle_cloud(&cloud_of(rows), 50).unwrap();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        assert!((mean - 1.0).abs() <= 0.15, "{mean}");
    }

    #[test]
    fn twonn_on_unit_square() {
        let mut rng = RngStream::new(2, 0);
        let rows = (0..2000)
            .map(|_| vec![rng.uniform(), rng.uniform()])
            .collect();
        let est = twonn_cloud(&cloud_of(rows), 100).unwrap();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        assert!((mean - 2.0).abs() <= 0.2, "{mean}");
    }

    #[test]
    fn duplicates_are_dropped() {
        let c = cloud_of(vec![vec![0.0], vec![0.0], vec![1.0], vec![2.0], vec![4.0]]);
        // T = (0, 1, 2, 4): the zero is excluded, normalizer 2.
        let v = mle_lid(&c, 0, 4).unwrap();
        assert!((v - 2.0 / (4f64.ln() + 2f64.ln())).abs() < 1e-12);
        assert!(twonn_lid(&c, 3, 3).is_ok());
    }

    #[test]
    fn all_duplicates_are_degenerate() {
        let c = cloud_of(vec![vec![1.0, 1.0]; 6]);
        assert!(matches!(
            mle_lid(&c, 2, 3),
            Err(LidError::DegenerateNeighborhood(2))
        ));
        assert!(matches!(
            twonn_lid(&c, 2, 3),
            Err(LidError::DegenerateNeighborhood(2))
        ));
    }

    #[test]
    fn k_bounds() {
        let c = cloud_of((0..5).map(|i| vec![i as f64]).collect());
        assert!(matches!(mle_lid(&c, 0, 2), Err(LidError::Param(_))));
        assert!(matches!(
            twonn_lid(&c, 0, 5),
            Err(LidError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn pointwise_twonn_matches_shared_pairs() {
        let spec = ManifoldSpec::new(Family::Hypersphere, 2, 4).with_count(300);
        let c = crate::manifolds::sample(&spec).unwrap();
        let all = twonn_cloud(&c, 10).unwrap();
        for i in [0, 17, 299] {
            assert_eq!(all[i], twonn_lid(&c, i, 10).unwrap());
        }
    }

    #[test]
    fn affine_gaussian_consistency() {
        for d in [2, 4, 8] {
            let spec = ManifoldSpec::new(Family::AffineGaussian, d, 2 * d)
                .with_count(2000)
                .with_seed(d as u64);
            let c = crate::manifolds::sample(&spec).unwrap();
            for est in [mle_cloud(&c, 50).unwrap(), twonn_cloud(&c, 50).unwrap()] {
                let mean = est.iter().sum::<f64>() / est.len() as f64;
                assert!((mean - d as f64).abs() <= 0.15 * d as f64, "d={d}: {mean}");
            }
        }
    }

    #[test]
    fn global_aggregation() {
        let spec = ManifoldSpec::new(Family::Hyperball, 2, 3).with_count(500);
        let c = crate::manifolds::sample(&spec).unwrap();
        let mut p = NeighborhoodParams::new(20);
        p.aggregation = Aggregation::Global;
        for m in [Method::Mle, Method::TwoNn] {
            let v = estimate(&c, m, p).unwrap();
            assert!(v.windows(2).all(|w| w[0] == w[1]));
            assert!((v[0] - 2.0).abs() < 0.4, "{m:?}: {}", v[0]);
        }
    }

    fn random_cloud(seed: u64, count: usize, dim: usize) -> Matrix {
        let mut rng = RngStream::new(seed, 0);
        let mut m = Matrix::zeros(count, dim);
        m.as_mut_slice().iter_mut().for_each(|v| *v = rng.normal());
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn power_of_two_scaling_is_bit_exact(seed in 0u64..1000, e in -8i32..8) {
            let pts = random_cloud(seed, 60, 3);
            let c = PointCloud::new(pts.clone(), vec![0; 60]).unwrap();
            let mut scaled = pts;
            scaled.scale(2f64.powi(e));
            let s = PointCloud::new(scaled, vec![0; 60]).unwrap();
            prop_assert_eq!(mle_cloud(&c, 10).unwrap(), mle_cloud(&s, 10).unwrap());
            prop_assert_eq!(twonn_cloud(&c, 10).unwrap(), twonn_cloud(&s, 10).unwrap());
        }

        #[test]
        fn general_scaling_is_relatively_tight(seed in 0u64..1000, c in 0.01f64..100.0) {
            let pts = random_cloud(seed, 60, 3);
            let a = PointCloud::new(pts.clone(), vec![0; 60]).unwrap();
            let mut scaled = pts;
            scaled.scale(c);
            let b = PointCloud::new(scaled, vec![0; 60]).unwrap();
            for (x, y) in mle_cloud(&a, 10).unwrap().iter().zip(mle_cloud(&b, 10).unwrap()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn rigid_motion_invariance(seed in 0u64..1000) {
            let pts = random_cloud(seed, 60, 4);
            let mut rng = RngStream::new(seed, 1);
            let q = random_orthogonal(&mut rng, 4).unwrap();
            let shift: Vec<f64> = (0..4).map(|_| 3.0 * rng.normal()).collect();
            let rows: Vec<Vec<f64>> = pts
                .iter_rows()
                .map(|r| q.matvec(r).iter().zip(&shift).map(|(a, b)| a + b).collect())
                .collect();
            let a = PointCloud::new(pts, vec![0; 60]).unwrap();
            let b = PointCloud::new(Matrix::from_rows(&rows).unwrap(), vec![0; 60]).unwrap();
            for k in [5, 10] {
                for (x, y) in mle_cloud(&a, k).unwrap().iter().zip(mle_cloud(&b, k).unwrap()) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
                for (x, y) in twonn_cloud(&a, k).unwrap().iter().zip(twonn_cloud(&b, k).unwrap()) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
        }
    }
}
