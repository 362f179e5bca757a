//! Synthetic point clouds sampled from manifolds of known local intrinsic
//! dimension.
//!
//! Every family is built in a latent coordinate system, zero-padded to the
//! ambient dimension `n`, rotated by a seeded Haar orthogonal matrix and
//! optionally coordinate-permuted. The embedding is an isometry, so pairwise
//! distances are those of the latent construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LidError, Result};
use crate::numerics::{random_orthogonal, sym_eig, Domain, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Hypersphere,
    Hyperball,
    TwinpeaksGraph,
    CliffordTorus,
    Nonlinear,
    AffineGaussian,
    PointMixture,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Hypersphere,
        Family::Hyperball,
        Family::TwinpeaksGraph,
        Family::CliffordTorus,
        Family::Nonlinear,
        Family::AffineGaussian,
        Family::PointMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Hypersphere => "hypersphere",
            Family::Hyperball => "hyperball",
            Family::TwinpeaksGraph => "twinpeaks_graph",
            Family::CliffordTorus => "clifford_torus",
            Family::Nonlinear => "nonlinear",
            Family::AffineGaussian => "affine_gaussian",
            Family::PointMixture => "point_mixture",
        }
    }

    pub fn is_differentiable(self) -> bool {
        matches!(
            self,
            Family::TwinpeaksGraph
                | Family::Nonlinear
                | Family::CliffordTorus
                | Family::AffineGaussian
        )
    }
}

impl std::str::FromStr for Family {
    type Err = LidError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LidError::Spec(format!("unknown manifold family `{s}`")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_count() -> usize {
    2000
}
fn default_true() -> bool {
    true
}
fn default_radius() -> f64 {
    1.0
}
fn default_height() -> f64 {
    0.3
}
fn default_anchors() -> usize {
    4
}
fn default_anchor_scale() -> f64 {
    1.0
}

/// Generator description. Serialized as JSON inside bench configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub family: Family,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "N", default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub permute_dims: bool,
    /// Apply the random rotation. Disabling it keeps the latent coordinates.
    #[serde(default = "default_true")]
    pub rotate: bool,
    /// Hypersphere / hyperball radius.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Twin-peaks graph amplitude.
    #[serde(default = "default_height")]
    pub height: f64,
    /// Number of point-mixture anchors.
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    /// Standard deviation of the point-mixture anchor draw.
    #[serde(default = "default_anchor_scale")]
    pub anchor_scale: f64,
}

impl ManifoldSpec {
    pub fn new(family: Family, d: usize, n: usize) -> Self {
        Self {
            family,
            d,
            n,
            count: default_count(),
            seed: 0,
            permute_dims: false,
            rotate: true,
            radius: default_radius(),
            height: default_height(),
            anchors: default_anchors(),
            anchor_scale: default_anchor_scale(),
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Short label such as `hypersphere_d4_n16`.
    pub fn label(&self) -> String {
        format!("{}_d{}_n{}", self.family, self.d, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = (self.d, self.n);
        let violation = |rule: &str| {
            Err(LidError::Spec(format!(
                "d must satisfy family constraint: {} requires {rule} (d = {d}, n = {n})",
                self.family
            )))
        };
        if n == 0 {
            return Err(LidError::Spec("ambient dimension n must be >= 1".into()));
        }
        if self.count == 0 {
            return Err(LidError::Spec("sample count N must be >= 1".into()));
        }
        if d > n {
            return violation("d <= n");
        }
        match self.family {
            Family::Hypersphere if n < d + 1 => return violation("n >= d + 1"),
            Family::Hyperball | Family::Nonlinear if d == 0 => return violation("d >= 1"),
            Family::TwinpeaksGraph if d == 0 || n < d + 1 => {
                return violation("d >= 1 and n >= d + 1")
            }
            Family::CliffordTorus if d == 0 || n < 2 * d => return violation("d >= 1 and n >= 2d"),
            Family::PointMixture if d != 0 => return violation("d = 0"),
            _ => {}
        }
        if matches!(self.family, Family::Hypersphere | Family::Hyperball) && !(self.radius > 0.0) {
            return Err(LidError::Spec("radius must be positive".into()));
        }
        if self.family == Family::PointMixture {
            if self.anchors == 0 {
                return Err(LidError::Spec(
                    "point_mixture needs at least one anchor".into(),
                ));
            }
            if !(self.anchor_scale >= 0.0) {
                return Err(LidError::Spec("anchor_scale must be non-negative".into()));
            }
        }
        if !self.height.is_finite() {
            return Err(LidError::Spec("height must be finite".into()));
        }
        Ok(())
    }

    /// LID of every point generated from this spec.
    pub fn true_lid(&self) -> u32 {
        match self.family {
            Family::PointMixture => 0,
            _ => self.d as u32,
        }
    }
}

/// Rotation followed by an optional coordinate permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub rotation: Option<Matrix>,
    /// `out[i] = rotated[permutation[i]]`.
    pub permutation: Option<Vec<usize>>,
}

impl Embedding {
    pub fn identity() -> Self {
        Self {
            rotation: None,
            permutation: None,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let y = match &self.rotation {
            Some(q) => q.matvec(v),
            None => v.to_vec(),
        };
        match &self.permutation {
            Some(p) => p.iter().map(|&j| y[j]).collect(),
            None => y,
        }
    }

    /// Inverse of [`Embedding::apply`].
    pub fn unapply(&self, x: &[f64]) -> Vec<f64> {
        let y = match &self.permutation {
            Some(p) => {
                let mut y = vec![0.0; x.len()];
                for (i, &j) in p.iter().enumerate() {
                    y[j] = x[i];
                }
                y
            }
            None => x.to_vec(),
        };
        match &self.rotation {
            Some(q) => q.tr_matvec(&y),
            None => y,
        }
    }
}

/// Sampled points with per-point LID labels.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Matrix,
    pub true_lid: Vec<u32>,
    /// Present when the cloud was generated rather than loaded from disk.
    pub spec: Option<ManifoldSpec>,
    pub embedding: Option<Embedding>,
}

impl PointCloud {
    pub fn new(points: Matrix, true_lid: Vec<u32>) -> Result<Self> {
        if true_lid.len() != points.rows() {
            return Err(LidError::Shape(format!(
                "{} labels for {} points",
                true_lid.len(),
                points.rows()
            )));
        }
        if !points.is_finite() {
            return Err(LidError::Domain(
                "point cloud has non-finite entries".into(),
            ));
        }
        Ok(Self {
            points,
            true_lid,
            spec: None,
            embedding: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }
}

/// A validated spec together with its seeded embedding and generator state.
#[derive(Debug, Clone)]
pub struct Manifold {
    spec: ManifoldSpec,
    embedding: Embedding,
    /// Nonlinear generator weights `(W1: 2d×d, W2: n×2d)`.
    weights: Option<(Matrix, Matrix)>,
    /// Point-mixture anchors in latent coordinates, one per row.
    anchors: Option<Matrix>,
}

impl Manifold {
    pub fn new(spec: &ManifoldSpec) -> Result<Self> {
        spec.validate()?;
        let (d, n) = (spec.d, spec.n);
        let rotation = if spec.rotate {
            Some(random_orthogonal(
                &mut RngStream::derived(spec.seed, Domain::Embedding, 0),
                n,
            )?)
        } else {
            None
        };
        let permutation = spec
            .permute_dims
            .then(|| RngStream::derived(spec.seed, Domain::Permutation, 0).permutation(n));
        let weights = (spec.family == Family::Nonlinear).then(|| {
            let mut rng = RngStream::derived(spec.seed, Domain::GeneratorWeights, 0);
            let h = 2 * d;
            let s1 = 1.0 / (d as f64).sqrt();
            let s2 = 1.0 / (h as f64).sqrt();
            let w1 = Matrix::from_vec(h, d, (0..h * d).map(|_| s1 * rng.normal()).collect());
            let w2 = Matrix::from_vec(n, h, (0..n * h).map(|_| s2 * rng.normal()).collect());
            (w1.expect("shape"), w2.expect("shape"))
        });
        let anchors = (spec.family == Family::PointMixture).then(|| {
            let mut rng = RngStream::derived(spec.seed, Domain::Anchors, 0);
            let a = spec.anchors;
            Matrix::from_vec(
                a,
                n,
                (0..a * n)
                    .map(|_| spec.anchor_scale * rng.normal())
                    .collect(),
            )
            .expect("shape")
        });
        Ok(Self {
            spec: spec.clone(),
            embedding: Embedding {
                rotation,
                permutation,
            },
            weights,
            anchors,
        })
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    /// Number of latent chart coordinates for differentiable families.
    pub fn chart_dim(&self) -> usize {
        self.spec.d
    }

    /// Latent (pre-embedding, zero-padded) coordinates of one random point.
    fn latent_sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let s = &self.spec;
        let (d, n) = (s.d, s.n);
        let mut v = vec![0.0; n];
        match s.family {
            Family::Hypersphere => {
                let z: Vec<f64> = (0..=d).map(|_| rng.normal()).collect();
                let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                for (vi, zi) in v.iter_mut().zip(&z) {
                    *vi = s.radius * zi / norm;
                }
            }
            Family::Hyperball => {
                let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                let rho = s.radius * rng.uniform().powf(1.0 / d as f64);
                for (vi, zi) in v.iter_mut().zip(&z) {
                    *vi = rho * zi / norm;
                }
            }
            Family::PointMixture => {
                let anchors = self.anchors.as_ref().expect("anchors");
                let k = rng.below(anchors.rows() as u64) as usize;
                v.copy_from_slice(anchors.row(k));
            }
            _ => {
                let coords = self.sample_chart_coords(rng);
                v = self.chart_latent(&coords);
            }
        }
        v
    }

    fn sample_chart_coords(&self, rng: &mut RngStream) -> Vec<f64> {
        let d = self.spec.d;
        match self.spec.family {
            Family::TwinpeaksGraph => (0..d).map(|_| rng.uniform()).collect(),
            Family::CliffordTorus => (0..d)
                .map(|_| 2.0 * std::f64::consts::PI * rng.uniform())
                .collect(),
            _ => (0..d).map(|_| rng.normal()).collect(),
        }
    }

    /// Latent padded image of chart coordinates (differentiable families).
    fn chart_latent(&self, c: &[f64]) -> Vec<f64> {
        let s = &self.spec;
        let (d, n) = (s.d, s.n);
        let mut v = vec![0.0; n];
        match s.family {
            Family::TwinpeaksGraph => {
                v[..d].copy_from_slice(c);
                v[d] = s.height
                    * c.iter()
                        .map(|u| (2.0 * std::f64::consts::PI * u).sin())
                        .product::<f64>();
            }
            Family::CliffordTorus => {
                let scale = 1.0 / (d as f64).sqrt();
                for (i, th) in c.iter().enumerate() {
                    v[2 * i] = scale * th.cos();
                    v[2 * i + 1] = scale * th.sin();
                }
            }
            Family::Nonlinear => {
                let (w1, w2) = self.weights.as_ref().expect("weights");
                let h: Vec<f64> = w1.matvec(c).into_iter().map(f64::tanh).collect();
                v = w2.matvec(&h).into_iter().map(f64::tanh).collect();
            }
            Family::AffineGaussian => v[..d].copy_from_slice(c),
            _ => unreachable!("not a chart family"),
        }
        v
    }

    /// Ambient image of chart coordinates.
    pub fn chart(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if !self.spec.family.is_differentiable() {
            return Err(LidError::UnsupportedFamily(format!(
                "{} has no differentiable chart",
                self.spec.family
            )));
        }
        if coords.len() != self.spec.d {
            return Err(LidError::Shape(format!(
                "expected {} chart coordinates, got {}",
                self.spec.d,
                coords.len()
            )));
        }
        Ok(self.embedding.apply(&self.chart_latent(coords)))
    }

    /// Draw point `index` of the cloud.
    pub fn sample_point(&self, index: usize) -> Vec<f64> {
        let mut rng = RngStream::derived(self.spec.seed, Domain::Points, index as u64);
        self.embedding.apply(&self.latent_sample(&mut rng))
    }

    pub fn sample(&self) -> Result<PointCloud> {
        let n = self.spec.n;
        let rows: Vec<Vec<f64>> = (0..self.spec.count)
            .into_par_iter()
            .map(|i| self.sample_point(i))
            .collect();
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            data.extend(r);
        }
        let points = Matrix::from_vec(self.spec.count, n, data)?;
        let mut cloud = PointCloud::new(points, vec![self.spec.true_lid(); self.spec.count])?;
        cloud.spec = Some(self.spec.clone());
        cloud.embedding = Some(self.embedding.clone());
        Ok(cloud)
    }

    /// Orthonormal `n × d` frame spanning an affine Gaussian's support.
    pub fn affine_frame(&self) -> Result<Matrix> {
        if self.spec.family != Family::AffineGaussian {
            return Err(LidError::UnsupportedFamily(format!(
                "{} has no affine frame",
                self.spec.family
            )));
        }
        let (d, n) = (self.spec.d, self.spec.n);
        let mut u = Matrix::zeros(n, d);
        for j in 0..d {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, x) in self.embedding.apply(&e).into_iter().enumerate() {
                u[(i, j)] = x;
            }
        }
        Ok(u)
    }

    /// Point-mixture anchors in ambient coordinates, one per row.
    pub fn mixture_anchors(&self) -> Result<Matrix> {
        let anchors = self.anchors.as_ref().ok_or_else(|| {
            LidError::UnsupportedFamily(format!("{} has no anchors", self.spec.family))
        })?;
        let rows: Vec<Vec<f64>> = anchors
            .iter_rows()
            .map(|r| self.embedding.apply(r))
            .collect();
        Matrix::from_rows(&rows)
    }
}

/// Generate the cloud described by `spec`.
pub fn sample(spec: &ManifoldSpec) -> Result<PointCloud> {
    Manifold::new(spec)?.sample()
}

const JACOBIAN_STEP: f64 = 1e-5;
const RANK_REL_TOL: f64 = 1e-6;

/// Central-difference Jacobian (`n × d`) of the chart at `coords`.
pub fn chart_jacobian(manifold: &Manifold, coords: &[f64]) -> Result<Matrix> {
    let (d, n) = (manifold.spec.d, manifold.spec.n);
    let mut jac = Matrix::zeros(n, d);
    let mut c = coords.to_vec();
    for j in 0..d {
        let orig = c[j];
        c[j] = orig + JACOBIAN_STEP;
        let plus = manifold.chart(&c)?;
        c[j] = orig - JACOBIAN_STEP;
        let minus = manifold.chart(&c)?;
        c[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Ok(jac)
}

/// Numerical rank of an `n × d` matrix: singular values above
/// `1e-6 · σ_max`.
pub fn numerical_rank(jac: &Matrix) -> Result<usize> {
    let spectrum = sym_eig(&jac.gram())?;
    let sv: Vec<f64> = spectrum.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let max = sv.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count())
}

/// Minimum numerical rank of the chart Jacobian over `probes` random chart
/// points.
pub fn jacobian_rank_check(spec: &ManifoldSpec, probes: usize) -> Result<usize> {
    if !spec.family.is_differentiable() {
        return Err(LidError::UnsupportedFamily(format!(
            "{} is not a differentiable-latent family",
            spec.family
        )));
    }
    if probes == 0 {
        return Err(LidError::Param("probes must be >= 1".into()));
    }
    let manifold = Manifold::new(spec)?;
    let mut rng = RngStream::derived(spec.seed, Domain::Jacobian, 0);
    let mut min_rank = usize::MAX;
    for _ in 0..probes {
        let coords = manifold.sample_chart_coords(&mut rng);
        let jac = chart_jacobian(&manifold, &coords)?;
        min_rank = min_rank.min(numerical_rank(&jac)?);
    }
    Ok(min_rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{euclidean, norm_sq};

    #[test]
    fn circle_without_rotation() {
        let mut spec = ManifoldSpec::new(Family::Hypersphere, 1, 2).with_count(200);
        spec.rotate = false;
        let cloud = sample(&spec).unwrap();
        for p in cloud.points.iter_rows() {
            assert!((norm_sq(p).sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(cloud.true_lid.iter().all(|&l| l == 1));
    }

    #[test]
    fn sphere_lives_in_rotated_subspace() {
        let spec = ManifoldSpec::new(Family::Hypersphere, 16, 64)
            .with_count(300)
            .with_seed(3);
        let m = Manifold::new(&spec).unwrap();
        let cloud = m.sample().unwrap();
        let q = m.embedding().rotation.as_ref().unwrap();
        for p in cloud.points.iter_rows() {
            let latent = q.tr_matvec(p);
            assert!((norm_sq(&latent[..17]).sqrt() - 1.0).abs() < 1e-10);
            assert!(latent[17..].iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn clifford_torus_on_unit_sphere() {
        let spec = ManifoldSpec::new(Family::CliffordTorus, 32, 128).with_count(100);
        let m = Manifold::new(&spec).unwrap();
        let cloud = m.sample().unwrap();
        for p in cloud.points.iter_rows() {
            let latent = m.embedding().unapply(p);
            for pair in latent[..64].chunks(2) {
                assert!((norm_sq(pair) - 1.0 / 32.0).abs() < 1e-12);
            }
            assert!((norm_sq(p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_at_origin() {
        let mut spec = ManifoldSpec::new(Family::PointMixture, 0, 5).with_count(50);
        spec.anchors = 1;
        spec.anchor_scale = 0.0;
        let cloud = sample(&spec).unwrap();
        assert!(cloud.points.as_slice().iter().all(|&x| x == 0.0));
        assert!(cloud.true_lid.iter().all(|&l| l == 0));
    }

    #[test]
    fn hyperball_inside_radius() {
        let spec = ManifoldSpec::new(Family::Hyperball, 3, 6).with_count(500);
        let cloud = sample(&spec).unwrap();
        assert!(cloud.points.iter_rows().all(|p| norm_sq(p) <= 1.0 + 1e-12));
    }

    #[test]
    fn constraint_violations() {
        for (family, d, n) in [
            (Family::Hypersphere, 20, 16),
            (Family::Hypersphere, 16, 16),
            (Family::CliffordTorus, 9, 17),
            (Family::TwinpeaksGraph, 4, 4),
            (Family::PointMixture, 1, 4),
        ] {
            let err = ManifoldSpec::new(family, d, n).validate().unwrap_err();
            assert!(
                err.to_string().contains("d must satisfy family constraint"),
                "{err}"
            );
        }
        let mut spec = ManifoldSpec::new(Family::Hyperball, 2, 3);
        spec.count = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let spec = ManifoldSpec::new(Family::Nonlinear, 3, 9)
            .with_count(64)
            .with_seed(12);
        let a = sample(&spec).unwrap();
        let b = sample(&spec).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn embedding_is_isometric() {
        let mut spec = ManifoldSpec::new(Family::TwinpeaksGraph, 2, 6).with_count(40);
        spec.rotate = false;
        let flat = sample(&spec).unwrap();
        spec.rotate = true;
        spec.permute_dims = true;
        spec.seed = 0;
        let emb = sample(&spec).unwrap();
        for i in 0..40 {
            for j in 0..i {
                let a = euclidean(flat.point(i), flat.point(j));
                let b = euclidean(emb.point(i), emb.point(j));
                assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn embedding_roundtrip() {
        let mut spec = ManifoldSpec::new(Family::AffineGaussian, 2, 7);
        spec.permute_dims = true;
        let m = Manifold::new(&spec).unwrap();
        let v: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let back = m.embedding().unapply(&m.embedding().apply(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_frame_is_orthonormal() {
        let m = Manifold::new(&ManifoldSpec::new(Family::AffineGaussian, 4, 8)).unwrap();
        let u = m.affine_frame().unwrap();
        let utu = u.gram();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((utu[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobian_ranks() {
        assert_eq!(
            jacobian_rank_check(&ManifoldSpec::new(Family::AffineGaussian, 4, 8), 10).unwrap(),
            4
        );
        assert_eq!(
            jacobian_rank_check(&ManifoldSpec::new(Family::Nonlinear, 8, 32), 20).unwrap(),
            8
        );
        assert_eq!(
            jacobian_rank_check(&ManifoldSpec::new(Family::TwinpeaksGraph, 2, 3), 20).unwrap(),
            2
        );
    }

    #[test]
    fn label_soundness_across_seeds() {
        for family in [
            Family::TwinpeaksGraph,
            Family::Nonlinear,
            Family::CliffordTorus,
            Family::AffineGaussian,
        ] {
            for seed in 0..5 {
                let spec = ManifoldSpec::new(family, 5, 12).with_seed(seed);
                assert_eq!(
                    jacobian_rank_check(&spec, 20).unwrap(),
                    5,
                    "{family} seed {seed}"
                );
            }
        }
    }

    #[test]
    fn jacobian_rejects_non_differentiable() {
        assert!(matches!(
            jacobian_rank_check(&ManifoldSpec::new(Family::Hypersphere, 2, 3), 5),
            Err(LidError::UnsupportedFamily(_))
        ));
    }
}
