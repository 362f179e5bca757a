//! Random streams, dense linear algebra and nearest-neighbor search.

pub mod knn;
pub mod linalg;
pub mod rng;

pub use knn::{euclidean, knn, knn_distances, Neighbor};
pub use linalg::{
    axpy, dot, gemm, norm_sq, random_orthogonal, sym_eig, sym_eig_full, Matrix, Spectrum, SymEigen,
};
pub use rng::{derive_key, gaussian_vector, rademacher_vector, Domain, RngStream};
