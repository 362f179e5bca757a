//! Exhaustive k-nearest-neighbor search.

use crate::error::{LidError, Result};

use super::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The `k` nearest neighbors of row `query` among the rows of `points`,
/// excluding the query itself. Ascending by distance, ties broken by the
/// smaller point index.
pub fn knn(points: &Matrix, query: usize, k: usize) -> Result<Vec<Neighbor>> {
    let n = points.rows();
    if k >= n {
        return Err(LidError::InsufficientPoints { k, n });
    }
    if query >= n {
        return Err(LidError::Param(format!(
            "query index {query} out of range for {n} points"
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let q = points.row(query);
    let mut cands: Vec<Neighbor> = (0..n)
        .filter(|&i| i != query)
        .map(|i| Neighbor {
            index: i,
            distance: euclidean(q, points.row(i)),
        })
        .collect();
    let order = |a: &Neighbor, b: &Neighbor| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    };
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(order);
    Ok(cands)
}

/// Distances to the `k` nearest neighbors of `query`, ascending.
pub fn knn_distances(points: &Matrix, query: usize, k: usize) -> Result<Vec<f64>> {
    Ok(knn(points, query, k)?
        .into_iter()
        .map(|nb| nb.distance)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn collinear() {
        let p = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(knn_distances(&p, 0, 2).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn square_corners() {
        let p = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let d = knn_distances(&p, 0, 3).unwrap();
        assert_eq!(d, vec![1.0, 1.0, 2f64.sqrt()]);
        let idx: Vec<usize> = knn(&p, 0, 3).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn too_many_neighbors() {
        let p = Matrix::zeros(3, 2);
        assert!(matches!(
            knn_distances(&p, 0, 3),
            Err(LidError::InsufficientPoints { k: 3, n: 3 })
        ));
    }

    #[test]
    fn matches_full_sort() {
        let mut rng = RngStream::new(2, 2);
        let p = Matrix::from_vec(100, 3, (0..300).map(|_| rng.normal()).collect()).unwrap();
        for q in 0..100 {
            let mut all: Vec<(f64, usize)> = (0..100)
                .filter(|&i| i != q)
                .map(|i| (euclidean(p.row(q), p.row(i)), i))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = knn(&p, q, 5).unwrap();
            for (g, w) in got.iter().zip(&all[..5]) {
                assert_eq!(g.index, w.1);
                assert_eq!(g.distance, w.0);
            }
        }
    }
}
