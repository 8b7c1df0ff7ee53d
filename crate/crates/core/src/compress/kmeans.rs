//! Lloyd's k-means with k-means++ seeding and farthest-point repair of empty
//! clusters. Deterministic for a given RNG state.

use rand::Rng;

use crate::data::rng::Rng as SeededRng;
use crate::error::{Error, Result};
use crate::scalar::{squared_l2, Scalar};

pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Clone, Debug)]
pub struct KMeans<T> {
    pub dim: usize,
    pub k: usize,
    /// `k` rows of length `dim`.
    pub centroids: Vec<T>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step; the final entry
    /// corresponds to the returned centroids.
    pub objective_trace: Vec<f64>,
}

impl<T: Scalar> KMeans<T> {
    pub fn centroid(&self, j: usize) -> &[T] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

/// Index and squared distance of the nearest centroid; ties go to the lowest
/// index.
#[inline]
pub fn nearest_centroid<T: Scalar>(centroids: &[T], dim: usize, x: &[T]) -> (usize, T) {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(c, x);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// Clusters `points` (row-major, `dim` columns) into `k` groups.
pub fn kmeans<T: Scalar>(points: &[T], dim: usize, k: usize, iters: usize, rng: &mut SeededRng) -> Result<KMeans<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: points.len(),
        });
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewTrainingPoints { needed: k, got: n });
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut centroids = kmeans_plus_plus(points, dim, k, rng);
    let mut assignments = vec![0usize; n];
    let mut dists = vec![T::zero(); n];
    let mut trace = Vec::with_capacity(iters + 1);

    let assign = |centroids: &[T], assignments: &mut [usize], dists: &mut [T]| -> (f64, bool) {
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..n {
            let (j, d) = nearest_centroid(centroids, dim, row(i));
            changed |= assignments[i] != j;
            assignments[i] = j;
            dists[i] = d;
            total += d.as_f64();
        }
        (total, changed)
    };

    let (obj, _) = assign(&centroids, &mut assignments, &mut dists);
    trace.push(obj);

    for _ in 0..iters {
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut repaired = false;
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            // Move the empty centroid onto the point worst served by its own
            // cluster, provided that cluster keeps at least one member.
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                counts[j] = 1;
                assignments[i] = j;
                dists[i] = T::zero();
                centroids[j * dim..(j + 1) * dim].copy_from_slice(row(i));
                repaired = true;
            }
        }

        let mut sums = vec![T::zero(); k * dim];
        for i in 0..n {
            let a = assignments[i];
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s = *s + *v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let c = T::of(counts[j] as f64);
            for t in 0..dim {
                centroids[j * dim + t] = sums[j * dim + t] / c;
            }
        }

        let (obj, changed) = assign(&centroids, &mut assignments, &mut dists);
        trace.push(obj);
        if !changed && !repaired {
            break;
        }
    }

    Ok(KMeans {
        dim,
        k,
        centroids,
        assignments,
        objective_trace: trace,
    })
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the closest chosen centre.
fn kmeans_plus_plus<T: Scalar>(points: &[T], dim: usize, k: usize, rng: &mut SeededRng) -> Vec<T> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);

    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_l2(row(i), row(first)).as_f64()).collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Fewer distinct points than clusters.
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.extend_from_slice(row(pick));
        for i in 0..n {
            let d = squared_l2(row(i), row(pick)).as_f64();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::seeded;

    fn blobs(seed: u64) -> Vec<f64> {
        let mut r = seeded(seed);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut pts = Vec::new();
        for i in 0..300 {
            let c = centers[i % 3];
            pts.push(c[0] + r.gen_range(-1.0..1.0));
            pts.push(c[1] + r.gen_range(-1.0..1.0));
        }
        pts
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..5 {
            let km = kmeans(&blobs(seed), 2, 7, 30, &mut seeded(seed)).unwrap();
            for w in km.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", km.objective_trace);
            }
        }
    }

    #[test]
    fn k_distinct_points_are_fixed_point() {
        let pts = vec![0.0, 0.0, 5.0, 1.0, -2.0, 3.0, 7.0, 7.0];
        let km = kmeans(&pts, 2, 4, 10, &mut seeded(1)).unwrap();
        assert_eq!(km.objective(), 0.0);
        let mut got: Vec<Vec<f64>> = (0..4).map(|j| km.centroid(j).to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> = pts.chunks(2).map(|c| c.to_vec()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn duplicates_and_empty_clusters() {
        // Four copies of one point plus one other; k = 3 forces repair.
        let pts = vec![1.0, 1.0, 1.0, 1.0, 9.0];
        let km = kmeans(&pts, 1, 3, 5, &mut seeded(0)).unwrap();
        assert_eq!(km.objective(), 0.0);
    }

    #[test]
    fn deterministic_and_validated() {
        let a = kmeans(&blobs(3), 2, 3, 10, &mut seeded(42)).unwrap();
        let b = kmeans(&blobs(3), 2, 3, 10, &mut seeded(42)).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert!(matches!(
            kmeans(&[1.0f64, 2.0], 1, 3, 1, &mut seeded(0)),
            Err(Error::TooFewTrainingPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn nearest_ties_lowest_index() {
        let c = [0.0f32, 2.0];
        assert_eq!(nearest_centroid(&c, 1, &[1.0]).0, 0);
    }
}
