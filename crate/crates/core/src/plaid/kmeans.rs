//! Spherical k-means: k-means++ seeding followed by a fixed number of Lloyd
//! iterations, with centroids re-projected onto the unit sphere after each
//! update.

use std::collections::hash_map::{Entry, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Centroids, PlaidError};
use crate::encoder::{dot, TokenMatrix};

/// Output of [`train_centroids_traced`].
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub centroids: Centroids,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
}

pub fn train_centroids(samples: &TokenMatrix, k: usize, iters: usize, seed: u64) -> Result<Centroids, PlaidError> {
    train_centroids_traced(samples, k, iters, seed).map(|r| r.centroids)
}

pub fn train_centroids_traced(
    samples: &TokenMatrix,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<KMeansRun, PlaidError> {
    let n = samples.n_tokens();
    if k == 0 {
        return Err(PlaidError::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(PlaidError::TooFewSamples { k, samples: n });
    }
    let dim = samples.dim();
    let mut points = Points::dedup(samples);
    let mut centroids = seed_plus_plus(&points, k, seed);
    let mut objective = Vec::with_capacity(iters);

    for _ in 0..iters {
        let mut assign: Vec<u32> = (0..points.len())
            .into_par_iter()
            .map(|i| centroids.nearest(points.row(i)).0)
            .collect();
        objective.push(
            (0..points.len())
                .map(|i| points.weight[i] as f64 * sq_dist(points.row(i), centroids.row(assign[i] as usize)))
                .sum(),
        );

        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a as usize] += points.weight[i];
        }
        repair_empty(&mut points, &centroids, &mut assign, &mut counts);

        let mut sums = vec![0.0f64; k * dim];
        for (i, &a) in assign.iter().enumerate() {
            let w = points.weight[i] as f64;
            let acc = &mut sums[a as usize * dim..(a as usize + 1) * dim];
            for (s, &x) in acc.iter_mut().zip(points.row(i)) {
                *s += w * x as f64;
            }
        }
        for c in 0..k {
            let mean: Vec<f64> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|s| s / counts[c] as f64)
                .collect();
            if let Some(unit) = unit_f32(&mean) {
                centroids.row_mut(c).copy_from_slice(&unit);
            }
        }
    }
    Ok(KMeansRun {
        centroids,
        objective,
    })
}

/// Distinct sample rows in first-occurrence order with their multiplicities.
struct Points<'a> {
    samples: &'a TokenMatrix,
    source: Vec<usize>,
    weight: Vec<usize>,
}

impl<'a> Points<'a> {
    fn dedup(samples: &'a TokenMatrix) -> Self {
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut source = Vec::new();
        let mut weight = Vec::new();
        for i in 0..samples.n_tokens() {
            let key: Vec<u32> = samples.row(i).iter().map(|x| x.to_bits()).collect();
            match index.entry(key) {
                Entry::Occupied(e) => weight[*e.get()] += 1,
                Entry::Vacant(e) => {
                    e.insert(source.len());
                    source.push(i);
                    weight.push(1);
                }
            }
        }
        Self { samples, source, weight }
    }

    fn len(&self) -> usize {
        self.source.len()
    }

    fn row(&self, i: usize) -> &[f32] {
        self.samples.row(self.source[i])
    }

    /// Moves one copy of point `i` into a new point of its own.
    fn split_one(&mut self, i: usize) -> usize {
        self.weight[i] -= 1;
        self.source.push(self.source[i]);
        self.weight.push(1);
        self.source.len() - 1
    }
}

/// Sum of squared Euclidean distances of samples to their assigned centroid.
pub fn sse(samples: &TokenMatrix, centroids: &Centroids, assign: &[u32]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(samples.row(i), centroids.row(a as usize)))
        .sum()
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let d = x as f64 - y as f64;
        acc[i % 8] += d * d;
    }
    acc.iter().sum()
}

/// Normalizes an f64 vector into f32. A vector already of unit length to
/// within f32 rounding is only narrowed, so averaging identical unit vectors
/// reproduces them exactly. Returns `None` for the zero vector.
fn unit_f32(v: &[f64]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    let scale = if (norm - 1.0).abs() <= 1e-7 { 1.0 } else { norm };
    Some(v.iter().map(|x| (x / scale) as f32).collect())
}

/// k-means++ over weighted points: each copy of a sample counts once.
fn seed_plus_plus(points: &Points, k: usize, seed: u64) -> Centroids {
    let n: usize = points.weight.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut left = points.weight.clone();
    let mut picks = Vec::with_capacity(k);

    let first = copy_owner(&left, rng.random_range(0..n));
    left[first] -= 1;
    picks.push(first);
    let mut d2: Vec<f64> = (0..points.len())
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();

    while picks.len() < k {
        let total: f64 = d2.iter().zip(&points.weight).map(|(d, &w)| d * w as f64).sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, (&d, &w)) in d2.iter().zip(&points.weight).enumerate() {
                let w = d * w as f64;
                if w <= 0.0 {
                    continue;
                }
                if r < w {
                    pick = Some(i);
                    break;
                }
                r -= w;
            }
            // rounding can walk past the end; fall back to the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining copy coincides with a chosen one
            let free: usize = left.iter().sum();
            copy_owner(&left, rng.random_range(0..free))
        };
        left[next] -= 1;
        picks.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }

    let mut c = Centroids::zeros(k, points.samples.dim());
    for (ci, &p) in picks.iter().enumerate() {
        let v: Vec<f64> = points.row(p).iter().map(|&x| x as f64).collect();
        let unit = unit_f32(&v).unwrap_or_else(|| points.row(p).to_vec());
        c.row_mut(ci).copy_from_slice(&unit);
    }
    c
}

/// Point owning the `r`-th copy when copies are laid out by point.
fn copy_owner(counts: &[usize], mut r: usize) -> usize {
    for (i, &c) in counts.iter().enumerate() {
        if r < c {
            return i;
        }
        r -= c;
    }
    unreachable!("copy index out of range")
}

/// Gives every empty cluster one copy of the point farthest from its current
/// centroid, taken from a cluster that keeps at least one member.
fn repair_empty(points: &mut Points, centroids: &Centroids, assign: &mut Vec<u32>, counts: &mut [usize]) {
    for c in 0..counts.len() {
        if counts[c] > 0 {
            continue;
        }
        let victim = (0..assign.len())
            .filter(|&i| counts[assign[i] as usize] > 1)
            .map(|i| (i, 1.0 - dot(points.row(i), centroids.row(assign[i] as usize))))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = victim {
            counts[assign[i] as usize] -= 1;
            counts[c] = 1;
            if points.weight[i] > 1 {
                points.split_one(i);
                assign.push(c as u32);
            } else {
                assign[i] = c as u32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::normalize;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        normalize(&mut v);
        v
    }

    #[test]
    fn k_equal_to_samples_reproduces_them() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f32>> = (0..12).map(|_| random_unit(&mut rng, 16)).collect();
        let m = TokenMatrix::from_rows(16, &rows);
        let c = train_centroids(&m, 12, 5, 3).unwrap();
        let mut seen = vec![false; 12];
        for r in &rows {
            let (id, score) = c.nearest(r);
            assert_eq!(c.row(id as usize), r.as_slice());
            assert!((score - 1.0).abs() < 1e-6);
            assert!(!seen[id as usize], "two samples share a cluster");
            seen[id as usize] = true;
        }
    }

    #[test]
    fn k_one_is_normalized_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f32>> = (0..50).map(|_| random_unit(&mut rng, 8)).collect();
        let m = TokenMatrix::from_rows(8, &rows);
        let c = train_centroids(&m, 1, 3, 0).unwrap();
        let mut mean = vec![0.0f64; 8];
        for r in &rows {
            for (a, &x) in mean.iter_mut().zip(r) {
                *a += x as f64 / 50.0;
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in c.row(0).iter().zip(&mean) {
            assert!((*got as f64 - want / norm).abs() < 1e-6);
        }
    }

    #[test]
    fn separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 32;
        let centers = [random_unit(&mut rng, dim), random_unit(&mut rng, dim)];
        let mut rows = Vec::new();
        let mut sums = [vec![0.0f64; dim], vec![0.0f64; dim]];
        for i in 0..200 {
            let b = i % 2;
            let mut v: Vec<f32> = centers[b]
                .iter()
                .map(|&x| x + 0.05 * { let z: f32 = StandardNormal.sample(&mut rng); z })
                .collect();
            normalize(&mut v);
            for (s, &x) in sums[b].iter_mut().zip(&v) {
                *s += x as f64;
            }
            rows.push(v);
        }
        let m = TokenMatrix::from_rows(dim, &rows);
        let c = train_centroids(&m, 2, 10, 9).unwrap();
        for s in &sums {
            let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dir: Vec<f32> = s.iter().map(|x| (x / norm) as f32).collect();
            let best = (0..2).map(|ci| dot(c.row(ci), &dir)).fold(f64::MIN, f64::max);
            assert!(best > 0.99, "blob direction matched only at cosine {best}");
        }
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let m = TokenMatrix::from_rows(4, [[1.0f32, 0.0, 0.0, 0.0]]);
        assert!(matches!(
            train_centroids(&m, 2, 1, 0),
            Err(PlaidError::TooFewSamples { k: 2, samples: 1 })
        ));
        assert!(train_centroids(&m, 0, 1, 0).is_err());
    }

    #[test]
    fn duplicate_samples_keep_every_cluster_populated() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, 1.0];
        let m = TokenMatrix::from_rows(2, [a, a, a, b]);
        let c = train_centroids(&m, 3, 4, 0).unwrap();
        assert_eq!(c.k(), 3);
        assert!(c.is_normalized(1e-6));
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows: Vec<Vec<f32>> = (0..300).map(|_| random_unit(&mut rng, 16)).collect();
            let m = TokenMatrix::from_rows(16, &rows);
            let run = train_centroids_traced(&m, 12, 15, seed).unwrap();
            for w in run.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f32>> = (0..100).map(|_| random_unit(&mut rng, 8)).collect();
        let m = TokenMatrix::from_rows(8, &rows);
        assert_eq!(
            train_centroids(&m, 7, 5, 42).unwrap(),
            train_centroids(&m, 7, 5, 42).unwrap()
        );
    }
}
