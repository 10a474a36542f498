use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::embed::{dot, normalise};
use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Σ (1 − cos) after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Groups unit vectors into `k` clusters.
pub trait ClusterStrategy {
    fn cluster(&self, points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering>;
}

/// Lloyd iterations under cosine similarity with k-means++ seeding.
#[derive(Debug, Clone, Copy, Default)]
pub struct SphericalKMeans;

/// Index of the most similar centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let s = dot(point, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = keyed(seed, Stream::KMeansInit, &[]);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| (1.0 - dot(p, &centroids[0])).max(0.0))
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(&mut rng),
            // Every remaining point coincides with a chosen centroid.
            Err(_) => rng.gen_range(0..points.len()),
        };
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((1.0 - dot(p, c)).max(0.0));
        }
    }
    centroids
}

impl ClusterStrategy for SphericalKMeans {
    fn cluster(&self, points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
        if k == 0 {
            return Err(Error::invalid("number of topics must be at least 1"));
        }
        if k > points.len() {
            return Err(Error::invalid(format!(
                "cannot fit {k} topics to {} non-empty documents",
                points.len()
            )));
        }
        let mut centroids = plus_plus_init(points, k, seed);
        let mut assignments = vec![usize::MAX; points.len()];
        let mut objective_trace = Vec::new();
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut changes = 0;
            for (a, p) in assignments.iter_mut().zip(points) {
                let (best, _) = nearest(p, &centroids);
                if *a != best {
                    *a = best;
                    changes += 1;
                }
            }
            let dim = points[0].len();
            let mut sums = vec![vec![0.0; dim]; k];
            for (&a, p) in assignments.iter().zip(points) {
                for (s, x) in sums[a].iter_mut().zip(p) {
                    *s += x;
                }
            }
            for (c, mut s) in centroids.iter_mut().zip(sums) {
                normalise(&mut s);
                // Empty clusters (or exactly cancelling members) keep their centroid.
                if s.iter().any(|&x| x != 0.0) {
                    *c = s;
                }
            }
            let objective: f64 = assignments
                .iter()
                .zip(points)
                .map(|(&a, p)| 1.0 - dot(p, &centroids[a]))
                .sum();
            objective_trace.push(objective);
            if changes == 0 {
                break;
            }
        }
        Ok(Clustering {
            centroids,
            assignments,
            objective_trace,
            iterations,
        })
    }
}
