//! Seeded, deterministic K-Means used to propose initialization candidates.
//!
//! The first center is drawn from the seeded RNG; remaining centers are
//! chosen farthest-point style (maximum squared distance to the nearest
//! already-chosen center, ties to the lowest index). Lloyd iterations then
//! run until assignments stop changing or `max_iter` is hit; a cluster that
//! loses all points keeps its previous center. Centers are returned in
//! lexicographic order so the output is reproducible and order-independent.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecmath;

pub fn kmeans(
    points: &[Vec<f64>],
    clusters: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Vec<Vec<f64>>> {
    if clusters == 0 {
        return Err(Error::Invalid("cluster count must be at least 1".into()));
    }
    if points.len() < clusters {
        return Err(Error::Invalid(format!(
            "{} points cannot fill {} clusters",
            points.len(),
            clusters
        )));
    }
    if max_iter == 0 {
        return Err(Error::Invalid("k-means max_iter must be at least 1".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Invalid("k-means points differ in dimension".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut centers: Vec<Vec<f64>> = vec![points[first].clone()];
    while centers.len() < clusters {
        let mut best = 0;
        let mut best_dist = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let nearest = centers
                .iter()
                .map(|c| vecmath::squared_distance(p, c))
                .fold(f64::INFINITY, f64::min);
            if nearest > best_dist {
                best_dist = nearest;
                best = i;
            }
        }
        centers.push(points[best].clone());
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = vecmath::squared_distance(p, center);
                if d < best_dist {
                    best_dist = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; clusters];
        let mut counts = vec![0usize; clusters];
        for (p, &a) in points.iter().zip(&assignments) {
            vecmath::add_scaled(&mut sums[a], p, 1.0);
            counts[a] += 1;
        }
        for (c, (sum, &count)) in sums.into_iter().zip(&counts).enumerate() {
            if count > 0 {
                centers[c] = sum;
                vecmath::scale(&mut centers[c], 1.0 / count as f64);
            }
        }
    }

    centers.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(centers)
}
