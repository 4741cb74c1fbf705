use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding under Euclidean distance.
///
/// `k` is clamped to `[1, points.len()]`. Deterministic for a fixed seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> KMeans {
    let n = points.len();
    if n == 0 {
        return KMeans {
            centroids: Vec::new(),
            assignments: Vec::new(),
            iterations: 0,
        };
    }
    let k = k.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; take the first unused index.
            (0..n).find(|i| !centroids.contains(&points[*i])).unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                if target < *di {
                    pick = i;
                    break;
                }
                target -= di;
            }
            pick
        };
        centroids.push(points[next].clone());
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    for iter in 0..max_iter.max(1) {
        iterations = iter + 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, &centroids[a]).total_cmp(&dist2(p, &centroids[b])))
                .expect("k ≥ 1");
            if best != assignments[i] || iter == 0 {
                changed |= best != assignments[i];
                assignments[i] = best;
            }
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    KMeans {
        centroids,
        assignments,
        iterations,
    }
}
