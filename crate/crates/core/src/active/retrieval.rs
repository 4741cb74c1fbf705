use std::collections::BTreeSet;

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks candidates by their best cosine similarity to any seed and keeps the top `budget`.
///
/// Candidates or seeds with zero-norm features are skipped with a warning. Ties are
/// broken by id; each candidate id appears at most once.
pub fn retrieve_similar(seeds: &[(String, Vec<f32>)], candidates: &[(String, Vec<f32>)], budget: usize) -> Vec<(String, f64)> {
    let usable_seeds: Vec<&(String, Vec<f32>)> = seeds
        .iter()
        .filter(|(id, f)| {
            let ok = f.iter().any(|v| *v != 0.0);
            if !ok {
                log::warn!("seed {id} has a zero feature vector; ignored");
            }
            ok
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut scored = Vec::new();
    for (id, f) in candidates {
        if !seen.insert(id.as_str()) {
            continue;
        }
        let best = usable_seeds
            .iter()
            .filter_map(|(_, s)| cosine_similarity(s, f))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        match best {
            Some(sim) => scored.push((id.clone(), sim)),
            None if !usable_seeds.is_empty() => log::warn!("candidate {id} has a zero feature vector; excluded"),
            None => {}
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(budget);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn v(id: &str, f: &[f32]) -> (String, Vec<f32>) {
        (id.to_string(), f.to_vec())
    }

    #[test]
    fn duplicate_of_seed_ranks_first_and_orthogonal_last() {
        let seeds = [v("s", &[1.0, 2.0, 0.0])];
        let cands = [v("orth", &[0.0, 0.0, 3.0]), v("dup", &[1.0, 2.0, 0.0]), v("near", &[1.0, 1.5, 0.2])];
        let r = retrieve_similar(&seeds, &cands, 3);
        assert_eq!(r[0].0, "dup");
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(r[2], ("orth".to_string(), 0.0));
    }

    #[test]
    fn zero_vectors_are_excluded() {
        let seeds = [v("s", &[1.0, 0.0]), v("z", &[0.0, 0.0])];
        let cands = [v("a", &[0.0, 0.0]), v("b", &[1.0, 1.0])];
        let r = retrieve_similar(&seeds, &cands, 5);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, "b");
    }

    #[test]
    fn seed_family_dominates_retrieval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut family = |center: [f32; 3], n: usize, tag: &str| -> Vec<(String, Vec<f32>)> {
            (0..n)
                .map(|i| {
                    let f = center.iter().map(|c| c + rng.random_range(-0.2..0.2)).collect();
                    (format!("{tag}{i:02}"), f)
                })
                .collect()
        };
        let a = family([1.0, 0.1, 0.1], 40, "a");
        let b = family([0.1, 1.0, 0.3], 40, "b");
        let seeds = family([1.0, 0.1, 0.1], 2, "seed");
        let cands: Vec<_> = a.iter().chain(&b).cloned().collect();
        let r = retrieve_similar(&seeds, &cands, 30);
        let from_a = r.iter().filter(|(id, _)| id.starts_with('a')).count();
        assert!(from_a * 10 >= 8 * r.len());
        // Independent brute force: sort by max cosine over seeds.
        let mut brute: Vec<(String, f64)> = cands
            .iter()
            .map(|(id, f)| {
                let s = seeds
                    .iter()
                    .map(|(_, sf)| {
                        let dot: f64 = sf.iter().zip(f).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
                        let n = |u: &Vec<f32>| u.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                        dot / (n(sf) * n(f))
                    })
                    .fold(f64::MIN, f64::max);
                (id.clone(), s)
            })
            .collect();
        brute.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        let ids: Vec<_> = r.iter().map(|x| &x.0).collect();
        let brute_ids: Vec<_> = brute.iter().take(30).map(|x| &x.0).collect();
        assert_eq!(ids, brute_ids);
    }
}
