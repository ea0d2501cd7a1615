//! Choosing clusters and their representatives.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::kmeans::Cluster;
use crate::seed::rng_from;

/// How K−1 clusters are picked out of k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterPolicy {
    Random,
    Closest,
    #[serde(alias = "farthest")]
    FarthestFirst,
}

impl std::fmt::Display for ClusterPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterPolicy::Random => "random",
            ClusterPolicy::Closest => "closest",
            ClusterPolicy::FarthestFirst => "farthest-first",
        })
    }
}

/// Distance used between centroids and the support vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentroidDistance {
    /// 1 − cosine similarity; centroids are compared unnormalised.
    Cosine,
    Euclidean,
}

/// Cosine similarity of arbitrary vectors; 0 when either is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

impl CentroidDistance {
    pub fn between(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            CentroidDistance::Cosine => 1.0 - cosine_similarity(u, v),
            CentroidDistance::Euclidean => {
                u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| f64::from(*x)).collect()
}

/// Pick `min(m, k)` clusters; returns cluster indices in selection order.
///
/// - `Random`: uniform sample without replacement under `seed`.
/// - `Closest`: ascending distance to the support vector, ties by index.
/// - `FarthestFirst`: the cluster farthest from the support first, then
///   repeatedly the cluster whose minimum distance to the already selected
///   centroids is largest. Ties go to the lowest index.
pub fn choose_clusters(
    clusters: &[Cluster],
    support: &[f32],
    m: usize,
    policy: ClusterPolicy,
    metric: CentroidDistance,
    seed: u64,
) -> Vec<usize> {
    let k = clusters.len();
    let m = m.min(k);
    if m == 0 {
        return Vec::new();
    }
    let support = widen(support);
    let to_support: Vec<f64> = clusters.iter().map(|c| metric.between(&c.centroid, &support)).collect();
    match policy {
        ClusterPolicy::Random => index::sample(&mut rng_from(seed), k, m).into_vec(),
        ClusterPolicy::Closest => {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| to_support[a].total_cmp(&to_support[b]).then(a.cmp(&b)));
            order.truncate(m);
            order
        }
        ClusterPolicy::FarthestFirst => {
            let first = argmax(&to_support, |_| true).expect("k > 0");
            let mut selected = vec![first];
            let mut min_dist: Vec<f64> =
                clusters.iter().map(|c| metric.between(&c.centroid, &clusters[first].centroid)).collect();
            while selected.len() < m {
                let next = argmax(&min_dist, |i| !selected.contains(&i)).expect("unselected clusters remain");
                selected.push(next);
                for (i, c) in clusters.iter().enumerate() {
                    min_dist[i] = min_dist[i].min(metric.between(&c.centroid, &clusters[next].centroid));
                }
            }
            selected
        }
    }
}

/// Index of the largest value among admissible positions; ties go to the lowest index.
fn argmax(values: &[f64], admissible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if !admissible(i) {
            continue;
        }
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Member whose vector has the highest cosine with the centroid; ties go to the
/// earliest member. `vector_of` must know every member.
pub fn representative<'a>(cluster: &Cluster, vector_of: impl Fn(u64) -> Option<&'a [f32]>) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for &id in &cluster.members {
        let v = widen(vector_of(id)?);
        let sim = cosine_similarity(&v, &cluster.centroid);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((id, sim));
        }
    }
    best.map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Vec<Cluster> {
        points.iter().enumerate().map(|(i, x)| Cluster { centroid: vec![*x], members: vec![i as u64] }).collect()
    }

    #[test]
    fn farthest_first_hand_case() {
        let clusters = line(&[1.0, 2.0, 10.0, 11.0]);
        let picked = choose_clusters(&clusters, &[0.0], 2, ClusterPolicy::FarthestFirst, CentroidDistance::Euclidean, 0);
        let xs: Vec<f64> = picked.iter().map(|&i| clusters[i].centroid[0]).collect();
        assert_eq!(xs, vec![11.0, 1.0]);
    }

    #[test]
    fn closest_hand_case() {
        let clusters = line(&[1.0, 2.0, 10.0, 11.0]);
        let picked = choose_clusters(&clusters, &[0.0], 2, ClusterPolicy::Closest, CentroidDistance::Euclidean, 0);
        let xs: Vec<f64> = picked.iter().map(|&i| clusters[i].centroid[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_and_clamped_counts() {
        let clusters = line(&[1.0, 2.0, 10.0]);
        for policy in [ClusterPolicy::Random, ClusterPolicy::Closest, ClusterPolicy::FarthestFirst] {
            assert!(choose_clusters(&clusters, &[0.0], 0, policy, CentroidDistance::Euclidean, 1).is_empty());
            let mut all = choose_clusters(&clusters, &[0.0], 7, policy, CentroidDistance::Euclidean, 1);
            all.sort();
            assert_eq!(all, vec![0, 1, 2]);
        }
        assert!(choose_clusters(&[], &[0.0], 3, ClusterPolicy::Closest, CentroidDistance::Cosine, 0).is_empty());
    }

    #[test]
    fn random_policy_is_seeded() {
        let clusters = line(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let a = choose_clusters(&clusters, &[0.0], 3, ClusterPolicy::Random, CentroidDistance::Cosine, 9);
        let b = choose_clusters(&clusters, &[0.0], 3, ClusterPolicy::Random, CentroidDistance::Cosine, 9);
        assert_eq!(a, b);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            seen.extend(choose_clusters(&clusters, &[0.0], 3, ClusterPolicy::Random, CentroidDistance::Cosine, seed));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn cosine_metric_on_raw_centroids() {
        let clusters = vec![
            Cluster { centroid: vec![0.5, 0.0], members: vec![0] },
            Cluster { centroid: vec![0.0, 3.0], members: vec![1] },
            Cluster { centroid: vec![0.3, 0.3], members: vec![2] },
        ];
        let picked = choose_clusters(&clusters, &[1.0, 0.0], 3, ClusterPolicy::Closest, CentroidDistance::Cosine, 0);
        assert_eq!(picked, vec![0, 2, 1]);
    }

    #[test]
    fn representative_cases() {
        let vecs: Vec<(u64, Vec<f32>)> = vec![(5, vec![0.0, 1.0]), (8, vec![0.6, 0.8]), (9, vec![0.6, 0.8])];
        let lookup = |id: u64| vecs.iter().find(|(i, _)| *i == id).map(|(_, v)| v.as_slice());

        let single = Cluster { centroid: vec![0.0, 1.0], members: vec![5] };
        assert_eq!(representative(&single, lookup), Some(5));

        // Brute-force oracle: highest cosine with the normalised centroid, first
        // member on ties. The two candidates tie in exact arithmetic (0.9 each).
        let n = (0.3f64 * 0.3 + 0.9 * 0.9).sqrt();
        let c = Cluster { centroid: vec![0.3 / n, 0.9 / n], members: vec![5, 8] };
        let oracle = c
            .members
            .iter()
            .map(|id| {
                let v = lookup(*id).unwrap();
                let (x, y) = (f64::from(v[0]), f64::from(v[1]));
                (*id, (x * c.centroid[0] + y * c.centroid[1]) / (x * x + y * y).sqrt())
            })
            .fold(None::<(u64, f64)>, |best, (id, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((id, s)),
            })
            .unwrap()
            .0;
        assert_eq!(representative(&c, lookup), Some(oracle));

        let tie = Cluster { centroid: vec![0.3, 0.9], members: vec![9, 8] };
        assert_eq!(representative(&tie, lookup), Some(9));
    }
}
