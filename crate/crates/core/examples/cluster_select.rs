//! k-means / k-means++ over a toy pool, then cluster choice under each policy.
//!
//! cargo run --example cluster_select

use relshot::select::{choose_clusters, kmeans, representative, CentroidDistance, ClusterPolicy, Init};

fn main() {
    // Three loose groups on a line plus a straggler.
    let raw: Vec<(u64, Vec<f32>)> = [
        [0.0, 0.1], [0.2, 0.0], [0.1, 0.3], [5.0, 5.1], [5.2, 4.9], [4.8, 5.0], [9.9, 0.2], [10.1, 0.0], [10.0, -0.3],
    ]
    .iter()
    .enumerate()
    .map(|(i, p)| (i as u64 + 100, p.to_vec()))
    .collect();
    let points: Vec<(u64, &[f32])> = raw.iter().map(|(id, v)| (*id, v.as_slice())).collect();
    let k = points.len().isqrt();

    for init in [Init::Random, Init::PlusPlus] {
        let out = kmeans(&points, k, init, 7).unwrap();
        println!("{init}: {} iterations, objective trace {:.3?}", out.iterations, out.objective_trace);
    }

    let out = kmeans(&points, k, Init::PlusPlus, 7).unwrap();
    let support = [0.0f32, 0.0];
    let vector_of = |id: u64| raw.iter().find(|(i, _)| *i == id).map(|(_, v)| v.as_slice());
    for policy in [ClusterPolicy::Closest, ClusterPolicy::FarthestFirst, ClusterPolicy::Random] {
        let picked = choose_clusters(&out.clusters, &support, 2, policy, CentroidDistance::Euclidean, 7);
        let reps: Vec<u64> = picked.iter().filter_map(|&c| representative(&out.clusters[c], vector_of)).collect();
        println!("{policy:?}: clusters {picked:?}, representatives {reps:?}");
    }
}
