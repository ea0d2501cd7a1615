//! Support-example selection: closest retrieval, clustering, hybrid pools.

pub mod clusters;
pub mod diversity;
pub mod hybrid;
pub mod kmeans;
pub mod strategy;

pub use clusters::{choose_clusters, representative, CentroidDistance, ClusterPolicy};
pub use diversity::{diversity_report, token_overlap_pct, DiversityReport, Embedded, PairStats};
pub use hybrid::{assemble_hybrid_pool, shuffle_pool, CandidatePool, PoolCandidate, PoolEntry, PoolError, Provenance};
pub use kmeans::{kmeans, Cluster, ClusterError, Init, KMeansOutcome, MAX_ITERATIONS};
pub use strategy::{Representation, SelectionStrategy, StrategyError, StrategyKind};

/// Number of clusters for a pool of `n` candidates: ⌊√n⌋.
pub fn num_clusters(n: usize) -> usize {
    n.isqrt()
}

/// The first `min(m, ranked.len())` ids of an already ranked list.
pub fn select_closest(ranked: &[u64], m: usize) -> Vec<u64> {
    ranked[..m.min(ranked.len())].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_counts() {
        assert_eq!(num_clusters(16), 4);
        assert_eq!(num_clusters(10), 3);
        assert_eq!(num_clusters(0), 0);
        assert_eq!(num_clusters(1), 1);
        assert_eq!(num_clusters(64), 8);
        for n in 0..2000usize {
            let k = num_clusters(n);
            assert!(k * k <= n && (k + 1) * (k + 1) > n);
        }
    }

    #[test]
    fn closest_prefix() {
        assert_eq!(select_closest(&[7, 3, 9], 2), vec![7, 3]);
        assert_eq!(select_closest(&[7, 3, 9], 5), vec![7, 3, 9]);
        assert!(select_closest(&[7, 3, 9], 0).is_empty());
    }
}
