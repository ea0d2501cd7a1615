//! Lloyd's k-means with random (Forgy) or k-means++ seeding.
//!
//! Squared Euclidean distance throughout. Runs until the assignment reaches a
//! fixpoint or [`MAX_ITERATIONS`] updates have been made. The objective is
//! checked after every half-step and must never increase.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no vectors to cluster")]
    EmptyInput,
    #[error("k = {k} is not in 1..={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("vector {id} has dimension {got}, expected {expected}")]
    DimensionMismatch { id: u64, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// k distinct input points drawn uniformly.
    #[serde(rename = "kmeans")]
    Random,
    /// D² sampling.
    #[serde(rename = "kmeans++")]
    PlusPlus,
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Init::Random => "kmeans",
            Init::PlusPlus => "kmeans++",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean of the member vectors (not renormalised).
    pub centroid: Vec<f64>,
    /// Member ids in input order.
    pub members: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub clusters: Vec<Cluster>,
    /// Number of update steps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the initial assignment and after each iteration.
    pub objective_trace: Vec<f64>,
}

impl KMeansOutcome {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

fn sq_dist(p: &[f64], c: &[f64]) -> f64 {
    p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn objective(points: &[Vec<f64>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assign).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

fn check_monotone(prev: f64, next: f64, stage: &str) {
    let slack = 1e-9 * (1.0 + prev.abs());
    assert!(
        next <= prev + slack,
        "k-means objective increased during {stage}: {prev} -> {next}"
    );
}

fn init_random(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    index::sample(rng, n, k).into_vec()
}

fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // All remaining points coincide with a centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &points[next]));
        }
    }
    chosen
}

/// Nearest centroid per point; ties keep the previous assignment, else lowest index.
fn assign_points(points: &[Vec<f64>], centroids: &[Vec<f64>], prev: Option<&[usize]>) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if let Some(prev) = prev {
                if sq_dist(p, &centroids[prev[i]]) == best_d {
                    return prev[i];
                }
            }
            best
        })
        .collect()
}

fn mean_of(points: &[Vec<f64>], assign: &[usize], cluster: usize, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for (p, _) in points.iter().zip(assign).filter(|(_, &a)| a == cluster) {
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        count += 1;
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    sum
}

/// Recompute means; an empty cluster takes the point farthest from its centroid.
fn update(points: &[Vec<f64>], assign: &mut [usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    let mut centroids: Vec<Vec<f64>> = (0..k)
        .map(|j| if sizes[j] > 0 { mean_of(points, assign, j, dim) } else { vec![0.0; dim] })
        .collect();
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[assign[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assign[i]]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let i = far.expect("k <= n leaves a donor cluster with two or more points");
        let donor = assign[i];
        assign[i] = empty;
        sizes[donor] -= 1;
        sizes[empty] = 1;
        centroids[empty] = points[i].clone();
        centroids[donor] = mean_of(points, assign, donor, dim);
    }
    centroids
}

/// Cluster `points` (id, vector) into `k` groups.
pub fn kmeans(points: &[(u64, &[f32])], k: usize, init: Init, seed: u64) -> Result<KMeansOutcome, ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let dim = points[0].1.len();
    let mut data = Vec::with_capacity(n);
    for (id, v) in points {
        if v.len() != dim {
            return Err(ClusterError::DimensionMismatch { id: *id, expected: dim, got: v.len() });
        }
        data.push(v.iter().map(|x| f64::from(*x)).collect::<Vec<f64>>());
    }

    let mut rng = rng_from(seed);
    let seeds = match init {
        Init::Random => init_random(n, k, &mut rng),
        Init::PlusPlus => init_plus_plus(&data, k, &mut rng),
    };
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| data[i].clone()).collect();
    let mut assign = assign_points(&data, &centroids, None);
    let mut trace = vec![objective(&data, &assign, &centroids)];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let last = *trace.last().expect("non-empty");
        centroids = update(&data, &mut assign, k, dim);
        let after_update = objective(&data, &assign, &centroids);
        check_monotone(last, after_update, "update");
        let next = assign_points(&data, &centroids, Some(&assign));
        let after_assign = objective(&data, &next, &centroids);
        check_monotone(after_update, after_assign, "assignment");
        trace.push(after_assign);
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    if !converged {
        let last = *trace.last().expect("non-empty");
        centroids = update(&data, &mut assign, k, dim);
        let fin = objective(&data, &assign, &centroids);
        check_monotone(last, fin, "final update");
        *trace.last_mut().expect("non-empty") = fin;
    }

    let mut clusters: Vec<Cluster> =
        centroids.into_iter().map(|centroid| Cluster { centroid, members: Vec::new() }).collect();
    for ((id, _), &a) in points.iter().zip(&assign) {
        clusters[a].members.push(*id);
    }
    debug_assert!(clusters.iter().all(|c| !c.members.is_empty()));
    Ok(KMeansOutcome { clusters, iterations, converged, objective_trace: trace })
}
