//! Lloyd's k-means over correlation-matrix rows with Euclidean distance.
//!
//! Initialization samples k distinct rows with a seeded generator; every step
//! is deterministic for a fixed seed, independent of thread count.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClusterAssignment, Clustering, MethodTag};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KMeansInit {
    /// k distinct rows chosen uniformly.
    #[default]
    Uniform,
    /// Distance-weighted seeding.
    PlusPlus,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub seed: u64,
    pub max_iterations: usize,
    /// Convergence bound on the largest centroid shift.
    pub tolerance: f64,
    pub init: KMeansInit,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            seed: 0,
            max_iterations: 100,
            tolerance: 1e-6,
            init: KMeansInit::Uniform,
        }
    }
}

#[derive(Debug)]
pub struct KMeansRun {
    pub clustering: Clustering,
    /// Sum of squared distances to assigned centroids, one entry per iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of empty-cluster repairs performed across all iterations.
    pub repairs: usize,
}

pub fn kmeans(matrix: &CorrelationMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let params = KMeansParams { seed, ..KMeansParams::default() };
    Ok(kmeans_with(matrix, k, &params)?.clustering)
}

pub fn kmeans_with(matrix: &CorrelationMatrix, k: usize, params: &KMeansParams) -> Result<KMeansRun> {
    let (rows, dim) = (matrix.customers().len(), matrix.categories().len());
    if k < 1 {
        return Err(Error::InvalidClusterCount { k, reason: "must be at least 1".into() });
    }
    if k > rows {
        return Err(Error::InvalidClusterCount {
            k,
            reason: format!("only {rows} customers available"),
        });
    }

    let row_norms: Vec<f64> = (0..rows)
        .map(|row| matrix.row(row).iter().map(|(_, v)| v * v).sum())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = match params.init {
        KMeansInit::Uniform => init_uniform(matrix, k, &mut rng),
        KMeansInit::PlusPlus => init_plus_plus(matrix, &row_norms, k, &mut rng),
    };

    let mut labels: Vec<usize> = vec![0; rows];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut repairs = 0;

    for iteration in 0..params.max_iterations {
        iterations = iteration + 1;
        let centroid_norms: Vec<f64> = centroids
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();

        let mut assigned: Vec<(usize, f64)> = (0..rows)
            .into_par_iter()
            .map(|row| nearest_centroid(matrix.row(row), row_norms[row], &centroids, &centroid_norms))
            .collect();

        repairs += repair_empty_clusters(matrix, &mut assigned, &mut centroids, k);

        let new_labels: Vec<usize> = assigned.iter().map(|(label, _)| *label).collect();
        objective.push(assigned.iter().map(|(_, distance_sq)| *distance_sq).sum());

        let unchanged = iteration > 0 && new_labels == labels;
        labels = new_labels;
        if unchanged {
            converged = true;
            break;
        }

        let new_centroids = compute_centroids(matrix, &labels, &centroids, k, dim);
        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(old, new)| {
                old.iter()
                    .zip(new)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift < params.tolerance {
            converged = true;
            break;
        }
    }

    let mut assignment = BTreeMap::new();
    for (row, &customer) in matrix.customers().iter().enumerate() {
        assignment.insert(customer, labels[row] as u64);
    }
    Ok(KMeansRun {
        clustering: Clustering::from_assignment(
            MethodTag::KMeans,
            ClusterAssignment::from_labels(assignment),
        ),
        objective,
        iterations,
        converged,
        repairs,
    })
}

fn densify(matrix: &CorrelationMatrix, row: usize) -> Vec<f64> {
    matrix.dense_row(row)
}

fn init_uniform(matrix: &CorrelationMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let chosen = rand::seq::index::sample(rng, matrix.customers().len(), k);
    let mut picks: Vec<usize> = chosen.into_iter().collect();
    picks.sort_unstable();
    picks.into_iter().map(|row| densify(matrix, row)).collect()
}

fn init_plus_plus(
    matrix: &CorrelationMatrix,
    row_norms: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let rows = matrix.customers().len();
    let first = rand::Rng::gen_range(rng, 0..rows);
    let mut centroids = vec![densify(matrix, first)];

    while centroids.len() < k {
        let centroid_norms: Vec<f64> = centroids
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let weights: Vec<f64> = (0..rows)
            .map(|row| {
                nearest_centroid(matrix.row(row), row_norms[row], &centroids, &centroid_norms).1
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&weights)
                .expect("non-negative finite weights")
                .sample(rng)
        } else {
            // all remaining rows coincide with a centroid; fall back to uniform
            rand::Rng::gen_range(rng, 0..rows)
        };
        centroids.push(densify(matrix, next));
    }
    centroids
}

/// Squared Euclidean distance between a sparse row and a dense centroid,
/// computed as |c|^2 - 2<x,c> + |x|^2 and clamped at zero.
fn distance_sq(row: &[(u32, f64)], row_norm: f64, centroid: &[f64], centroid_norm: f64) -> f64 {
    let dot: f64 = row
        .iter()
        .map(|&(position, value)| value * centroid[position as usize])
        .sum();
    (centroid_norm - 2.0 * dot + row_norm).max(0.0)
}

fn nearest_centroid(
    row: &[(u32, f64)],
    row_norm: f64,
    centroids: &[Vec<f64>],
    centroid_norms: &[f64],
) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (index, centroid) in centroids.iter().enumerate() {
        let d = distance_sq(row, row_norm, centroid, centroid_norms[index]);
        if d < best.1 {
            best = (index, d);
        }
    }
    best
}

/// Reseeds each empty cluster with the point currently farthest from its
/// centroid, skipping points that are their cluster's only member. Returns the
/// number of repairs.
fn repair_empty_clusters(
    matrix: &CorrelationMatrix,
    assigned: &mut [(usize, f64)],
    centroids: &mut [Vec<f64>],
    k: usize,
) -> usize {
    let mut counts = vec![0usize; k];
    for (label, _) in assigned.iter() {
        counts[*label] += 1;
    }
    let mut repairs = 0;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut farthest: Option<(usize, f64)> = None;
        for (row, &(label, distance_sq)) in assigned.iter().enumerate() {
            if counts[label] <= 1 {
                continue;
            }
            let better = match farthest {
                None => true,
                Some((_, best)) => distance_sq > best,
            };
            if better {
                farthest = Some((row, distance_sq));
            }
        }
        let Some((row, _)) = farthest else { break };
        counts[assigned[row].0] -= 1;
        counts[empty] += 1;
        assigned[row] = (empty, 0.0);
        centroids[empty] = densify(matrix, row);
        repairs += 1;
    }
    repairs
}

fn compute_centroids(
    matrix: &CorrelationMatrix,
    labels: &[usize],
    previous: &[Vec<f64>],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &label) in labels.iter().enumerate() {
        members[label].push(row);
    }
    members
        .par_iter()
        .enumerate()
        .map(|(cluster, rows)| {
            if rows.is_empty() {
                return previous[cluster].clone();
            }
            let mut sum = vec![0.0f64; dim];
            for &row in rows {
                for &(position, value) in matrix.row(row) {
                    sum[position as usize] += value;
                }
            }
            let n = rows.len() as f64;
            sum.iter_mut().for_each(|v| *v /= n);
            sum
        })
        .collect()
}
