//! Fuzzy c-means over correlation-matrix rows.
//!
//! Membership degrees are initialized from a seeded generator, iterated with
//! the standard centroid/membership updates, and hardened to the maximum
//! degree at the end.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClusterAssignment, Clustering, MethodTag};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FcmParams {
    pub seed: u64,
    /// Fuzzifier exponent, conventionally 2.0. Must exceed 1.
    pub fuzzifier: f64,
    pub max_iterations: usize,
    /// Convergence bound on the largest membership change.
    pub tolerance: f64,
}

impl Default for FcmParams {
    fn default() -> Self {
        FcmParams {
            seed: 0,
            fuzzifier: 2.0,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug)]
pub struct FcmRun {
    pub clustering: Clustering,
    /// Final membership degrees, one row per matrix customer, k columns each.
    pub memberships: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fcm(matrix: &CorrelationMatrix, k: usize, fuzzifier: f64, seed: u64) -> Result<Clustering> {
    let params = FcmParams { seed, fuzzifier, ..FcmParams::default() };
    Ok(fcm_with(matrix, k, &params)?.clustering)
}

pub fn fcm_with(matrix: &CorrelationMatrix, k: usize, params: &FcmParams) -> Result<FcmRun> {
    let rows = matrix.customers().len();
    let dim = matrix.categories().len();
    if k < 1 {
        return Err(Error::InvalidClusterCount { k, reason: "must be at least 1".into() });
    }
    if k > rows {
        return Err(Error::InvalidClusterCount {
            k,
            reason: format!("only {rows} customers available"),
        });
    }
    if params.fuzzifier <= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "fuzzifier must exceed 1, got {}",
            params.fuzzifier
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut memberships: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64)).collect();
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= sum);
            }
            row
        })
        .collect();

    let row_norms: Vec<f64> = (0..rows)
        .map(|row| matrix.row(row).iter().map(|(_, v)| v * v).sum())
        .collect();
    let exponent = 2.0 / (params.fuzzifier - 1.0);

    let mut centroids: Vec<Vec<f64>> = vec![vec![0.0; dim]; k];
    let mut iterations = 0;
    let mut converged = false;

    for iteration in 0..params.max_iterations {
        iterations = iteration + 1;

        centroids = update_centroids(matrix, &memberships, &centroids, params.fuzzifier, k, dim);
        let centroid_norms: Vec<f64> = centroids
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();

        let updated: Vec<Vec<f64>> = (0..rows)
            .into_par_iter()
            .map(|row| {
                membership_row(
                    matrix.row(row),
                    row_norms[row],
                    &centroids,
                    &centroid_norms,
                    exponent,
                )
            })
            .collect();

        let max_change = memberships
            .iter()
            .zip(&updated)
            .flat_map(|(old, new)| old.iter().zip(new).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        memberships = updated;

        if max_change < params.tolerance {
            converged = true;
            break;
        }
    }

    let mut assignment = BTreeMap::new();
    for (row, &customer) in matrix.customers().iter().enumerate() {
        let mut best = 0usize;
        for (cluster, &degree) in memberships[row].iter().enumerate() {
            if degree > memberships[row][best] {
                best = cluster;
            }
        }
        assignment.insert(customer, best as u64);
    }
    Ok(FcmRun {
        clustering: Clustering::from_assignment(
            MethodTag::Fcm,
            ClusterAssignment::from_labels(assignment),
        ),
        memberships,
        iterations,
        converged,
    })
}

fn update_centroids(
    matrix: &CorrelationMatrix,
    memberships: &[Vec<f64>],
    previous: &[Vec<f64>],
    fuzzifier: f64,
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    (0..k)
        .into_par_iter()
        .map(|cluster| {
            let mut numerator = vec![0.0f64; dim];
            let mut denominator = 0.0f64;
            for (row, degrees) in memberships.iter().enumerate() {
                let weight = degrees[cluster].powf(fuzzifier);
                if weight == 0.0 {
                    continue;
                }
                denominator += weight;
                for &(position, value) in matrix.row(row) {
                    numerator[position as usize] += weight * value;
                }
            }
            if denominator == 0.0 {
                // nobody supports this cluster; keep the previous centroid
                return previous[cluster].clone();
            }
            numerator.iter_mut().for_each(|v| *v /= denominator);
            numerator
        })
        .collect()
}

fn membership_row(
    row: &[(u32, f64)],
    row_norm: f64,
    centroids: &[Vec<f64>],
    centroid_norms: &[f64],
    exponent: f64,
) -> Vec<f64> {
    let distances: Vec<f64> = centroids
        .iter()
        .enumerate()
        .map(|(cluster, centroid)| {
            let dot: f64 = row
                .iter()
                .map(|&(position, value)| value * centroid[position as usize])
                .sum();
            (centroid_norms[cluster] - 2.0 * dot + row_norm).max(0.0).sqrt()
        })
        .collect();

    // a zero distance pins full membership on the first such centroid
    if let Some(exact) = distances.iter().position(|&d| d == 0.0) {
        let mut row = vec![0.0; centroids.len()];
        row[exact] = 1.0;
        return row;
    }

    let degrees: Vec<f64> = distances
        .iter()
        .map(|&distance| {
            let denominator: f64 = distances
                .iter()
                .map(|&other| (distance / other).powf(exponent))
                .sum();
            1.0 / denominator
        })
        .collect();
    degrees
}
