//! Cluster-validity indexes over correlation-vector geometry.
//!
//! Dispersion of a cluster is the mean Euclidean distance of its members to
//! the cluster centroid; separation of two clusters is the Euclidean distance
//! between their centroids. `dunn_index` follows the ratio as this engine
//! reports it (largest separation over smallest dispersion);
//! `dunn_index_conventional` is the textbook form (smallest separation over
//! largest dispersion) for side-by-side sanity checks.

use crate::clustering::Clustering;
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};

struct ClusterGeometry {
    /// One centroid per non-empty cluster, in ascending label order.
    centroids: Vec<Vec<f64>>,
    /// Mean member-to-centroid distance per cluster, same order.
    dispersions: Vec<f64>,
}

fn cluster_geometry(clustering: &Clustering, matrix: &CorrelationMatrix) -> Result<ClusterGeometry> {
    if clustering.cluster_count() < 2 {
        return Err(Error::DegenerateClustering(format!(
            "{} cluster(s); validity indexes need at least 2",
            clustering.cluster_count()
        )));
    }
    let dim = matrix.categories().len();
    let mut centroids = Vec::with_capacity(clustering.cluster_count());
    let mut dispersions = Vec::with_capacity(clustering.cluster_count());

    for (label, members) in clustering.members() {
        let mut rows = Vec::with_capacity(members.len());
        for &customer in members {
            let row = matrix.customer_position(customer).ok_or_else(|| {
                Error::Mismatch(format!(
                    "cluster {label} member {customer} is absent from the correlation matrix"
                ))
            })?;
            rows.push(row);
        }

        let mut centroid = vec![0.0f64; dim];
        for &row in &rows {
            for &(position, value) in matrix.row(row) {
                centroid[position as usize] += value;
            }
        }
        let n = rows.len() as f64;
        centroid.iter_mut().for_each(|v| *v /= n);

        let dispersion = rows
            .iter()
            .map(|&row| distance_to_centroid(matrix.row(row), &centroid))
            .sum::<f64>()
            / n;

        centroids.push(centroid);
        dispersions.push(dispersion);
    }

    Ok(ClusterGeometry { centroids, dispersions })
}

fn distance_to_centroid(row: &[(u32, f64)], centroid: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut walker = row.iter().peekable();
    for (position, &c) in centroid.iter().enumerate() {
        let x = match walker.peek() {
            Some(&&(entry, value)) if entry as usize == position => {
                walker.next();
                value
            }
            _ => 0.0,
        };
        sum += (x - c) * (x - c);
    }
    sum.sqrt()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean over clusters of the worst-case (dispersion_i + dispersion_j) over
/// separation(i, j) ratio. Coincident centroids are a degenerate-clustering
/// error.
pub fn db_index(clustering: &Clustering, matrix: &CorrelationMatrix) -> Result<f64> {
    let geometry = cluster_geometry(clustering, matrix)?;
    let n = geometry.centroids.len();

    let mut total = 0.0;
    for i in 0..n {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let separation = euclidean(&geometry.centroids[i], &geometry.centroids[j]);
            if separation == 0.0 {
                return Err(Error::DegenerateClustering(
                    "two clusters share a centroid".into(),
                ));
            }
            let ratio = (geometry.dispersions[i] + geometry.dispersions[j]) / separation;
            if ratio > worst {
                worst = ratio;
            }
        }
        total += worst;
    }
    Ok(total / n as f64)
}

/// Largest centroid separation over smallest cluster dispersion. A cluster
/// with zero dispersion (singleton or duplicate points) is degenerate here.
pub fn dunn_index(clustering: &Clustering, matrix: &CorrelationMatrix) -> Result<f64> {
    let geometry = cluster_geometry(clustering, matrix)?;
    let min_dispersion = geometry
        .dispersions
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_dispersion == 0.0 {
        return Err(Error::DegenerateClustering(
            "a cluster has zero dispersion (singleton or duplicate points)".into(),
        ));
    }
    Ok(max_separation(&geometry.centroids) / min_dispersion)
}

/// Smallest centroid separation over largest cluster dispersion.
pub fn dunn_index_conventional(
    clustering: &Clustering,
    matrix: &CorrelationMatrix,
) -> Result<f64> {
    let geometry = cluster_geometry(clustering, matrix)?;
    let max_dispersion = geometry.dispersions.iter().fold(0.0f64, |a, &b| a.max(b));
    if max_dispersion == 0.0 {
        return Err(Error::DegenerateClustering(
            "every cluster has zero dispersion".into(),
        ));
    }
    let mut min_separation = f64::INFINITY;
    let n = geometry.centroids.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let separation = euclidean(&geometry.centroids[i], &geometry.centroids[j]);
            if separation < min_separation {
                min_separation = separation;
            }
        }
    }
    Ok(min_separation / max_dispersion)
}

fn max_separation(centroids: &[Vec<f64>]) -> f64 {
    let mut max = 0.0f64;
    for i in 0..centroids.len() {
        for j in (i + 1)..centroids.len() {
            let separation = euclidean(&centroids[i], &centroids[j]);
            if separation > max {
                max = separation;
            }
        }
    }
    max
}
