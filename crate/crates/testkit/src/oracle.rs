//! Nested-loop reference implementations computed straight from record
//! slices. Deliberately slow and index-free.

use std::collections::{BTreeMap, BTreeSet};

use clickrec_core::data_model::{
    BehaviorRecord, BehaviorType, CategoryId, CustomerId, ProductId,
};

pub fn customers(records: &[BehaviorRecord]) -> BTreeSet<CustomerId> {
    records.iter().map(|r| r.customer_id).collect()
}

pub fn categories(records: &[BehaviorRecord]) -> BTreeSet<CategoryId> {
    records.iter().map(|r| r.category_id).collect()
}

pub fn products(records: &[BehaviorRecord]) -> BTreeSet<ProductId> {
    records.iter().map(|r| r.product_id).collect()
}

pub fn product_category_map(records: &[BehaviorRecord]) -> BTreeMap<ProductId, CategoryId> {
    let mut map = BTreeMap::new();
    for record in records {
        map.insert(record.product_id, record.category_id);
    }
    map
}

/// Total record count for one customer.
pub fn cb(records: &[BehaviorRecord], customer: CustomerId) -> u64 {
    records.iter().filter(|r| r.customer_id == customer).count() as u64
}

/// Event count of `customer` on products belonging to `category`, derived
/// through product membership rather than the records' own category field.
pub fn cooperation(records: &[BehaviorRecord], customer: CustomerId, category: CategoryId) -> u64 {
    let membership = product_category_map(records);
    records
        .iter()
        .filter(|r| r.customer_id == customer)
        .filter(|r| membership.get(&r.product_id) == Some(&category))
        .count() as u64
}

pub fn correlation(records: &[BehaviorRecord], customer: CustomerId, category: CategoryId) -> f64 {
    let total = cb(records, customer);
    cooperation(records, customer, category) as f64 / total as f64
}

/// Per-customer argmax-correlation category, ties to the lowest category id.
pub fn cbc_labels(records: &[BehaviorRecord]) -> BTreeMap<CustomerId, CategoryId> {
    let mut labels = BTreeMap::new();
    for customer in customers(records) {
        let mut best: Option<(CategoryId, f64)> = None;
        for category in categories(records) {
            let value = correlation(records, customer, category);
            if value <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, best_value)) => value > best_value,
            };
            if better {
                best = Some((category, value));
            }
        }
        if let Some((category, _)) = best {
            labels.insert(customer, category);
        }
    }
    labels
}

pub fn cluster_members(
    labels: &BTreeMap<CustomerId, CategoryId>,
    label: CategoryId,
) -> Vec<CustomerId> {
    labels
        .iter()
        .filter(|(_, &l)| l == label)
        .map(|(&customer, _)| customer)
        .collect()
}

pub fn max_cb_in_cluster(
    records: &[BehaviorRecord],
    labels: &BTreeMap<CustomerId, CategoryId>,
    label: CategoryId,
) -> u64 {
    cluster_members(labels, label)
        .iter()
        .map(|&member| cb(records, member))
        .max()
        .unwrap_or(0)
}

pub fn delta(max_cb: u64, active_cb: u64) -> u64 {
    (max_cb + active_cb) / 2
}

/// Co-cluster customers whose total record count meets delta, excluding the
/// active id, ascending.
pub fn neighborhood(
    records: &[BehaviorRecord],
    labels: &BTreeMap<CustomerId, CategoryId>,
    label: CategoryId,
    active_id: CustomerId,
    active_cb: u64,
) -> (Vec<CustomerId>, u64) {
    let bound = delta(max_cb_in_cluster(records, labels, label), active_cb);
    let members = cluster_members(labels, label)
        .into_iter()
        .filter(|&member| member != active_id && cb(records, member) >= bound)
        .collect();
    (members, bound)
}

pub fn pair_set(records: &[BehaviorRecord], customer: CustomerId) -> BTreeSet<(ProductId, BehaviorType)> {
    records
        .iter()
        .filter(|r| r.customer_id == customer)
        .map(|r| (r.product_id, r.behavior))
        .collect()
}

pub fn jaccard(
    a: &BTreeSet<(ProductId, BehaviorType)>,
    b: &BTreeSet<(ProductId, BehaviorType)>,
) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.union(b).count();
    intersection as f64 / union as f64
}

pub fn theta(similarities: &[f64]) -> f64 {
    similarities.iter().sum::<f64>() / similarities.len() as f64
}

/// Similarities to every neighborhood member in ascending member order, and
/// the subset at or above their mean.
pub fn similar_set(
    train: &[BehaviorRecord],
    members: &[CustomerId],
    active: &[BehaviorRecord],
    active_id: CustomerId,
) -> Vec<(CustomerId, f64)> {
    let active_pairs = pair_set(active, active_id);
    let all: Vec<(CustomerId, f64)> = members
        .iter()
        .map(|&member| (member, jaccard(&active_pairs, &pair_set(train, member))))
        .collect();
    if all.is_empty() {
        return Vec::new();
    }
    let bound = theta(&all.iter().map(|(_, s)| *s).collect::<Vec<f64>>());
    all.into_iter().filter(|&(_, s)| s >= bound).collect()
}

pub fn product_event_count(records: &[BehaviorRecord], customer: CustomerId, product: ProductId) -> u64 {
    records
        .iter()
        .filter(|r| r.customer_id == customer && r.product_id == product)
        .count() as u64
}

/// Similarity-weighted event count sum, added in the similar set's order.
pub fn reputation(
    train: &[BehaviorRecord],
    similar: &[(CustomerId, f64)],
    product: ProductId,
) -> f64 {
    let mut total = 0.0;
    for &(member, similarity) in similar {
        total += product_event_count(train, member, product) as f64 * similarity;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecommendation {
    pub label: Option<CategoryId>,
    pub degraded: bool,
    pub items: Vec<(ProductId, f64)>,
}

/// Full end-to-end pipeline mirror with nested loops: active assignment,
/// neighborhood, similar set, reputation over every training product,
/// seen-product exclusion, score ordering, truncation, and the
/// cluster-popularity fallback.
pub fn recommend(
    train: &[BehaviorRecord],
    active: &[BehaviorRecord],
    active_id: CustomerId,
    k: usize,
) -> OracleRecommendation {
    let train_categories = categories(train);
    let mut category_counts: BTreeMap<CategoryId, u64> = BTreeMap::new();
    for record in active {
        *category_counts.entry(record.category_id).or_insert(0) += 1;
    }
    let mut label: Option<CategoryId> = None;
    let mut best_count = 0u64;
    for (&category, &count) in &category_counts {
        if !train_categories.contains(&category) {
            continue;
        }
        if count > best_count {
            best_count = count;
            label = Some(category);
        }
    }
    let Some(label) = label else {
        return OracleRecommendation {
            label: None,
            degraded: false,
            items: Vec::new(),
        };
    };

    let labels = cbc_labels(train);
    let active_cb = active.len() as u64;
    let (members, _) = neighborhood(train, &labels, label, active_id, active_cb);
    let similar = similar_set(train, &members, active, active_id);
    let seen = products(active);

    if similar.is_empty() {
        let cluster = cluster_members(&labels, label);
        let mut counts: BTreeMap<ProductId, u64> = BTreeMap::new();
        if cluster.is_empty() {
            for record in train {
                *counts.entry(record.product_id).or_insert(0) += 1;
            }
        } else {
            for &member in &cluster {
                for record in train.iter().filter(|r| r.customer_id == member) {
                    *counts.entry(record.product_id).or_insert(0) += 1;
                }
            }
        }
        let mut items: Vec<(ProductId, f64)> = counts
            .into_iter()
            .filter(|(product, _)| !seen.contains(product))
            .map(|(product, count)| (product, count as f64))
            .collect();
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        items.truncate(k);
        return OracleRecommendation {
            label: Some(label),
            degraded: true,
            items,
        };
    }

    let mut items: Vec<(ProductId, f64)> = Vec::new();
    for product in products(train) {
        if seen.contains(&product) {
            continue;
        }
        let score = reputation(train, &similar, product);
        if score > 0.0 {
            items.push((product, score));
        }
    }
    items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    items.truncate(k);
    OracleRecommendation {
        label: Some(label),
        degraded: false,
        items,
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Geometry {
    centroids: Vec<Vec<f64>>,
    dispersions: Vec<f64>,
}

/// Groups points by label (ascending label order) and computes centroid and
/// mean member distance per group. `None` with fewer than two groups.
fn geometry(points: &[Vec<f64>], labels: &[usize]) -> Option<Geometry> {
    let groups: BTreeSet<usize> = labels.iter().copied().collect();
    if groups.len() < 2 {
        return None;
    }
    let dim = points.first().map_or(0, Vec::len);
    let mut centroids = Vec::new();
    let mut dispersions = Vec::new();
    for group in groups {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == group)
            .map(|(index, _)| index)
            .collect();
        let mut centroid = vec![0.0f64; dim];
        for &member in &members {
            for (position, value) in points[member].iter().enumerate() {
                centroid[position] += value;
            }
        }
        centroid.iter_mut().for_each(|v| *v /= members.len() as f64);
        let dispersion = members
            .iter()
            .map(|&member| euclidean(&points[member], &centroid))
            .sum::<f64>()
            / members.len() as f64;
        centroids.push(centroid);
        dispersions.push(dispersion);
    }
    Some(Geometry {
        centroids,
        dispersions,
    })
}

/// Triple-loop reference for the Davies-Bouldin value; `None` when degenerate.
pub fn db_index(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let g = geometry(points, labels)?;
    let n = g.centroids.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let separation = euclidean(&g.centroids[i], &g.centroids[j]);
            if separation == 0.0 {
                return None;
            }
            let ratio = (g.dispersions[i] + g.dispersions[j]) / separation;
            if ratio > worst {
                worst = ratio;
            }
        }
        total += worst;
    }
    Some(total / n as f64)
}

/// Largest separation over smallest dispersion; `None` when degenerate.
pub fn dunn_index(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let g = geometry(points, labels)?;
    let min_dispersion = g.dispersions.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_dispersion == 0.0 {
        return None;
    }
    let mut max_separation = 0.0f64;
    for i in 0..g.centroids.len() {
        for j in (i + 1)..g.centroids.len() {
            let separation = euclidean(&g.centroids[i], &g.centroids[j]);
            if separation > max_separation {
                max_separation = separation;
            }
        }
    }
    Some(max_separation / min_dispersion)
}

/// Smallest separation over largest dispersion; `None` when degenerate.
pub fn dunn_index_conventional(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let g = geometry(points, labels)?;
    let max_dispersion = g.dispersions.iter().fold(0.0f64, |a, &b| a.max(b));
    if max_dispersion == 0.0 {
        return None;
    }
    let mut min_separation = f64::INFINITY;
    for i in 0..g.centroids.len() {
        for j in (i + 1)..g.centroids.len() {
            let separation = euclidean(&g.centroids[i], &g.centroids[j]);
            if separation < min_separation {
                min_separation = separation;
            }
        }
    }
    Some(min_separation / max_dispersion)
}
