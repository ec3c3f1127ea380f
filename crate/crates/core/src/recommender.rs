//! The behavior-based recommendation pipeline: active-customer cluster
//! assignment, behavior-length neighborhoods, Jaccard similar sets, and
//! similarity-weighted reputation scoring.
//!
//! Similarity operates on distinct (product, behavior type) pairs; reputation
//! weights raw event counts. Keeping the two apart is deliberate: the pair set
//! says *what kinds* of interactions two customers share, while reputation
//! credits *how often* a similar customer touched a product.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{ClusterLabel, Clustering};
use crate::data_model::{BehaviorRecord, BehaviorType, CategoryId, CustomerId, Dataset, ProductId};
use crate::error::{Error, Result};

/// One customer's interaction multiset, with the derived views the pipeline
/// needs: distinct (product, behavior) pairs, per-product totals, and
/// per-category totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorProfile {
    customer_id: CustomerId,
    pair_counts: BTreeMap<(ProductId, BehaviorType), u64>,
    product_counts: BTreeMap<ProductId, u64>,
    category_counts: BTreeMap<CategoryId, u64>,
    behavior_length: u64,
}

impl BehaviorProfile {
    pub fn from_records<'a, I>(customer_id: CustomerId, records: I) -> Self
    where
        I: IntoIterator<Item = &'a BehaviorRecord>,
    {
        let mut pair_counts: BTreeMap<(ProductId, BehaviorType), u64> = BTreeMap::new();
        let mut product_counts: BTreeMap<ProductId, u64> = BTreeMap::new();
        let mut category_counts: BTreeMap<CategoryId, u64> = BTreeMap::new();
        let mut behavior_length = 0u64;
        for record in records {
            *pair_counts.entry((record.product_id, record.behavior)).or_insert(0) += 1;
            *product_counts.entry(record.product_id).or_insert(0) += 1;
            *category_counts.entry(record.category_id).or_insert(0) += 1;
            behavior_length += 1;
        }
        BehaviorProfile {
            customer_id,
            pair_counts,
            product_counts,
            category_counts,
            behavior_length,
        }
    }

    pub fn customer_id(&self) -> CustomerId {
        self.customer_id
    }

    /// Total event count (CB).
    pub fn behavior_length(&self) -> u64 {
        self.behavior_length
    }

    pub fn is_empty(&self) -> bool {
        self.behavior_length == 0
    }

    /// Distinct (product, behavior type) pairs in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (ProductId, BehaviorType)> + '_ {
        self.pair_counts.keys().copied()
    }

    pub fn pair_count(&self) -> usize {
        self.pair_counts.len()
    }

    /// Total event count on one product across all behavior types.
    pub fn product_count(&self, product: ProductId) -> u64 {
        self.product_counts.get(&product).copied().unwrap_or(0)
    }

    pub fn products(&self) -> impl Iterator<Item = (ProductId, u64)> + '_ {
        self.product_counts.iter().map(|(&product, &count)| (product, count))
    }

    pub fn touched(&self, product: ProductId) -> bool {
        self.product_counts.contains_key(&product)
    }

    pub fn category_counts(&self) -> impl Iterator<Item = (CategoryId, u64)> + '_ {
        self.category_counts.iter().map(|(&category, &count)| (category, count))
    }
}

/// Minimum behavior length for neighborhood admission: the floor of the
/// midpoint between the cluster's maximum behavior length and the active
/// customer's.
pub fn delta_threshold(max_behavior_length: u64, active_behavior_length: u64) -> u64 {
    (max_behavior_length + active_behavior_length) / 2
}

/// Jaccard similarity over distinct (product, behavior type) pairs.
///
/// Errors when both profiles are empty; otherwise lies in [0, 1].
pub fn behavior_similarity(a: &BehaviorProfile, b: &BehaviorProfile) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::UndefinedSimilarity);
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    let mut left = a.pair_counts.keys().peekable();
    let mut right = b.pair_counts.keys().peekable();
    loop {
        match (left.peek(), right.peek()) {
            (Some(&x), Some(&y)) => {
                union += 1;
                if x == y {
                    intersection += 1;
                    left.next();
                    right.next();
                } else if x < y {
                    left.next();
                } else {
                    right.next();
                }
            }
            (Some(_), None) => {
                union += 1;
                left.next();
            }
            (None, Some(_)) => {
                union += 1;
                right.next();
            }
            (None, None) => break,
        }
    }
    Ok(intersection as f64 / union as f64)
}

/// Arithmetic mean of the neighborhood similarities; the admission bar for
/// the similar set.
pub fn similarity_threshold(similarities: &[f64]) -> Result<f64> {
    if similarities.is_empty() {
        return Err(Error::EmptyNeighborhood(0));
    }
    Ok(similarities.iter().sum::<f64>() / similarities.len() as f64)
}

/// Co-cluster customers whose behavior length meets the delta threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub active: CustomerId,
    pub cluster_label: ClusterLabel,
    /// Ascending customer ids; never contains `active`.
    pub members: Vec<CustomerId>,
    pub delta: u64,
}

/// Neighborhood members whose similarity to the active customer reaches the
/// mean-similarity threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarSet {
    pub active: CustomerId,
    /// (customer, similarity) in ascending customer order.
    pub entries: Vec<(CustomerId, f64)>,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredProduct {
    pub product_id: ProductId,
    pub score: f64,
}

/// Ranked recommendation output for one active customer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommendationList {
    pub customer_id: CustomerId,
    pub cluster_label: ClusterLabel,
    /// True when the similar set was empty and the list fell back to cluster
    /// popularity.
    pub degraded: bool,
    /// Descending score, ties broken by lower product id, at most k items.
    pub items: Vec<ScoredProduct>,
    #[serde(skip)]
    pub k: usize,
}

impl RecommendationList {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("recommendation serializes")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RecommendOptions {
    /// Re-recommend products the active customer already interacted with.
    pub include_seen: bool,
}

/// Immutable trained state: a dataset, a clustering over its customers, and
/// precomputed member profiles. One instance serves any number of active
/// customers concurrently.
pub struct Recommender<'a> {
    dataset: &'a Dataset,
    clustering: &'a Clustering,
    profiles: HashMap<CustomerId, BehaviorProfile>,
    max_behavior_length: BTreeMap<ClusterLabel, u64>,
    options: RecommendOptions,
}

impl<'a> Recommender<'a> {
    pub fn new(
        dataset: &'a Dataset,
        clustering: &'a Clustering,
        options: RecommendOptions,
    ) -> Result<Self> {
        let profiles: HashMap<CustomerId, BehaviorProfile> = dataset
            .customers()
            .par_iter()
            .map(|&customer| {
                let profile =
                    BehaviorProfile::from_records(customer, dataset.customer_records(customer));
                (customer, profile)
            })
            .collect();

        for (customer, _) in clustering.assignment().iter() {
            if !profiles.contains_key(&customer) {
                return Err(Error::Mismatch(format!(
                    "clustering references customer {customer} absent from the training dataset"
                )));
            }
        }

        // reuse cached cluster maxima when present, otherwise derive them here
        let max_behavior_length = if clustering.has_behavior_lengths() {
            clustering
                .members()
                .keys()
                .map(|&label| (label, clustering.max_behavior_length(label).unwrap_or(0)))
                .collect()
        } else {
            clustering
                .members()
                .iter()
                .map(|(&label, members)| {
                    let max = members
                        .iter()
                        .map(|customer| profiles[customer].behavior_length())
                        .max()
                        .unwrap_or(0);
                    (label, max)
                })
                .collect()
        };

        Ok(Recommender {
            dataset,
            clustering,
            profiles,
            max_behavior_length,
            options,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn profile(&self, customer: CustomerId) -> Option<&BehaviorProfile> {
        self.profiles.get(&customer)
    }

    /// Assigns an active customer to the trained cluster whose category has
    /// the highest correlation with its profile, ties to the lowest category
    /// id. Categories unknown to the training data cannot win; a profile made
    /// only of unknown categories is a cold-category error.
    pub fn assign_active(&self, profile: &BehaviorProfile) -> Result<ClusterLabel> {
        if profile.is_empty() {
            return Err(Error::EmptyProfile(profile.customer_id()));
        }
        let mut best: Option<(CategoryId, u64)> = None;
        for (category, count) in profile.category_counts() {
            if !self.dataset.contains_category(category) {
                continue;
            }
            // ascending category order, so strict > keeps the lowest id
            let better = match best {
                None => true,
                Some((_, best_count)) => count > best_count,
            };
            if better {
                best = Some((category, count));
            }
        }
        match best {
            Some((category, _)) => Ok(category),
            None => Err(Error::ColdCategories(profile.customer_id())),
        }
    }

    /// Co-cluster customers with behavior length at or above the delta
    /// threshold, excluding the active customer itself.
    pub fn neighborhood(&self, profile: &BehaviorProfile, label: ClusterLabel) -> Neighborhood {
        let max_behavior_length = self.max_behavior_length.get(&label).copied().unwrap_or(0);
        let delta = delta_threshold(max_behavior_length, profile.behavior_length());
        let members = self
            .clustering
            .member_list(label)
            .iter()
            .copied()
            .filter(|&member| {
                member != profile.customer_id()
                    && self.profiles[&member].behavior_length() >= delta
            })
            .collect();
        Neighborhood {
            active: profile.customer_id(),
            cluster_label: label,
            members,
            delta,
        }
    }

    /// Scores every neighborhood member against the active profile and keeps
    /// those at or above the mean similarity. An empty neighborhood yields an
    /// empty set with theta 0.
    pub fn similar_set(&self, neighborhood: &Neighborhood, profile: &BehaviorProfile) -> SimilarSet {
        let similarities: Vec<(CustomerId, f64)> = neighborhood
            .members
            .par_iter()
            .map(|&member| {
                let similarity = behavior_similarity(profile, &self.profiles[&member])
                    .expect("active profile is non-empty");
                (member, similarity)
            })
            .collect();

        if similarities.is_empty() {
            return SimilarSet {
                active: profile.customer_id(),
                entries: Vec::new(),
                theta: 0.0,
            };
        }
        let theta = similarities.iter().map(|(_, s)| s).sum::<f64>() / similarities.len() as f64;
        let entries = similarities
            .into_iter()
            .filter(|&(_, similarity)| similarity >= theta)
            .collect();
        SimilarSet {
            active: profile.customer_id(),
            entries,
            theta,
        }
    }

    /// Similarity-weighted sum of similar customers' event counts on one
    /// product. Unknown products score 0.
    pub fn reputation(&self, similar: &SimilarSet, product: ProductId) -> f64 {
        similar
            .entries
            .iter()
            .map(|&(member, similarity)| {
                self.profiles[&member].product_count(product) as f64 * similarity
            })
            .sum()
    }

    /// Runs the full pipeline and returns the top-k products by reputation,
    /// ties to the lower product id. Products the active customer already
    /// touched are excluded unless `include_seen` is set. An empty similar
    /// set falls back to cluster popularity and flags the list degraded.
    pub fn recommend_top_k(&self, profile: &BehaviorProfile, k: usize) -> Result<RecommendationList> {
        if k < 1 {
            return Err(Error::InvalidConfig("top-k must be at least 1".into()));
        }
        let label = self.assign_active(profile)?;
        let neighborhood = self.neighborhood(profile, label);
        let similar = self.similar_set(&neighborhood, profile);

        if similar.entries.is_empty() {
            return Ok(self.fallback(profile, label, k));
        }

        // candidates are exactly the similar set's products; everything else
        // scores 0 and the accumulation order (ascending member, ascending
        // product) keeps float sums reproducible
        let mut scores: BTreeMap<ProductId, f64> = BTreeMap::new();
        for &(member, similarity) in &similar.entries {
            for (product, count) in self.profiles[&member].products() {
                if !self.options.include_seen && profile.touched(product) {
                    continue;
                }
                *scores.entry(product).or_insert(0.0) += count as f64 * similarity;
            }
        }

        let mut items: Vec<ScoredProduct> = scores
            .into_iter()
            .filter(|&(_, score)| score > 0.0)
            .map(|(product_id, score)| ScoredProduct { product_id, score })
            .collect();
        items.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then(a.product_id.cmp(&b.product_id))
        });
        items.truncate(k);

        Ok(RecommendationList {
            customer_id: profile.customer_id(),
            cluster_label: label,
            degraded: false,
            items,
            k,
        })
    }

    /// Cluster-popularity fallback: products ranked by total event count
    /// among cluster members; the whole dataset when the cluster is empty.
    fn fallback(&self, profile: &BehaviorProfile, label: ClusterLabel, k: usize) -> RecommendationList {
        let members = self.clustering.member_list(label);
        let mut counts: BTreeMap<ProductId, u64> = BTreeMap::new();
        if members.is_empty() {
            for record in self.dataset.records() {
                *counts.entry(record.product_id).or_insert(0) += 1;
            }
        } else {
            for &member in members {
                for (product, count) in self.profiles[&member].products() {
                    *counts.entry(product).or_insert(0) += count;
                }
            }
        }
        if !self.options.include_seen {
            counts.retain(|&product, _| !profile.touched(product));
        }
        let mut items: Vec<ScoredProduct> = counts
            .into_iter()
            .map(|(product_id, count)| ScoredProduct { product_id, score: count as f64 })
            .collect();
        items.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("counts are finite")
                .then(a.product_id.cmp(&b.product_id))
        });
        items.truncate(k);
        RecommendationList {
            customer_id: profile.customer_id(),
            cluster_label: label,
            degraded: true,
            items,
            k,
        }
    }

    /// Recommends for many active customers in parallel, preserving input
    /// order. Fails on the first (lowest-index) erroring customer.
    pub fn recommend_batch(
        &self,
        profiles: &[BehaviorProfile],
        k: usize,
    ) -> Result<Vec<RecommendationList>> {
        let results: Vec<Result<RecommendationList>> = profiles
            .par_iter()
            .map(|profile| self.recommend_top_k(profile, k))
            .collect();
        results.into_iter().collect()
    }
}

/// Distinct-pair set view used by tests and oracles.
pub fn pair_set(profile: &BehaviorProfile) -> BTreeSet<(ProductId, BehaviorType)> {
    profile.pairs().collect()
}

/// Splits a dataset's records per customer and builds profiles in ascending
/// customer order.
pub fn profiles_from_dataset(dataset: &Dataset) -> Vec<BehaviorProfile> {
    dataset
        .customers()
        .iter()
        .map(|&customer| BehaviorProfile::from_records(customer, dataset.customer_records(customer)))
        .collect()
}
