//! Recommendation metrics: precision and recall at K and their harmonic
//! combination.

use std::collections::BTreeSet;

use crate::data_model::ProductId;
use crate::error::{Error, Result};
use crate::recommender::RecommendationList;

pub(crate) fn hits_in_prefix<I>(recommended: I, relevant: &BTreeSet<ProductId>, k: usize) -> usize
where
    I: IntoIterator<Item = ProductId>,
{
    recommended
        .into_iter()
        .take(k)
        .filter(|product| relevant.contains(product))
        .count()
}

/// Fraction of the first K recommended products that are relevant.
///
/// The denominator is always K: a list shorter than K is penalized for the
/// slots it failed to fill. An empty relevant set scores 0; whether such a
/// customer belongs in an average is the caller's protocol decision.
pub fn precision_at_k(
    recommendation: &RecommendationList,
    relevant: &BTreeSet<ProductId>,
    k: usize,
) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = hits_in_prefix(
        recommendation.items.iter().map(|item| item.product_id),
        relevant,
        k,
    );
    hits as f64 / k as f64
}

/// Fraction of the relevant products found in the first K recommendations.
pub fn recall_at_k(
    recommendation: &RecommendationList,
    relevant: &BTreeSet<ProductId>,
    k: usize,
) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let hits = hits_in_prefix(
        recommendation.items.iter().map(|item| item.product_id),
        relevant,
        k,
    );
    Ok(hits as f64 / relevant.len() as f64)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
