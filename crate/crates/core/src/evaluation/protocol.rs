//! Fold planning and per-customer profile splitting for the evaluation
//! protocol.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{BehaviorRecord, BehaviorType, CustomerId, Dataset, ProductId};
use crate::error::{Error, Result};
use crate::recommender::BehaviorProfile;

/// Seeded partition of customers into folds whose sizes differ by at most 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    fold_count: usize,
    seed: u64,
    assignment: BTreeMap<CustomerId, usize>,
}

impl FoldPlan {
    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, customer: CustomerId) -> Option<usize> {
        self.assignment.get(&customer).copied()
    }

    /// Customers of one fold in ascending id order.
    pub fn test_customers(&self, fold: usize) -> Vec<CustomerId> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(&customer, _)| customer)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CustomerId, usize)> + '_ {
        self.assignment.iter().map(|(&customer, &fold)| (customer, fold))
    }
}

/// Shuffles the customer set with a seeded generator and deals it round-robin
/// into `fold_count` folds.
pub fn split_folds(dataset: &Dataset, fold_count: usize, seed: u64) -> Result<FoldPlan> {
    let customers = dataset.customers();
    if fold_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold count must be at least 2, got {fold_count}"
        )));
    }
    if fold_count > customers.len() {
        return Err(Error::InvalidConfig(format!(
            "fold count {fold_count} exceeds customer count {}",
            customers.len()
        )));
    }
    let mut shuffled = customers.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let assignment = shuffled
        .into_iter()
        .enumerate()
        .map(|(position, customer)| (customer, position % fold_count))
        .collect();
    Ok(FoldPlan {
        fold_count,
        seed,
        assignment,
    })
}

/// Which held-out events count as relevant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceMode {
    /// Any held-out event marks its product relevant.
    #[default]
    All,
    /// Only held-out purchases do.
    Buy,
}

impl RelevanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceMode::All => "all",
            RelevanceMode::Buy => "buy",
        }
    }
}

/// Why a test customer was left out of the averaging denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    /// Nothing was held out (the observed prefix swallowed every record).
    EmptyHeldout,
    /// The relevance mode filtered the held-out events down to nothing.
    EmptyRelevant,
    /// Every relevant product already appears in the observed prefix.
    FullySeenRelevant,
}

/// Chronological split of one customer's records into an observed query
/// profile and a held-out relevance set.
#[derive(Debug, Clone)]
pub struct ProfileSplit {
    pub observed: BehaviorProfile,
    pub observed_records: Vec<BehaviorRecord>,
    pub heldout_records: Vec<BehaviorRecord>,
    /// Distinct products of the held-out remainder under the relevance mode.
    pub heldout_relevant: BTreeSet<ProductId>,
    pub exclusion: Option<ExclusionReason>,
}

impl ProfileSplit {
    pub fn evaluable(&self) -> bool {
        self.exclusion.is_none()
    }
}

/// Sorts records by timestamp (stable, so equal timestamps keep input order),
/// takes the earliest `ceil(fraction * n)` as observed, and derives the
/// relevance set from the remainder.
pub fn split_profile(
    records: &[BehaviorRecord],
    observed_fraction: f64,
    mode: RelevanceMode,
) -> Result<ProfileSplit> {
    let customer = records.first().map_or(0, |record| record.customer_id);
    if records.len() < 2 {
        return Err(Error::TooFewRecords {
            customer,
            found: records.len(),
            need: 2,
        });
    }
    if !(observed_fraction > 0.0 && observed_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "observed fraction must lie in (0, 1), got {observed_fraction}"
        )));
    }

    let mut ordered = records.to_vec();
    ordered.sort_by_key(|record| record.timestamp);

    let observed_count = ((observed_fraction * ordered.len() as f64).ceil() as usize)
        .clamp(1, ordered.len());
    let (observed_slice, heldout_slice) = ordered.split_at(observed_count);
    let observed_records = observed_slice.to_vec();
    let heldout_records = heldout_slice.to_vec();

    let heldout_relevant: BTreeSet<ProductId> = heldout_records
        .iter()
        .filter(|record| match mode {
            RelevanceMode::All => true,
            RelevanceMode::Buy => record.behavior == BehaviorType::Buy,
        })
        .map(|record| record.product_id)
        .collect();

    let observed = BehaviorProfile::from_records(customer, observed_records.iter());
    let exclusion = if heldout_records.is_empty() {
        Some(ExclusionReason::EmptyHeldout)
    } else if heldout_relevant.is_empty() {
        Some(ExclusionReason::EmptyRelevant)
    } else if heldout_relevant.iter().all(|&product| observed.touched(product)) {
        Some(ExclusionReason::FullySeenRelevant)
    } else {
        None
    };

    Ok(ProfileSplit {
        observed,
        observed_records,
        heldout_records,
        heldout_relevant,
        exclusion,
    })
}
