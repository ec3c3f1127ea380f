//! Seeded random and planted-structure fixture generators.

use std::collections::{BTreeMap, BTreeSet};

use clickrec_core::data_model::{BehaviorRecord, BehaviorType, CategoryId, CustomerId, ProductId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A consistent product/category world shared by train and active fixtures.
#[derive(Debug, Clone)]
pub struct Universe {
    pub categories: Vec<CategoryId>,
    pub products: Vec<ProductId>,
    pub product_category: BTreeMap<ProductId, CategoryId>,
}

impl Universe {
    pub fn new(rng: &mut ChaCha8Rng, category_count: usize, product_count: usize) -> Self {
        let categories: Vec<CategoryId> = (1..=category_count as u64).map(|c| 100 + c).collect();
        let products: Vec<ProductId> = (1..=product_count as u64).collect();
        let product_category = products
            .iter()
            .map(|&product| {
                let category = categories[rng.gen_range(0..categories.len())];
                (product, category)
            })
            .collect();
        Universe {
            categories,
            products,
            product_category,
        }
    }

    pub fn random_behavior(rng: &mut ChaCha8Rng) -> BehaviorType {
        BehaviorType::ALL[rng.gen_range(0..BehaviorType::ALL.len())]
    }

    /// `count` uniform events for one customer.
    pub fn events(&self, rng: &mut ChaCha8Rng, customer: CustomerId, count: usize) -> Vec<BehaviorRecord> {
        (0..count)
            .map(|_| {
                let product = self.products[rng.gen_range(0..self.products.len())];
                BehaviorRecord {
                    customer_id: customer,
                    product_id: product,
                    category_id: self.product_category[&product],
                    behavior: Self::random_behavior(rng),
                    timestamp: rng.gen_range(0..1_000_000),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureShape {
    pub customers: usize,
    pub categories: usize,
    pub products: usize,
    pub min_records: usize,
    pub max_records: usize,
}

impl Default for FixtureShape {
    fn default() -> Self {
        FixtureShape {
            customers: 20,
            categories: 6,
            products: 40,
            min_records: 3,
            max_records: 25,
        }
    }
}

/// A random, internally consistent record set. Customer ids run 1..=n and
/// every customer has at least `min_records` events.
pub fn random_records(seed: u64, shape: &FixtureShape) -> Vec<BehaviorRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let universe = Universe::new(&mut rng, shape.categories, shape.products);
    random_records_in(&mut rng, &universe, shape)
}

/// Train records plus a batch of active-customer record sets drawn from the
/// same universe. Active customer ids start at 10_000.
pub fn random_records_with_actives(
    seed: u64,
    shape: &FixtureShape,
    active_count: usize,
) -> (Vec<BehaviorRecord>, Vec<Vec<BehaviorRecord>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let universe = Universe::new(&mut rng, shape.categories, shape.products);
    let train = random_records_in(&mut rng, &universe, shape);
    let actives = (0..active_count)
        .map(|index| {
            let customer = 10_000 + index as u64;
            let count = rng.gen_range(shape.min_records..=shape.max_records);
            universe.events(&mut rng, customer, count)
        })
        .collect();
    (train, actives)
}

fn random_records_in(
    rng: &mut ChaCha8Rng,
    universe: &Universe,
    shape: &FixtureShape,
) -> Vec<BehaviorRecord> {
    let mut records = Vec::new();
    for customer in 1..=shape.customers as u64 {
        let count = rng.gen_range(shape.min_records..=shape.max_records);
        records.extend(universe.events(rng, customer, count));
    }
    records
}

/// Fixture with known group structure: every customer's events stay inside
/// its group's category, early events favor a hot-product head, and the last
/// few events land on hot products the customer has not touched before.
#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub records: Vec<BehaviorRecord>,
    /// The category each customer's events live in.
    pub planted_label: BTreeMap<CustomerId, CategoryId>,
}

pub const PLANTED_EVENTS_PER_CUSTOMER: usize = 20;
const PLANTED_EARLY_EVENTS: usize = 16;
const PLANTED_PRODUCTS_PER_GROUP: usize = 30;
const PLANTED_HOT_PRODUCTS: usize = 12;

pub fn planted_groups(seed: u64, groups: usize, customers_per_group: usize) -> PlantedFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut planted_label = BTreeMap::new();

    for group in 0..groups as u64 {
        let category: CategoryId = (group + 1) * 100;
        let products: Vec<ProductId> = (0..PLANTED_PRODUCTS_PER_GROUP as u64)
            .map(|offset| category * 10 + offset)
            .collect();
        // head-heavy weights make the first products the group's hot items
        let weights: Vec<f64> = (0..products.len()).map(|rank| 1.0 / (rank as f64 + 1.0)).collect();
        let total_weight: f64 = weights.iter().sum();

        for member in 0..customers_per_group as u64 {
            let customer: CustomerId = group * customers_per_group as u64 + member + 1;
            planted_label.insert(customer, category);

            let mut seen: BTreeSet<ProductId> = BTreeSet::new();
            for event in 0..PLANTED_EARLY_EVENTS {
                let mut pick = rng.gen_range(0.0..total_weight);
                let mut product = products[0];
                for (rank, &candidate) in products.iter().enumerate() {
                    if pick < weights[rank] {
                        product = candidate;
                        break;
                    }
                    pick -= weights[rank];
                }
                seen.insert(product);
                let behavior = match rng.gen_range(0..10) {
                    0 => BehaviorType::Buy,
                    1 => BehaviorType::Cart,
                    2 => BehaviorType::Fav,
                    _ => BehaviorType::Pv,
                };
                records.push(BehaviorRecord {
                    customer_id: customer,
                    product_id: product,
                    category_id: category,
                    behavior,
                    timestamp: rng.gen_range(0..1_000) + event as i64, // strictly before the tail
                });
            }

            // tail events on unseen products, hot ones first
            let mut hot_unseen: Vec<ProductId> = products[..PLANTED_HOT_PRODUCTS]
                .iter()
                .copied()
                .filter(|product| !seen.contains(product))
                .collect();
            hot_unseen.shuffle(&mut rng);
            let mut cold_unseen: Vec<ProductId> = products[PLANTED_HOT_PRODUCTS..]
                .iter()
                .copied()
                .filter(|product| !seen.contains(product))
                .collect();
            cold_unseen.shuffle(&mut rng);
            hot_unseen.extend(cold_unseen);

            let tail = PLANTED_EVENTS_PER_CUSTOMER - PLANTED_EARLY_EVENTS;
            for (offset, product) in hot_unseen.into_iter().take(tail).enumerate() {
                let behavior = if rng.gen_range(0..3) == 0 {
                    BehaviorType::Buy
                } else {
                    BehaviorType::Pv
                };
                records.push(BehaviorRecord {
                    customer_id: customer,
                    product_id: product,
                    category_id: category,
                    behavior,
                    timestamp: 10_000 + offset as i64,
                });
            }
        }
    }

    PlantedFixture {
        records,
        planted_label,
    }
}

/// Random points in `dim` dimensions with random cluster labels, for validity
/// index comparisons.
pub fn random_labeled_points(
    seed: u64,
    point_count: usize,
    dim: usize,
    cluster_count: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..point_count)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0f64)).collect())
        .collect();
    // force every cluster non-empty, then fill the rest uniformly
    let mut labels: Vec<usize> = (0..point_count)
        .map(|index| {
            if index < cluster_count {
                index
            } else {
                rng.gen_range(0..cluster_count)
            }
        })
        .collect();
    labels.shuffle(&mut rng);
    (points, labels)
}
