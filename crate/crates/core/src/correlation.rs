//! Customer-to-category cooperation counts, correlation ratios, and the
//! customer-by-category correlation matrix.
//!
//! A customer's cooperation with a category is the number of their records on
//! products of that category, counting every behavior type equally. The
//! correlation is that count divided by the customer's total record count, so
//! each matrix row is a distribution over categories.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rayon::prelude::*;

use crate::data_model::{BehaviorType, CategoryId, CustomerId, Dataset};
use crate::error::{Error, Result};

/// Per-behavior-type weights for the cooperation sum.
///
/// The default weights every behavior type at 1, which reduces the weighted
/// sum to a plain record count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorWeights {
    pub pv: f64,
    pub fav: f64,
    pub cart: f64,
    pub buy: f64,
}

impl Default for BehaviorWeights {
    fn default() -> Self {
        BehaviorWeights {
            pv: 1.0,
            fav: 1.0,
            cart: 1.0,
            buy: 1.0,
        }
    }
}

impl BehaviorWeights {
    pub fn weight(&self, behavior: BehaviorType) -> f64 {
        match behavior {
            BehaviorType::Pv => self.pv,
            BehaviorType::Fav => self.fav,
            BehaviorType::Cart => self.cart,
            BehaviorType::Buy => self.buy,
        }
    }
}

/// A customer's event count within one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CooperationCount {
    pub customer_id: CustomerId,
    pub category_id: CategoryId,
    pub count: u64,
}

/// All non-zero cooperation counts for one customer, ascending by category.
pub fn cooperation_counts(dataset: &Dataset, customer: CustomerId) -> Result<Vec<CooperationCount>> {
    if !dataset.contains_customer(customer) {
        return Err(Error::UnknownCustomer(customer));
    }
    let mut per_category: BTreeMap<CategoryId, u64> = BTreeMap::new();
    for record in dataset.customer_records(customer) {
        *per_category.entry(record.category_id).or_insert(0) += 1;
    }
    Ok(per_category
        .into_iter()
        .map(|(category_id, count)| CooperationCount {
            customer_id: customer,
            category_id,
            count,
        })
        .collect())
}

/// Number of the customer's records whose product belongs to `category`,
/// across all behavior types. Returns 0 for a category the customer never
/// touched or that is absent from the dataset.
pub fn cooperation(
    dataset: &Dataset,
    customer: CustomerId,
    category: CategoryId,
) -> Result<u64> {
    if !dataset.contains_customer(customer) {
        return Err(Error::UnknownCustomer(customer));
    }
    let count = dataset
        .customer_records(customer)
        .filter(|record| dataset.product_category(record.product_id) == Some(category))
        .count() as u64;
    Ok(count)
}

/// Fraction of the customer's activity that falls in `category`.
pub fn correlation(
    dataset: &Dataset,
    customer: CustomerId,
    category: CategoryId,
) -> Result<f64> {
    let total = dataset.customer_record_count(customer);
    if !dataset.contains_customer(customer) {
        return Err(Error::UnknownCustomer(customer));
    }
    if total == 0 {
        return Err(Error::EmptyProfile(customer));
    }
    let count = cooperation(dataset, customer, category)?;
    Ok(count as f64 / total as f64)
}

/// Customer-by-category matrix of correlation ratios, stored sparsely.
///
/// Customers and categories are kept in ascending id order; rows built from a
/// dataset sum to 1 within floating tolerance.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    customers: Vec<CustomerId>,
    categories: Vec<CategoryId>,
    customer_positions: HashMap<CustomerId, usize>,
    /// Per customer: (category position, value) entries, ascending by position.
    rows: Vec<Vec<(u32, f64)>>,
}

impl CorrelationMatrix {
    /// Builds a matrix from explicit dense rows. Zero entries are dropped.
    ///
    /// `customers` and `categories` must be strictly ascending; values must be
    /// finite and non-negative. Intended for constructed fixtures and interop;
    /// matrices derived from a dataset come from [`correlation_matrix`].
    pub fn from_dense_rows(
        customers: Vec<CustomerId>,
        categories: Vec<CategoryId>,
        dense_rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if customers.len() != dense_rows.len() {
            return Err(Error::InvalidConfig(format!(
                "{} customers but {} rows",
                customers.len(),
                dense_rows.len()
            )));
        }
        if !customers.windows(2).all(|pair| pair[0] < pair[1]) {
            return Err(Error::InvalidConfig(
                "customer ids must be strictly ascending".into(),
            ));
        }
        if !categories.windows(2).all(|pair| pair[0] < pair[1]) {
            return Err(Error::InvalidConfig(
                "category ids must be strictly ascending".into(),
            ));
        }
        let mut rows = Vec::with_capacity(dense_rows.len());
        for dense in &dense_rows {
            if dense.len() != categories.len() {
                return Err(Error::InvalidConfig(format!(
                    "row has {} entries but there are {} categories",
                    dense.len(),
                    categories.len()
                )));
            }
            let mut row = Vec::new();
            for (position, &value) in dense.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "matrix value {value} is not a finite non-negative number"
                    )));
                }
                if value != 0.0 {
                    row.push((position as u32, value));
                }
            }
            rows.push(row);
        }
        let customer_positions = customers
            .iter()
            .enumerate()
            .map(|(position, &customer)| (customer, position))
            .collect();
        Ok(CorrelationMatrix {
            customers,
            categories,
            customer_positions,
            rows,
        })
    }

    pub fn customers(&self) -> &[CustomerId] {
        &self.customers
    }

    pub fn categories(&self) -> &[CategoryId] {
        &self.categories
    }

    /// (rows, columns).
    pub fn dim(&self) -> (usize, usize) {
        (self.customers.len(), self.categories.len())
    }

    pub fn customer_position(&self, customer: CustomerId) -> Option<usize> {
        self.customer_positions.get(&customer).copied()
    }

    /// Sparse row entries as (category position, value), ascending by position.
    pub fn row(&self, row: usize) -> &[(u32, f64)] {
        &self.rows[row]
    }

    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        let mut dense = vec![0.0; self.categories.len()];
        for &(position, value) in &self.rows[row] {
            dense[position as usize] = value;
        }
        dense
    }

    /// The stored ratio for one (customer, category) pair; `None` when either
    /// id is absent from the matrix axes.
    pub fn value(&self, customer: CustomerId, category: CategoryId) -> Option<f64> {
        let row = self.customer_position(customer)?;
        let position = self.categories.binary_search(&category).ok()? as u32;
        Some(
            self.rows[row]
                .iter()
                .find(|(entry, _)| *entry == position)
                .map_or(0.0, |(_, value)| *value),
        )
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.rows[row].iter().map(|(_, value)| value).sum()
    }

    /// Dumps the matrix as `customer_id,category_id,value` triplets in
    /// ascending (customer, category) order.
    pub fn write_triplets<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (row, customer) in self.customers.iter().enumerate() {
            for &(position, value) in &self.rows[row] {
                writeln!(
                    writer,
                    "{customer},{},{value}",
                    self.categories[position as usize]
                )?;
            }
        }
        Ok(())
    }
}

/// Builds the full correlation matrix with equal behavior weights.
pub fn correlation_matrix(dataset: &Dataset) -> CorrelationMatrix {
    correlation_matrix_weighted(dataset, &BehaviorWeights::default())
}

/// Builds the correlation matrix with per-behavior-type weights. Each row is
/// normalized by the customer's total weighted activity, so rows still sum to
/// 1 for any positive weights.
pub fn correlation_matrix_weighted(
    dataset: &Dataset,
    weights: &BehaviorWeights,
) -> CorrelationMatrix {
    let customers: Vec<CustomerId> = dataset.customers().to_vec();
    let categories: Vec<CategoryId> = dataset.categories();
    let category_positions: HashMap<CategoryId, u32> = categories
        .iter()
        .enumerate()
        .map(|(position, &category)| (category, position as u32))
        .collect();

    let rows: Vec<Vec<(u32, f64)>> = customers
        .par_iter()
        .map(|&customer| {
            let mut weighted: BTreeMap<CategoryId, f64> = BTreeMap::new();
            let mut total = 0.0;
            for record in dataset.customer_records(customer) {
                let weight = weights.weight(record.behavior);
                *weighted.entry(record.category_id).or_insert(0.0) += weight;
                total += weight;
            }
            if total == 0.0 {
                return Vec::new();
            }
            weighted
                .into_iter()
                .filter(|(_, sum)| *sum != 0.0)
                .map(|(category, sum)| (category_positions[&category], sum / total))
                .collect()
        })
        .collect();

    let customer_positions = customers
        .iter()
        .enumerate()
        .map(|(position, &customer)| (customer, position))
        .collect();

    CorrelationMatrix {
        customers,
        categories,
        customer_positions,
        rows,
    }
}
