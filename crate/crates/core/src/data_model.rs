//! Behavior-event data model: wire-format parsing, indexed immutable datasets,
//! and the two-phase preprocessing filter.
//!
//! The wire format is header-less CSV with one event per line:
//! `customer_id,product_id,category_id,behavior,timestamp`. Behavior tokens
//! are the lowercase strings `pv`, `fav`, `cart`, `buy`. A product belongs to
//! exactly one category; rows that disagree are a fatal data error.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};

pub type CustomerId = u64;
pub type ProductId = u64;
pub type CategoryId = u64;

/// The four clickstream event kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorType {
    /// Product view.
    Pv,
    /// Added to favorites.
    Fav,
    /// Added to cart.
    Cart,
    /// Purchase.
    Buy,
}

impl BehaviorType {
    pub const ALL: [BehaviorType; 4] = [
        BehaviorType::Pv,
        BehaviorType::Fav,
        BehaviorType::Cart,
        BehaviorType::Buy,
    ];

    pub fn token(self) -> &'static str {
        match self {
            BehaviorType::Pv => "pv",
            BehaviorType::Fav => "fav",
            BehaviorType::Cart => "cart",
            BehaviorType::Buy => "buy",
        }
    }
}

impl FromStr for BehaviorType {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "pv" => Ok(BehaviorType::Pv),
            "fav" => Ok(BehaviorType::Fav),
            "cart" => Ok(BehaviorType::Cart),
            "buy" => Ok(BehaviorType::Buy),
            _ => Err(()),
        }
    }
}

impl fmt::Display for BehaviorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One (customer, product, category, behavior, timestamp) event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorRecord {
    pub customer_id: CustomerId,
    pub product_id: ProductId,
    pub category_id: CategoryId,
    pub behavior: BehaviorType,
    /// Seconds since epoch; validated non-negative at parse time.
    pub timestamp: i64,
}

impl fmt::Display for BehaviorRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.customer_id, self.product_id, self.category_id, self.behavior, self.timestamp
        )
    }
}

/// Maps record fields to column positions for non-default sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLayout {
    pub field_count: usize,
    pub customer: usize,
    pub product: usize,
    pub category: usize,
    pub behavior: usize,
    pub timestamp: usize,
}

impl Default for ColumnLayout {
    fn default() -> Self {
        ColumnLayout {
            field_count: 5,
            customer: 0,
            product: 1,
            category: 2,
            behavior: 3,
            timestamp: 4,
        }
    }
}

impl ColumnLayout {
    pub fn validate(&self) -> Result<()> {
        let positions = [
            self.customer,
            self.product,
            self.category,
            self.behavior,
            self.timestamp,
        ];
        for (i, a) in positions.iter().enumerate() {
            if *a >= self.field_count {
                return Err(Error::InvalidConfig(format!(
                    "column position {a} out of range for {} fields",
                    self.field_count
                )));
            }
            if positions[..i].contains(a) {
                return Err(Error::InvalidConfig(format!(
                    "column position {a} assigned to more than one field"
                )));
            }
        }
        Ok(())
    }
}

fn parse_id(field: &str, name: &'static str, line: u64) -> Result<u64> {
    field.parse::<u64>().map_err(|_| Error::Parse {
        line,
        kind: ParseErrorKind::InvalidId {
            field: name,
            value: field.to_string(),
        },
    })
}

/// Parses one wire-format line using the default column layout.
///
/// `line_number` is 1-based and carried into every parse error.
pub fn parse_record(line: &str, line_number: u64) -> Result<BehaviorRecord> {
    parse_record_with(&ColumnLayout::default(), line, line_number)
}

pub fn parse_record_with(
    layout: &ColumnLayout,
    line: &str,
    line_number: u64,
) -> Result<BehaviorRecord> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != layout.field_count {
        return Err(Error::Parse {
            line: line_number,
            kind: ParseErrorKind::FieldCount {
                expected: layout.field_count,
                found: fields.len(),
            },
        });
    }

    let customer_id = parse_id(fields[layout.customer], "customer", line_number)?;
    let product_id = parse_id(fields[layout.product], "product", line_number)?;
    let category_id = parse_id(fields[layout.category], "category", line_number)?;

    let behavior_token = fields[layout.behavior];
    let behavior = behavior_token.parse().map_err(|()| Error::Parse {
        line: line_number,
        kind: ParseErrorKind::UnknownBehavior {
            token: behavior_token.to_string(),
        },
    })?;

    let timestamp_field = fields[layout.timestamp];
    let timestamp = timestamp_field.parse::<i64>().map_err(|_| Error::Parse {
        line: line_number,
        kind: ParseErrorKind::InvalidTimestamp {
            value: timestamp_field.to_string(),
        },
    })?;
    if timestamp < 0 {
        return Err(Error::Parse {
            line: line_number,
            kind: ParseErrorKind::NegativeTimestamp { value: timestamp },
        });
    }

    Ok(BehaviorRecord {
        customer_id,
        product_id,
        category_id,
        behavior,
        timestamp,
    })
}

/// Per-behavior-type record counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorCounts {
    pub pv: u64,
    pub fav: u64,
    pub cart: u64,
    pub buy: u64,
}

impl BehaviorCounts {
    fn bump(&mut self, behavior: BehaviorType) {
        match behavior {
            BehaviorType::Pv => self.pv += 1,
            BehaviorType::Fav => self.fav += 1,
            BehaviorType::Cart => self.cart += 1,
            BehaviorType::Buy => self.buy += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.pv + self.fav + self.cart + self.buy
    }
}

/// Entity and record counts for one dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub customer_count: u64,
    pub category_count: u64,
    pub product_count: u64,
    pub record_count: u64,
    pub behavior_counts: BehaviorCounts,
}

/// Indexed, immutable collection of behavior records.
///
/// All indexes are built once at construction; preprocessing filters return a
/// new `Dataset` rather than mutating. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<BehaviorRecord>,
    customer_index: HashMap<CustomerId, Vec<u32>>,
    product_index: HashMap<ProductId, Vec<u32>>,
    category_index: BTreeMap<CategoryId, BTreeSet<ProductId>>,
    product_category: HashMap<ProductId, CategoryId>,
    customers_sorted: Vec<CustomerId>,
    products_sorted: Vec<ProductId>,
    stats: StatsSummary,
}

impl Dataset {
    pub fn empty() -> Self {
        Self::build(Vec::new(), HashMap::new())
    }

    /// Builds a dataset, rejecting records that map one product to two
    /// categories.
    pub fn from_records(records: Vec<BehaviorRecord>) -> Result<Self> {
        let mut product_category = HashMap::with_capacity(records.len() / 4 + 1);
        for record in &records {
            match product_category.entry(record.product_id) {
                std::collections::hash_map::Entry::Vacant(slot) => {
                    slot.insert(record.category_id);
                }
                std::collections::hash_map::Entry::Occupied(slot) => {
                    let existing = *slot.get();
                    if existing != record.category_id {
                        return Err(Error::CategoryConflict {
                            product: record.product_id,
                            first: existing,
                            second: record.category_id,
                        });
                    }
                }
            }
        }
        Ok(Self::build(records, product_category))
    }

    /// Rebuild from records known to come out of a consistent dataset.
    pub(crate) fn rebuild(records: Vec<BehaviorRecord>) -> Self {
        let mut product_category = HashMap::new();
        for record in &records {
            product_category.insert(record.product_id, record.category_id);
        }
        Self::build(records, product_category)
    }

    fn build(records: Vec<BehaviorRecord>, product_category: HashMap<ProductId, CategoryId>) -> Self {
        assert!(records.len() < u32::MAX as usize, "record count exceeds index width");
        let mut customer_index: HashMap<CustomerId, Vec<u32>> = HashMap::new();
        let mut product_index: HashMap<ProductId, Vec<u32>> = HashMap::new();
        let mut category_index: BTreeMap<CategoryId, BTreeSet<ProductId>> = BTreeMap::new();
        let mut behavior_counts = BehaviorCounts::default();

        for (position, record) in records.iter().enumerate() {
            let position = position as u32;
            customer_index.entry(record.customer_id).or_default().push(position);
            product_index.entry(record.product_id).or_default().push(position);
            category_index
                .entry(record.category_id)
                .or_default()
                .insert(record.product_id);
            behavior_counts.bump(record.behavior);
        }

        let mut customers_sorted: Vec<CustomerId> = customer_index.keys().copied().collect();
        customers_sorted.sort_unstable();
        let mut products_sorted: Vec<ProductId> = product_index.keys().copied().collect();
        products_sorted.sort_unstable();

        let stats = StatsSummary {
            customer_count: customer_index.len() as u64,
            category_count: category_index.len() as u64,
            product_count: product_index.len() as u64,
            record_count: records.len() as u64,
            behavior_counts,
        };

        Dataset {
            records,
            customer_index,
            product_index,
            category_index,
            product_category,
            customers_sorted,
            products_sorted,
            stats,
        }
    }

    pub fn records(&self) -> &[BehaviorRecord] {
        &self.records
    }

    pub fn stats(&self) -> &StatsSummary {
        &self.stats
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct customer ids in ascending order.
    pub fn customers(&self) -> &[CustomerId] {
        &self.customers_sorted
    }

    /// Distinct product ids in ascending order.
    pub fn products(&self) -> &[ProductId] {
        &self.products_sorted
    }

    /// Distinct category ids in ascending order.
    pub fn categories(&self) -> Vec<CategoryId> {
        self.category_index.keys().copied().collect()
    }

    pub fn contains_customer(&self, customer: CustomerId) -> bool {
        self.customer_index.contains_key(&customer)
    }

    pub fn contains_category(&self, category: CategoryId) -> bool {
        self.category_index.contains_key(&category)
    }

    /// Total record count for one customer (its behavior length, CB).
    pub fn customer_record_count(&self, customer: CustomerId) -> u64 {
        self.customer_index
            .get(&customer)
            .map_or(0, |positions| positions.len() as u64)
    }

    /// The customer's records in input order; empty for unknown customers.
    pub fn customer_records(
        &self,
        customer: CustomerId,
    ) -> impl Iterator<Item = &BehaviorRecord> + '_ {
        self.customer_index
            .get(&customer)
            .into_iter()
            .flatten()
            .map(move |&position| &self.records[position as usize])
    }

    pub fn product_records(
        &self,
        product: ProductId,
    ) -> impl Iterator<Item = &BehaviorRecord> + '_ {
        self.product_index
            .get(&product)
            .into_iter()
            .flatten()
            .map(move |&position| &self.records[position as usize])
    }

    pub fn product_category(&self, product: ProductId) -> Option<CategoryId> {
        self.product_category.get(&product).copied()
    }

    pub fn category_products(&self, category: CategoryId) -> Option<&BTreeSet<ProductId>> {
        self.category_index.get(&category)
    }

    /// Re-emits the dataset in the wire format, in record order.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for record in &self.records {
            writeln!(writer, "{record}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("write to Vec cannot fail");
        String::from_utf8(out).expect("wire format is ASCII")
    }

    /// Cross-validates every index against the record collection.
    ///
    /// Intended for tests and post-filter audits on small datasets.
    pub fn validate_indexes(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Internal(message));

        let mut seen = 0usize;
        for (customer, positions) in &self.customer_index {
            for &position in positions {
                match self.records.get(position as usize) {
                    Some(record) if record.customer_id == *customer => seen += 1,
                    _ => return fail(format!("customer index for {customer} is stale")),
                }
            }
        }
        if seen != self.records.len() {
            return fail("customer index does not cover all records".into());
        }

        seen = 0;
        for (product, positions) in &self.product_index {
            for &position in positions {
                match self.records.get(position as usize) {
                    Some(record) if record.product_id == *product => seen += 1,
                    _ => return fail(format!("product index for {product} is stale")),
                }
            }
        }
        if seen != self.records.len() {
            return fail("product index does not cover all records".into());
        }

        for (category, products) in &self.category_index {
            for product in products {
                if self.product_category.get(product) != Some(category) {
                    return fail(format!(
                        "category index lists product {product} outside category {category}"
                    ));
                }
                if !self.product_index.contains_key(product) {
                    return fail(format!("category index references removed product {product}"));
                }
            }
        }

        for record in &self.records {
            if self.product_category.get(&record.product_id) != Some(&record.category_id) {
                return fail(format!(
                    "product {} category mapping disagrees with records",
                    record.product_id
                ));
            }
            if !self
                .category_index
                .get(&record.category_id)
                .is_some_and(|products| products.contains(&record.product_id))
            {
                return fail(format!(
                    "record product {} missing from category index",
                    record.product_id
                ));
            }
        }

        if self.stats.record_count != self.stats.behavior_counts.total() {
            return fail("record count disagrees with per-behavior counts".into());
        }
        Ok(())
    }
}

/// What to do with unparseable lines during ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ErrorPolicy {
    /// Stop at the first bad line.
    #[default]
    FailFast,
    /// Drop bad lines and count them.
    SkipAndCount,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub layout: ColumnLayout,
    pub on_error: ErrorPolicy,
}

#[derive(Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    pub skipped_lines: u64,
}

/// Streams records from `reader` and builds an indexed dataset.
///
/// Parse failures follow `options.on_error`; a conflicting product-to-category
/// mapping is fatal under either policy.
pub fn load_dataset<R: BufRead>(mut reader: R, options: &LoadOptions) -> Result<Loaded> {
    options.layout.validate()?;
    let mut records = Vec::new();
    let mut skipped_lines = 0u64;
    let mut line_number = 0u64;
    let mut buffer = String::new();

    loop {
        buffer.clear();
        let read = reader
            .read_line(&mut buffer)
            .map_err(|e| Error::io(format!("read line {}", line_number + 1), e))?;
        if read == 0 {
            break;
        }
        line_number += 1;
        let line = buffer.trim_end_matches('\n');
        match parse_record_with(&options.layout, line, line_number) {
            Ok(record) => records.push(record),
            Err(error) => match options.on_error {
                ErrorPolicy::FailFast => return Err(error),
                ErrorPolicy::SkipAndCount => skipped_lines += 1,
            },
        }
    }

    Ok(Loaded {
        dataset: Dataset::from_records(records)?,
        skipped_lines,
    })
}

pub fn load_dataset_from_path(path: &Path, options: &LoadOptions) -> Result<Loaded> {
    let file =
        File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    load_dataset(BufReader::new(file), options)
}

/// First preprocessing phase: removes every product whose records are all
/// views and whose view count is below `phi`, then rebuilds so that
/// categories and customers left without records drop out.
pub fn filter_phase1(dataset: &Dataset, phi: u64) -> Dataset {
    #[derive(Default)]
    struct ProductActivity {
        pv_count: u64,
        has_other: bool,
    }

    let mut activity: HashMap<ProductId, ProductActivity> = HashMap::new();
    for record in dataset.records() {
        let entry = activity.entry(record.product_id).or_default();
        match record.behavior {
            BehaviorType::Pv => entry.pv_count += 1,
            _ => entry.has_other = true,
        }
    }

    let kept: Vec<BehaviorRecord> = dataset
        .records()
        .iter()
        .filter(|record| {
            let product = &activity[&record.product_id];
            product.has_other || product.pv_count >= phi
        })
        .copied()
        .collect();

    Dataset::rebuild(kept)
}

/// Second preprocessing phase: removes every customer with fewer than `tau`
/// records, cascading removal of now-unreferenced products and categories.
pub fn filter_phase2(dataset: &Dataset, tau: u64) -> Dataset {
    let kept: Vec<BehaviorRecord> = dataset
        .records()
        .iter()
        .filter(|record| dataset.customer_record_count(record.customer_id) >= tau)
        .copied()
        .collect();

    Dataset::rebuild(kept)
}
