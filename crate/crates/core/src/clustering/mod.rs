//! Customer clustering: the category-argmax assignment rule plus k-means and
//! fuzzy c-means baselines over correlation-matrix rows.

mod fcm;
mod kmeans;

pub use fcm::{fcm, fcm_with, FcmParams, FcmRun};
pub use kmeans::{kmeans, kmeans_with, KMeansInit, KMeansParams, KMeansRun};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::correlation::CorrelationMatrix;
use crate::data_model::{CustomerId, Dataset};
use crate::error::{Error, Result};

/// Cluster labels are category ids for category-based clustering and
/// 0-based cluster indexes for the baseline methods.
pub type ClusterLabel = u64;

/// Which algorithm produced a clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Cbc,
    KMeans,
    Fcm,
}

impl MethodTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Cbc => "CBC",
            MethodTag::KMeans => "KMEANS",
            MethodTag::Fcm => "FCM",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CBC" => Ok(MethodTag::Cbc),
            "KMEANS" => Ok(MethodTag::KMeans),
            "FCM" => Ok(MethodTag::Fcm),
            other => Err(Error::InvalidConfig(format!("unknown method tag {other:?}"))),
        }
    }
}

/// Total mapping from customer to cluster label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: BTreeMap<CustomerId, ClusterLabel>,
}

impl ClusterAssignment {
    pub fn from_labels(labels: BTreeMap<CustomerId, ClusterLabel>) -> Self {
        ClusterAssignment { labels }
    }

    pub fn label_of(&self, customer: CustomerId) -> Option<ClusterLabel> {
        self.labels.get(&customer).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// (customer, label) pairs in ascending customer order.
    pub fn iter(&self) -> impl Iterator<Item = (CustomerId, ClusterLabel)> + '_ {
        self.labels.iter().map(|(&customer, &label)| (customer, label))
    }
}

/// An assignment plus its inverse membership view and, when built against a
/// dataset, the cached per-cluster maximum behavior length.
#[derive(Debug, Clone)]
pub struct Clustering {
    method: MethodTag,
    assignment: ClusterAssignment,
    members: BTreeMap<ClusterLabel, Vec<CustomerId>>,
    max_behavior_length: BTreeMap<ClusterLabel, u64>,
}

impl Clustering {
    /// Builds membership lists only; the per-cluster maximum behavior length
    /// stays empty until a dataset is attached.
    pub fn from_assignment(method: MethodTag, assignment: ClusterAssignment) -> Self {
        let mut members: BTreeMap<ClusterLabel, Vec<CustomerId>> = BTreeMap::new();
        for (customer, label) in assignment.iter() {
            members.entry(label).or_default().push(customer);
        }
        Clustering {
            method,
            assignment,
            members,
            max_behavior_length: BTreeMap::new(),
        }
    }

    /// Builds membership lists and caches each cluster's maximum per-customer
    /// record count from `dataset`. Every assigned customer must exist there.
    pub fn from_assignment_with_dataset(
        method: MethodTag,
        assignment: ClusterAssignment,
        dataset: &Dataset,
    ) -> Result<Self> {
        for (customer, _) in assignment.iter() {
            if !dataset.contains_customer(customer) {
                return Err(Error::Mismatch(format!(
                    "clustering references customer {customer} absent from the dataset"
                )));
            }
        }
        let mut clustering = Self::from_assignment(method, assignment);
        clustering.max_behavior_length = clustering
            .members
            .iter()
            .map(|(&label, members)| {
                let max = members
                    .iter()
                    .map(|&customer| dataset.customer_record_count(customer))
                    .max()
                    .unwrap_or(0);
                (label, max)
            })
            .collect();
        Ok(clustering)
    }

    pub fn method(&self) -> MethodTag {
        self.method
    }

    pub fn assignment(&self) -> &ClusterAssignment {
        &self.assignment
    }

    pub fn label_of(&self, customer: CustomerId) -> Option<ClusterLabel> {
        self.assignment.label_of(customer)
    }

    /// Non-empty clusters with their members in ascending customer order.
    pub fn members(&self) -> &BTreeMap<ClusterLabel, Vec<CustomerId>> {
        &self.members
    }

    pub fn member_list(&self, label: ClusterLabel) -> &[CustomerId] {
        self.members.get(&label).map_or(&[], Vec::as_slice)
    }

    pub fn cluster_count(&self) -> usize {
        self.members.len()
    }

    /// Cached maximum behavior length for one cluster; `None` when no dataset
    /// was attached at construction.
    pub fn max_behavior_length(&self, label: ClusterLabel) -> Option<u64> {
        self.max_behavior_length.get(&label).copied()
    }

    pub fn has_behavior_lengths(&self) -> bool {
        !self.max_behavior_length.is_empty() || self.assignment.is_empty()
    }

    /// Dumps `customer_id,cluster_label,method_tag` lines in ascending
    /// customer order.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (customer, label) in self.assignment.iter() {
            writeln!(writer, "{customer},{label},{}", self.method)?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`Clustering::write_csv`]. The caller rebuilds
    /// the full clustering against a dataset with
    /// [`Clustering::from_assignment_with_dataset`].
    pub fn read_csv<R: BufRead>(reader: R) -> Result<(MethodTag, ClusterAssignment)> {
        let mut labels = BTreeMap::new();
        let mut method: Option<MethodTag> = None;
        for (index, line) in reader.lines().enumerate() {
            let line_number = index as u64 + 1;
            let line = line.map_err(|e| Error::io(format!("read line {line_number}"), e))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let (customer, label, tag) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(customer), Some(label), Some(tag), None) => (customer, label, tag),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "clustering line {line_number} is not customer,label,method"
                    )))
                }
            };
            let customer: CustomerId = customer.parse().map_err(|_| {
                Error::InvalidConfig(format!("clustering line {line_number}: bad customer id"))
            })?;
            let label: ClusterLabel = label.parse().map_err(|_| {
                Error::InvalidConfig(format!("clustering line {line_number}: bad cluster label"))
            })?;
            let tag: MethodTag = tag.parse()?;
            match method {
                None => method = Some(tag),
                Some(existing) if existing != tag => {
                    return Err(Error::InvalidConfig(format!(
                        "clustering line {line_number}: mixed method tags"
                    )))
                }
                _ => {}
            }
            labels.insert(customer, label);
        }
        let method = method.ok_or_else(|| Error::InvalidConfig("empty clustering file".into()))?;
        Ok((method, ClusterAssignment::from_labels(labels)))
    }
}

/// Labels each matrix row with its argmax-correlation category.
///
/// Ties break toward the lowest category id; a row with no positive entry is
/// an empty-profile error.
pub fn cbc_assign(matrix: &CorrelationMatrix) -> Result<ClusterAssignment> {
    let assignments: Vec<Result<(CustomerId, ClusterLabel)>> = matrix
        .customers()
        .par_iter()
        .enumerate()
        .map(|(row, &customer)| {
            // entries are ascending by category, so strict > keeps the lowest id
            let mut best: Option<(u32, f64)> = None;
            for &(position, value) in matrix.row(row) {
                let better = match best {
                    None => value > 0.0,
                    Some((_, best_value)) => value > best_value,
                };
                if better {
                    best = Some((position, value));
                }
            }
            match best {
                Some((position, _)) => Ok((customer, matrix.categories()[position as usize])),
                None => Err(Error::EmptyProfile(customer)),
            }
        })
        .collect();

    let mut labels = BTreeMap::new();
    for assignment in assignments {
        let (customer, label) = assignment?;
        labels.insert(customer, label);
    }
    Ok(ClusterAssignment::from_labels(labels))
}

/// Groups an assignment into clusters and caches each cluster's maximum
/// behavior length from `dataset`.
pub fn form_clusters(assignment: &ClusterAssignment, dataset: &Dataset) -> Result<Clustering> {
    Clustering::from_assignment_with_dataset(MethodTag::Cbc, assignment.clone(), dataset)
}
