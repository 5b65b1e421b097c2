use std::collections::BTreeMap;

use rand::Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::bucket::{bucket_by_percentile, partition_cells, IntervalBucket};
use super::{MasqueradeError, TxFeatureRecord};

/// Empirical fee distribution of one interval bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeePmf {
    pub support: Vec<u64>,
    pub probabilities: Vec<f64>,
}

impl FeePmf {
    pub fn from_fees(fees: impl IntoIterator<Item = u64>) -> Option<FeePmf> {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let mut total = 0u64;
        for f in fees {
            *counts.entry(f).or_default() += 1;
            total += 1;
        }
        if total == 0 {
            return None;
        }
        let (support, probabilities) = counts
            .into_iter()
            .map(|(fee, c)| (fee, c as f64 / total as f64))
            .unzip();
        Some(FeePmf { support, probabilities })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (fee, p) in self.support.iter().zip(&self.probabilities) {
            acc += p;
            if u < acc {
                return *fee;
            }
        }
        *self.support.last().expect("support is nonempty")
    }

    /// `P(fee <= x)`
    pub fn cdf(&self, x: u64) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .take_while(|(f, _)| **f <= x)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

pub fn fit_fee_pmf(bucket: &IntervalBucket) -> FeePmf {
    FeePmf::from_fees(bucket.records.iter().map(|r| r.fee)).expect("buckets are nonempty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeBucket {
    pub i: u32,
    pub j: u32,
    pub ordinal: usize,
    pub a_min: f64,
    pub a_max: f64,
    /// Number of training records in the bucket.
    pub len: usize,
    pub pmf: FeePmf,
}

impl FeeBucket {
    pub fn contains(&self, amount: f64) -> bool {
        let above = if self.ordinal == 0 {
            amount >= self.a_min
        } else {
            amount > self.a_min
        };
        above && amount <= self.a_max
    }
}

/// Every fee bucket of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeModel {
    pub n_intervals: usize,
    pub buckets: Vec<FeeBucket>,
}

pub fn fit_fee_model(records: &[TxFeatureRecord], n_intervals: usize) -> FeeModel {
    let mut buckets = Vec::new();
    for cell in partition_cells(records) {
        for b in bucket_by_percentile(&cell, n_intervals) {
            buckets.push(FeeBucket {
                i: b.i,
                j: b.j,
                ordinal: b.ordinal,
                a_min: b.a_min,
                a_max: b.a_max,
                len: b.records.len(),
                pmf: fit_fee_pmf(&b),
            });
        }
    }
    FeeModel { n_intervals, buckets }
}

impl FeeModel {
    pub fn cell(&self, i: u32, j: u32) -> impl Iterator<Item = &FeeBucket> {
        self.buckets.iter().filter(move |b| b.i == i && b.j == j)
    }

    /// The bucket holding `amount` in cell `(i, j)`. When the amount is
    /// outside every interval the nearest one is returned with the flag set.
    pub fn lookup(&self, i: u32, j: u32, amount: u64) -> Result<(&FeeBucket, bool), MasqueradeError> {
        let a = amount as f64;
        let mut nearest: Option<(&FeeBucket, f64)> = None;
        for b in self.cell(i, j) {
            if b.contains(a) {
                return Ok((b, false));
            }
            let d = if a < b.a_min { b.a_min - a } else { a - b.a_max };
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((b, d));
            }
        }
        nearest
            .map(|(b, _)| (b, true))
            .ok_or(MasqueradeError::ModelMismatch(i, j))
    }
}
