use std::collections::BTreeMap;

use rand::Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::bucket::percentile;
use super::fee::FeeModel;
use super::gmm::Gmm1d;
use super::{MasqueradeError, TxFeatureRecord};
use crate::crypto::rng::{derive_seed, HashStream};

pub const MODEL_VERSION: u32 = 1;

/// Amount redraws before a sample is abandoned; also the fee redraw limit.
const REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Lower and upper clip percentiles of the input amount.
    pub clip: (f64, f64),
    /// Percentiles splitting the clipped corpus into three macro buckets.
    pub split: (f64, f64),
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clip: (1.0, 99.0),
            split: (20.0, 80.0),
            components: 5,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Amount model for one (inputs, outputs) pair inside a macro bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellModel {
    pub i: u32,
    pub j: u32,
    pub prob: f64,
    pub count: usize,
    /// Mixture over the natural log of the input amount.
    pub log_amount: Gmm1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroBucket {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub count: usize,
    pub cells: Vec<CellModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub config: SynthConfig,
    pub n_train: usize,
    pub buckets: Vec<MacroBucket>,
}

/// Versioned on-disk form of a trained model and its fee tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub synth: SynthModel,
    pub fees: FeeModel,
}

impl ModelBundle {
    pub fn new(synth: SynthModel, fees: FeeModel) -> Self {
        ModelBundle {
            version: MODEL_VERSION,
            synth,
            fees,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MasqueradeError> {
        let b: ModelBundle = serde_json::from_str(s).map_err(|e| MasqueradeError::SchemaError(e.to_string()))?;
        if b.version != MODEL_VERSION {
            return Err(MasqueradeError::SchemaError(format!(
                "model version {} unsupported",
                b.version
            )));
        }
        Ok(b)
    }
}

pub fn fit_synth_model(records: &[TxFeatureRecord], config: SynthConfig) -> Result<SynthModel, MasqueradeError> {
    if records.is_empty() {
        return Err(MasqueradeError::InsufficientData("empty corpus".into()));
    }
    let mut amounts: Vec<f64> = records.iter().map(|r| r.inputs_amount as f64).collect();
    amounts.sort_by(|a, b| a.total_cmp(b));
    let edges = [
        percentile(&amounts, config.clip.0),
        percentile(&amounts, config.split.0),
        percentile(&amounts, config.split.1),
        percentile(&amounts, config.clip.1),
    ];

    let mut groups: [Vec<&TxFeatureRecord>; 3] = Default::default();
    for r in records {
        let a = r.inputs_amount as f64;
        if a < edges[0] || a > edges[3] {
            continue;
        }
        let b = if a <= edges[1] {
            0
        } else if a <= edges[2] {
            1
        } else {
            2
        };
        groups[b].push(r);
    }
    let kept: usize = groups.iter().map(Vec::len).sum();

    let mut root = [0u8; 32];
    root[24..].copy_from_slice(&config.seed.to_be_bytes());

    let mut buckets = Vec::with_capacity(3);
    for (b, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(MasqueradeError::InsufficientData(format!("macro bucket {b} is empty")));
        }
        let mut by_cell: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
        for r in group {
            by_cell
                .entry((r.input_cnt, r.output_cnt))
                .or_default()
                .push((r.inputs_amount as f64).ln());
        }
        let cells = by_cell
            .into_iter()
            .map(|((i, j), logs)| {
                let mut rng = HashStream::new(derive_seed(
                    &root,
                    "gmm",
                    (b as u64) << 32 | (i as u64) << 16 | j as u64,
                ));
                CellModel {
                    i,
                    j,
                    prob: logs.len() as f64 / group.len() as f64,
                    count: logs.len(),
                    log_amount: Gmm1d::fit(&logs, config.components, config.max_iter, config.tol, &mut rng),
                }
            })
            .collect();
        buckets.push(MacroBucket {
            lo: edges[b],
            hi: edges[b + 1],
            mass: group.len() as f64 / kept as f64,
            count: group.len(),
            cells,
        });
    }
    Ok(SynthModel {
        config,
        n_train: kept,
        buckets,
    })
}

fn pick<'a, T, R: RngCore + ?Sized>(items: &'a [T], weight: impl Fn(&T) -> f64, rng: &mut R) -> &'a T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for item in items {
        acc += weight(item);
        if u < acc {
            return item;
        }
    }
    items.last().expect("nonempty")
}

impl SynthModel {
    /// Draws (inputs, outputs, amount); the amount stays inside the chosen
    /// macro bucket, clamped after the redraw limit.
    pub fn draw_triple<R: RngCore + ?Sized>(&self, rng: &mut R) -> (u32, u32, u64) {
        let bucket = pick(&self.buckets, |b| b.mass, rng);
        let cell = pick(&bucket.cells, |c| c.prob, rng);
        let lo = bucket.lo.max(1.0);
        let hi = bucket.hi.max(lo);
        let mut amount = None;
        for _ in 0..REDRAWS {
            let a = cell.log_amount.sample(rng).exp().round();
            if a >= lo && a <= hi {
                amount = Some(a);
                break;
            }
        }
        let a = amount.unwrap_or_else(|| cell.log_amount.sample(rng).exp().round().clamp(lo, hi));
        (cell.i, cell.j, a as u64)
    }

    /// Bounds of the amounts the model can produce.
    pub fn amount_range(&self) -> (f64, f64) {
        (self.buckets[0].lo, self.buckets[self.buckets.len() - 1].hi)
    }
}

/// A synthesized record and how it was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub record: TxFeatureRecord,
    pub fee_bucket: usize,
    /// The amount was outside every trained interval of its cell and the
    /// nearest interval supplied the fee.
    pub fallback: bool,
}

/// The record at position `ordinal` of the stream identified by `seed`.
pub fn sample_one(model: &SynthModel, fees: &FeeModel, seed: u64, ordinal: u64) -> Result<Sample, MasqueradeError> {
    let mut root = [0u8; 32];
    root[24..].copy_from_slice(&seed.to_be_bytes());
    let mut rng = HashStream::new(derive_seed(&root, "sample", ordinal));
    sample_with_rng(model, fees, &mut rng)
}

pub fn sample_with_rng<R: RngCore + ?Sized>(
    model: &SynthModel,
    fees: &FeeModel,
    rng: &mut R,
) -> Result<Sample, MasqueradeError> {
    let mut last_cell = (0, 0);
    for _ in 0..REDRAWS {
        let (i, j, amount) = model.draw_triple(rng);
        last_cell = (i, j);
        let (bucket, fallback) = fees.lookup(i, j, amount)?;
        for _ in 0..REDRAWS {
            let fee = bucket.pmf.sample(rng);
            if fee < amount {
                let record = TxFeatureRecord::new(i, j, amount, fee)?;
                return Ok(Sample {
                    record,
                    fee_bucket: bucket.ordinal,
                    fallback,
                });
            }
        }
    }
    Err(MasqueradeError::ModelMismatch(last_cell.0, last_cell.1))
}

pub fn sample_features(
    model: &SynthModel,
    fees: &FeeModel,
    count: usize,
    seed: u64,
) -> Result<Vec<TxFeatureRecord>, MasqueradeError> {
    (0..count as u64)
        .map(|k| sample_one(model, fees, seed, k).map(|s| s.record))
        .collect()
}
