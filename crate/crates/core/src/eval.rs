//! Black-box indistinguishability check: mix real and synthesized records,
//! cluster with k-means (k = 2) and score the clustering against the true
//! labels with ARI and NMI. Scores near zero mean the clusters ignore the
//! real/covert split.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::HashStream;
use crate::masquerade::TxFeatureRecord;

const RESTARTS: usize = 10;
const MAX_ITER: usize = 300;
const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Covert,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Covert => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Covert => "covert",
        })
    }
}

impl FromStr for Label {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim() {
            "real" => Ok(Label::Real),
            "covert" => Ok(Label::Covert),
            other => Err(EvalError::SchemaError(format!("unknown label {other:?}"))),
        }
    }
}

/// Row of the labeled feature-set CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub input_cnt: u32,
    pub output_cnt: u32,
    pub inputs_amount: u64,
    pub outputs_amount: u64,
    pub fee: u64,
    pub label: Label,
}

impl LabeledRow {
    pub fn new(r: &TxFeatureRecord, label: Label) -> Self {
        LabeledRow {
            input_cnt: r.input_cnt,
            output_cnt: r.output_cnt,
            inputs_amount: r.inputs_amount,
            outputs_amount: r.outputs_amount,
            fee: r.fee,
            label,
        }
    }

    pub fn record(&self) -> TxFeatureRecord {
        TxFeatureRecord {
            input_cnt: self.input_cnt,
            output_cnt: self.output_cnt,
            fee: self.fee,
            inputs_amount: self.inputs_amount,
            outputs_amount: self.outputs_amount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledFeatureSet {
    pub rows: Vec<TxFeatureRecord>,
    pub labels: Vec<Label>,
}

impl LabeledFeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.as_vector().to_vec()).collect()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn from_rows(rows: &[LabeledRow]) -> Self {
        LabeledFeatureSet {
            rows: rows.iter().map(LabeledRow::record).collect(),
            labels: rows.iter().map(|r| r.label).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<LabeledRow> {
        self.rows
            .iter()
            .zip(&self.labels)
            .map(|(r, l)| LabeledRow::new(r, *l))
            .collect()
    }
}

pub fn read_feature_set<R: Read>(reader: R) -> Result<Vec<LabeledRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize::<LabeledRow>() {
        let row = row.map_err(|e| EvalError::SchemaError(e.to_string()))?;
        row.record()
            .validate()
            .map_err(|e| EvalError::SchemaError(e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_feature_set<W: Write>(writer: W, rows: &[LabeledRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

/// Shuffled union with a covert share of `ratio`.
///
/// The mix is as large as the inputs allow: `total = min(R / (1 - ratio),
/// F / ratio)`, with `round(total * ratio)` covert rows. Rows are drawn
/// without replacement.
pub fn mix_datasets(real: &[TxFeatureRecord], fake: &[TxFeatureRecord], ratio: f64, seed: u64) -> LabeledFeatureSet {
    let ratio = ratio.clamp(0.0, 1.0);
    let (r, f) = (real.len() as f64, fake.len() as f64);
    let total = if ratio <= 0.0 {
        r
    } else if ratio >= 1.0 {
        f
    } else {
        (r / (1.0 - ratio)).min(f / ratio).floor()
    };
    let n_fake = ((total * ratio).round() as usize).min(fake.len());
    let n_real = ((total as usize).saturating_sub(n_fake)).min(real.len());

    let mut rng = HashStream::from_u64(seed);
    let mut pool: Vec<(TxFeatureRecord, Label)> = Vec::with_capacity(n_real + n_fake);
    pool.extend(real.choose_multiple(&mut rng, n_real).map(|x| (*x, Label::Real)));
    pool.extend(fake.choose_multiple(&mut rng, n_fake).map(|x| (*x, Label::Covert)));
    pool.shuffle(&mut rng);
    let (rows, labels) = pool.into_iter().unzip();
    LabeledFeatureSet { rows, labels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Columns with zero variance that were left out.
    pub dropped_columns: Vec<usize>,
}

/// Column-wise z-scores. Zero-variance columns are dropped.
pub fn standardize(features: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dims = features.first().map_or(0, Vec::len);
    let n = features.len() as f64;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for c in 0..dims {
        let mean = features.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = features.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 && var.is_finite() {
            keep.push(c);
            stats.push((mean, var.sqrt()));
        } else {
            dropped.push(c);
        }
    }
    let out = features
        .iter()
        .map(|r| keep.iter().zip(&stats).map(|(&c, (m, sd))| (r[c] - m) / sd).collect())
        .collect();
    (out, dropped)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn lloyd<R: RngCore + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> (Vec<usize>, f64) {
    let n = data.len();
    let dims = data[0].len();
    // k-means++ seeding.
    let mut centres = vec![data[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| dist2(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|d| {
                    acc += d;
                    acc >= target
                })
                .unwrap_or(n - 1)
        };
        centres.push(data[idx].clone());
        for (p, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(&data[p], &centres[centres.len() - 1]));
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut new_inertia = 0.0;
        for (p, point) in data.iter().enumerate() {
            let (best, d) = centres
                .iter()
                .enumerate()
                .map(|(c, centre)| (c, dist2(point, centre)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            labels[p] = best;
            new_inertia += d;
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, point) in data.iter().enumerate() {
            counts[labels[p]] += 1;
            for (s, x) in sums[labels[p]].iter_mut().zip(point) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let converged = inertia.is_finite() && (inertia - new_inertia).abs() <= TOL * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if converged {
            break;
        }
    }
    (labels, inertia)
}

/// k-means with k = 2 on z-scored columns; the lowest-inertia restart wins
/// (ties go to the earlier restart).
pub fn kmeans2(features: &[Vec<f64>], seed: u64) -> Result<KmeansResult, EvalError> {
    if features.len() < 2 {
        return Err(EvalError::DegenerateData("need at least two rows".into()));
    }
    let (data, dropped) = standardize(features);
    if !dropped.is_empty() {
        log::warn!("dropping zero-variance feature columns {dropped:?}");
    }
    if data[0].is_empty() {
        return Err(EvalError::DegenerateData(
            "every feature column has zero variance".into(),
        ));
    }
    let root = HashStream::from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..RESTARTS {
        let mut rng = root.derive("kmeans", restart as u64);
        let (labels, inertia) = lloyd(&data, 2, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.expect("at least one restart");
    Ok(KmeansResult {
        labels,
        inertia,
        dropped_columns: dropped,
    })
}

/// Joint counts and both marginals.
type Contingency = (HashMap<(usize, usize), f64>, HashMap<usize, f64>, HashMap<usize, f64>);

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let mut joint = HashMap::new();
    let mut ra = HashMap::new();
    let mut rb = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    (joint, ra, rb)
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand Index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len() as f64;
    let (joint, ra, rb) = contingency(pred, truth);
    let index: f64 = joint.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ra.values().map(|&v| choose2(v)).sum();
    let sb: f64 = rb.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        // Both labelings are a single cluster or all singletons.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Normalized mutual information, normalized by the arithmetic mean of the
/// two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len() as f64;
    let (joint, ra, rb) = contingency(pred, truth);
    let entropy = |m: &HashMap<usize, f64>| -> f64 { m.values().map(|&c| -(c / n) * (c / n).ln()).sum() };
    let (ha, hb) = (entropy(&ra), entropy(&rb));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| (c / n) * ((c * n) / (ra[&x] * rb[&y])).ln())
        .sum();
    let denom = 0.5 * (ha + hb);
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ari: f64,
    pub nmi: f64,
    pub n_real: usize,
    pub n_covert: usize,
    pub seed: u64,
}

/// Clusters a labeled set and scores it against its labels.
pub fn evaluate_blackbox(set: &LabeledFeatureSet, seed: u64) -> Result<Metrics, EvalError> {
    let km = kmeans2(&set.vectors(), seed)?;
    let truth = set.label_indices();
    Ok(Metrics {
        ari: ari(&km.labels, &truth)?,
        nmi: nmi(&km.labels, &truth)?,
        n_real: set.count(Label::Real),
        n_covert: set.count(Label::Covert),
        seed,
    })
}
