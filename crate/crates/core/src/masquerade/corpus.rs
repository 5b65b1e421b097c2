use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize};

use super::{MasqueradeError, MAX_COUNT};

/// The five features of one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxFeatureRecord {
    pub input_cnt: u32,
    pub output_cnt: u32,
    pub fee: u64,
    pub inputs_amount: u64,
    pub outputs_amount: u64,
}

impl TxFeatureRecord {
    pub fn new(input_cnt: u32, output_cnt: u32, inputs_amount: u64, fee: u64) -> Result<Self, MasqueradeError> {
        let r = TxFeatureRecord {
            input_cnt,
            output_cnt,
            fee,
            inputs_amount,
            outputs_amount: inputs_amount.saturating_sub(fee),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), MasqueradeError> {
        if self.input_cnt == 0 || self.output_cnt == 0 {
            return Err(MasqueradeError::SchemaError("zero input or output count".into()));
        }
        if self.fee == 0 {
            return Err(MasqueradeError::SchemaError("fee must be positive".into()));
        }
        if self.inputs_amount.checked_sub(self.fee) != Some(self.outputs_amount) || self.outputs_amount == 0 {
            return Err(MasqueradeError::SchemaError(format!(
                "outputs_amount {} != inputs_amount {} - fee {}",
                self.outputs_amount, self.inputs_amount, self.fee
            )));
        }
        Ok(())
    }

    /// Feature vector in record order.
    pub fn as_vector(&self) -> [f64; 5] {
        [
            self.input_cnt as f64,
            self.output_cnt as f64,
            self.fee as f64,
            self.inputs_amount as f64,
            self.outputs_amount as f64,
        ]
    }
}

/// One row of the corpus CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub txid: String,
    pub block_height: u64,
    pub timestamp: u64,
    #[serde(deserialize_with = "flexible_bool")]
    pub is_coinbase: bool,
    pub input_cnt: u32,
    pub output_cnt: u32,
    pub inputs_amount: u64,
    pub outputs_amount: u64,
    pub fee: u64,
}

impl CorpusRow {
    pub fn features(&self) -> TxFeatureRecord {
        TxFeatureRecord {
            input_cnt: self.input_cnt,
            output_cnt: self.output_cnt,
            fee: self.fee,
            inputs_amount: self.inputs_amount,
            outputs_amount: self.outputs_amount,
        }
    }
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filters {
    pub max_inputs: u32,
    pub max_outputs: u32,
    pub exclude_coinbase: bool,
}

impl Default for Filters {
    fn default() -> Self {
        Filters {
            max_inputs: MAX_COUNT,
            max_outputs: MAX_COUNT,
            exclude_coinbase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<TxFeatureRecord>,
    pub source: String,
    pub filters: Filters,
    pub dropped_coinbase: usize,
    pub dropped_oversize: usize,
    /// Rows with a zero count or zero fee.
    pub dropped_invalid: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Filters a row stream into a corpus.
///
/// Amount inconsistencies are a hard `SchemaError`: they mean the source is
/// not what it claims to be. Everything else is dropped and counted.
pub fn ingest_corpus<I>(rows: I, source: &str, filters: Filters) -> Result<Corpus, MasqueradeError>
where
    I: IntoIterator<Item = CorpusRow>,
{
    let mut corpus = Corpus {
        records: Vec::new(),
        source: source.to_string(),
        filters,
        dropped_coinbase: 0,
        dropped_oversize: 0,
        dropped_invalid: 0,
    };
    for row in rows {
        if filters.exclude_coinbase && row.is_coinbase {
            corpus.dropped_coinbase += 1;
            continue;
        }
        if row.inputs_amount.checked_sub(row.fee) != Some(row.outputs_amount) {
            return Err(MasqueradeError::SchemaError(format!(
                "row {}: outputs_amount {} != inputs_amount {} - fee {}",
                row.txid, row.outputs_amount, row.inputs_amount, row.fee
            )));
        }
        if row.input_cnt > filters.max_inputs || row.output_cnt > filters.max_outputs {
            corpus.dropped_oversize += 1;
            continue;
        }
        let rec = row.features();
        if rec.validate().is_err() {
            corpus.dropped_invalid += 1;
            continue;
        }
        corpus.records.push(rec);
    }
    if corpus.records.is_empty() {
        return Err(MasqueradeError::EmptyAfterFilter);
    }
    log::info!(
        "ingested {} records from {} (coinbase {}, oversize {}, invalid {})",
        corpus.records.len(),
        source,
        corpus.dropped_coinbase,
        corpus.dropped_oversize,
        corpus.dropped_invalid
    );
    Ok(corpus)
}

pub fn read_corpus_csv<R: Read>(reader: R) -> Result<Vec<CorpusRow>, MasqueradeError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_corpus_csv<W: Write>(writer: W, rows: &[CorpusRow]) -> Result<(), MasqueradeError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
