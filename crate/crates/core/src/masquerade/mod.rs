//! Transaction-parameter masquerading.
//!
//! Real transactions are reduced to five features, grouped by
//! (input count, output count), split into percentile intervals of the
//! input amount, and each interval gets an empirical fee distribution. A
//! small generative model produces fresh (counts, amount) triples; fees are
//! then drawn from the interval the amount falls into.

mod bucket;
mod capacity;
mod corpus;
mod fee;
mod generator;
mod gmm;
pub mod stats;
mod synth;

use thiserror::Error;

pub use bucket::{bucket_by_percentile, partition_cells, percentile, IntervalBucket, PartitionCell};
pub use capacity::{expected_capacity, read_capacity_table, Capacity, CapacityRow};
pub use corpus::{ingest_corpus, read_corpus_csv, write_corpus_csv, Corpus, CorpusRow, Filters, TxFeatureRecord};
pub use fee::{fit_fee_model, fit_fee_pmf, FeeBucket, FeeModel, FeePmf};
pub use generator::{generate_corpus, GeneratorConfig, INPUT_PROPORTIONS};
pub use gmm::Gmm1d;
pub use synth::{
    fit_synth_model, sample_features, sample_one, sample_with_rng, CellModel, MacroBucket, ModelBundle, Sample,
    SynthConfig, SynthModel, MODEL_VERSION,
};

/// Default number of percentile intervals per (inputs, outputs) cell.
pub const DEFAULT_INTERVALS: usize = 5;
/// Largest input or output count kept by ingestion.
pub const MAX_COUNT: u32 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MasqueradeError {
    #[error("no records left after filtering")]
    EmptyAfterFilter,
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no fee model for cell ({0}, {1})")]
    ModelMismatch(u32, u32),
    #[error("weights sum to {0}, expected 1")]
    WeightSumError(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MasqueradeError {
    fn from(e: std::io::Error) -> Self {
        MasqueradeError::Io(e.to_string())
    }
}

impl From<csv::Error> for MasqueradeError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => MasqueradeError::Io(e.to_string()),
            _ => MasqueradeError::SchemaError(e.to_string()),
        }
    }
}
