//! Synthetic stand-in for a real transaction corpus.
//!
//! Input counts follow the published mainnet proportions for 1..=5 inputs.
//! Amounts are log-normal with a location that grows with the input count.
//! Fees are a fee-rate tier times an estimated legacy size, so identical fees
//! recur the way they do on a real chain. Larger amounts lean toward higher
//! tiers.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::CorpusRow;
use crate::chain::{BLOCK_INTERVAL, GENESIS_TIME};
use crate::crypto::hash::sha256;
use crate::crypto::HashStream;

/// Share of transactions with 1..=5 inputs.
pub const INPUT_PROPORTIONS: [f64; 5] = [0.777, 0.140, 0.047, 0.022, 0.014];
const OUTPUT_PROPORTIONS: [f64; 5] = [0.12, 0.78, 0.05, 0.03, 0.02];
/// Fee rates in satoshi per byte.
const FEE_RATES: [u64; 12] = [1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25];
const FEE_RATE_WEIGHTS: [f64; 12] = [0.05, 0.10, 0.12, 0.13, 0.12, 0.10, 0.09, 0.08, 0.07, 0.06, 0.05, 0.03];
const LOG_AMOUNT_MEAN: f64 = 14.2;
const LOG_AMOUNT_SD: f64 = 1.7;
const TXS_PER_BLOCK: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub records: usize,
    pub seed: u64,
    /// Probability that each emitted row is one ingestion must drop
    /// (coinbase, more than five inputs or outputs). Noise rows come on top
    /// of `records`.
    pub noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            records: 100_000,
            seed: 0,
            noise: 0.0,
        }
    }
}

/// Legacy P2PKH size estimate.
fn estimated_size(i: u32, j: u32) -> u64 {
    10 + 148 * i as u64 + 34 * j as u64
}

pub fn generate_corpus(config: &GeneratorConfig) -> Vec<CorpusRow> {
    assert!((0.0..1.0).contains(&config.noise), "noise must be in [0, 1)");
    let mut rng = HashStream::from_u64(config.seed);
    let inputs = WeightedIndex::new(INPUT_PROPORTIONS).expect("static weights");
    let outputs = WeightedIndex::new(OUTPUT_PROPORTIONS).expect("static weights");
    let rates = WeightedIndex::new(FEE_RATE_WEIGHTS).expect("static weights");

    let mut rows = Vec::with_capacity(config.records);
    let mut ordinal = 0u64;
    let mut next_row = |rng: &mut HashStream, i: u32, j: u32, amount: u64, fee: u64, coinbase: bool| {
        let height = ordinal / TXS_PER_BLOCK;
        let mut tag = config.seed.to_be_bytes().to_vec();
        tag.extend_from_slice(&ordinal.to_be_bytes());
        tag.extend_from_slice(&rng.gen::<[u8; 8]>());
        ordinal += 1;
        CorpusRow {
            txid: hex::encode(sha256(&tag)),
            block_height: height,
            timestamp: GENESIS_TIME + height * BLOCK_INTERVAL,
            is_coinbase: coinbase,
            input_cnt: i,
            output_cnt: j,
            inputs_amount: amount,
            outputs_amount: amount - fee,
            fee,
        }
    };

    let mut clean = 0;
    while clean < config.records {
        if config.noise > 0.0 && rng.gen::<f64>() < config.noise {
            let amount = rng.gen_range(100_000..700_000_000u64);
            let row = if rng.gen::<bool>() {
                let j = rng_range(&mut rng, 1, 3);
                next_row(&mut rng, 1, j, amount, 0, true)
            } else {
                let i = rng_range(&mut rng, 6, 20);
                let j = rng_range(&mut rng, 1, 8);
                let fee = estimated_size(i, j) * 5;
                next_row(&mut rng, i, j, amount + fee, fee, false)
            };
            rows.push(row);
            continue;
        }
        let i = inputs.sample(&mut rng) as u32 + 1;
        let j = outputs.sample(&mut rng) as u32 + 1;
        let dist = Normal::new(LOG_AMOUNT_MEAN + 0.45 * (i - 1) as f64, LOG_AMOUNT_SD).expect("finite");
        let log_amount: f64 = dist.sample(&mut rng);
        let amount = log_amount.exp().round() as u64;
        let shift = ((log_amount - LOG_AMOUNT_MEAN) / 1.5).floor() as i64;
        let tier = (rates.sample(&mut rng) as i64 + shift).clamp(0, FEE_RATES.len() as i64 - 1) as usize;
        let fee = FEE_RATES[tier] * estimated_size(i, j);
        // Keep every output spendable at one satoshi or more.
        if amount <= fee + j as u64 {
            continue;
        }
        rows.push(next_row(&mut rng, i, j, amount, fee, false));
        clean += 1;
    }
    rows
}

fn rng_range(rng: &mut HashStream, lo: u32, hi: u32) -> u32 {
    rng.gen_range(lo..=hi)
}
