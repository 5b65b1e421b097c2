use std::io::Read;

use serde::{Deserialize, Serialize};

use super::MasqueradeError;

/// Bits carried by one signed input.
pub const BITS_PER_INPUT: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub bits_per_tx: f64,
    pub fee_per_tx: f64,
    pub mean_inputs: f64,
}

/// Expected payload and fee of one covert transaction. `proportions[k]` and
/// `avg_fees[k]` describe transactions with `k + 1` inputs.
pub fn expected_capacity(proportions: &[f64], avg_fees: &[f64]) -> Result<Capacity, MasqueradeError> {
    if proportions.len() != avg_fees.len() || proportions.is_empty() {
        return Err(MasqueradeError::SchemaError(format!(
            "{} proportions vs {} fees",
            proportions.len(),
            avg_fees.len()
        )));
    }
    if proportions.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(MasqueradeError::SchemaError("proportion outside [0, 1]".into()));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(MasqueradeError::WeightSumError(sum));
    }
    let mean_inputs: f64 = proportions.iter().enumerate().map(|(k, w)| w * (k + 1) as f64).sum();
    let fee_per_tx = proportions.iter().zip(avg_fees).map(|(w, f)| w * f).sum();
    Ok(Capacity {
        bits_per_tx: BITS_PER_INPUT * mean_inputs,
        fee_per_tx,
        mean_inputs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub input_cnt: u32,
    pub proportion: f64,
    pub avg_fee: f64,
}

/// Reads `input_cnt,proportion,avg_fee` rows and returns dense weight and
/// fee vectors indexed by `input_cnt - 1`.
pub fn read_capacity_table<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>), MasqueradeError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<CapacityRow> = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    let max = rows.iter().map(|r| r.input_cnt).max().unwrap_or(0) as usize;
    if max == 0 || rows.iter().any(|r| r.input_cnt == 0) {
        return Err(MasqueradeError::SchemaError("input_cnt must start at 1".into()));
    }
    let mut w = vec![0.0; max];
    let mut f = vec![0.0; max];
    let mut seen = vec![false; max];
    for r in rows {
        let k = r.input_cnt as usize - 1;
        if seen[k] {
            return Err(MasqueradeError::SchemaError(format!(
                "duplicate input_cnt {}",
                r.input_cnt
            )));
        }
        seen[k] = true;
        w[k] = r.proportion;
        f[k] = r.avg_fee;
    }
    Ok((w, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_input_is_256_bits() {
        let c = expected_capacity(&[1.0, 0.0, 0.0, 0.0, 0.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(c.bits_per_tx, 256.0);
        assert_eq!(c.fee_per_tx, 1.0);
    }

    #[test]
    fn bad_weights() {
        assert!(matches!(
            expected_capacity(&[0.5, 0.4], &[1.0, 1.0]),
            Err(MasqueradeError::WeightSumError(_))
        ));
    }

    #[test]
    fn table_parsing() {
        let csv = "input_cnt,proportion,avg_fee\n2,0.5,20\n1,0.5,10\n";
        let (w, f) = read_capacity_table(csv.as_bytes()).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(f, vec![10.0, 20.0]);
    }
}
