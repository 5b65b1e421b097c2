use std::collections::BTreeMap;

use super::TxFeatureRecord;

/// Percentile with linear interpolation between order statistics
/// (position `q/100 * (len-1)`). `sorted` must be ascending and nonempty.
///
/// The interpolation is evaluated from the nearer neighbour, as numpy does,
/// so results agree with `numpy.percentile` to the last bit.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = (sorted.len() - 1) as f64 * (q / 100.0).clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if t >= 0.5 {
        b - (b - a) * (1.0 - t)
    } else {
        a + (b - a) * t
    }
}

/// Records sharing one (input count, output count) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCell {
    pub i: u32,
    pub j: u32,
    pub records: Vec<TxFeatureRecord>,
}

/// Groups records by (input count, output count), ordered by `(i, j)`.
pub fn partition_cells(records: &[TxFeatureRecord]) -> Vec<PartitionCell> {
    let mut map: BTreeMap<(u32, u32), Vec<TxFeatureRecord>> = BTreeMap::new();
    for r in records {
        map.entry((r.input_cnt, r.output_cnt)).or_default().push(*r);
    }
    map.into_iter()
        .map(|((i, j), records)| PartitionCell { i, j, records })
        .collect()
}

/// Records of a cell whose input amount lies in `(a_min, a_max]`; the first
/// bucket of a cell also includes `a_min` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBucket {
    pub i: u32,
    pub j: u32,
    pub ordinal: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub records: Vec<TxFeatureRecord>,
}

impl IntervalBucket {
    pub fn contains(&self, amount: f64) -> bool {
        let above = if self.ordinal == 0 {
            amount >= self.a_min
        } else {
            amount > self.a_min
        };
        above && amount <= self.a_max
    }
}

/// Splits a cell at the `100k/n` percentiles of its input amounts.
///
/// Equal edges collapse. An interval that ends up with no records is merged
/// into the following one (or the preceding one, at the top end), so every
/// returned bucket is nonempty.
pub fn bucket_by_percentile(cell: &PartitionCell, n_intervals: usize) -> Vec<IntervalBucket> {
    assert!(n_intervals >= 1, "need at least one interval");
    assert!(!cell.records.is_empty(), "empty cell");
    let mut amounts: Vec<f64> = cell.records.iter().map(|r| r.inputs_amount as f64).collect();
    amounts.sort_by(|a, b| a.total_cmp(b));

    let mut edges: Vec<f64> = (0..=n_intervals)
        .map(|k| percentile(&amounts, 100.0 * k as f64 / n_intervals as f64))
        .collect();
    edges.dedup();
    if edges.len() == 1 {
        edges.push(edges[0]);
    }

    let intervals = edges.len() - 1;
    let mut groups: Vec<Vec<TxFeatureRecord>> = vec![Vec::new(); intervals];
    for r in &cell.records {
        let a = r.inputs_amount as f64;
        // First edge index whose upper bound covers the amount.
        let k = edges[1..].partition_point(|&hi| hi < a).min(intervals - 1);
        groups[k].push(*r);
    }

    let mut buckets: Vec<IntervalBucket> = Vec::new();
    let mut pending_lo: Option<f64> = None;
    for (k, records) in groups.into_iter().enumerate() {
        let lo = pending_lo.take().unwrap_or(edges[k]);
        if records.is_empty() {
            pending_lo = Some(lo);
            continue;
        }
        buckets.push(IntervalBucket {
            i: cell.i,
            j: cell.j,
            ordinal: buckets.len(),
            a_min: lo,
            a_max: edges[k + 1],
            records,
        });
    }
    if pending_lo.is_some() {
        if let Some(last) = buckets.last_mut() {
            last.a_max = *edges.last().unwrap();
        }
    }
    buckets
}
