//! In-process UTXO ledger standing in for a public test network.
//!
//! Transactions enter a mempool on submission and become visible to address
//! queries immediately (unless [`Visibility::ConfirmedOnly`] is set).
//! [`ChainState::mine_block`] moves the whole mempool into a block. There is
//! no proof-of-work and no reorganisation. Value only enters through
//! [`ChainState::faucet_fund`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::crypto::{ecdsa_verify, hash::hash160, hash::sha256d};
use crate::hd::{Address, Network};
use crate::masquerade::CorpusRow;
use crate::tx::{
    p2pkh_hash, p2pkh_script, parse_script_sig, sighash_all, write_compact_size, OutPoint, Reader, Transaction,
    TxInput, TxOutput, Txid, DEFAULT_SEQUENCE, TX_VERSION,
};

/// Timestamp of block 0; later blocks are spaced ten minutes apart.
pub const GENESIS_TIME: u64 = 1_656_633_600;
pub const BLOCK_INTERVAL: u64 = 600;

const MAGIC: &[u8; 4] = b"CVCH";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("outpoint {0} is already spent")]
    DoubleSpend(OutPoint),
    #[error("signature check failed on input {0}")]
    BadSignature(usize),
    #[error("outpoint {0} does not exist")]
    UnknownInput(OutPoint),
    #[error("fee must be positive (got {0})")]
    FeeNonPositive(i128),
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("corrupt chain file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Which transactions address queries see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Visibility {
    #[default]
    IncludeMempool,
    ConfirmedOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub txids: Vec<Txid>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utxo {
    pub value: u64,
    pub script_pubkey: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTx {
    pub tx: Transaction,
    pub faucet: bool,
    pub height: Option<u64>,
    pub input_total: u64,
}

impl StoredTx {
    pub fn fee(&self) -> u64 {
        if self.faucet {
            0
        } else {
            self.input_total - self.tx.output_total()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainState {
    network: Option<Network>,
    blocks: Vec<Block>,
    txs: HashMap<Txid, StoredTx>,
    order: Vec<Txid>,
    mempool: Vec<Txid>,
    utxo_set: BTreeMap<OutPoint, Utxo>,
    mempool_created: BTreeMap<OutPoint, Utxo>,
    spent: BTreeSet<OutPoint>,
    addr_index: BTreeMap<[u8; 20], Vec<Txid>>,
    addr_utxos: HashMap<[u8; 20], BTreeSet<OutPoint>>,
    faucet_counter: u64,
    visibility: Visibility,
}

/// Shared handle: writers serialize on the lock, readers run concurrently.
pub type SharedChain = Arc<RwLock<ChainState>>;

impl ChainState {
    pub fn new(network: Network) -> Self {
        ChainState {
            network: Some(network),
            ..Default::default()
        }
    }

    pub fn into_shared(self) -> SharedChain {
        Arc::new(RwLock::new(self))
    }

    pub fn network(&self) -> Network {
        self.network.unwrap_or(Network::Testnet)
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mempool(&self) -> &[Txid] {
        &self.mempool
    }

    pub fn set_visibility(&mut self, v: Visibility) {
        self.visibility = v;
    }

    pub fn visibility(&self) -> Visibility {
        self.visibility
    }

    pub fn get(&self, txid: &Txid) -> Option<&StoredTx> {
        self.txs.get(txid)
    }

    pub fn is_faucet(&self, txid: &Txid) -> bool {
        self.txs.get(txid).is_some_and(|s| s.faucet)
    }

    /// Every stored transaction in submission order.
    pub fn transactions(&self) -> impl Iterator<Item = (&Txid, &StoredTx)> {
        self.order.iter().map(move |id| (id, &self.txs[id]))
    }

    pub fn addr_index(&self) -> &BTreeMap<[u8; 20], Vec<Txid>> {
        &self.addr_index
    }

    pub fn utxo_set(&self) -> &BTreeMap<OutPoint, Utxo> {
        &self.utxo_set
    }

    /// The output an outpoint refers to, spent or not.
    pub fn prev_output(&self, op: &OutPoint) -> Option<&TxOutput> {
        self.txs.get(&op.txid)?.tx.outputs.get(op.vout as usize)
    }

    /// The unspent output at `op`, confirmed or not.
    pub fn utxo(&self, op: &OutPoint) -> Option<&Utxo> {
        self.spendable(op)
    }

    fn spendable(&self, op: &OutPoint) -> Option<&Utxo> {
        if self.spent.contains(op) {
            return None;
        }
        self.mempool_created.get(op).or_else(|| self.utxo_set.get(op))
    }

    /// Full validation without mutating anything; returns the input total.
    pub fn check_tx(&self, tx: &Transaction) -> Result<u64, ChainError> {
        if tx.inputs.is_empty() || tx.outputs.is_empty() {
            return Err(ChainError::Malformed("empty input or output list".into()));
        }
        if tx.outputs.iter().any(|o| o.value == 0) {
            return Err(ChainError::Malformed("zero-value output".into()));
        }
        let mut seen = BTreeSet::new();
        let mut input_total: u64 = 0;
        for (i, input) in tx.inputs.iter().enumerate() {
            let op = input.outpoint;
            if op.is_null() {
                return Err(ChainError::Malformed("null outpoint outside a faucet".into()));
            }
            if !seen.insert(op) || self.spent.contains(&op) {
                return Err(ChainError::DoubleSpend(op));
            }
            let utxo = self.spendable(&op).ok_or(ChainError::UnknownInput(op))?;
            let owner = p2pkh_hash(&utxo.script_pubkey).ok_or(ChainError::BadSignature(i))?;
            let (sig, pk) = parse_script_sig(&input.script_sig).ok_or(ChainError::BadSignature(i))?;
            let pk_bytes = crate::crypto::point_to_bytes(&pk).map_err(|_| ChainError::BadSignature(i))?;
            if hash160(&pk_bytes) != owner {
                return Err(ChainError::BadSignature(i));
            }
            let digest = sighash_all(tx, i, &utxo.script_pubkey).map_err(|e| ChainError::Malformed(e.to_string()))?;
            if !ecdsa_verify(&pk, &digest, &sig) {
                return Err(ChainError::BadSignature(i));
            }
            input_total = input_total
                .checked_add(utxo.value)
                .ok_or_else(|| ChainError::Malformed("input overflow".into()))?;
        }
        let output_total: u128 = tx.outputs.iter().map(|o| o.value as u128).sum();
        let fee = input_total as i128 - output_total as i128;
        if fee <= 0 {
            return Err(ChainError::FeeNonPositive(fee));
        }
        if self.txs.contains_key(&tx.txid()) {
            return Err(ChainError::DoubleSpend(tx.inputs[0].outpoint));
        }
        Ok(input_total)
    }

    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Txid, ChainError> {
        let input_total = self.check_tx(&tx)?;
        Ok(self.insert(tx, false, input_total))
    }

    fn insert(&mut self, tx: Transaction, faucet: bool, input_total: u64) -> Txid {
        let id = tx.txid();
        let mut touched: Vec<[u8; 20]> = Vec::new();
        if !faucet {
            for input in &tx.inputs {
                let op = input.outpoint;
                let utxo = self.spendable(&op).expect("validated").clone();
                if let Some(h) = p2pkh_hash(&utxo.script_pubkey) {
                    touched.push(h);
                    if let Some(set) = self.addr_utxos.get_mut(&h) {
                        set.remove(&op);
                    }
                }
                self.spent.insert(op);
            }
        }
        for (vout, out) in tx.outputs.iter().enumerate() {
            let op = OutPoint {
                txid: id,
                vout: vout as u32,
            };
            if let Some(h) = p2pkh_hash(&out.script_pubkey) {
                touched.push(h);
                self.addr_utxos.entry(h).or_default().insert(op);
            }
            self.mempool_created.insert(
                op,
                Utxo {
                    value: out.value,
                    script_pubkey: out.script_pubkey.clone(),
                },
            );
        }
        let mut dedup = BTreeSet::new();
        for h in touched {
            if dedup.insert(h) {
                self.addr_index.entry(h).or_default().push(id);
            }
        }
        self.txs.insert(
            id,
            StoredTx {
                tx,
                faucet,
                height: None,
                input_total,
            },
        );
        self.order.push(id);
        self.mempool.push(id);
        id
    }

    fn faucet_tx(&self, addr: &Address, value: u64) -> Transaction {
        let mut tag = b"faucet".to_vec();
        tag.extend_from_slice(&self.faucet_counter.to_le_bytes());
        Transaction {
            version: TX_VERSION,
            inputs: vec![TxInput {
                outpoint: OutPoint::NULL,
                script_sig: tag,
                sequence: DEFAULT_SEQUENCE,
            }],
            outputs: vec![TxOutput {
                value,
                script_pubkey: p2pkh_script(&addr.hash160),
            }],
            locktime: 0,
        }
    }

    /// Mints `value` to `addr` through a flagged transaction with no real inputs.
    pub fn faucet_fund(&mut self, addr: &Address, value: u64) -> Result<OutPoint, ChainError> {
        if value == 0 {
            return Err(ChainError::Malformed("faucet value must be positive".into()));
        }
        let tx = self.faucet_tx(addr, value);
        self.faucet_counter += 1;
        let id = self.insert(tx, true, 0);
        Ok(OutPoint { txid: id, vout: 0 })
    }

    pub fn mine_block(&mut self) -> Block {
        let height = self.height();
        self.mine_at(GENESIS_TIME + height * BLOCK_INTERVAL)
    }

    fn mine_at(&mut self, timestamp: u64) -> Block {
        let height = self.height();
        let txids = std::mem::take(&mut self.mempool);
        for id in &txids {
            let stored = self.txs.get_mut(id).expect("mempool entries are stored");
            stored.height = Some(height);
            let faucet = stored.faucet;
            let tx = stored.tx.clone();
            if !faucet {
                let spent_value: u64 = tx
                    .inputs
                    .iter()
                    .map(|i| self.utxo_set.remove(&i.outpoint).expect("spent outputs exist").value)
                    .sum();
                debug_assert!(spent_value > tx.output_total());
            }
            for vout in 0..tx.outputs.len() {
                let op = OutPoint {
                    txid: *id,
                    vout: vout as u32,
                };
                let utxo = self.mempool_created.remove(&op).expect("created on submit");
                self.utxo_set.insert(op, utxo);
            }
        }
        let block = Block {
            height,
            timestamp,
            txids,
        };
        self.blocks.push(block.clone());
        block
    }

    fn visible(&self, id: &Txid) -> bool {
        match self.visibility {
            Visibility::IncludeMempool => true,
            Visibility::ConfirmedOnly => self.txs[id].height.is_some(),
        }
    }

    pub fn txids_for_addr(&self, addr: &Address) -> Vec<Txid> {
        self.addr_index
            .get(&addr.hash160)
            .map(|ids| ids.iter().filter(|id| self.visible(id)).copied().collect())
            .unwrap_or_default()
    }

    /// Transactions where `addr` pays or is paid, in submission order.
    pub fn get_tx_from_addr(&self, addr: &Address) -> Vec<Transaction> {
        self.txids_for_addr(addr)
            .iter()
            .map(|id| self.txs[id].tx.clone())
            .collect()
    }

    /// The subset of [`get_tx_from_addr`](Self::get_tx_from_addr) where
    /// `addr` owns at least one input.
    pub fn spends_from_addr(&self, addr: &Address) -> Vec<Transaction> {
        self.txids_for_addr(addr)
            .iter()
            .map(|id| &self.txs[id])
            .filter(|s| !s.faucet && self.input_owner_index(&s.tx, addr).is_some())
            .map(|s| s.tx.clone())
            .collect()
    }

    /// First input of `tx` whose spent output is locked to `addr`.
    pub fn input_owner_index(&self, tx: &Transaction, addr: &Address) -> Option<usize> {
        tx.inputs.iter().position(|i| {
            self.prev_output(&i.outpoint)
                .and_then(|o| p2pkh_hash(&o.script_pubkey))
                .is_some_and(|h| h == addr.hash160)
        })
    }

    pub fn utxos(&self, addr: &Address) -> Vec<(OutPoint, u64)> {
        self.addr_utxos
            .get(&addr.hash160)
            .map(|set| {
                set.iter()
                    .filter_map(|op| self.spendable(op).map(|u| (*op, u.value)))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.utxos(addr).iter().map(|(_, v)| v).sum()
    }

    /// Feature rows for mined, non-faucet transactions.
    pub fn export_corpus(&self) -> Vec<CorpusRow> {
        let mut rows = Vec::new();
        for block in &self.blocks {
            for id in &block.txids {
                let s = &self.txs[id];
                if s.faucet {
                    continue;
                }
                rows.push(CorpusRow {
                    txid: id.to_string(),
                    block_height: block.height,
                    timestamp: block.timestamp,
                    is_coinbase: false,
                    input_cnt: s.tx.inputs.len() as u32,
                    output_cnt: s.tx.outputs.len() as u32,
                    inputs_amount: s.input_total,
                    outputs_amount: s.tx.output_total(),
                    fee: s.fee(),
                });
            }
        }
        rows
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FILE_VERSION.to_le_bytes());
        out.push(match self.network() {
            Network::Mainnet => 0,
            Network::Testnet => 1,
        });
        out.extend_from_slice(&self.faucet_counter.to_le_bytes());
        let write_tx = |out: &mut Vec<u8>, id: &Txid| {
            let s = &self.txs[id];
            out.push(s.faucet as u8);
            let raw = s.tx.serialize();
            write_compact_size(out, raw.len() as u64);
            out.extend_from_slice(&raw);
        };
        write_compact_size(&mut out, self.blocks.len() as u64);
        for block in &self.blocks {
            out.extend_from_slice(&block.height.to_le_bytes());
            out.extend_from_slice(&block.timestamp.to_le_bytes());
            write_compact_size(&mut out, block.txids.len() as u64);
            for id in &block.txids {
                write_tx(&mut out, id);
            }
        }
        write_compact_size(&mut out, self.mempool.len() as u64);
        for id in &self.mempool {
            write_tx(&mut out, id);
        }
        let check = sha256d(&out);
        out.extend_from_slice(&check);
        out
    }

    /// Rebuilds the state by replaying every stored transaction through
    /// full validation.
    pub fn from_bytes(bytes: &[u8]) -> Result<ChainState, ChainError> {
        let corrupt = |m: &str| ChainError::CorruptFile(m.to_string());
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic or truncated"));
        }
        let (body, check) = bytes.split_at(bytes.len() - 32);
        if sha256d(body) != check {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader::new(&body[4..]);
        if r.u32_le() != Some(FILE_VERSION) {
            return Err(corrupt("unsupported version"));
        }
        let network = match r.u8() {
            Some(0) => Network::Mainnet,
            Some(1) => Network::Testnet,
            _ => return Err(corrupt("bad network tag")),
        };
        let faucet_counter = r.u64_le().ok_or_else(|| corrupt("truncated header"))?;
        let mut chain = ChainState::new(network);

        let n_blocks = r.compact_size().ok_or_else(|| corrupt("truncated block count"))?;
        for expected_height in 0..n_blocks {
            let height = r.u64_le().ok_or_else(|| corrupt("truncated block"))?;
            let timestamp = r.u64_le().ok_or_else(|| corrupt("truncated block"))?;
            if height != expected_height {
                return Err(corrupt("non-consecutive block heights"));
            }
            let n_tx = r.compact_size().ok_or_else(|| corrupt("truncated block"))?;
            for _ in 0..n_tx {
                chain.replay_tx(&mut r)?;
            }
            chain.mine_at(timestamp);
        }
        let n_pool = r.compact_size().ok_or_else(|| corrupt("truncated mempool"))?;
        for _ in 0..n_pool {
            chain.replay_tx(&mut r)?;
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        chain.faucet_counter = faucet_counter;
        Ok(chain)
    }

    fn replay_tx(&mut self, r: &mut Reader<'_>) -> Result<(), ChainError> {
        let corrupt = |m: String| ChainError::CorruptFile(m);
        let faucet = match r.u8() {
            Some(0) => false,
            Some(1) => true,
            _ => return Err(corrupt("bad transaction flag".into())),
        };
        let len = r
            .compact_size()
            .ok_or_else(|| corrupt("truncated transaction".into()))? as usize;
        let raw = r.take(len).ok_or_else(|| corrupt("truncated transaction".into()))?;
        let tx = Transaction::deserialize(raw).map_err(|e| corrupt(e.to_string()))?;
        if faucet {
            let well_formed = tx.inputs.len() == 1
                && tx.inputs[0].outpoint.is_null()
                && tx.outputs.len() == 1
                && tx.outputs[0].value > 0
                && !self.txs.contains_key(&tx.txid());
            if !well_formed {
                return Err(corrupt("malformed faucet transaction".into()));
            }
            self.insert(tx, true, 0);
        } else {
            self.submit_tx(tx)
                .map_err(|e| corrupt(format!("replay rejected: {e}")))?;
        }
        Ok(())
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), ChainError> {
        let io = |e: std::io::Error| ChainError::Io(e.to_string());
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.to_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<ChainState, ChainError> {
        let bytes = fs::read(path).map_err(|e| ChainError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}
