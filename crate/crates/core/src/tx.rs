//! Legacy P2PKH transactions.
//!
//! The wire layout is the pre-SegWit Bitcoin one (little-endian integers,
//! CompactSize counts) with one difference: the signature pushed in
//! `script_sig` is the fixed 64-byte `r || s` form followed by the sighash
//! flag, not DER.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{hash::sha256d, point_from_bytes, point_to_bytes, EcdsaSignature, Point, Secp256k1};
use crate::hd::Address;

pub const SIGHASH_ALL: u8 = 0x01;
pub const DEFAULT_SEQUENCE: u32 = 0xFFFF_FFFF;
pub const TX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("inputs do not exceed outputs (fee {0})")]
    FeeNonPositive(i128),
    #[error("transaction needs at least one input and one output")]
    Empty,
    #[error("output value must be positive")]
    ZeroValue,
    #[error("input index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("expected {expected} signatures, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("malformed script_sig on input {0}")]
    MalformedScriptSig(usize),
    #[error("truncated or malformed transaction bytes")]
    Decode,
}

/// Double-SHA256 of a serialized transaction, kept in internal byte order.
/// Displayed reversed, as block explorers do.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Txid(pub [u8; 32]);

impl fmt::Display for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rev = self.0;
        rev.reverse();
        f.write_str(&hex::encode(rev))
    }
}

impl fmt::Debug for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Txid({self})")
    }
}

impl FromStr for Txid {
    type Err = TxError;

    fn from_str(s: &str) -> Result<Self, TxError> {
        let raw = hex::decode(s.trim()).map_err(|_| TxError::Decode)?;
        let mut arr: [u8; 32] = raw.try_into().map_err(|_| TxError::Decode)?;
        arr.reverse();
        Ok(Txid(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutPoint {
    pub txid: Txid,
    pub vout: u32,
}

impl OutPoint {
    /// Marker outpoint used by faucet inputs.
    pub const NULL: OutPoint = OutPoint {
        txid: Txid([0; 32]),
        vout: u32::MAX,
    };

    pub fn is_null(&self) -> bool {
        *self == Self::NULL
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

impl FromStr for OutPoint {
    type Err = TxError;

    fn from_str(s: &str) -> Result<Self, TxError> {
        let (txid, vout) = s.split_once(':').ok_or(TxError::Decode)?;
        Ok(OutPoint {
            txid: txid.parse()?,
            vout: vout.parse().map_err(|_| TxError::Decode)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInput {
    pub outpoint: OutPoint,
    pub script_sig: Vec<u8>,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutput {
    pub value: u64,
    pub script_pubkey: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub version: u32,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub locktime: u32,
}

/// `OP_DUP OP_HASH160 <20> OP_EQUALVERIFY OP_CHECKSIG`
pub fn p2pkh_script(hash160: &[u8; 20]) -> Vec<u8> {
    let mut s = Vec::with_capacity(25);
    s.extend_from_slice(&[0x76, 0xa9, 0x14]);
    s.extend_from_slice(hash160);
    s.extend_from_slice(&[0x88, 0xac]);
    s
}

pub fn p2pkh_hash(script: &[u8]) -> Option<[u8; 20]> {
    match script {
        [0x76, 0xa9, 0x14, hash @ .., 0x88, 0xac] if hash.len() == 20 => hash.try_into().ok(),
        _ => None,
    }
}

pub fn write_compact_size(out: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xfc => out.push(n as u8),
        0xfd..=0xffff => {
            out.push(0xfd);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xffff_ffff => {
            out.push(0xfe);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            out.push(0xff);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

/// Byte cursor for the little-endian wire formats.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub fn u32_le(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64_le(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    /// Rejects non-minimal encodings so parsing stays bijective.
    pub fn compact_size(&mut self) -> Option<u64> {
        let v = match self.u8()? {
            0xfd => {
                let v = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as u64;
                (v >= 0xfd).then_some(v)?
            }
            0xfe => {
                let v = self.u32_le()? as u64;
                (v > 0xffff).then_some(v)?
            }
            0xff => {
                let v = self.u64_le()?;
                (v > 0xffff_ffff).then_some(v)?
            }
            b => b as u64,
        };
        Some(v)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

impl Transaction {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.inputs.len() * 150 + self.outputs.len() * 34);
        out.extend_from_slice(&self.version.to_le_bytes());
        write_compact_size(&mut out, self.inputs.len() as u64);
        for input in &self.inputs {
            out.extend_from_slice(&input.outpoint.txid.0);
            out.extend_from_slice(&input.outpoint.vout.to_le_bytes());
            write_compact_size(&mut out, input.script_sig.len() as u64);
            out.extend_from_slice(&input.script_sig);
            out.extend_from_slice(&input.sequence.to_le_bytes());
        }
        write_compact_size(&mut out, self.outputs.len() as u64);
        for output in &self.outputs {
            out.extend_from_slice(&output.value.to_le_bytes());
            write_compact_size(&mut out, output.script_pubkey.len() as u64);
            out.extend_from_slice(&output.script_pubkey);
        }
        out.extend_from_slice(&self.locktime.to_le_bytes());
        out
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Transaction, TxError> {
        Self::read_inner(r).ok_or(TxError::Decode)
    }

    fn read_inner(r: &mut Reader<'_>) -> Option<Transaction> {
        let version = r.u32_le()?;
        let n_in = r.compact_size()?;
        // Each input needs at least 41 bytes, which bounds the allocation.
        if n_in > (r.remaining() / 41) as u64 {
            return None;
        }
        let mut inputs = Vec::with_capacity(n_in as usize);
        for _ in 0..n_in {
            let txid = Txid(r.take(32)?.try_into().ok()?);
            let vout = r.u32_le()?;
            let len = r.compact_size()? as usize;
            let script_sig = r.take(len)?.to_vec();
            let sequence = r.u32_le()?;
            inputs.push(TxInput {
                outpoint: OutPoint { txid, vout },
                script_sig,
                sequence,
            });
        }
        let n_out = r.compact_size()?;
        if n_out > (r.remaining() / 9) as u64 {
            return None;
        }
        let mut outputs = Vec::with_capacity(n_out as usize);
        for _ in 0..n_out {
            let value = r.u64_le()?;
            let len = r.compact_size()? as usize;
            let script_pubkey = r.take(len)?.to_vec();
            outputs.push(TxOutput { value, script_pubkey });
        }
        let locktime = r.u32_le()?;
        Some(Transaction {
            version,
            inputs,
            outputs,
            locktime,
        })
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Transaction, TxError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(TxError::Decode);
        }
        Ok(tx)
    }

    pub fn txid(&self) -> Txid {
        Txid(sha256d(&self.serialize()))
    }

    pub fn output_total(&self) -> u64 {
        self.outputs.iter().map(|o| o.value).sum()
    }
}

/// Free function form of [`Transaction::txid`].
pub fn txid(tx: &Transaction) -> Txid {
    tx.txid()
}

/// Unsigned transaction spending `spends` into `recipients`, in order.
pub fn build_raw_tx(spends: &[(OutPoint, u64)], recipients: &[(Address, u64)]) -> Result<Transaction, TxError> {
    if spends.is_empty() || recipients.is_empty() {
        return Err(TxError::Empty);
    }
    if recipients.iter().any(|(_, v)| *v == 0) {
        return Err(TxError::ZeroValue);
    }
    let total_in: i128 = spends.iter().map(|(_, v)| *v as i128).sum();
    let total_out: i128 = recipients.iter().map(|(_, v)| *v as i128).sum();
    if total_in <= total_out {
        return Err(TxError::FeeNonPositive(total_in - total_out));
    }
    Ok(Transaction {
        version: TX_VERSION,
        inputs: spends
            .iter()
            .map(|(op, _)| TxInput {
                outpoint: *op,
                script_sig: Vec::new(),
                sequence: DEFAULT_SEQUENCE,
            })
            .collect(),
        outputs: recipients
            .iter()
            .map(|(addr, v)| TxOutput {
                value: *v,
                script_pubkey: p2pkh_script(&addr.hash160),
            })
            .collect(),
        locktime: 0,
    })
}

/// Legacy SIGHASH_ALL digest for one input.
pub fn sighash_all(tx: &Transaction, input_index: usize, prev_script_pubkey: &[u8]) -> Result<[u8; 32], TxError> {
    if input_index >= tx.inputs.len() {
        return Err(TxError::IndexOutOfRange(input_index));
    }
    let mut copy = tx.clone();
    for (i, input) in copy.inputs.iter_mut().enumerate() {
        input.script_sig = if i == input_index {
            prev_script_pubkey.to_vec()
        } else {
            Vec::new()
        };
    }
    let mut bytes = copy.serialize();
    bytes.extend_from_slice(&(SIGHASH_ALL as u32).to_le_bytes());
    Ok(sha256d(&bytes))
}

/// `push(r || s || 0x01) push(compressed pk)`
pub fn build_script_sig(sig: &EcdsaSignature<Secp256k1>, pk: &Point) -> Vec<u8> {
    let pk = point_to_bytes(pk).expect("public keys are never the identity");
    let mut s = Vec::with_capacity(100);
    s.push(65);
    s.extend_from_slice(&sig.to_bytes());
    s.push(SIGHASH_ALL);
    s.push(33);
    s.extend_from_slice(&pk);
    s
}

/// Inverse of [`build_script_sig`]; `None` for anything else.
pub fn parse_script_sig(script: &[u8]) -> Option<(EcdsaSignature<Secp256k1>, Point)> {
    if script.len() != 100 || script[0] != 65 || script[65] != SIGHASH_ALL || script[66] != 33 {
        return None;
    }
    let sig = EcdsaSignature::from_bytes(script[1..65].try_into().ok()?).ok()?;
    let pk = point_from_bytes(&script[67..]).ok()?;
    Some((sig, pk))
}

pub fn attach_signatures(
    tx: &Transaction,
    sigs: &[(EcdsaSignature<Secp256k1>, Point)],
) -> Result<Transaction, TxError> {
    if sigs.len() != tx.inputs.len() {
        return Err(TxError::ArityMismatch {
            expected: tx.inputs.len(),
            got: sigs.len(),
        });
    }
    let mut out = tx.clone();
    for (input, (sig, pk)) in out.inputs.iter_mut().zip(sigs) {
        input.script_sig = build_script_sig(sig, pk);
    }
    Ok(out)
}

pub fn extract_signatures(tx: &Transaction) -> Result<Vec<(EcdsaSignature<Secp256k1>, Point)>, TxError> {
    tx.inputs
        .iter()
        .enumerate()
        .map(|(i, input)| parse_script_sig(&input.script_sig).ok_or(TxError::MalformedScriptSig(i)))
        .collect()
}
