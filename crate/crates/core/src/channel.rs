//! Protocol orchestration.
//!
//! Negotiation: Alice spends two of her own outputs with a kleptographic
//! signature pair, which leaks her key to Bob alone. Both sides then hold
//! `Esk_AB = (sk_Alice, SHA256(ECDH x))`.
//!
//! Transport: the message is framed, cut into 32-byte segments and whitened
//! with an index-keyed keystream. Segment `i` becomes the ECDSA nonce of an
//! input signed by the hardened child at index `base + i`. The receiver
//! walks the same indices, finds each child address's spend on chain and
//! solves the signature for its nonce.

use rand_core::RngCore;
use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::chain::{ChainError, ChainState};
use crate::crypto::{
    ecdh_chaincode, ecdsa_sign_with_nonce, keypair_from_rng, klepto_extract, klepto_sign_pair, scalar_from_bytes,
    scalar_to_bytes, subliminal_extract_nonce, CryptoError, KeyPair, Point, Scalar, Secp256k1,
};
use crate::hd::{addr_from_pk, addr_from_sk, child_at, Address, ExtendedPrivateKey, HdError};
use crate::masquerade::{sample_with_rng, MasqueradeError, ModelBundle, TxFeatureRecord};
use crate::tx::{
    attach_signatures, build_raw_tx, extract_signatures, p2pkh_script, sighash_all, OutPoint, Transaction, TxError,
    Txid,
};

/// Bytes carried per signed input.
pub const SEGMENT_LEN: usize = 32;
/// Length prefix at the head of every frame.
pub const LENGTH_PREFIX: usize = 4;
/// Resamples allowed when the last transaction must fit the remaining
/// segments before the input count is clamped.
const FIT_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Hd(#[from] HdError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Masquerade(#[from] MasqueradeError),
    #[error("fewer than two spends from the sender address")]
    NegotiationNotFound,
    #[error("funding outpoint {0} is not spendable by the sender")]
    FundingNotOwned(OutPoint),
    #[error("segment at index {0} is not a valid nonce")]
    SegmentUnencodable(u32),
    #[error("frame announces {expected} bytes but only {available} arrived")]
    FrameCorrupt { expected: usize, available: usize },
    #[error("message of {0} bytes exceeds the frame limit")]
    MessageTooLong(usize),
    #[error("session role does not allow this operation")]
    WrongRole,
    #[error("interrupted after index {completed_index}: {source}")]
    Interrupted {
        /// First index not yet carried by a submitted transaction.
        completed_index: u32,
        txids: Vec<Txid>,
        source: Box<ChannelError>,
    },
}

impl ChannelError {
    /// Innermost error variant name, for diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            ChannelError::Chain(e) => match e {
                ChainError::DoubleSpend(_) => "DoubleSpend",
                ChainError::BadSignature(_) => "BadSignature",
                ChainError::UnknownInput(_) => "UnknownInput",
                ChainError::FeeNonPositive(_) => "FeeNonPositive",
                ChainError::Malformed(_) => "MalformedTransaction",
                ChainError::CorruptFile(_) => "CorruptFile",
                ChainError::Io(_) => "IoError",
            },
            ChannelError::Crypto(e) => match e {
                CryptoError::NonceYieldsZero => "NonceYieldsZero",
                CryptoError::DegenerateNonce => "DegenerateNonce",
                CryptoError::ExtractionFailed => "ExtractionFailed",
                CryptoError::InvalidSignature => "InvalidSignature",
                CryptoError::IdentityPoint => "IdentityPoint",
                CryptoError::InvalidScalar => "InvalidScalar",
                CryptoError::InvalidPoint => "InvalidPoint",
            },
            ChannelError::Hd(_) => "DerivationError",
            ChannelError::Tx(e) => match e {
                TxError::FeeNonPositive(_) => "FeeNonPositive",
                TxError::ArityMismatch { .. } => "ArityMismatch",
                TxError::MalformedScriptSig(_) => "MalformedScriptSig",
                _ => "TransactionError",
            },
            ChannelError::Masquerade(e) => match e {
                MasqueradeError::ModelMismatch(..) => "ModelMismatch",
                MasqueradeError::InsufficientData(_) => "InsufficientData",
                _ => "MasqueradeError",
            },
            ChannelError::NegotiationNotFound => "NegotiationNotFound",
            ChannelError::FundingNotOwned(_) => "FundingNotOwned",
            ChannelError::SegmentUnencodable(_) => "SegmentUnencodable",
            ChannelError::FrameCorrupt { .. } => "FrameCorrupt",
            ChannelError::MessageTooLong(_) => "MessageTooLong",
            ChannelError::WrongRole => "WrongRole",
            ChannelError::Interrupted { source, .. } => source.class(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegotiationResult {
    pub esk_ab: ExtendedPrivateKey,
    pub txid1: Txid,
    pub txid2: Txid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionState {
    pub esk_ab: ExtendedPrivateKey,
    /// Next unused derivation index.
    pub index_last: u32,
    pub role: Role,
}

impl SessionState {
    pub fn new(esk_ab: ExtendedPrivateKey, role: Role) -> Self {
        SessionState {
            esk_ab,
            index_last: 0,
            role,
        }
    }
}

/// Source of per-transaction parameters for covert and negotiation traffic.
pub trait FeatureSource {
    /// Features of the next covert transaction, with at most `max_inputs`
    /// inputs, an input amount of at least one satoshi per input and an
    /// output amount of at least one satoshi per output.
    fn next_features(&mut self, max_inputs: u32) -> Result<TxFeatureRecord, ChannelError>;

    /// Fee for a transaction of the given shape spending `amount`.
    fn fee_for(&mut self, input_cnt: u32, output_cnt: u32, amount: u64) -> Result<u64, ChannelError>;
}

fn fits(r: &TxFeatureRecord) -> bool {
    r.inputs_amount >= r.input_cnt as u64 && r.outputs_amount >= r.output_cnt as u64
}

/// Draws parameters from a trained model.
#[derive(Debug, Clone)]
pub struct Masquerader<'a, R: RngCore> {
    pub bundle: &'a ModelBundle,
    pub rng: R,
    /// Samples whose fee came from a nearest-interval fallback.
    pub fallbacks: usize,
}

impl<'a, R: RngCore> Masquerader<'a, R> {
    pub fn new(bundle: &'a ModelBundle, rng: R) -> Self {
        Masquerader {
            bundle,
            rng,
            fallbacks: 0,
        }
    }
}

impl<R: RngCore> FeatureSource for Masquerader<'_, R> {
    /// Resamples until the input count fits; after the attempt limit the
    /// last draw's input count is clamped and its fee redrawn for the new
    /// cell.
    fn next_features(&mut self, max_inputs: u32) -> Result<TxFeatureRecord, ChannelError> {
        let max_inputs = max_inputs.max(1);
        let mut last = None;
        for _ in 0..FIT_ATTEMPTS {
            let s = sample_with_rng(&self.bundle.synth, &self.bundle.fees, &mut self.rng)?;
            if s.fallback {
                self.fallbacks += 1;
            }
            if s.record.input_cnt <= max_inputs && fits(&s.record) {
                return Ok(s.record);
            }
            last = Some(s.record);
        }
        let r = last.expect("at least one attempt");
        let i = r.input_cnt.min(max_inputs);
        let fee = self.fee_for(i, r.output_cnt, r.inputs_amount)?;
        let rec = TxFeatureRecord::new(i, r.output_cnt, r.inputs_amount, fee)?;
        if !fits(&rec) {
            return Err(MasqueradeError::ModelMismatch(i, r.output_cnt).into());
        }
        Ok(rec)
    }

    fn fee_for(&mut self, input_cnt: u32, output_cnt: u32, amount: u64) -> Result<u64, ChannelError> {
        let (bucket, fallback) = self.bundle.fees.lookup(input_cnt, output_cnt, amount)?;
        if fallback {
            self.fallbacks += 1;
        }
        for _ in 0..100 {
            let fee = bucket.pmf.sample(&mut self.rng);
            if fee < amount {
                return Ok(fee);
            }
        }
        Err(MasqueradeError::ModelMismatch(input_cnt, output_cnt).into())
    }
}

/// The same shape for every transaction; for tests and model-less runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedFeatures {
    pub input_cnt: u32,
    pub output_cnt: u32,
    pub inputs_amount: u64,
    pub fee: u64,
}

impl Default for FixedFeatures {
    fn default() -> Self {
        FixedFeatures {
            input_cnt: 1,
            output_cnt: 2,
            inputs_amount: 250_000,
            fee: 2_260,
        }
    }
}

impl FeatureSource for FixedFeatures {
    fn next_features(&mut self, max_inputs: u32) -> Result<TxFeatureRecord, ChannelError> {
        let i = self.input_cnt.min(max_inputs.max(1));
        Ok(TxFeatureRecord::new(i, self.output_cnt, self.inputs_amount, self.fee)?)
    }

    fn fee_for(&mut self, _: u32, _: u32, amount: u64) -> Result<u64, ChannelError> {
        if self.fee >= amount {
            return Err(TxError::FeeNonPositive(amount as i128 - self.fee as i128).into());
        }
        Ok(self.fee)
    }
}

/// Spends `funding[0]` to Charlie and `funding[1]` to Dave with a
/// kleptographic signature pair, then returns the shared extended key.
///
/// Both transactions are validated before either is submitted.
#[allow(clippy::too_many_arguments)]
pub fn negotiate_send<R: RngCore + ?Sized>(
    sk_a: &Scalar,
    pk_b: &Point,
    addr_c: &Address,
    addr_d: &Address,
    chain: &mut ChainState,
    funding: [OutPoint; 2],
    fees: [u64; 2],
    rng: &mut R,
) -> Result<NegotiationResult, ChannelError> {
    let alice = KeyPair::<Secp256k1>::from_secret(*sk_a)?;
    let addr_a = addr_from_pk(&alice.pk, chain.network());
    if funding[0] == funding[1] {
        return Err(ChainError::DoubleSpend(funding[1]).into());
    }
    let mut raws = Vec::with_capacity(2);
    let mut digests = [[0u8; 32]; 2];
    for (k, (op, to)) in funding.iter().zip([addr_c, addr_d]).enumerate() {
        let utxo = chain.utxo(op).ok_or(ChainError::UnknownInput(*op))?;
        if utxo.script_pubkey != p2pkh_script(&addr_a.hash160) {
            return Err(ChannelError::FundingNotOwned(*op));
        }
        let value = utxo.value;
        let send = value
            .checked_sub(fees[k])
            .filter(|v| *v > 0 && fees[k] > 0)
            .ok_or_else(|| TxError::FeeNonPositive(value as i128 - fees[k] as i128))?;
        let raw = build_raw_tx(&[(*op, value)], &[(*to, send)])?;
        digests[k] = sighash_all(&raw, 0, &utxo.script_pubkey)?;
        raws.push(raw);
    }
    let (sig1, sig2) = klepto_sign_pair::<Secp256k1, R>(sk_a, pk_b, &digests[0], &digests[1], rng)?;
    let tx1 = attach_signatures(&raws[0], &[(sig1, alice.pk)])?;
    let tx2 = attach_signatures(&raws[1], &[(sig2, alice.pk)])?;
    chain.check_tx(&tx1)?;
    chain.check_tx(&tx2)?;
    let txid1 = chain.submit_tx(tx1)?;
    let txid2 = chain.submit_tx(tx2)?;
    let chaincode = ecdh_chaincode::<Secp256k1>(sk_a, pk_b)?;
    Ok(NegotiationResult {
        esk_ab: ExtendedPrivateKey::new(*sk_a, chaincode)?,
        txid1,
        txid2,
    })
}

/// Alice's signature on `tx` and the digest it signs.
fn owned_signature(
    chain: &ChainState,
    tx: &Transaction,
    owner: &Address,
) -> Result<(crate::crypto::EcdsaSignature, [u8; 32]), ChannelError> {
    let idx = chain
        .input_owner_index(tx, owner)
        .ok_or(ChannelError::NegotiationNotFound)?;
    let (sig, _) = extract_signatures(tx)?[idx];
    let prev = chain
        .prev_output(&tx.inputs[idx].outpoint)
        .ok_or(ChainError::UnknownInput(tx.inputs[idx].outpoint))?;
    let digest = sighash_all(tx, idx, &prev.script_pubkey)?;
    Ok((sig, digest))
}

/// Finds Alice's two spends and extracts her key.
///
/// Ordering rule: spends are taken in submission order. Each pair `(a, b)`
/// with `a` before `b` is tried first as (first, second) signature and then
/// swapped; the first pair that yields a key matching `pk_a` wins.
pub fn negotiate_recv(sk_b: &Scalar, pk_a: &Point, chain: &ChainState) -> Result<NegotiationResult, ChannelError> {
    let addr_a = addr_from_pk(pk_a, chain.network());
    let spends = chain.spends_from_addr(&addr_a);
    if spends.len() < 2 {
        return Err(ChannelError::NegotiationNotFound);
    }
    let signed: Vec<_> = spends
        .iter()
        .map(|tx| owned_signature(chain, tx, &addr_a).map(|s| (tx.txid(), s)))
        .collect::<Result<_, _>>()?;
    for a in 0..signed.len() {
        for b in a + 1..signed.len() {
            for (first, second) in [(a, b), (b, a)] {
                let (id1, (sig1, _)) = &signed[first];
                let (id2, (sig2, digest2)) = &signed[second];
                match klepto_extract::<Secp256k1>(sk_b, pk_a, sig1, sig2, digest2) {
                    Ok(sk_a) => {
                        let chaincode = ecdh_chaincode::<Secp256k1>(sk_b, pk_a)?;
                        return Ok(NegotiationResult {
                            esk_ab: ExtendedPrivateKey::new(sk_a, chaincode)?,
                            txid1: *id1,
                            txid2: *id2,
                        });
                    }
                    Err(CryptoError::ExtractionFailed) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Err(CryptoError::ExtractionFailed.into())
}

/// `SHA512(ser256(sk) || chaincode || ser32(index))[..32]`
pub fn keystream(esk: &ExtendedPrivateKey, index: u32) -> [u8; 32] {
    let mut h = Sha512::new();
    h.update(scalar_to_bytes(&esk.sk));
    h.update(esk.chaincode);
    h.update(index.to_be_bytes());
    let out = h.finalize();
    out[..32].try_into().unwrap()
}

fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    std::array::from_fn(|k| a[k] ^ b[k])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSegments {
    pub base_index: u32,
    /// Whitened segments, each a valid nonzero scalar.
    pub segments: Vec<[u8; 32]>,
}

impl MessageSegments {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Number of segments a message of `len` bytes occupies.
pub fn segment_count(len: usize) -> usize {
    (LENGTH_PREFIX + len).div_ceil(SEGMENT_LEN)
}

pub fn msg_encode(esk: &ExtendedPrivateKey, message: &[u8], base_index: u32) -> Result<MessageSegments, ChannelError> {
    let len = u32::try_from(message.len()).map_err(|_| ChannelError::MessageTooLong(message.len()))?;
    let count = segment_count(message.len());
    if base_index as u64 + count as u64 > crate::hd::HARDENED_OFFSET as u64 {
        return Err(HdError::IndexOutOfRange(base_index.saturating_add(count as u32)).into());
    }
    let mut frame = Vec::with_capacity(count * SEGMENT_LEN);
    frame.extend_from_slice(&len.to_be_bytes());
    frame.extend_from_slice(message);
    frame.resize(count * SEGMENT_LEN, 0);
    let segments = frame
        .chunks_exact(SEGMENT_LEN)
        .enumerate()
        .map(|(k, block)| {
            let index = base_index + k as u32;
            let seg = xor32(block.try_into().unwrap(), &keystream(esk, index));
            scalar_from_bytes(&seg)
                .map(|_| seg)
                .map_err(|_| ChannelError::SegmentUnencodable(index))
        })
        .collect::<Result<_, _>>()?;
    Ok(MessageSegments { base_index, segments })
}

/// Un-whitens segments and strips the frame. Missing segments or nonzero
/// padding give `FrameCorrupt`.
pub fn msg_decode(esk: &ExtendedPrivateKey, segments: &MessageSegments) -> Result<Vec<u8>, ChannelError> {
    let mut frame = Vec::with_capacity(segments.len() * SEGMENT_LEN);
    for (k, seg) in segments.segments.iter().enumerate() {
        frame.extend_from_slice(&xor32(seg, &keystream(esk, segments.base_index + k as u32)));
    }
    if frame.len() < LENGTH_PREFIX {
        return Err(ChannelError::FrameCorrupt {
            expected: LENGTH_PREFIX,
            available: frame.len(),
        });
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    let available = frame.len() - LENGTH_PREFIX;
    if len > available || segment_count(len) != segments.len() {
        return Err(ChannelError::FrameCorrupt {
            expected: len,
            available,
        });
    }
    if frame[LENGTH_PREFIX + len..].iter().any(|b| *b != 0) {
        return Err(ChannelError::FrameCorrupt {
            expected: len,
            available,
        });
    }
    frame.truncate(LENGTH_PREFIX + len);
    frame.drain(..LENGTH_PREFIX);
    Ok(frame)
}

/// `total` split into `parts` nearly equal shares, remainder on the first.
pub fn equal_split(total: u64, parts: u32) -> Vec<u64> {
    let parts = parts.max(1) as u64;
    let base = total / parts;
    let mut v = vec![base; parts as usize];
    v[0] += total % parts;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FundingPolicy {
    /// Faucet each derived address; leave everything in the mempool.
    #[default]
    Faucet,
    /// As `Faucet`, and mine a block after every covert transaction.
    FaucetAndMine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendReport {
    pub txids: Vec<Txid>,
    pub new_index: u32,
    pub segments: usize,
    /// Input count of every covert transaction in order.
    pub inputs_per_tx: Vec<u32>,
}

fn send_one<R: RngCore + ?Sized>(
    session: &SessionState,
    segs: &[[u8; 32]],
    first_index: u32,
    rec: &TxFeatureRecord,
    chain: &mut ChainState,
    rng: &mut R,
) -> Result<Txid, ChannelError> {
    let network = chain.network();
    let amounts = equal_split(rec.inputs_amount, rec.input_cnt);
    let mut signers = Vec::with_capacity(segs.len());
    let mut spends = Vec::with_capacity(segs.len());
    for (k, amount) in amounts.iter().enumerate() {
        let child = child_at(&session.esk_ab, first_index + k as u32)?;
        let addr = addr_from_sk(&child.sk, network);
        let op = chain.faucet_fund(&addr, *amount)?;
        spends.push((op, *amount));
        signers.push((child, addr));
    }
    let recipients: Vec<(Address, u64)> = equal_split(rec.outputs_amount, rec.output_cnt)
        .into_iter()
        .map(|v| {
            let kp: KeyPair = keypair_from_rng(rng);
            (addr_from_pk(&kp.pk, network), v)
        })
        .collect();
    let raw = build_raw_tx(&spends, &recipients)?;
    let mut sigs = Vec::with_capacity(segs.len());
    for (k, ((child, addr), seg)) in signers.iter().zip(segs).enumerate() {
        let digest = sighash_all(&raw, k, &p2pkh_script(&addr.hash160))?;
        let nonce = scalar_from_bytes(seg).map_err(|_| ChannelError::SegmentUnencodable(first_index + k as u32))?;
        let sig = ecdsa_sign_with_nonce::<Secp256k1>(&child.sk, &digest, &nonce)?;
        sigs.push((sig, child.public_key()));
    }
    let tx = attach_signatures(&raw, &sigs)?;
    Ok(chain.submit_tx(tx)?)
}

/// Sends `message` starting at `session.index_last`.
///
/// Each covert transaction takes its shape from `features`; an input count
/// of `c` consumes the next `c` segments. On failure the transactions
/// already on chain stay there, `session.index_last` points past them and
/// the error is `Interrupted`.
pub fn send_message<R: RngCore + ?Sized>(
    session: &mut SessionState,
    message: &[u8],
    chain: &mut ChainState,
    features: &mut dyn FeatureSource,
    policy: FundingPolicy,
    rng: &mut R,
) -> Result<SendReport, ChannelError> {
    if session.role != Role::Sender {
        return Err(ChannelError::WrongRole);
    }
    let encoded = msg_encode(&session.esk_ab, message, session.index_last)?;
    let mut report = SendReport {
        txids: Vec::new(),
        new_index: session.index_last,
        segments: encoded.len(),
        inputs_per_tx: Vec::new(),
    };
    let mut pos = 0usize;
    while pos < encoded.len() {
        let remaining = (encoded.len() - pos) as u32;
        let first_index = encoded.base_index + pos as u32;
        let attempt = features.next_features(remaining).and_then(|rec| {
            let c = rec.input_cnt as usize;
            send_one(session, &encoded.segments[pos..pos + c], first_index, &rec, chain, rng).map(|id| (id, c))
        });
        match attempt {
            Ok((txid, c)) => {
                pos += c;
                session.index_last = first_index + c as u32;
                report.txids.push(txid);
                report.inputs_per_tx.push(c as u32);
                report.new_index = session.index_last;
                if policy == FundingPolicy::FaucetAndMine {
                    chain.mine_block();
                }
            }
            Err(e) => {
                return Err(ChannelError::Interrupted {
                    completed_index: session.index_last,
                    txids: report.txids,
                    source: Box::new(e),
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub message: Vec<u8>,
    pub new_index: u32,
    /// Segments read; zero when nothing was waiting.
    pub segments: usize,
}

/// Nonce carried by the spend from `index`'s derived address, or `None`
/// when that address has not spent anything yet.
fn read_segment(session: &SessionState, chain: &ChainState, index: u32) -> Result<Option<[u8; 32]>, ChannelError> {
    let child = child_at(&session.esk_ab, index)?;
    let addr = addr_from_sk(&child.sk, chain.network());
    let Some(tx) = chain.spends_from_addr(&addr).into_iter().next() else {
        return Ok(None);
    };
    let k = chain
        .input_owner_index(&tx, &addr)
        .expect("spends_from_addr filters on ownership");
    let (sig, _) = extract_signatures(&tx)?[k];
    let digest = sighash_all(&tx, k, &p2pkh_script(&addr.hash160))?;
    let nonce = subliminal_extract_nonce::<Secp256k1>(&child.sk, &digest, &sig)?;
    Ok(Some(xor32(
        &scalar_to_bytes(&nonce),
        &keystream(&session.esk_ab, index),
    )))
}

/// Reads one message starting at `session.index_last`.
///
/// Scanning stops at the end of the announced frame or at the first index
/// whose address has no spend. Nothing found leaves the index unchanged; a
/// frame cut short is `FrameCorrupt` and also leaves it unchanged.
pub fn receive_message(session: &mut SessionState, chain: &ChainState) -> Result<ReceiveOutcome, ChannelError> {
    if session.role != Role::Receiver {
        return Err(ChannelError::WrongRole);
    }
    let base = session.index_last;
    let mut plain: Vec<u8> = Vec::new();
    let mut needed: Option<usize> = None;
    let mut index = base;
    while needed.is_none_or(|n| plain.len() < n * SEGMENT_LEN) {
        let Some(block) = read_segment(session, chain, index)? else {
            break;
        };
        plain.extend_from_slice(&block);
        index += 1;
        if needed.is_none() {
            let len = u32::from_be_bytes(plain[..4].try_into().unwrap()) as usize;
            needed = Some(segment_count(len));
        }
    }
    if plain.is_empty() {
        return Ok(ReceiveOutcome {
            message: Vec::new(),
            new_index: base,
            segments: 0,
        });
    }
    // Re-whiten so decoding shares one code path with msg_decode.
    let segments: Vec<[u8; 32]> = plain
        .chunks_exact(SEGMENT_LEN)
        .enumerate()
        .map(|(k, b)| xor32(b.try_into().unwrap(), &keystream(&session.esk_ab, base + k as u32)))
        .collect();
    let count = segments.len();
    let message = msg_decode(
        &session.esk_ab,
        &MessageSegments {
            base_index: base,
            segments,
        },
    )?;
    session.index_last = index;
    Ok(ReceiveOutcome {
        message,
        new_index: index,
        segments: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keypair_generate, HashStream};
    use crate::hd::Network;

    fn esk() -> ExtendedPrivateKey {
        let kp: KeyPair = keypair_generate(Some([7; 32]));
        ExtendedPrivateKey::new(kp.sk, [3; 32]).unwrap()
    }

    #[test]
    fn framing_sizes() {
        assert_eq!(msg_encode(&esk(), b"", 0).unwrap().len(), 1);
        assert_eq!(msg_encode(&esk(), &[0u8; 28], 0).unwrap().len(), 1);
        assert_eq!(msg_encode(&esk(), &[0u8; 29], 0).unwrap().len(), 2);
        assert_eq!(segment_count(10_240), 321);
    }

    #[test]
    fn encode_decode() {
        let e = esk();
        let segs = msg_encode(&e, b"hello", 5).unwrap();
        assert_eq!(msg_decode(&e, &segs).unwrap(), b"hello");
        let mut cut = segs.clone();
        cut.segments.clear();
        assert!(matches!(msg_decode(&e, &cut), Err(ChannelError::FrameCorrupt { .. })));
    }

    #[test]
    fn split_rule() {
        assert_eq!(equal_split(10, 3), vec![4, 3, 3]);
        assert_eq!(equal_split(9, 1), vec![9]);
    }

    #[test]
    fn wrong_role() {
        let mut chain = ChainState::new(Network::Testnet);
        let mut s = SessionState::new(esk(), Role::Receiver);
        let mut f = FixedFeatures::default();
        assert_eq!(
            send_message(
                &mut s,
                b"x",
                &mut chain,
                &mut f,
                FundingPolicy::Faucet,
                &mut HashStream::from_u64(0)
            ),
            Err(ChannelError::WrongRole)
        );
    }

    #[test]
    fn nothing_to_receive() {
        let chain = ChainState::new(Network::Testnet);
        let mut s = SessionState::new(esk(), Role::Receiver);
        s.index_last = 4;
        let out = receive_message(&mut s, &chain).unwrap();
        assert_eq!(out.segments, 0);
        assert_eq!(s.index_last, 4);
    }
}
