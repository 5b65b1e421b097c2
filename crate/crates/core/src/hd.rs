//! Hierarchical deterministic keys, P2PKH addresses and WIF.
//!
//! Derivation follows BIP32 for private parents. The channel only uses
//! hardened children; normal derivation exists for the published test
//! vectors.

use std::fmt;
use std::str::FromStr;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha512;
use thiserror::Error;

use crate::crypto::{hash::hash160, point_to_bytes, Curve, Point, Scalar, Secp256k1};

type HmacSha512 = Hmac<Sha512>;

pub const HARDENED_OFFSET: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HdError {
    #[error("seed must be 16 to 64 bytes, got {0}")]
    InvalidSeedLength(usize),
    #[error("seed yields an invalid master scalar")]
    InvalidSeedScalar,
    #[error("child derivation produced an invalid key")]
    DerivationDegenerate,
    #[error("index {0} is out of the 31-bit range")]
    IndexOutOfRange(u32),
    #[error("hardened index required")]
    NotHardened,
    #[error("base58check checksum mismatch")]
    ChecksumMismatch,
    #[error("unknown version prefix {0:#04x}")]
    BadPrefix(u8),
    #[error("malformed encoding: {0}")]
    BadEncoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    Mainnet,
    Testnet,
}

impl Network {
    pub fn p2pkh_version(self) -> u8 {
        match self {
            Network::Mainnet => 0x00,
            Network::Testnet => 0x6f,
        }
    }

    pub fn wif_prefix(self) -> u8 {
        match self {
            Network::Mainnet => 0x80,
            Network::Testnet => 0xef,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ExtendedPrivateKey {
    pub sk: Scalar,
    pub chaincode: [u8; 32],
}

impl fmt::Debug for ExtendedPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtendedPrivateKey")
            .field("chaincode", &hex::encode(self.chaincode))
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DerivationIndex {
    index: u32,
    hardened: bool,
}

impl DerivationIndex {
    pub fn hardened(index: u32) -> Result<Self, HdError> {
        if index >= HARDENED_OFFSET {
            return Err(HdError::IndexOutOfRange(index));
        }
        Ok(DerivationIndex { index, hardened: true })
    }

    pub fn normal(index: u32) -> Result<Self, HdError> {
        if index >= HARDENED_OFFSET {
            return Err(HdError::IndexOutOfRange(index));
        }
        Ok(DerivationIndex { index, hardened: false })
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn is_hardened(&self) -> bool {
        self.hardened
    }

    /// The 32-bit value fed to the derivation HMAC.
    pub fn raw(&self) -> u32 {
        if self.hardened {
            self.index | HARDENED_OFFSET
        } else {
            self.index
        }
    }
}

impl ExtendedPrivateKey {
    pub fn new(sk: Scalar, chaincode: [u8; 32]) -> Result<Self, HdError> {
        if bool::from(sk.is_zero()) {
            return Err(HdError::InvalidSeedScalar);
        }
        Ok(ExtendedPrivateKey { sk, chaincode })
    }

    pub fn public_key(&self) -> Point {
        Secp256k1::mul_base(&self.sk)
    }
}

fn split_hmac(key: &[u8], data: &[&[u8]]) -> ([u8; 32], [u8; 32]) {
    let mut mac = HmacSha512::new_from_slice(key).expect("any key length");
    for d in data {
        mac.update(d);
    }
    let out = mac.finalize().into_bytes();
    let mut il = [0u8; 32];
    let mut ir = [0u8; 32];
    il.copy_from_slice(&out[..32]);
    ir.copy_from_slice(&out[32..]);
    (il, ir)
}

pub fn master_from_seed(seed: &[u8]) -> Result<ExtendedPrivateKey, HdError> {
    if !(16..=64).contains(&seed.len()) {
        return Err(HdError::InvalidSeedLength(seed.len()));
    }
    let (il, ir) = split_hmac(b"Bitcoin seed", &[seed]);
    let sk = Secp256k1::scalar_from_canonical(&il).ok_or(HdError::InvalidSeedScalar)?;
    ExtendedPrivateKey::new(sk, ir)
}

/// CKDpriv for either kind of index.
pub fn derive_child(esk: &ExtendedPrivateKey, index: DerivationIndex) -> Result<ExtendedPrivateKey, HdError> {
    let raw = index.raw().to_be_bytes();
    let (il, ir) = if index.is_hardened() {
        split_hmac(&esk.chaincode, &[&[0u8], &Secp256k1::scalar_to_bytes(&esk.sk), &raw])
    } else {
        let pk = point_to_bytes(&esk.public_key()).map_err(|_| HdError::DerivationDegenerate)?;
        split_hmac(&esk.chaincode, &[&pk, &raw])
    };
    let tweak = Secp256k1::scalar_from_canonical(&il).ok_or(HdError::DerivationDegenerate)?;
    let child = tweak + esk.sk;
    if bool::from(child.is_zero()) {
        return Err(HdError::DerivationDegenerate);
    }
    Ok(ExtendedPrivateKey {
        sk: child,
        chaincode: ir,
    })
}

pub fn derive_child_hardened(esk: &ExtendedPrivateKey, index: DerivationIndex) -> Result<ExtendedPrivateKey, HdError> {
    if !index.is_hardened() {
        return Err(HdError::NotHardened);
    }
    derive_child(esk, index)
}

/// Hardened child at `index`, the form used for channel identities.
pub fn child_at(esk: &ExtendedPrivateKey, index: u32) -> Result<ExtendedPrivateKey, HdError> {
    derive_child_hardened(esk, DerivationIndex::hardened(index)?)
}

/// P2PKH address of a compressed public key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub network: Network,
    pub hash160: [u8; 20],
}

impl Address {
    pub fn new(network: Network, hash160: [u8; 20]) -> Self {
        Address { network, hash160 }
    }

    pub fn rendered(&self) -> String {
        let mut payload = Vec::with_capacity(21);
        payload.push(self.network.p2pkh_version());
        payload.extend_from_slice(&self.hash160);
        bs58::encode(payload).with_check().into_string()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered())
    }
}

fn decode_check(s: &str) -> Result<Vec<u8>, HdError> {
    bs58::decode(s).with_check(None).into_vec().map_err(|e| match e {
        bs58::decode::Error::InvalidChecksum { .. } => HdError::ChecksumMismatch,
        other => HdError::BadEncoding(other.to_string()),
    })
}

impl FromStr for Address {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self, HdError> {
        let raw = decode_check(s.trim())?;
        if raw.len() != 21 {
            return Err(HdError::BadEncoding(format!("address payload of {} bytes", raw.len())));
        }
        let network = match raw[0] {
            0x00 => Network::Mainnet,
            0x6f => Network::Testnet,
            other => return Err(HdError::BadPrefix(other)),
        };
        let mut h = [0u8; 20];
        h.copy_from_slice(&raw[1..]);
        Ok(Address::new(network, h))
    }
}

pub fn addr_from_pk(pk: &Point, network: Network) -> Address {
    let enc = point_to_bytes(pk).expect("public keys are never the identity");
    Address::new(network, hash160(&enc))
}

pub fn addr_from_sk(sk: &Scalar, network: Network) -> Address {
    addr_from_pk(&Secp256k1::mul_base(sk), network)
}

/// Compressed-key WIF.
pub fn wif_encode(sk: &Scalar, network: Network) -> String {
    let mut payload = Vec::with_capacity(34);
    payload.push(network.wif_prefix());
    payload.extend_from_slice(&Secp256k1::scalar_to_bytes(sk));
    payload.push(0x01);
    bs58::encode(payload).with_check().into_string()
}

pub fn wif_decode(s: &str) -> Result<(Scalar, Network), HdError> {
    let raw = decode_check(s.trim())?;
    let network = match raw.first() {
        Some(0x80) => Network::Mainnet,
        Some(0xef) => Network::Testnet,
        Some(&other) => return Err(HdError::BadPrefix(other)),
        None => return Err(HdError::BadEncoding("empty".into())),
    };
    if raw.len() != 34 || raw[33] != 0x01 {
        return Err(HdError::BadEncoding("expected a compressed-key WIF".into()));
    }
    let bytes: [u8; 32] = raw[1..33].try_into().unwrap();
    let sk =
        crate::crypto::scalar_from_bytes(&bytes).map_err(|_| HdError::BadEncoding("scalar out of range".into()))?;
    Ok((sk, network))
}
