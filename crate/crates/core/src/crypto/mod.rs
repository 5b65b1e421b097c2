//! Elliptic-curve primitives: ECDSA with caller-controlled nonces, the
//! kleptographic signature pair, subliminal nonce recovery and ECDH
//! chaincodes.
//!
//! Byte encodings are fixed: scalars are 32-byte big-endian, points 33-byte
//! compressed SEC1, signatures 64-byte `r || s`.

mod curve;
pub mod ecdsa;
pub mod hash;
pub mod klepto;
pub mod rng;
mod secp256k1;
mod toy;

use thiserror::Error;

pub use curve::{Curve, CurveParams};
pub use ecdsa::{
    digest_to_scalar, ecdsa_sign_with_nonce, ecdsa_verify, keypair_from_rng, keypair_generate, random_scalar,
    subliminal_extract_nonce, EcdsaSignature, KeyPair,
};
pub use klepto::{klepto_extract, klepto_sign_pair, klepto_sign_pair_with_nonce};
pub use rng::HashStream;
pub use secp256k1::Secp256k1;
pub use toy::{ToyCurve, ToyPoint, ToyScalar};

/// secp256k1 scalar.
pub type Scalar = <Secp256k1 as Curve>::Scalar;
/// secp256k1 point.
pub type Point = <Secp256k1 as Curve>::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("nonce yields r = 0 or s = 0")]
    NonceYieldsZero,
    #[error("no usable kleptographic nonce within the counter limit")]
    DegenerateNonce,
    #[error("no key candidate matches the sender public key")]
    ExtractionFailed,
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("point product is the identity")]
    IdentityPoint,
    #[error("scalar out of range")]
    InvalidScalar,
    #[error("malformed point encoding")]
    InvalidPoint,
}

/// `SHA256(x(sk_self * pk_peer))`, with x as 32 big-endian bytes.
pub fn ecdh_chaincode<C: Curve>(sk_self: &C::Scalar, pk_peer: &C::Point) -> Result<[u8; 32], CryptoError> {
    let shared = C::mul(pk_peer, sk_self);
    let x = C::x_bytes(&shared).ok_or(CryptoError::IdentityPoint)?;
    Ok(hash::sha256(&x))
}

pub fn point_to_bytes(p: &Point) -> Result<[u8; 33], CryptoError> {
    Secp256k1::to_compressed(p).ok_or(CryptoError::IdentityPoint)
}

pub fn point_from_bytes(bytes: &[u8]) -> Result<Point, CryptoError> {
    let arr: &[u8; 33] = bytes.try_into().map_err(|_| CryptoError::InvalidPoint)?;
    Secp256k1::from_compressed(arr).ok_or(CryptoError::InvalidPoint)
}

pub fn point_to_hex(p: &Point) -> String {
    point_to_bytes(p).map(hex::encode).unwrap_or_default()
}

pub fn point_from_hex(s: &str) -> Result<Point, CryptoError> {
    let raw = hex::decode(s.trim()).map_err(|_| CryptoError::InvalidPoint)?;
    point_from_bytes(&raw)
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; 32] {
    Secp256k1::scalar_to_bytes(s)
}

/// Canonical nonzero scalar from 32 big-endian bytes.
pub fn scalar_from_bytes(bytes: &[u8; 32]) -> Result<Scalar, CryptoError> {
    match Secp256k1::scalar_from_canonical(bytes) {
        Some(s) if !Secp256k1::is_zero(&s) => Ok(s),
        _ => Err(CryptoError::InvalidScalar),
    }
}
