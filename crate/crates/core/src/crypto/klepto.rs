//! Two-signature kleptographic leak of a signing key.
//!
//! The first signature uses a fresh random nonce `k1`. The second uses
//! `k2 = SHA256(compressed(k1 * pk_receiver) || c) mod n` for the smallest
//! counter byte `c` that gives a usable signature. The receiver rebuilds
//! `k1 * pk_receiver` as `sk_receiver * R1`, where `R1` is any point whose
//! x-coordinate reduces to `r1`, and solves the second signature for the key.

use rand_core::RngCore;
use sha2::{Digest, Sha256};

use super::curve::Curve;
use super::ecdsa::{digest_to_scalar, ecdsa_sign_with_nonce, random_scalar, EcdsaSignature};
use super::CryptoError;

/// Counter bytes tried before giving up.
pub const COUNTER_LIMIT: usize = 256;

/// `SHA256(compressed(shared) || counter) mod n`
pub fn klepto_nonce<C: Curve>(shared: &C::Point, counter: u8) -> Result<C::Scalar, CryptoError> {
    let enc = C::to_compressed(shared).ok_or(CryptoError::IdentityPoint)?;
    Ok(nonce_from_encoding::<C>(&enc, counter))
}

fn nonce_from_encoding<C: Curve>(enc: &[u8; 33], counter: u8) -> C::Scalar {
    let mut h = Sha256::new();
    h.update(enc);
    h.update([counter]);
    C::reduce_bytes(&h.finalize().into())
}

/// Signs both digests, leaking `sk_sender` to the holder of `pk_receiver`'s
/// secret. The first nonce is drawn from `rng`.
pub fn klepto_sign_pair<C: Curve, R: RngCore + ?Sized>(
    sk_sender: &C::Scalar,
    pk_receiver: &C::Point,
    digest1: &[u8; 32],
    digest2: &[u8; 32],
    rng: &mut R,
) -> Result<(EcdsaSignature<C>, EcdsaSignature<C>), CryptoError> {
    loop {
        let k1 = random_scalar::<C, R>(rng);
        match klepto_sign_pair_with_nonce::<C>(sk_sender, pk_receiver, digest1, digest2, &k1) {
            Err(CryptoError::NonceYieldsZero) => continue,
            other => return other,
        }
    }
}

/// As [`klepto_sign_pair`] with the first nonce fixed by the caller.
pub fn klepto_sign_pair_with_nonce<C: Curve>(
    sk_sender: &C::Scalar,
    pk_receiver: &C::Point,
    digest1: &[u8; 32],
    digest2: &[u8; 32],
    k1: &C::Scalar,
) -> Result<(EcdsaSignature<C>, EcdsaSignature<C>), CryptoError> {
    if C::is_identity(pk_receiver) {
        return Err(CryptoError::IdentityPoint);
    }
    let sig1 = ecdsa_sign_with_nonce::<C>(sk_sender, digest1, k1)?;
    let shared = C::mul(pk_receiver, k1);
    let enc = C::to_compressed(&shared).ok_or(CryptoError::IdentityPoint)?;
    for counter in 0..COUNTER_LIMIT {
        let k2 = nonce_from_encoding::<C>(&enc, counter as u8);
        if C::is_zero(&k2) {
            continue;
        }
        match ecdsa_sign_with_nonce::<C>(sk_sender, digest2, &k2) {
            Ok(sig2) => return Ok((sig1, sig2)),
            Err(CryptoError::NonceYieldsZero) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(CryptoError::DegenerateNonce)
}

/// Recovers the sender's key from a kleptographic signature pair.
///
/// Candidates are enumerated counter-major so the common case (counter 0)
/// costs one base multiplication per lifted point.
pub fn klepto_extract<C: Curve>(
    sk_receiver: &C::Scalar,
    pk_sender: &C::Point,
    sig1: &EcdsaSignature<C>,
    sig2: &EcdsaSignature<C>,
    digest2: &[u8; 32],
) -> Result<C::Scalar, CryptoError> {
    if C::is_zero(&sig1.r) || C::is_zero(&sig2.r) || C::is_zero(&sig2.s) {
        return Err(CryptoError::InvalidSignature);
    }
    let r2_inv = C::invert(&sig2.r).ok_or(CryptoError::InvalidSignature)?;
    let z2 = digest_to_scalar::<C>(digest2);
    let shared: Vec<[u8; 33]> = C::points_with_x_mod_order(&sig1.r)
        .iter()
        .filter_map(|r1| C::to_compressed(&C::mul(r1, sk_receiver)))
        .collect();
    for counter in 0..COUNTER_LIMIT {
        for enc in &shared {
            let k2 = nonce_from_encoding::<C>(enc, counter as u8);
            if C::is_zero(&k2) {
                continue;
            }
            let candidate = (sig2.s * k2 - z2) * r2_inv;
            if !C::is_zero(&candidate) && C::mul_base(&candidate) == *pk_sender {
                return Ok(candidate);
            }
        }
    }
    Err(CryptoError::ExtractionFailed)
}
