//! ECDSA with caller-chosen nonces.
//!
//! Signatures are never low-s normalized: `s` is exactly
//! `k^-1 (z + r sk) mod n`, so the nonce can be read back by anyone who
//! holds the signing key.

use rand_core::RngCore;

use super::curve::Curve;
use super::rng::HashStream;
use super::{CryptoError, Secp256k1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPair<C: Curve = Secp256k1> {
    pub sk: C::Scalar,
    pub pk: C::Point,
}

impl<C: Curve> KeyPair<C> {
    pub fn from_secret(sk: C::Scalar) -> Result<Self, CryptoError> {
        if C::is_zero(&sk) {
            return Err(CryptoError::InvalidScalar);
        }
        Ok(KeyPair {
            sk,
            pk: C::mul_base(&sk),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcdsaSignature<C: Curve = Secp256k1> {
    pub r: C::Scalar,
    pub s: C::Scalar,
}

impl<C: Curve> EcdsaSignature<C> {
    /// Both components nonzero.
    pub fn new(r: C::Scalar, s: C::Scalar) -> Result<Self, CryptoError> {
        if C::is_zero(&r) || C::is_zero(&s) {
            return Err(CryptoError::InvalidSignature);
        }
        Ok(EcdsaSignature { r, s })
    }

    /// 64-byte `r || s`.
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&C::scalar_to_bytes(&self.r));
        out[32..].copy_from_slice(&C::scalar_to_bytes(&self.s));
        out
    }

    pub fn from_bytes(bytes: &[u8; 64]) -> Result<Self, CryptoError> {
        let r = C::scalar_from_canonical(bytes[..32].try_into().unwrap()).ok_or(CryptoError::InvalidSignature)?;
        let s = C::scalar_from_canonical(bytes[32..].try_into().unwrap()).ok_or(CryptoError::InvalidSignature)?;
        Self::new(r, s)
    }

    /// The other valid signature for the same message, `(r, n - s)`.
    pub fn negated_s(&self) -> Self {
        EcdsaSignature { r: self.r, s: -self.s }
    }
}

pub fn digest_to_scalar<C: Curve>(digest: &[u8; 32]) -> C::Scalar {
    C::reduce_bytes(digest)
}

/// Uniform nonzero scalar by rejection sampling on draws masked to the
/// bit length of `n`.
pub fn random_scalar<C: Curve, R: RngCore + ?Sized>(rng: &mut R) -> C::Scalar {
    let excess = 256 - C::ORDER_BITS as usize;
    loop {
        let mut buf = [0u8; 32];
        rng.fill_bytes(&mut buf);
        buf[..excess / 8].fill(0);
        if !excess.is_multiple_of(8) {
            buf[excess / 8] &= 0xff >> (excess % 8);
        }
        if let Some(s) = C::scalar_from_canonical(&buf) {
            if !C::is_zero(&s) {
                return s;
            }
        }
    }
}

/// Key generation. With a seed, the secret is the first canonical nonzero
/// 32-byte block drawn from `HashStream(seed)`.
pub fn keypair_generate<C: Curve>(seed: Option<[u8; 32]>) -> KeyPair<C> {
    let mut rng = HashStream::from_optional_seed(seed);
    keypair_from_rng(&mut rng)
}

pub fn keypair_from_rng<C: Curve, R: RngCore + ?Sized>(rng: &mut R) -> KeyPair<C> {
    let sk = random_scalar::<C, R>(rng);
    KeyPair {
        sk,
        pk: C::mul_base(&sk),
    }
}

/// `r = x(kG) mod n`, `s = k^-1 (z + r sk) mod n`.
pub fn ecdsa_sign_with_nonce<C: Curve>(
    sk: &C::Scalar,
    digest: &[u8; 32],
    nonce: &C::Scalar,
) -> Result<EcdsaSignature<C>, CryptoError> {
    if C::is_zero(sk) {
        return Err(CryptoError::InvalidScalar);
    }
    let k_inv = C::invert(nonce).ok_or(CryptoError::InvalidScalar)?;
    let r = C::x_mod_order(&C::mul_base(nonce)).ok_or(CryptoError::NonceYieldsZero)?;
    if C::is_zero(&r) {
        return Err(CryptoError::NonceYieldsZero);
    }
    let z = digest_to_scalar::<C>(digest);
    let s = k_inv * (z + r * *sk);
    if C::is_zero(&s) {
        return Err(CryptoError::NonceYieldsZero);
    }
    Ok(EcdsaSignature { r, s })
}

/// Standard verification; accepts both `s` and `n - s`.
pub fn ecdsa_verify<C: Curve>(pk: &C::Point, digest: &[u8; 32], sig: &EcdsaSignature<C>) -> bool {
    if C::is_identity(pk) || C::is_zero(&sig.r) || C::is_zero(&sig.s) {
        return false;
    }
    let Some(w) = C::invert(&sig.s) else {
        return false;
    };
    let z = digest_to_scalar::<C>(digest);
    let u1 = z * w;
    let u2 = sig.r * w;
    let x = C::add(&C::mul_base(&u1), &C::mul(pk, &u2));
    match C::x_mod_order(&x) {
        Some(xr) => xr == sig.r,
        None => false,
    }
}

/// Recovers the nonce of a signature made with `sk`:
/// `k = s^-1 (z + r sk) mod n`.
pub fn subliminal_extract_nonce<C: Curve>(
    sk: &C::Scalar,
    digest: &[u8; 32],
    sig: &EcdsaSignature<C>,
) -> Result<C::Scalar, CryptoError> {
    if C::is_zero(sk) {
        return Err(CryptoError::InvalidScalar);
    }
    if !ecdsa_verify::<C>(&C::mul_base(sk), digest, sig) {
        return Err(CryptoError::InvalidSignature);
    }
    let s_inv = C::invert(&sig.s).ok_or(CryptoError::InvalidSignature)?;
    let z = digest_to_scalar::<C>(digest);
    Ok(s_inv * (z + sig.r * *sk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{ToyCurve, ToyScalar};

    fn digest_of(v: u8) -> [u8; 32] {
        let mut d = [0u8; 32];
        d[31] = v;
        d
    }

    #[test]
    fn seeded_keygen_is_deterministic() {
        let a = keypair_generate::<Secp256k1>(Some([0u8; 32]));
        let b = keypair_generate::<Secp256k1>(Some([0u8; 32]));
        assert_eq!(a, b);
        assert_eq!(a.pk, Secp256k1::mul_base(&a.sk));
        let c = keypair_generate::<Secp256k1>(None);
        let d = keypair_generate::<Secp256k1>(None);
        assert_ne!(c.sk, d.sk);
    }

    #[test]
    fn sign_rejects_zero_nonce() {
        let sk = ToyScalar::new(7);
        assert_eq!(
            ecdsa_sign_with_nonce::<ToyCurve>(&sk, &digest_of(11), &ToyScalar::new(0)),
            Err(CryptoError::InvalidScalar)
        );
    }

    #[test]
    fn flipped_digest_bit_fails_verification() {
        let kp = keypair_generate::<Secp256k1>(Some([3u8; 32]));
        let digest = [0x5au8; 32];
        let k = Secp256k1::scalar_from_u64(0xdead_beef);
        let sig = ecdsa_sign_with_nonce::<Secp256k1>(&kp.sk, &digest, &k).unwrap();
        assert!(ecdsa_verify::<Secp256k1>(&kp.pk, &digest, &sig));
        let mut bad = digest;
        bad[17] ^= 0x04;
        assert!(!ecdsa_verify::<Secp256k1>(&kp.pk, &bad, &sig));
    }

    #[test]
    fn high_s_is_accepted_and_yields_negated_nonce() {
        let kp = keypair_generate::<Secp256k1>(Some([4u8; 32]));
        let digest = [0x11u8; 32];
        let k = Secp256k1::scalar_from_u64(42);
        let sig = ecdsa_sign_with_nonce::<Secp256k1>(&kp.sk, &digest, &k).unwrap();
        let flipped = sig.negated_s();
        assert!(ecdsa_verify::<Secp256k1>(&kp.pk, &digest, &flipped));
        assert_eq!(
            subliminal_extract_nonce::<Secp256k1>(&kp.sk, &digest, &flipped).unwrap(),
            -k
        );
    }

    #[test]
    fn wrong_key_cannot_extract() {
        let kp = keypair_generate::<Secp256k1>(Some([5u8; 32]));
        let other = keypair_generate::<Secp256k1>(Some([6u8; 32]));
        let digest = [0x22u8; 32];
        let sig = ecdsa_sign_with_nonce::<Secp256k1>(&kp.sk, &digest, &Secp256k1::scalar_from_u64(9)).unwrap();
        assert_eq!(
            subliminal_extract_nonce::<Secp256k1>(&other.sk, &digest, &sig),
            Err(CryptoError::InvalidSignature)
        );
    }

    #[test]
    fn signature_bytes_round_trip() {
        let kp = keypair_generate::<Secp256k1>(Some([8u8; 32]));
        let sig = ecdsa_sign_with_nonce::<Secp256k1>(&kp.sk, &[1u8; 32], &Secp256k1::scalar_from_u64(77)).unwrap();
        assert_eq!(EcdsaSignature::<Secp256k1>::from_bytes(&sig.to_bytes()).unwrap(), sig);
        assert!(EcdsaSignature::<Secp256k1>::from_bytes(&[0u8; 64]).is_err());
    }
}
