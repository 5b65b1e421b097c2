//! Curve abstraction shared by the signature, kleptography and ECDH code.
//!
//! Two curves implement [`Curve`]: [`Secp256k1`](super::Secp256k1) for real
//! use and [`ToyCurve`](super::ToyCurve), a 19-element group small enough to
//! enumerate in tests.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;

/// Short-Weierstrass domain parameters `y^2 = x^3 + a x + b` over `F_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveParams {
    pub name: &'static str,
    pub p: BigUint,
    pub a: BigUint,
    pub b: BigUint,
    pub gx: BigUint,
    pub gy: BigUint,
    pub n: BigUint,
    pub h: u32,
}

impl CurveParams {
    /// Checks `(x, y)` against the curve equation.
    pub fn contains(&self, x: &BigUint, y: &BigUint) -> bool {
        let lhs = (y * y) % &self.p;
        let rhs = (x * x * x + &self.a * x + &self.b) % &self.p;
        lhs == rhs
    }
}

/// Prime-order group operations needed by ECDSA and friends.
///
/// Scalars are integers mod the group order `n`; points are group elements
/// including the identity.
pub trait Curve: Copy + Clone + Debug + Default + PartialEq + Eq + Send + Sync + 'static {
    type Scalar: Copy
        + Debug
        + PartialEq
        + Eq
        + Send
        + Sync
        + Add<Output = Self::Scalar>
        + Sub<Output = Self::Scalar>
        + Mul<Output = Self::Scalar>
        + Neg<Output = Self::Scalar>;
    type Point: Copy + Debug + PartialEq + Eq + Send + Sync;

    /// Bit length of the group order.
    const ORDER_BITS: u32;

    fn params() -> CurveParams;

    fn generator() -> Self::Point;
    fn identity() -> Self::Point;
    fn add(p: &Self::Point, q: &Self::Point) -> Self::Point;
    fn negate(p: &Self::Point) -> Self::Point;
    fn mul(p: &Self::Point, k: &Self::Scalar) -> Self::Point;
    fn mul_base(k: &Self::Scalar) -> Self::Point {
        Self::mul(&Self::generator(), k)
    }
    fn is_identity(p: &Self::Point) -> bool {
        *p == Self::identity()
    }

    /// Affine x-coordinate as a 32-byte big-endian field element.
    fn x_bytes(p: &Self::Point) -> Option<[u8; 32]>;
    /// Affine x-coordinate reduced mod `n` (the ECDSA `r` value).
    fn x_mod_order(p: &Self::Point) -> Option<Self::Scalar>;
    /// 33-byte compressed SEC1 encoding; `None` for the identity.
    fn to_compressed(p: &Self::Point) -> Option<[u8; 33]>;
    fn from_compressed(bytes: &[u8; 33]) -> Option<Self::Point>;
    /// Every curve point whose x-coordinate reduces to `r` mod `n`.
    fn points_with_x_mod_order(r: &Self::Scalar) -> Vec<Self::Point>;

    fn scalar_zero() -> Self::Scalar;
    fn scalar_one() -> Self::Scalar;
    fn scalar_from_u64(v: u64) -> Self::Scalar;
    /// Big-endian integer reduced mod `n`.
    fn reduce_bytes(bytes: &[u8; 32]) -> Self::Scalar;
    /// Big-endian integer, rejected unless `< n`.
    fn scalar_from_canonical(bytes: &[u8; 32]) -> Option<Self::Scalar>;
    fn scalar_to_bytes(s: &Self::Scalar) -> [u8; 32];
    fn invert(s: &Self::Scalar) -> Option<Self::Scalar>;
    fn is_zero(s: &Self::Scalar) -> bool {
        *s == Self::scalar_zero()
    }
}
