//! secp256k1 group arithmetic, backed by the `k256` crate.

use k256::elliptic_curve::group::Group;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::point::{AffineCoordinates, DecompressPoint};
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::subtle::Choice;
use k256::elliptic_curve::PrimeField;
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar, U256};
use num_bigint::BigUint;

use super::curve::{Curve, CurveParams};

const P_HEX: &str = "FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F";
const N_HEX: &str = "FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141";
const GX_HEX: &str = "79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798";
const GY_HEX: &str = "483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8";

fn big(hex: &str) -> BigUint {
    BigUint::parse_bytes(hex.as_bytes(), 16).expect("constant")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Secp256k1;

fn to_be32(v: &BigUint) -> [u8; 32] {
    let raw = v.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - raw.len()..].copy_from_slice(&raw);
    out
}

impl Curve for Secp256k1 {
    type Scalar = Scalar;
    type Point = ProjectivePoint;

    const ORDER_BITS: u32 = 256;

    fn params() -> CurveParams {
        CurveParams {
            name: "secp256k1",
            p: big(P_HEX),
            a: BigUint::from(0u32),
            b: BigUint::from(7u32),
            gx: big(GX_HEX),
            gy: big(GY_HEX),
            n: big(N_HEX),
            h: 1,
        }
    }

    fn generator() -> ProjectivePoint {
        ProjectivePoint::GENERATOR
    }

    fn identity() -> ProjectivePoint {
        ProjectivePoint::IDENTITY
    }

    fn add(p: &ProjectivePoint, q: &ProjectivePoint) -> ProjectivePoint {
        p + q
    }

    fn negate(p: &ProjectivePoint) -> ProjectivePoint {
        -p
    }

    fn mul(p: &ProjectivePoint, k: &Scalar) -> ProjectivePoint {
        p * k
    }

    fn mul_base(k: &Scalar) -> ProjectivePoint {
        ProjectivePoint::GENERATOR * k
    }

    fn is_identity(p: &ProjectivePoint) -> bool {
        bool::from(p.is_identity())
    }

    fn x_bytes(p: &ProjectivePoint) -> Option<[u8; 32]> {
        if Self::is_identity(p) {
            return None;
        }
        Some(p.to_affine().x().into())
    }

    fn x_mod_order(p: &ProjectivePoint) -> Option<Scalar> {
        if Self::is_identity(p) {
            return None;
        }
        Some(<Scalar as Reduce<U256>>::reduce_bytes(&p.to_affine().x()))
    }

    fn to_compressed(p: &ProjectivePoint) -> Option<[u8; 33]> {
        if Self::is_identity(p) {
            return None;
        }
        let enc = p.to_affine().to_encoded_point(true);
        enc.as_bytes().try_into().ok()
    }

    fn from_compressed(bytes: &[u8; 33]) -> Option<ProjectivePoint> {
        let enc = EncodedPoint::from_bytes(bytes).ok()?;
        if !enc.is_compressed() {
            return None;
        }
        Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&enc)).map(ProjectivePoint::from)
    }

    fn points_with_x_mod_order(r: &Scalar) -> Vec<ProjectivePoint> {
        let params = Self::params();
        let r_int = BigUint::from_bytes_be(&r.to_bytes());
        let mut xs = vec![r_int.clone()];
        let lifted = &r_int + &params.n;
        if lifted < params.p {
            xs.push(lifted);
        }
        let mut out = Vec::with_capacity(4);
        for x in xs {
            let x_bytes = FieldBytes::from(to_be32(&x));
            for odd in [0u8, 1u8] {
                let pt = AffinePoint::decompress(&x_bytes, Choice::from(odd));
                if let Some(pt) = Option::<AffinePoint>::from(pt) {
                    out.push(ProjectivePoint::from(pt));
                }
            }
        }
        out
    }

    fn scalar_zero() -> Scalar {
        Scalar::ZERO
    }

    fn scalar_one() -> Scalar {
        Scalar::ONE
    }

    fn scalar_from_u64(v: u64) -> Scalar {
        Scalar::from(v)
    }

    fn reduce_bytes(bytes: &[u8; 32]) -> Scalar {
        <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*bytes))
    }

    fn scalar_from_canonical(bytes: &[u8; 32]) -> Option<Scalar> {
        Option::from(Scalar::from_repr(FieldBytes::from(*bytes)))
    }

    fn scalar_to_bytes(s: &Scalar) -> [u8; 32] {
        s.to_bytes().into()
    }

    fn invert(s: &Scalar) -> Option<Scalar> {
        Option::from(s.invert())
    }

    fn is_zero(s: &Scalar) -> bool {
        bool::from(s.is_zero())
    }
}
