//! Textbook curve `y^2 = x^3 + 2x + 2` over `F_17` with base point `(5, 1)`
//! of prime order 19. Every group element can be enumerated, which makes
//! exhaustive oracle tests practical.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;

use super::curve::{Curve, CurveParams};

const P: u32 = 17;
const A: u32 = 2;
const B: u32 = 2;
const N: u32 = 19;
const G: (u32, u32) = (5, 1);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ToyCurve;

/// Integer mod 19.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyScalar(u32);

impl ToyScalar {
    pub fn new(v: u64) -> Self {
        ToyScalar((v % N as u64) as u32)
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl Add for ToyScalar {
    type Output = ToyScalar;
    fn add(self, rhs: Self) -> Self {
        ToyScalar((self.0 + rhs.0) % N)
    }
}

impl Sub for ToyScalar {
    type Output = ToyScalar;
    fn sub(self, rhs: Self) -> Self {
        ToyScalar((self.0 + N - rhs.0) % N)
    }
}

impl Mul for ToyScalar {
    type Output = ToyScalar;
    fn mul(self, rhs: Self) -> Self {
        ToyScalar((self.0 * rhs.0) % N)
    }
}

impl Neg for ToyScalar {
    type Output = ToyScalar;
    fn neg(self) -> Self {
        ToyScalar((N - self.0) % N)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyPoint {
    Identity,
    Affine { x: u32, y: u32 },
}

fn pow_mod(mut base: u32, mut exp: u32, m: u32) -> u32 {
    let mut acc = 1u32;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

fn inv_p(v: u32) -> u32 {
    pow_mod(v, P - 2, P)
}

fn rhs(x: u32) -> u32 {
    (x * x % P * x + A * x + B) % P
}

impl ToyPoint {
    pub fn affine(x: u32, y: u32) -> Option<Self> {
        (x < P && y < P && (y * y) % P == rhs(x)).then_some(ToyPoint::Affine { x, y })
    }
}

impl Curve for ToyCurve {
    type Scalar = ToyScalar;
    type Point = ToyPoint;

    const ORDER_BITS: u32 = 5;

    fn params() -> CurveParams {
        CurveParams {
            name: "toy-f17",
            p: BigUint::from(P),
            a: BigUint::from(A),
            b: BigUint::from(B),
            gx: BigUint::from(G.0),
            gy: BigUint::from(G.1),
            n: BigUint::from(N),
            h: 1,
        }
    }

    fn generator() -> ToyPoint {
        ToyPoint::Affine { x: G.0, y: G.1 }
    }

    fn identity() -> ToyPoint {
        ToyPoint::Identity
    }

    fn add(p: &ToyPoint, q: &ToyPoint) -> ToyPoint {
        match (*p, *q) {
            (ToyPoint::Identity, o) | (o, ToyPoint::Identity) => o,
            (ToyPoint::Affine { x: x1, y: y1 }, ToyPoint::Affine { x: x2, y: y2 }) => {
                if x1 == x2 && (y1 + y2) % P == 0 {
                    return ToyPoint::Identity;
                }
                let lambda = if x1 == x2 {
                    (3 * x1 * x1 + A) % P * inv_p(2 * y1 % P) % P
                } else {
                    (y2 + P - y1) % P * inv_p((x2 + P - x1) % P) % P
                };
                let x3 = (lambda * lambda + 2 * P - x1 - x2) % P;
                let y3 = (lambda * ((x1 + P - x3) % P) % P + P - y1) % P;
                ToyPoint::Affine { x: x3, y: y3 }
            }
        }
    }

    fn negate(p: &ToyPoint) -> ToyPoint {
        match *p {
            ToyPoint::Identity => ToyPoint::Identity,
            ToyPoint::Affine { x, y } => ToyPoint::Affine { x, y: (P - y) % P },
        }
    }

    fn mul(p: &ToyPoint, k: &ToyScalar) -> ToyPoint {
        let mut acc = ToyPoint::Identity;
        let mut addend = *p;
        let mut bits = k.0;
        while bits > 0 {
            if bits & 1 == 1 {
                acc = Self::add(&acc, &addend);
            }
            addend = Self::add(&addend, &addend);
            bits >>= 1;
        }
        acc
    }

    fn x_bytes(p: &ToyPoint) -> Option<[u8; 32]> {
        match *p {
            ToyPoint::Identity => None,
            ToyPoint::Affine { x, .. } => {
                let mut out = [0u8; 32];
                out[28..].copy_from_slice(&x.to_be_bytes());
                Some(out)
            }
        }
    }

    fn x_mod_order(p: &ToyPoint) -> Option<ToyScalar> {
        match *p {
            ToyPoint::Identity => None,
            ToyPoint::Affine { x, .. } => Some(ToyScalar::new(x as u64)),
        }
    }

    fn to_compressed(p: &ToyPoint) -> Option<[u8; 33]> {
        match *p {
            ToyPoint::Identity => None,
            ToyPoint::Affine { x, y } => {
                let mut out = [0u8; 33];
                out[0] = if y % 2 == 1 { 0x03 } else { 0x02 };
                out[29..].copy_from_slice(&x.to_be_bytes());
                Some(out)
            }
        }
    }

    fn from_compressed(bytes: &[u8; 33]) -> Option<ToyPoint> {
        let odd = match bytes[0] {
            0x02 => false,
            0x03 => true,
            _ => return None,
        };
        if bytes[1..29].iter().any(|&b| b != 0) {
            return None;
        }
        let x = u32::from_be_bytes(bytes[29..].try_into().ok()?);
        if x >= P {
            return None;
        }
        (0..P)
            .find(|&y| (y * y) % P == rhs(x) && (y % 2 == 1) == odd)
            .map(|y| ToyPoint::Affine { x, y })
    }

    fn points_with_x_mod_order(r: &ToyScalar) -> Vec<ToyPoint> {
        let mut out = Vec::new();
        let mut x = r.0;
        while x < P {
            for y in 0..P {
                if (y * y) % P == rhs(x) {
                    out.push(ToyPoint::Affine { x, y });
                }
            }
            x += N;
        }
        out
    }

    fn scalar_zero() -> ToyScalar {
        ToyScalar(0)
    }

    fn scalar_one() -> ToyScalar {
        ToyScalar(1)
    }

    fn scalar_from_u64(v: u64) -> ToyScalar {
        ToyScalar::new(v)
    }

    fn reduce_bytes(bytes: &[u8; 32]) -> ToyScalar {
        let rem = bytes.iter().fold(0u32, |acc, &b| (acc * 256 + b as u32) % N);
        ToyScalar(rem)
    }

    fn scalar_from_canonical(bytes: &[u8; 32]) -> Option<ToyScalar> {
        if bytes[..31].iter().any(|&b| b != 0) || bytes[31] as u32 >= N {
            return None;
        }
        Some(ToyScalar(bytes[31] as u32))
    }

    fn scalar_to_bytes(s: &ToyScalar) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[28..].copy_from_slice(&s.0.to_be_bytes());
        out
    }

    fn invert(s: &ToyScalar) -> Option<ToyScalar> {
        (s.0 != 0).then(|| ToyScalar(pow_mod(s.0, N - 2, N)))
    }
}
