use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

/// The field modulus 2^255 - 19.
pub fn field_prime() -> &'static BigUint {
    static PRIME: OnceLock<BigUint> = OnceLock::new();
    PRIME.get_or_init(|| (BigUint::one() << 255u32) - BigUint::from(19u32))
}

/// An element of the prime field, always reduced.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigUint::zero())
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(BigUint::from(v) % field_prime())
    }

    /// Reduces an arbitrary little-endian byte string.
    pub fn from_bytes_wide(bytes: &[u8]) -> Self {
        Scalar(BigUint::from_bytes_le(bytes) % field_prime())
    }

    /// Canonical decoding; rejects values `>= p`.
    pub fn from_le_bytes(bytes: &[u8; 32]) -> Option<Self> {
        let v = BigUint::from_bytes_le(bytes);
        (v < *field_prime()).then_some(Scalar(v))
    }

    pub fn to_le_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        let bytes = self.0.to_bytes_le();
        out[..bytes.len()].copy_from_slice(&bytes);
        out
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self::from_bytes_wide(&wide)
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        Scalar((&self.0 + &other.0) % field_prime())
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        Scalar((&self.0 + field_prime() - &other.0) % field_prime())
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        Scalar((&self.0 * &other.0) % field_prime())
    }

    /// Multiplicative inverse by Fermat; `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        if self.0.is_zero() {
            return None;
        }
        let exp = field_prime() - BigUint::from(2u32);
        Some(Scalar(self.0.modpow(&exp, field_prime())))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_le_bytes()))
    }
}
