use std::fmt::{Debug, Display};

use num_traits::Float;

/// Floating point element type of every weight, activation and gradient grid.
///
/// Implemented for `f64` (the default, used by every oracle) and `f32`.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + std::iter::Sum + 'static
{
    /// Size of one little-endian encoded value.
    const BYTES: usize;
    /// Tag stored in checkpoints.
    const DTYPE: u8;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    /// Raw bits widened to u64, for bitwise comparisons.
    fn bits(self) -> u64;
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const DTYPE: u8 = 8;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
    fn bits(self) -> u64 {
        self.to_bits()
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const DTYPE: u8 = 4;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
    fn bits(self) -> u64 {
        self.to_bits() as u64
    }
}
