//! Numerical kernels and seeded randomness.

mod kernels;
mod mask;
mod matrix;
pub mod rng;
mod scalar;

pub use kernels::{
    csr_matmul_transposed, masked_matmul, masked_matmul_csr, masked_matmul_tn, matmul, matmul_tn,
    topk_abs, Csr, Order,
};
pub use mask::{BitGrid, Mask};
pub use matrix::Matrix;
pub use rng::Rng;
pub use scalar::Scalar;
