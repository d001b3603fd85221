use crate::error::{Error, Result};
use crate::ndcore::{Csr, Mask, Matrix, Rng, Scalar};

/// One fully-connected layer with a connectivity mask.
///
/// Weights are `n_in × n_out`; the flat index of connection (i, j) is
/// `i * n_out + j`. Masked-off weights and momenta are held at exactly zero.
/// Biases are always dense.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer<T = f64> {
    pub(crate) weights: Matrix<T>,
    pub(crate) mask: Mask,
    pub(crate) bias: Vec<T>,
    pub(crate) momentum: Matrix<T>,
    pub(crate) bias_momentum: Vec<T>,
    pub(crate) csr: Csr,
}

impl<T: Scalar> SparseLayer<T> {
    /// Dense layer with all weights and biases drawn from U(-1/√n_in, 1/√n_in).
    pub fn init_uniform(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| T::from_f64(rng.uniform_range(-bound, bound)))
            .collect();
        let bias = (0..n_out)
            .map(|_| T::from_f64(rng.uniform_range(-bound, bound)))
            .collect();
        Self::from_parts(
            Matrix::from_vec(n_in, n_out, weights).expect("sized"),
            bias,
            Mask::full(n_in, n_out),
        )
        .expect("consistent shapes")
    }

    /// Builds a layer, zeroing weights outside `mask`. Momenta start at zero.
    pub fn from_parts(weights: Matrix<T>, bias: Vec<T>, mask: Mask) -> Result<Self> {
        if weights.shape() != mask.shape() {
            return Err(Error::shape(format!(
                "weights {:?} vs mask {:?}",
                weights.shape(),
                mask.shape()
            )));
        }
        if bias.len() != weights.cols() {
            return Err(Error::shape(format!(
                "bias of {} for {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        let (r, c) = weights.shape();
        let mut layer = SparseLayer {
            csr: Csr::from_mask(&mask),
            weights,
            mask,
            momentum: Matrix::zeros(r, c),
            bias_momentum: vec![T::zero(); c],
            bias,
        };
        layer.enforce_mask();
        Ok(layer)
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn momentum(&self) -> &Matrix<T> {
        &self.momentum
    }

    pub fn bias_momentum(&self) -> &[T] {
        &self.bias_momentum
    }

    pub fn csr(&self) -> &Csr {
        &self.csr
    }

    pub fn active_count(&self) -> usize {
        self.csr.nnz()
    }

    /// Replaces the mask; newly masked-off weights and momenta are zeroed.
    pub fn set_mask(&mut self, mask: Mask) -> Result<()> {
        if mask.shape() != self.weights.shape() {
            return Err(Error::shape(format!(
                "mask {:?} for layer {:?}",
                mask.shape(),
                self.weights.shape()
            )));
        }
        self.csr = Csr::from_mask(&mask);
        self.mask = mask;
        self.enforce_mask();
        Ok(())
    }

    /// Overwrites the weight grid and re-applies the mask.
    pub fn set_weights(&mut self, weights: Matrix<T>) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::shape("weight grid shape changed"));
        }
        self.weights = weights;
        self.enforce_mask();
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Vec<T>) -> Result<()> {
        if bias.len() != self.bias.len() {
            return Err(Error::shape("bias length changed"));
        }
        self.bias = bias;
        Ok(())
    }

    /// Restores full optimizer state (checkpoint loading).
    pub fn set_momenta(&mut self, momentum: Matrix<T>, bias_momentum: Vec<T>) -> Result<()> {
        if momentum.shape() != self.weights.shape() || bias_momentum.len() != self.bias.len() {
            return Err(Error::shape("momentum shape mismatch"));
        }
        self.momentum = momentum;
        self.bias_momentum = bias_momentum;
        self.enforce_mask();
        Ok(())
    }

    pub fn reset_momenta(&mut self) {
        self.momentum.fill(T::zero());
        self.bias_momentum.iter_mut().for_each(|v| *v = T::zero());
    }

    pub(crate) fn enforce_mask(&mut self) {
        let bits = self.mask.bits();
        for ((w, v), &on) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(self.momentum.as_mut_slice())
            .zip(bits)
        {
            if !on {
                *w = T::zero();
                *v = T::zero();
            }
        }
    }

    /// Σ|w| + Σ|v| over masked-off coordinates. Zero whenever the layer is consistent.
    pub fn off_mask_mass(&self) -> f64 {
        self.mask
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &on)| !on)
            .map(|(i, _)| {
                self.weights.as_slice()[i].abs().as_f64() + self.momentum.as_slice()[i].abs().as_f64()
            })
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> SparseLayer<U> {
        SparseLayer {
            weights: self.weights.cast(),
            mask: self.mask.clone(),
            bias: self.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            momentum: self.momentum.cast(),
            bias_momentum: self
                .bias_momentum
                .iter()
                .map(|v| U::from_f64(v.as_f64()))
                .collect(),
            csr: self.csr.clone(),
        }
    }
}
