use crate::error::{Error, Result};
use crate::ndcore::{
    csr_matmul_transposed, masked_matmul_csr, masked_matmul_tn, matmul_tn, rng::stream, Mask,
    Matrix, Rng, Scalar,
};
use crate::nn::SparseLayer;

/// Multilayer perceptron: masked linear layers with ReLU between them and
/// raw logits at the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f64> {
    layers: Vec<SparseLayer<T>>,
}

/// Activations retained by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T = f64> {
    /// Input of each layer (the batch itself for layer 0).
    pub inputs: Vec<Matrix<T>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Matrix<T>>,
}

/// Which weight-gradient coordinates [`Network::backward`] materializes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Gradient at every coordinate, active or not.
    Dense,
    /// Gradient at active coordinates only; zero elsewhere.
    Masked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T = f64> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub layers: Vec<LayerGrad<T>>,
    pub mode: GradMode,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<SparseLayer<T>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::config(format!(
                "a network needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::shape(format!(
                    "layer {l} outputs {} but layer {} takes {}",
                    pair[0].n_out(),
                    l + 1,
                    pair[1].n_in()
                )));
            }
        }
        Ok(Network { layers })
    }

    /// Dense network over `widths` (input, hidden..., classes). Layer `l`
    /// draws from stream (seed, WEIGHTS, l).
    pub fn init_dense(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 3 || widths.iter().any(|&w| w == 0) {
            return Err(Error::config(format!("invalid widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let mut rng = Rng::derive(seed, &[stream::WEIGHTS, l as u64]);
                SparseLayer::init_uniform(w[0], w[1], &mut rng)
            })
            .collect();
        Self::new(layers)
    }

    /// Dense initialization restricted to `masks`.
    pub fn init_sparse(widths: &[usize], masks: Vec<Mask>, seed: u64) -> Result<Self> {
        let mut net = Self::init_dense(widths, seed)?;
        net.set_masks(masks)?;
        Ok(net)
    }

    pub fn layers(&self) -> &[SparseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SparseLayer<T>] {
        &mut self.layers
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.n_inputs()];
        w.extend(self.layers.iter().map(|l| l.n_out()));
        w
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.layers.iter().map(|l| l.mask().clone()).collect()
    }

    pub fn set_masks(&mut self, masks: Vec<Mask>) -> Result<()> {
        if masks.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} masks for {} layers",
                masks.len(),
                self.layers.len()
            )));
        }
        for (layer, m) in self.layers.iter_mut().zip(masks) {
            layer.set_mask(m)?;
        }
        Ok(())
    }

    /// Weight coordinates of the dense network (biases excluded).
    pub fn dense_size(&self) -> usize {
        self.layers.iter().map(|l| l.size()).sum()
    }

    pub fn active_count(&self) -> usize {
        self.layers.iter().map(|l| l.active_count()).sum()
    }

    pub fn density(&self) -> f64 {
        self.active_count() as f64 / self.dense_size() as f64
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>)> {
        if x.cols() != self.n_inputs() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.n_inputs()
            )));
        }
        if !x.all_finite() {
            return Err(Error::Numeric("non-finite input".into()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = masked_matmul_csr(&h, &layer.weights, &layer.csr)?;
            let n = z.cols();
            for row in z.as_mut_slice().chunks_mut(n) {
                for (v, &b) in row.iter_mut().zip(&layer.bias) {
                    *v = *v + b;
                }
            }
            let next = if l < last {
                let mut a = z.clone();
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = v.max(T::zero()));
                a
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        Ok((h, Cache { inputs, pre }))
    }

    /// Logits only.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.forward(x).map(|(logits, _)| logits)
    }

    /// Backpropagates `dlogits` through the masked network.
    ///
    /// In [`GradMode::Dense`] the weight gradient is the true gradient of the
    /// loss at every coordinate, treating masked-off weights as zero-valued
    /// parameters.
    pub fn backward(&self, cache: &Cache<T>, dlogits: &Matrix<T>, mode: GradMode) -> Result<Gradients<T>> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.pre.len() != n {
            return Err(Error::shape("cache does not match network depth"));
        }
        if dlogits.shape() != cache.pre[n - 1].shape() {
            return Err(Error::shape(format!(
                "dlogits {:?} vs logits {:?}",
                dlogits.shape(),
                cache.pre[n - 1].shape()
            )));
        }
        let mut grads = Vec::with_capacity(n);
        let mut delta = dlogits.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let gw = match mode {
                GradMode::Dense => matmul_tn(input, &delta)?,
                GradMode::Masked => masked_matmul_tn(input, &delta, &layer.csr)?,
            };
            let mut gb = vec![T::zero(); layer.n_out()];
            for row in delta.as_slice().chunks(layer.n_out()) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            grads.push(LayerGrad {
                weights: gw,
                bias: gb,
            });
            if l > 0 {
                let mut prev = csr_matmul_transposed(&delta, &layer.weights, &layer.csr)?;
                for (d, &z) in prev
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre[l - 1].as_slice())
                {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
                delta = prev;
            }
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            mode,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    /// True when all weights, biases and momenta have identical bits.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.mask == b.mask
                    && a.weights.bitwise_eq(&b.weights)
                    && a.momentum.bitwise_eq(&b.momentum)
                    && a.bias.iter().zip(&b.bias).all(|(x, y)| x.bits() == y.bits())
                    && a
                        .bias_momentum
                        .iter()
                        .zip(&b.bias_momentum)
                        .all(|(x, y)| x.bits() == y.bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_gives_zero_logits() {
        let mut net = Network::<f64>::init_dense(&[3, 4, 2], 1).unwrap();
        for layer in net.layers_mut() {
            let (r, c) = layer.weights().shape();
            layer.set_weights(Matrix::zeros(r, c)).unwrap();
            layer.set_bias(vec![0.0; c]).unwrap();
        }
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let logits = net.predict(&x).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let net = Network::<f64>::init_dense(&[3, 4, 2], 1).unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::Shape(_))));
        let x = Matrix::from_vec(1, 3, vec![1.0, f64::NAN, 2.0]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::Numeric(_))));
    }

    #[test]
    fn rejects_unchained_layers() {
        let mut rng = Rng::new(0);
        let a = SparseLayer::<f64>::init_uniform(3, 4, &mut rng);
        let b = SparseLayer::<f64>::init_uniform(5, 2, &mut rng);
        assert!(Network::new(vec![a.clone(), b]).is_err());
        assert!(Network::new(vec![a]).is_err());
    }

    #[test]
    fn zero_dlogits_give_zero_gradients() {
        let net = Network::<f64>::init_dense(&[3, 4, 2], 5).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let g = net
            .backward(&cache, &Matrix::zeros(2, 2), GradMode::Dense)
            .unwrap();
        for lg in &g.layers {
            assert!(lg.weights.as_slice().iter().all(|&v| v == 0.0));
            assert!(lg.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn masked_and_dense_gradients_agree_on_active_coordinates() {
        let widths = [6, 5, 4, 3];
        let mut rng = Rng::new(11);
        let masks = widths
            .windows(2)
            .map(|w| {
                let n = w[0] * w[1];
                Mask::from_active(w[0], w[1], &rng.sample_indices(n, n / 2)).unwrap()
            })
            .collect();
        let net = Network::<f64>::init_sparse(&widths, masks, 3).unwrap();
        let x = Matrix::from_vec(4, 6, (0..24).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (logits, cache) = net.forward(&x).unwrap();
        let dense = net.backward(&cache, &logits, GradMode::Dense).unwrap();
        let masked = net.backward(&cache, &logits, GradMode::Masked).unwrap();
        for (l, layer) in net.layers().iter().enumerate() {
            for i in 0..layer.size() {
                let d = dense.layers[l].weights.as_slice()[i];
                let m = masked.layers[l].weights.as_slice()[i];
                if layer.mask().is_active(i) {
                    assert_eq!(d.to_bits(), m.to_bits());
                } else {
                    assert_eq!(m, 0.0);
                }
            }
        }
    }
}
