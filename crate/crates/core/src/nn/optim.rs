use crate::error::{Error, Result};
use crate::ndcore::Scalar;
use crate::nn::{Gradients, LayerGrad, Network, SparseLayer};

/// Momentum SGD hyperparameters plus the iteration counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum_coef: f64,
    pub weight_decay: f64,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(lr: f64, momentum_coef: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum_coef) {
            return Err(Error::config(format!(
                "momentum coefficient must be in [0,1), got {momentum_coef}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            lr,
            momentum_coef,
            weight_decay,
            step: 0,
        })
    }
}

/// One momentum step with coupled L2 decay on active weights and all biases:
/// `g' = g + wd·w; v = μ·v + g'; w = w - lr·v`.
pub fn sgd_step<T: Scalar>(layer: &mut SparseLayer<T>, grad: &LayerGrad<T>, opt: &OptimizerState) -> Result<()> {
    if grad.weights.shape() != layer.weights.shape() || grad.bias.len() != layer.bias.len() {
        return Err(Error::shape(format!(
            "gradient {:?} for layer {:?}",
            grad.weights.shape(),
            layer.weights.shape()
        )));
    }
    let lr = T::from_f64(opt.lr);
    let mu = T::from_f64(opt.momentum_coef);
    let wd = T::from_f64(opt.weight_decay);
    let w = layer.weights.as_mut_slice();
    let v = layer.momentum.as_mut_slice();
    let g = grad.weights.as_slice();
    for (row, cols) in (0..layer.csr.shape().0).map(|r| (r, layer.csr.row_cols(r))) {
        let base = row * layer.csr.shape().1;
        for &c in cols {
            let i = base + c as usize;
            let gi = g[i] + wd * w[i];
            v[i] = mu * v[i] + gi;
            w[i] = w[i] - lr * v[i];
        }
    }
    for ((b, vb), &gb) in layer
        .bias
        .iter_mut()
        .zip(layer.bias_momentum.iter_mut())
        .zip(&grad.bias)
    {
        let gi = gb + wd * *b;
        *vb = mu * *vb + gi;
        *b = *b - lr * *vb;
    }
    Ok(())
}

/// Applies [`sgd_step`] to every layer and advances the step counter.
pub fn sgd_step_network<T: Scalar>(net: &mut Network<T>, grads: &Gradients<T>, opt: &mut OptimizerState) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::shape("gradient depth mismatch"));
    }
    for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
        sgd_step(layer, g, opt)?;
    }
    opt.step += 1;
    Ok(())
}

/// Step learning-rate schedule: `base · factor^(milestones passed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, milestones: Vec<usize>) -> Result<Self> {
        if milestones.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config(format!(
                "milestones must be ascending: {milestones:?}"
            )));
        }
        Ok(LrSchedule {
            base_lr,
            milestones,
            factor: 0.1,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base_lr * self.factor.powi(passed as i32)
    }
}

/// Sets `opt.lr` for `epoch`.
pub fn lr_schedule(opt: &mut OptimizerState, epoch: usize, schedule: &LrSchedule) -> f64 {
    opt.lr = schedule.lr_at(epoch);
    opt.lr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{Mask, Matrix};

    fn scalar_layer(w: f64) -> SparseLayer<f64> {
        SparseLayer::from_parts(
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            vec![0.0],
            Mask::full(1, 1),
        )
        .unwrap()
    }

    fn grad(g: f64) -> LayerGrad<f64> {
        LayerGrad {
            weights: Matrix::from_vec(1, 1, vec![g]).unwrap(),
            bias: vec![0.0],
        }
    }

    #[test]
    fn plain_gradient_descent() {
        let mut layer = scalar_layer(1.0);
        let opt = OptimizerState::new(0.1, 0.0, 0.0).unwrap();
        sgd_step(&mut layer, &grad(0.5), &opt).unwrap();
        assert_eq!(layer.weights().get(0, 0), 1.0 - 0.1 * 0.5);
    }

    #[test]
    fn unrolled_momentum_recurrence() {
        let (w0, lr, g1, g2) = (0.7, 0.01, 0.3, -0.2);
        let mut layer = scalar_layer(w0);
        let opt = OptimizerState::new(lr, 0.9, 0.0).unwrap();
        sgd_step(&mut layer, &grad(g1), &opt).unwrap();
        sgd_step(&mut layer, &grad(g2), &opt).unwrap();
        let expected = w0 - lr * g1 - lr * (0.9 * g1 + g2);
        assert!((layer.weights().get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn inactive_coordinates_stay_zero() {
        let mut layer = SparseLayer::from_parts(
            Matrix::from_vec(1, 2, vec![0.4, 0.9]).unwrap(),
            vec![0.0, 0.0],
            Mask::from_active(1, 2, &[0]).unwrap(),
        )
        .unwrap();
        let g = LayerGrad {
            weights: Matrix::from_vec(1, 2, vec![0.1, 5.0]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let opt = OptimizerState::new(0.1, 0.9, 5e-4).unwrap();
        for _ in 0..5 {
            sgd_step(&mut layer, &g, &opt).unwrap();
        }
        assert_eq!(layer.weights().get(0, 1), 0.0);
        assert_eq!(layer.momentum().get(0, 1), 0.0);
        assert_eq!(layer.off_mask_mass(), 0.0);
    }

    #[test]
    fn step_schedule() {
        let s = LrSchedule::new(0.01, vec![100, 150]).unwrap();
        assert_eq!(s.lr_at(0), 0.01);
        assert!((s.lr_at(100) - 0.001).abs() < 1e-18);
        assert!((s.lr_at(150) - 0.0001).abs() < 1e-18);
        assert!(LrSchedule::new(0.01, vec![150, 100]).is_err());
    }

    #[test]
    fn optimizer_validation() {
        assert!(OptimizerState::new(0.0, 0.9, 0.0).is_err());
        assert!(OptimizerState::new(0.1, 1.0, 0.0).is_err());
        assert!(OptimizerState::new(0.1, 0.5, -1.0).is_err());
    }
}
