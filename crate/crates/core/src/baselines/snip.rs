use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ndcore::{topk_abs, Mask, Matrix, Order, Scalar};
use crate::nn::{loss_and_grad, GradMode, Network};

/// Connection sensitivity |∂L/∂w · w| per layer, always in 64-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SnipScores {
    pub layers: Vec<Matrix<f64>>,
}

/// Sequential minibatch source that counts how many batches were handed out.
pub struct BatchStream<'a> {
    data: &'a Dataset,
    order: Vec<Vec<usize>>,
    consumed: usize,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a Dataset, order: Vec<Vec<usize>>) -> Self {
        BatchStream {
            data,
            order,
            consumed: 0,
        }
    }

    pub fn next_batch<T: Scalar>(&mut self) -> Option<(Matrix<T>, Vec<usize>)> {
        let idx = self.order.get(self.consumed)?;
        self.consumed += 1;
        Some(self.data.batch(idx))
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }
}

pub fn snip_scores<T: Scalar>(net: &Network<T>, x: &Matrix<T>, labels: &[usize]) -> Result<SnipScores> {
    let net64: Network<f64> = net.cast();
    let x64: Matrix<f64> = x.cast();
    let (logits, cache) = net64.forward(&x64)?;
    let (_, dlogits) = loss_and_grad(&logits, labels)?;
    let grads = net64.backward(&cache, &dlogits, GradMode::Dense)?;
    let layers = net64
        .layers()
        .iter()
        .zip(&grads.layers)
        .map(|(layer, g)| {
            let data = layer
                .weights()
                .as_slice()
                .iter()
                .zip(g.weights.as_slice())
                .map(|(&w, &gw)| (gw * w).abs())
                .collect();
            Matrix::from_vec(layer.n_in(), layer.n_out(), data).expect("layer shape")
        })
        .collect();
    Ok(SnipScores { layers })
}

/// Keeps the global top round((1 - S) · total) coordinates by score; ties
/// resolve toward lower (layer, index).
pub fn masks_from_scores(scores: &[Matrix<f64>], target_sparsity: f64) -> Result<(Vec<Mask>, Vec<String>)> {
    if !(0.0..1.0).contains(&target_sparsity) {
        return Err(Error::config(format!(
            "target sparsity {target_sparsity} outside [0, 1)"
        )));
    }
    let total: usize = scores.iter().map(Matrix::len).sum();
    let keep = ((1.0 - target_sparsity) * total as f64).round() as usize;
    let flat: Vec<((usize, usize), f64)> = scores
        .iter()
        .enumerate()
        .flat_map(|(l, m)| m.as_slice().iter().enumerate().map(move |(i, &s)| ((l, i), s)))
        .collect();
    let kept = topk_abs(&flat, keep, Order::Largest)?;
    let mut per_layer = vec![Vec::new(); scores.len()];
    for (l, i) in kept {
        per_layer[l].push(i);
    }
    let mut warnings = Vec::new();
    let masks = scores
        .iter()
        .zip(per_layer)
        .enumerate()
        .map(|(l, (m, idx))| {
            if idx.is_empty() {
                warnings.push(format!("layer {l} keeps no weights (layer collapse)"));
            }
            Mask::from_active(m.rows(), m.cols(), &idx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((masks, warnings))
}

/// One-shot pruning at initialization: scores from exactly one minibatch of
/// `stream`, global threshold, masks installed on `net`. Returns warnings
/// for layers left without weights.
pub fn snip_prune<T: Scalar>(net: &mut Network<T>, stream: &mut BatchStream<'_>, target_sparsity: f64) -> Result<Vec<String>> {
    if net.active_count() != net.dense_size() {
        return Err(Error::State("SNIP expects a dense network".into()));
    }
    let (x, y) = stream
        .next_batch::<T>()
        .ok_or_else(|| Error::Data("no minibatch available for SNIP".into()))?;
    let scores = snip_scores(net, &x, &y)?;
    let (masks, warnings) = masks_from_scores(&scores.layers, target_sparsity)?;
    for w in &warnings {
        log::warn!("snip: {w}");
    }
    net.set_masks(masks)?;
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_highest_score() {
        let scores = vec![Matrix::from_vec(1, 2, vec![0.9, 0.1]).unwrap()];
        let (masks, _) = masks_from_scores(&scores, 0.5).unwrap();
        assert_eq!(masks[0].active_indices(), vec![0]);
    }

    #[test]
    fn zero_sparsity_keeps_all() {
        let scores = vec![
            Matrix::from_vec(2, 2, vec![0.0, 0.3, 0.2, 0.0]).unwrap(),
            Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap(),
        ];
        let (masks, warnings) = masks_from_scores(&scores, 0.0).unwrap();
        assert!(masks.iter().all(|m| m.active_count() == m.len()));
        assert!(warnings.is_empty());
    }

    #[test]
    fn collapse_is_reported() {
        let scores = vec![
            Matrix::from_vec(1, 2, vec![0.9, 0.8]).unwrap(),
            Matrix::from_vec(2, 1, vec![0.01, 0.02]).unwrap(),
        ];
        let (masks, warnings) = masks_from_scores(&scores, 0.5).unwrap();
        assert_eq!(masks[1].active_count(), 0);
        assert_eq!(warnings.len(), 1);
    }
}
