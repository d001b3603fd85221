use crate::error::{Error, Result};
use crate::ndcore::{topk_abs, Mask, Order, Scalar};
use crate::nn::Network;

/// Global one-shot magnitude pruning: removes the round(S · total) weights of
/// smallest |w| across all layers (ties toward lower (layer, index)).
pub fn global_magnitude_masks<T: Scalar>(net: &Network<T>, sparsity: f64) -> Result<Vec<Mask>> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let flat: Vec<((usize, usize), T)> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            let w = layer.weights().as_slice();
            layer
                .mask()
                .active_indices()
                .into_iter()
                .map(move |i| ((l, i), w[i]))
        })
        .collect();
    let drop = ((sparsity * net.dense_size() as f64).round() as usize).min(flat.len());
    let pruned = topk_abs(&flat, drop, Order::Smallest)?;
    let mut masks = net.masks();
    for (l, i) in pruned {
        masks[l].set_flat(i, false);
    }
    Ok(masks)
}

/// Resets the network to its stored initialization under `masks`: surviving
/// weights and all biases take their θ₀ values bit for bit, momenta are zero.
pub fn rewind<T: Scalar>(init: &Network<T>, masks: Vec<Mask>) -> Result<Network<T>> {
    let mut net = init.clone();
    for layer in net.layers_mut() {
        layer.reset_momenta();
    }
    net.set_masks(masks)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewind_restores_initial_values() {
        let init = Network::<f64>::init_dense(&[4, 3, 2], 8).unwrap();
        let masks = global_magnitude_masks(&init, 0.5).unwrap();
        let net = rewind(&init, masks.clone()).unwrap();
        for (a, b) in net.layers().iter().zip(init.layers()) {
            for i in a.mask().active_indices() {
                assert_eq!(a.weights().as_slice()[i].to_bits(), b.weights().as_slice()[i].to_bits());
            }
        }
        let kept: usize = masks.iter().map(Mask::active_count).sum();
        assert_eq!(kept, 9);
    }

    #[test]
    fn zero_sparsity_keeps_dense() {
        let init = Network::<f64>::init_dense(&[4, 3, 2], 8).unwrap();
        let masks = global_magnitude_masks(&init, 0.0).unwrap();
        assert!(masks.iter().all(|m| m.active_count() == m.len()));
    }
}
