//! Layer-wise density allocation under a global budget.

use crate::error::{Error, Result};
use crate::ndcore::{rng::stream, Mask, Rng};

/// Shape of a prunable weight tensor. Kernel dimensions only feed the
/// allocation formula; training supports fully-connected layers only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub kernel: Option<(usize, usize)>,
}

impl LayerShape {
    pub fn dense(n_in: usize, n_out: usize) -> Self {
        LayerShape {
            n_in,
            n_out,
            kernel: None,
        }
    }

    pub fn conv(n_in: usize, n_out: usize, k_w: usize, k_h: usize) -> Self {
        LayerShape {
            n_in,
            n_out,
            kernel: Some((k_w, k_h)),
        }
    }

    pub fn size(&self) -> usize {
        let (kw, kh) = self.kernel.unwrap_or((1, 1));
        self.n_in * self.n_out * kw * kh
    }

    fn validate(&self) -> Result<()> {
        let kernel_ok = self.kernel.is_none_or(|(w, h)| w > 0 && h > 0);
        if self.n_in == 0 || self.n_out == 0 || !kernel_ok {
            return Err(Error::config(format!("non-positive layer shape {self:?}")));
        }
        Ok(())
    }

    /// Numerator of the Erdős–Rényi scale: n_in + n_out (+ k_w + k_h).
    fn er_numerator(&self, with_kernel: bool) -> f64 {
        let mut s = (self.n_in + self.n_out) as f64;
        if with_kernel {
            if let Some((w, h)) = self.kernel {
                s += (w + h) as f64;
            }
        }
        s
    }
}

/// Densities per layer together with the global target they realize.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityAllocation {
    pub global_density: f64,
    pub per_layer_density: Vec<f64>,
}

impl SparsityAllocation {
    /// Integer active count per layer: round(density · size), at least 1.
    pub fn active_counts(&self, shapes: &[LayerShape]) -> Vec<usize> {
        shapes
            .iter()
            .zip(&self.per_layer_density)
            .map(|(s, &d)| active_count(s.size(), d))
            .collect()
    }

    /// Σ active counts / Σ sizes after integerization.
    pub fn realized_density(&self, shapes: &[LayerShape]) -> f64 {
        let active: usize = self.active_counts(shapes).iter().sum();
        let total: usize = shapes.iter().map(LayerShape::size).sum();
        active as f64 / total as f64
    }
}

pub(crate) fn active_count(size: usize, density: f64) -> usize {
    ((density * size as f64).round() as usize).clamp(1, size)
}

fn check(shapes: &[LayerShape], density: f64) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::config("no layers to allocate"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::config(format!("density {density} outside (0, 1]")));
    }
    shapes.iter().try_for_each(LayerShape::validate)
}

pub fn allocate_uniform(shapes: &[LayerShape], global_density: f64) -> Result<SparsityAllocation> {
    check(shapes, global_density)?;
    Ok(SparsityAllocation {
        global_density,
        per_layer_density: vec![global_density; shapes.len()],
    })
}

pub fn allocate_er(shapes: &[LayerShape], global_density: f64) -> Result<SparsityAllocation> {
    check(shapes, global_density)?;
    solve_scaled(shapes, global_density, false)
}

/// Erdős–Rényi-Kernel allocation; identical to [`allocate_er`] when no shape
/// carries kernel dimensions.
pub fn allocate_erk(shapes: &[LayerShape], global_density: f64) -> Result<SparsityAllocation> {
    check(shapes, global_density)?;
    solve_scaled(shapes, global_density, true)
}

/// density_l = min(1, ε · numerator_l / size_l), with ε chosen so that
/// Σ density_l · size_l equals the budget. Layers whose density would exceed
/// one are capped and ε is re-solved over the remaining layers until no new
/// layer caps.
fn solve_scaled(shapes: &[LayerShape], density: f64, with_kernel: bool) -> Result<SparsityAllocation> {
    let sizes: Vec<f64> = shapes.iter().map(|s| s.size() as f64).collect();
    let numer: Vec<f64> = shapes.iter().map(|s| s.er_numerator(with_kernel)).collect();
    let budget = density * sizes.iter().sum::<f64>();
    let mut capped = vec![false; shapes.len()];
    let eps = loop {
        let capped_size: f64 = (0..shapes.len()).filter(|&l| capped[l]).map(|l| sizes[l]).sum();
        let denom: f64 = (0..shapes.len()).filter(|&l| !capped[l]).map(|l| numer[l]).sum();
        if denom == 0.0 {
            break 0.0;
        }
        let eps = (budget - capped_size) / denom;
        let mut changed = false;
        for l in 0..shapes.len() {
            if !capped[l] && eps * numer[l] / sizes[l] > 1.0 {
                capped[l] = true;
                changed = true;
            }
        }
        if !changed {
            break eps;
        }
    };
    if eps < 0.0 {
        return Err(Error::config(format!(
            "density {density} infeasible for the given shapes"
        )));
    }
    let per_layer_density = (0..shapes.len())
        .map(|l| {
            if capped[l] {
                1.0
            } else {
                (eps * numer[l] / sizes[l]).min(1.0)
            }
        })
        .collect();
    Ok(SparsityAllocation {
        global_density: density,
        per_layer_density,
    })
}

/// Mask with exactly round(density · rows · cols) active coordinates drawn
/// uniformly without replacement.
pub fn sample_mask(rows: usize, cols: usize, density: f64, rng: &mut Rng) -> Mask {
    let n = rows * cols;
    let k = ((density * n as f64).round() as usize).min(n);
    sample_mask_count(rows, cols, k, rng)
}

pub fn sample_mask_count(rows: usize, cols: usize, k: usize, rng: &mut Rng) -> Mask {
    if k == rows * cols {
        return Mask::full(rows, cols);
    }
    Mask::from_active(rows, cols, &rng.sample_indices(rows * cols, k)).expect("indices in range")
}

/// One mask per layer, layer `l` drawn from stream (seed, MASK, l).
pub fn sample_masks(shapes: &[LayerShape], alloc: &SparsityAllocation, seed: u64) -> Vec<Mask> {
    shapes
        .iter()
        .zip(alloc.active_counts(shapes))
        .enumerate()
        .map(|(l, (s, k))| {
            let mut rng = Rng::derive(seed, &[stream::MASK, l as u64]);
            let (kw, kh) = s.kernel.unwrap_or((1, 1));
            sample_mask_count(s.n_in * kw * kh, s.n_out, k, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cases() {
        let shapes = [LayerShape::dense(10, 10), LayerShape::dense(10, 10)];
        let a = allocate_uniform(&shapes, 1.0).unwrap();
        assert_eq!(a.per_layer_density, vec![1.0, 1.0]);
        let a = allocate_uniform(&shapes, 0.5).unwrap();
        assert_eq!(a.active_counts(&shapes).iter().sum::<usize>(), 100);
        let a = allocate_uniform(&[LayerShape::dense(4, 5)], 0.2).unwrap();
        assert_eq!(a.per_layer_density, vec![0.2]);
    }

    #[test]
    fn bad_density_is_config_error() {
        let shapes = [LayerShape::dense(3, 3)];
        for d in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(allocate_er(&shapes, d), Err(Error::Config(_))));
            assert!(matches!(allocate_uniform(&shapes, d), Err(Error::Config(_))));
        }
        assert!(allocate_er(&[LayerShape::dense(0, 3)], 0.5).is_err());
    }

    #[test]
    fn single_layer_er_is_degenerate() {
        let shapes = [LayerShape::dense(30, 7)];
        for d in [0.05, 0.3, 0.9, 1.0] {
            let a = allocate_er(&shapes, d).unwrap();
            assert!((a.per_layer_density[0] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_mask_rounding_and_determinism() {
        let m = sample_mask(10, 10, 0.13, &mut Rng::new(4));
        assert_eq!(m.active_count(), 13);
        assert_eq!(m, sample_mask(10, 10, 0.13, &mut Rng::new(4)));
        assert_eq!(sample_mask(3, 4, 1.0, &mut Rng::new(1)).active_count(), 12);
    }
}
