use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ndcore::{rng::stream, Matrix, Rng};

/// Gaussian clusters around seeded random centers, clipped to [0, 1].
///
/// Centers are drawn uniformly in [0.2, 0.8]. When `informative` is set, only
/// that many seeded-random features get a class-specific center; the others
/// share one center across classes and carry noise only. When `binary` is
/// set to q, center coordinates are 1 with probability q and 0 otherwise,
/// which gives sparse, stroke-like prototypes. With `modes` > 1 each class
/// is a union of that many clusters, and samples cycle through them.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub n_features: usize,
    pub spread: f64,
    pub seed: u64,
    pub informative: Option<usize>,
    pub binary: Option<f64>,
    pub modes: usize,
}

impl BlobSpec {
    pub fn new(n_classes: usize, n_features: usize, spread: f64, seed: u64) -> Self {
        BlobSpec {
            n_classes,
            n_features,
            spread,
            seed,
            informative: None,
            binary: None,
            modes: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_features == 0 || self.modes == 0 {
            return Err(Error::config("blob counts must be positive"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::config(format!("invalid spread {}", self.spread)));
        }
        if self.binary.is_some_and(|q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::config("binary center probability outside [0, 1]"));
        }
        if self.informative.is_some_and(|k| k == 0 || k > self.n_features) {
            return Err(Error::config("informative feature count out of range"));
        }
        Ok(())
    }

    /// Cluster centers; rows `k * modes .. (k + 1) * modes` belong to class k.
    pub fn centers(&self) -> Matrix<f64> {
        let mut rng = Rng::derive(self.seed, &[stream::DATA, 0]);
        let f = self.n_features;
        let informative: Vec<bool> = match self.informative {
            None => vec![true; f],
            Some(k) => {
                let mut flags = vec![false; f];
                for i in rng.sample_indices(f, k) {
                    flags[i] = true;
                }
                flags
            }
        };
        let binary = self.binary;
        let draw = move |rng: &mut Rng| match binary {
            Some(q) => f64::from(u8::from(rng.uniform() < q)),
            None => rng.uniform_range(0.2, 0.8),
        };
        let shared: Vec<f64> = (0..f).map(|_| draw(&mut rng)).collect();
        let mut c = Matrix::zeros(self.n_classes * self.modes, f);
        for k in 0..self.n_classes * self.modes {
            for j in 0..f {
                let v = if informative[j] {
                    draw(&mut rng)
                } else {
                    shared[j]
                };
                c.set(k, j, v);
            }
        }
        c
    }

    /// `n_per_class` samples per class, grouped by class. The noise stream
    /// depends on the split so train and test draws differ.
    pub fn sample(&self, n_per_class: usize, split: Split) -> Result<Dataset> {
        self.validate()?;
        if n_per_class == 0 {
            return Err(Error::config("n_per_class must be positive"));
        }
        let centers = self.centers();
        let mut rng = Rng::derive(self.seed, &[stream::DATA, 1, split as u64]);
        let n = self.n_classes * n_per_class;
        let f = self.n_features;
        let mut data = Vec::with_capacity(n * f);
        let mut labels = Vec::with_capacity(n);
        for k in 0..self.n_classes {
            for i in 0..n_per_class {
                let center = centers.row(k * self.modes + i % self.modes);
                data.extend(
                    center
                        .iter()
                        .map(|&c| (c + self.spread * rng.normal()).clamp(0.0, 1.0)),
                );
                labels.push(k);
            }
        }
        Dataset::new(Matrix::from_vec(n, f, data)?, labels, self.n_classes, split)
    }
}

pub fn synth_blobs(n_classes: usize, n_features: usize, n_per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    BlobSpec::new(n_classes, n_features, spread, seed).sample(n_per_class, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_blobs(3, 5, 10, 0.1, 4).unwrap();
        let b = synth_blobs(3, 5, 10, 0.1, 4).unwrap();
        assert!(a.features.bitwise_eq(&b.features));
        assert_eq!(a.labels, b.labels);
        let c = synth_blobs(3, 5, 10, 0.1, 5).unwrap();
        assert!(!a.features.bitwise_eq(&c.features));
    }

    #[test]
    fn features_in_unit_range() {
        let d = synth_blobs(4, 6, 50, 2.0, 1).unwrap();
        assert!(d.features.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn uninformative_features_share_centers() {
        let spec = BlobSpec {
            informative: Some(2),
            ..BlobSpec::new(3, 8, 0.1, 2)
        };
        let c = spec.centers();
        let shared = (0..8).filter(|&j| c.get(0, j) == c.get(1, j) && c.get(1, j) == c.get(2, j)).count();
        assert_eq!(shared, 6);
    }

    #[test]
    fn binary_centers() {
        let spec = BlobSpec {
            binary: Some(0.25),
            ..BlobSpec::new(4, 400, 0.1, 3)
        };
        let c = spec.centers();
        assert!(c.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        let on = c.as_slice().iter().filter(|&&v| v == 1.0).count() as f64 / 1600.0;
        assert!((on - 0.25).abs() < 0.05, "{on}");
    }

    #[test]
    fn modes_cycle_within_class() {
        let spec = BlobSpec {
            modes: 3,
            ..BlobSpec::new(2, 5, 0.0, 8)
        };
        let c = spec.centers();
        assert_eq!(c.rows(), 6);
        let d = spec.sample(6, Split::Test).unwrap();
        for i in 0..12 {
            assert_eq!(d.features.row(i), c.row((i / 6) * 3 + i % 3));
        }
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(synth_blobs(0, 3, 3, 0.1, 1).is_err());
        assert!(synth_blobs(2, 3, 0, 0.1, 1).is_err());
    }
}
