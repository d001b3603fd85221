use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Scalar};

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / batch` with respect to the logits.
pub fn loss_and_grad<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(f64, Matrix<T>)> {
    let (batch, classes) = logits.shape();
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let mut grad = Matrix::zeros(batch, classes);
    let scale = T::one() / T::from_f64(batch as f64);
    let mut total = T::zero();
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!("label {y} outside {classes} classes")));
        }
        let row = logits.row(b);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total = total + (log_z - row[y]);
        let out = &mut grad.as_mut_slice()[b * classes..(b + 1) * classes];
        for (c, o) in out.iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            let target = if c == y { T::one() } else { T::zero() };
            *o = (p - target) * scale;
        }
    }
    let loss = (total * scale).as_f64();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    Ok((loss, grad))
}

/// Index of the largest logit per row (first index on ties).
pub fn argmax_rows<T: Scalar>(logits: &Matrix<T>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            logits
                .row(r)
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Matrix::<f64>::zeros(3, 10);
        let (loss, _) = loss_and_grad(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_logit_gives_zero_loss() {
        let logits = Matrix::from_vec(1, 3, vec![0.0, 1e4, 0.0]).unwrap();
        let (loss, grad) = loss_and_grad(&logits, &[1]).unwrap();
        assert!(loss < 1e-12);
        assert!(grad.max_abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix::<f64>::zeros(1, 3);
        assert!(matches!(loss_and_grad(&logits, &[3]), Err(Error::Data(_))));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Matrix::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.5, -0.5]).unwrap();
        let (_, g) = loss_and_grad(&logits, &[2, 0]).unwrap();
        for r in 0..2 {
            assert!(g.row(r).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_first_on_ties() {
        let logits = Matrix::from_vec(2, 3, vec![1.0, 1.0, 0.0, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(argmax_rows(&logits), vec![0, 2]);
    }
}
