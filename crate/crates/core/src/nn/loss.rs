use crate::error::{LabError, Result};
use crate::tensor::Tensor;

pub struct CrossEntropy {
    pub mean: f64,
    pub per_example: Vec<f64>,
    /// d(mean loss)/d(logits) = (softmax − onehot) / N.
    pub grad: Tensor,
}

/// Mean softmax cross-entropy with `f64` log-sum-exp accumulation.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<CrossEntropy> {
    let n = logits.batch_size();
    let k = logits.row_len();
    if labels.len() != n {
        return Err(LabError::invalid(format!("{} labels for {n} rows", labels.len())));
    }
    let mut per_example = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n * k);
    let inv_n = 1.0 / n.max(1) as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
        let z: f64 = row.iter().map(|&v| (v as f64 - m).exp()).sum();
        let lse = m + z.ln();
        let loss = lse - row[y] as f64;
        if !loss.is_finite() {
            return Err(LabError::Numerical {
                batch_index: i,
                detail: format!("cross-entropy is {loss}"),
            });
        }
        per_example.push(loss);
        for (j, &v) in row.iter().enumerate() {
            let p = (v as f64 - lse).exp();
            let t = if j == y { 1.0 } else { 0.0 };
            grad.push(((p - t) * inv_n) as f32);
        }
    }
    let mean = per_example.iter().sum::<f64>() * inv_n;
    Ok(CrossEntropy {
        mean,
        per_example,
        grad: Tensor::from_vec(logits.shape(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [2usize, 3, 10] {
            let logits = Tensor::full(&[3, k], 0.7);
            let ce = softmax_cross_entropy(&logits, &[0, 1, k - 1]).unwrap();
            assert!((ce.mean - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_class_tie_gradient_is_softmax_minus_onehot() {
        for z in [-3.0f32, 0.0, 5.5] {
            let logits = Tensor::full(&[1, 2], z);
            let ce = softmax_cross_entropy(&logits, &[0]).unwrap();
            assert!((ce.per_example[0] - 2f64.ln()).abs() < 1e-12);
            assert_eq!(ce.grad.data(), &[-0.5, 0.5]);
        }
    }

    #[test]
    fn overflow_reports_batch_index() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, f32::INFINITY, 0.0]).unwrap();
        match softmax_cross_entropy(&logits, &[0, 1]) {
            Err(LabError::Numerical { batch_index, .. }) => assert_eq!(batch_index, 1),
            other => panic!("expected numerical failure, got {:?}", other.map(|c| c.mean)),
        }
    }

    #[test]
    fn loss_is_non_negative() {
        let logits = Tensor::from_vec(&[2, 3], vec![50.0, -20.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let ce = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        assert!(ce.per_example.iter().all(|&l| l >= 0.0));
    }
}
