use crate::error::{LabError, Result};
use crate::nn::ModelGraph;
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum and coupled weight decay:
/// `v ← μ·v + g + λ·p`, `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(model: &ModelGraph, momentum: f32, weight_decay: f32) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: model.params().iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    /// Applies one update. On a non-finite result nothing is modified.
    pub fn step(&mut self, model: &mut ModelGraph, grads: &[Tensor], lr: f32) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return Err(LabError::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.velocity.len()
            )));
        }
        let mut next_v = Vec::with_capacity(grads.len());
        let mut next_p = Vec::with_capacity(grads.len());
        for (i, (param, grad)) in model.params().iter().zip(grads).enumerate() {
            if grad.shape() != param.value.shape() {
                return Err(LabError::invalid(format!(
                    "gradient {:?} for parameter {} {:?}",
                    grad.shape(),
                    param.name,
                    param.value.shape()
                )));
            }
            let mut v = self.velocity[i].clone();
            let mut p = param.value.data().to_vec();
            for ((v, p), &g) in v.iter_mut().zip(p.iter_mut()).zip(grad.data()) {
                *v = self.momentum * *v + g + self.weight_decay * *p;
                *p -= lr * *v;
            }
            if !p.iter().chain(&v).all(|x| x.is_finite()) {
                return Err(LabError::Numerical {
                    batch_index: 0,
                    detail: format!("non-finite update for parameter {}", param.name),
                });
            }
            next_v.push(v);
            next_p.push(p);
        }
        for (param, p) in model.params_mut().iter_mut().zip(next_p) {
            param.value.data_mut().copy_from_slice(&p);
        }
        self.velocity = next_v;
        Ok(())
    }
}
