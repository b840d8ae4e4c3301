//! D_mix sampling: every batch holds `round(α·B)` images from the robust set
//! and the rest from the natural set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetHandle;
use crate::error::{LabError, Result};
use crate::tensor::Tensor;
use crate::transforms::{augment_into, AugmentPolicy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixPolicy {
    pub alpha: f64,
    pub batch_size: usize,
    /// Images per epoch; the natural set's size in the usual setup.
    pub epoch_length: usize,
}

impl MixPolicy {
    pub fn new(alpha: f64, batch_size: usize, epoch_length: usize) -> Result<Self> {
        let p = MixPolicy {
            alpha,
            batch_size,
            epoch_length,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LabError::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.batch_size == 0 || self.epoch_length == 0 {
            return Err(LabError::invalid("batch size and epoch length must be positive"));
        }
        Ok(())
    }

    /// Robust images per batch, rounding halves up.
    pub fn robust_per_batch(&self) -> usize {
        ((self.alpha * self.batch_size as f64 + 0.5).floor() as usize).min(self.batch_size)
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.epoch_length.div_ceil(self.batch_size) as u64
    }
}

/// Permutation-without-replacement sampler, reshuffled when exhausted.
#[derive(Clone, Debug)]
struct Shuffled {
    order: Vec<usize>,
    pos: usize,
}

impl Shuffled {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Shuffled { order, pos: 0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

#[derive(Clone, Debug)]
pub struct MixedBatch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// `true` where the image came from the robust set.
    pub robust: Vec<bool>,
    pub step: u64,
    pub epoch: u64,
}

impl MixedBatch {
    pub fn robust_count(&self) -> usize {
        self.robust.iter().filter(|&&r| r).count()
    }
}

/// Endless batch iterator over `(D, D_R)`; epoch indices follow
/// `ceil(epoch_length / B)` steps per epoch.
pub struct MixStream<'a> {
    natural: &'a DatasetHandle,
    robust: Option<&'a DatasetHandle>,
    policy: MixPolicy,
    rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    augment: Option<AugmentPolicy>,
    nat_order: Shuffled,
    rob_order: Option<Shuffled>,
    step: u64,
}

impl<'a> MixStream<'a> {
    pub fn new(natural: &'a DatasetHandle, robust: Option<&'a DatasetHandle>, policy: MixPolicy, seed: u64) -> Result<Self> {
        policy.validate()?;
        let r = policy.robust_per_batch();
        if r > 0 && robust.is_none() {
            return Err(LabError::invalid(format!(
                "alpha {} needs a robust dataset but none was given",
                policy.alpha
            )));
        }
        if r < policy.batch_size && natural.is_empty() {
            return Err(LabError::invalid("natural dataset is empty"));
        }
        if let Some(rob) = robust {
            if rob.shape() != natural.shape() || rob.class_count() != natural.class_count() {
                return Err(LabError::invalid(format!(
                    "robust set {:?}/{} classes does not match natural set {:?}/{} classes",
                    rob.shape(),
                    rob.class_count(),
                    natural.shape(),
                    natural.class_count()
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aug_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let nat_order = Shuffled::new(natural.len(), &mut rng);
        let rob_order = robust.map(|d| Shuffled::new(d.len(), &mut rng));
        Ok(MixStream {
            natural,
            robust,
            policy,
            rng,
            aug_rng,
            augment: None,
            nat_order,
            rob_order,
            step: 0,
        })
    }

    /// Applies `policy` to every emitted image from a dedicated rng stream.
    pub fn with_augment(mut self, policy: AugmentPolicy) -> Self {
        self.augment = Some(policy);
        self
    }

    pub fn policy(&self) -> &MixPolicy {
        &self.policy
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.policy.steps_per_epoch()
    }

    pub fn next_batch(&mut self) -> MixedBatch {
        let b = self.policy.batch_size;
        let r = self.policy.robust_per_batch();
        let mut picks: Vec<(bool, usize)> = Vec::with_capacity(b);
        if let Some(order) = self.rob_order.as_mut() {
            for _ in 0..r {
                picks.push((true, order.next(&mut self.rng)));
            }
        }
        for _ in r..b {
            picks.push((false, self.nat_order.next(&mut self.rng)));
        }
        picks.shuffle(&mut self.rng);

        let shape = self.natural.shape();
        let per = self.natural.image_len();
        let mut data = vec![0.0; b * per];
        let mut labels = Vec::with_capacity(b);
        let mut robust = Vec::with_capacity(b);
        for (slot, &(from_robust, i)) in picks.iter().enumerate() {
            let ds = if from_robust {
                self.robust.expect("robust set present when sampled")
            } else {
                self.natural
            };
            let dst = &mut data[slot * per..(slot + 1) * per];
            match &self.augment {
                Some(p) => augment_into(shape, ds.image(i), p, &mut self.aug_rng, dst),
                None => dst.copy_from_slice(ds.image(i)),
            }
            labels.push(ds.label(i));
            robust.push(from_robust);
        }
        let batch = MixedBatch {
            images: Tensor::from_vec(&[b, shape[0], shape[1], shape[2]], data).expect("batch shape"),
            labels,
            robust,
            step: self.step,
            epoch: self.step / self.steps_per_epoch(),
        };
        self.step += 1;
        batch
    }
}

impl Iterator for MixStream<'_> {
    type Item = MixedBatch;

    fn next(&mut self) -> Option<MixedBatch> {
        Some(self.next_batch())
    }
}
