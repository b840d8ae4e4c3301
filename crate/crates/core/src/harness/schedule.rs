use crate::error::{LabError, Result};
use crate::transforms::AugmentPolicy;

/// Step decay by a factor of 10.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// Decay after each listed iteration count.
    Milestones(Vec<u64>),
    /// Decay every `n` epochs.
    EpochPeriod(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub epochs: f64,
    pub schedule: Schedule,
    /// `none`, `std` or `std*`.
    pub augmentation: String,
    pub seed: u64,
}

impl Hyperparams {
    /// Batch 64, weight decay 2e-4, decay at 40k and 60k iterations, `std`.
    pub fn dynamics_recipe() -> Self {
        Hyperparams {
            batch_size: 64,
            lr: 0.1,
            weight_decay: 2e-4,
            momentum: 0.9,
            epochs: 100.0,
            schedule: Schedule::Milestones(vec![40_000, 60_000]),
            augmentation: "std".into(),
            seed: 0,
        }
    }

    /// Batch 128, weight decay 5e-4, decay every 50 epochs over 150 epochs.
    pub fn mixing_recipe() -> Self {
        Hyperparams {
            batch_size: 128,
            lr: 0.1,
            weight_decay: 5e-4,
            momentum: 0.9,
            epochs: 150.0,
            schedule: Schedule::EpochPeriod(50),
            augmentation: "std".into(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(LabError::invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(LabError::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(LabError::invalid("weight_decay must be >= 0 and momentum in [0, 1)"));
        }
        if !(self.epochs > 0.0 && self.epochs.is_finite()) {
            return Err(LabError::invalid("epochs must be positive"));
        }
        match &self.schedule {
            Schedule::Milestones(m) if m.windows(2).any(|w| w[0] >= w[1]) => {
                return Err(LabError::invalid(format!("milestones {m:?} must be strictly increasing")));
            }
            Schedule::EpochPeriod(0) => return Err(LabError::invalid("epoch period must be positive")),
            _ => {}
        }
        self.augment_policy()?;
        Ok(())
    }

    pub fn augment_policy(&self) -> Result<AugmentPolicy> {
        AugmentPolicy::by_name(&self.augmentation)
            .ok_or_else(|| LabError::invalid(format!("unknown augmentation policy {:?}", self.augmentation)))
    }
}

/// Learning rate at 0-based `iteration` within 0-based `epoch`.
pub fn lr_at(hyper: &Hyperparams, iteration: u64, epoch: u64) -> f64 {
    let decays = match &hyper.schedule {
        Schedule::Milestones(m) => m.iter().filter(|&&s| iteration >= s).count() as i32,
        Schedule::EpochPeriod(p) => (epoch / p) as i32,
    };
    hyper.lr * 0.1f64.powi(decays)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs()
    }

    #[test]
    fn milestone_schedule() {
        let h = Hyperparams::dynamics_recipe();
        assert!(close(lr_at(&h, 39_999, 0), 0.1));
        assert!(close(lr_at(&h, 40_000, 0), 0.01));
        assert!(close(lr_at(&h, 60_000, 0), 0.001));
    }

    #[test]
    fn epoch_period_schedule() {
        let h = Hyperparams::mixing_recipe();
        assert!(close(lr_at(&h, 0, 49), 0.1));
        assert!(close(lr_at(&h, 0, 50), 0.01));
        assert!(close(lr_at(&h, 0, 100), 0.001));
        assert!(close(lr_at(&h, 0, 149), 0.001));
    }

    #[test]
    fn no_milestones_is_constant() {
        let h = Hyperparams {
            schedule: Schedule::Milestones(vec![]),
            ..Hyperparams::dynamics_recipe()
        };
        assert_eq!(lr_at(&h, 0, 0), lr_at(&h, 1_000_000, 500));
    }

    #[test]
    fn validation() {
        assert!(Hyperparams::dynamics_recipe().validate().is_ok());
        let bad = Hyperparams {
            schedule: Schedule::Milestones(vec![5, 5]),
            ..Hyperparams::dynamics_recipe()
        };
        assert!(bad.validate().is_err());
        let bad = Hyperparams {
            augmentation: "fancy".into(),
            ..Hyperparams::dynamics_recipe()
        };
        assert!(bad.validate().is_err());
    }
}
