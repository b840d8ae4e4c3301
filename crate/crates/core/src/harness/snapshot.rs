use crate::error::{LabError, Result};

/// When to pause training and run the attack suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotPlan {
    /// Steps between dense snapshots.
    pub dense_interval: u64,
    /// Dense snapshots happen strictly before this many epochs.
    pub dense_until: f64,
    /// Epochs between sparse snapshots.
    pub sparse_interval: f64,
    pub attacks: Vec<String>,
    pub eval_size: usize,
}

impl Default for SnapshotPlan {
    fn default() -> Self {
        SnapshotPlan {
            dense_interval: 625,
            dense_until: 4.0,
            sparse_interval: 4.0,
            attacks: Vec::new(),
            eval_size: 1000,
        }
    }
}

impl SnapshotPlan {
    pub fn validate(&self) -> Result<()> {
        if self.dense_interval == 0 || !(self.sparse_interval > 0.0) || !(self.dense_until >= 0.0) {
            return Err(LabError::invalid("snapshot intervals must be positive"));
        }
        if self.eval_size == 0 {
            return Err(LabError::invalid("eval_size must be positive"));
        }
        Ok(())
    }
}

/// Sorted, deduplicated step counts after which to evaluate.
///
/// `steps_per_epoch` may be fractional (epoch length over batch size) so
/// epoch boundaries land where the image count says they do.
pub fn snapshot_steps(plan: &SnapshotPlan, steps_per_epoch: f64, total_steps: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let dense_end = plan.dense_until * steps_per_epoch;
    let mut s = plan.dense_interval;
    while (s as f64) < dense_end - 1e-9 && s <= total_steps {
        out.push(s);
        s += plan.dense_interval;
    }
    let mut k = 1u64;
    loop {
        let step = (k as f64 * plan.sparse_interval * steps_per_epoch).round() as u64;
        if step > total_steps {
            break;
        }
        if step > 0 {
            out.push(step);
        }
        k += 1;
    }
    if total_steps > 0 {
        out.push(total_steps);
    }
    out.sort_unstable();
    out.dedup();
    out
}
