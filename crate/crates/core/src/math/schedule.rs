use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Warmup-stable-decay schedule with a `1 - sqrt` decay tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrScheduleConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub stable_steps: u64,
    pub decay_steps: u64,
    pub decay_start_lr: f64,
}

impl Default for LrScheduleConfig {
    fn default() -> Self {
        Self { peak_lr: 8e-4, warmup_steps: 1_000, stable_steps: 10_000, decay_steps: 1_000, decay_start_lr: 3e-4 }
    }
}

impl LrScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::config("peak_lr must be positive"));
        }
        if !(self.decay_start_lr.is_finite() && self.decay_start_lr > 0.0) {
            return Err(Error::config("decay_start_lr must be positive"));
        }
        if self.warmup_steps + self.stable_steps + self.decay_steps == 0 {
            return Err(Error::config("schedule has no steps"));
        }
        Ok(())
    }
}

/// Learning rate at `step`: linear warmup from 0 to `peak_lr`, constant
/// `peak_lr`, then `decay_start_lr * (1 - sqrt(t / decay_steps))`. Zero
/// once the schedule is exhausted.
pub fn lr_at_step(step: u64, cfg: &LrScheduleConfig) -> f64 {
    let warm = cfg.warmup_steps;
    let stable_end = warm + cfg.stable_steps;
    let decay_end = stable_end + cfg.decay_steps;
    if step < warm {
        cfg.peak_lr * step as f64 / warm as f64
    } else if step < stable_end {
        cfg.peak_lr
    } else if step < decay_end {
        let t = (step - stable_end) as f64 / cfg.decay_steps as f64;
        cfg.decay_start_lr * (1.0 - t.sqrt())
    } else {
        0.0
    }
}
