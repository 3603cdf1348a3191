//! Rotary position embeddings and the global/local attention layer layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Embedding;

pub const DEFAULT_GLOBAL_THETA: f64 = 80_000.0;
pub const DEFAULT_LOCAL_THETA: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub global_theta: f64,
    pub local_theta: f64,
}

impl RopeConfig {
    pub fn new(head_dim: usize) -> Result<Self> {
        let cfg = Self { head_dim, global_theta: DEFAULT_GLOBAL_THETA, local_theta: DEFAULT_LOCAL_THETA };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return Err(Error::config(format!("head_dim must be even and positive, got {}", self.head_dim)));
        }
        for theta in [self.global_theta, self.local_theta] {
            if !(theta.is_finite() && theta > 0.0) {
                return Err(Error::config(format!("rope theta must be positive, got {theta}")));
            }
        }
        Ok(())
    }

    pub fn theta(&self, kind: AttentionKind) -> f64 {
        match kind {
            AttentionKind::Global => self.global_theta,
            AttentionKind::Local => self.local_theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Global,
    Local,
}

/// `theta^(-2k / head_dim)` for `k in 0..head_dim / 2`.
pub fn rope_frequencies(cfg: &RopeConfig, which: AttentionKind) -> Result<Vec<f64>> {
    cfg.validate()?;
    let theta = cfg.theta(which);
    let d = cfg.head_dim as f64;
    Ok((0..cfg.head_dim / 2).map(|k| theta.powf(-2.0 * k as f64 / d)).collect())
}

/// Rotates each adjacent pair `(v[2k], v[2k+1])` by `position * freqs[k]`.
pub fn apply_rope(v: &Embedding, position: u64, freqs: &[f64]) -> Result<Embedding> {
    let mut out = v.values().to_vec();
    rotate_in_place(&mut out, position, freqs)?;
    Embedding::new(out)
}

pub fn rotate_in_place(v: &mut [f64], position: u64, freqs: &[f64]) -> Result<()> {
    if v.len() != 2 * freqs.len() {
        return Err(Error::input(format!(
            "vector of dim {} needs {} frequencies, got {}",
            v.len(),
            v.len() / 2,
            freqs.len()
        )));
    }
    let pos = position as f64;
    for (pair, &f) in v.chunks_exact_mut(2).zip(freqs) {
        let (sin, cos) = (pos * f).sin_cos();
        let (a, b) = (pair[0], pair[1]);
        pair[0] = a * cos - b * sin;
        pair[1] = a * sin + b * cos;
    }
    Ok(())
}

/// Returns a copy with the global theta replaced; local layers keep theirs.
pub fn scale_theta(cfg: &RopeConfig, new_global_theta: f64) -> Result<RopeConfig> {
    if !(new_global_theta.is_finite() && new_global_theta > 0.0) {
        return Err(Error::config(format!("rope theta must be positive, got {new_global_theta}")));
    }
    Ok(RopeConfig { global_theta: new_global_theta, ..*cfg })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub flags: Vec<AttentionKind>,
}

impl LayerSchedule {
    pub fn global_layers(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, k)| **k == AttentionKind::Global).map(|(i, _)| i).collect()
    }
}

/// Global attention on every third layer starting at layer 0.
pub fn attention_schedule(num_layers: usize) -> Result<LayerSchedule> {
    attention_schedule_with(num_layers, 3, 0)
}

/// Global attention on layers `i` with `i % period == offset`.
pub fn attention_schedule_with(num_layers: usize, period: usize, offset: usize) -> Result<LayerSchedule> {
    if num_layers == 0 {
        return Err(Error::input("num_layers must be >= 1"));
    }
    if period == 0 || offset >= period {
        return Err(Error::config(format!("invalid period {period} / offset {offset}")));
    }
    let flags = (0..num_layers)
        .map(|i| if i % period == offset { AttentionKind::Global } else { AttentionKind::Local })
        .collect();
    Ok(LayerSchedule { flags })
}
