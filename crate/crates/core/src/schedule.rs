//! Epoch-indexed budget and margin-threshold schedules. Epochs are 1-based.

use crate::error::{Error, Result};

/// The conventional image-domain ℓ∞ budget.
pub const DEFAULT_EPS_BASE: f64 = 8.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsSchedule {
    Const,
    /// Ramp from 0 to `eps_base` over the first `ramp_epochs` epochs.
    Linear { ramp_epochs: usize },
    /// Ramp to `gamma * eps_base` at `ramp_epochs`, then drop to `eps_base`.
    Curious { gamma: f64, ramp_epochs: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub variant: EpsSchedule,
    pub eps_base: f64,
    pub total_epochs: usize,
}

impl ScheduleSpec {
    pub fn new(variant: EpsSchedule, eps_base: f64, total_epochs: usize) -> Result<Self> {
        let spec = Self {
            variant,
            eps_base,
            total_epochs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::invalid("total_epochs must be positive"));
        }
        // zero is allowed: it degenerates to natural training
        if !(self.eps_base >= 0.0) || !self.eps_base.is_finite() {
            return Err(Error::invalid(format!("eps_base must be >= 0, got {}", self.eps_base)));
        }
        let ramp = match self.variant {
            EpsSchedule::Const => return Ok(()),
            EpsSchedule::Linear { ramp_epochs } => ramp_epochs,
            EpsSchedule::Curious { gamma, ramp_epochs } => {
                if !(gamma >= 1.0) || !gamma.is_finite() {
                    return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
                }
                ramp_epochs
            }
        };
        if ramp == 0 || ramp > self.total_epochs {
            return Err(Error::invalid(format!(
                "ramp length {ramp} outside 1..={}",
                self.total_epochs
            )));
        }
        Ok(())
    }

    /// Upper budget `ε_max` for `epoch`.
    pub fn eps_at(&self, epoch: usize) -> Result<f64> {
        if epoch == 0 || epoch > self.total_epochs {
            return Err(Error::invalid(format!(
                "epoch {epoch} outside 1..={}",
                self.total_epochs
            )));
        }
        let base = self.eps_base;
        Ok(match self.variant {
            EpsSchedule::Const => base,
            EpsSchedule::Linear { ramp_epochs } => {
                if epoch >= ramp_epochs {
                    base
                } else {
                    base * (epoch as f64 / ramp_epochs as f64)
                }
            }
            EpsSchedule::Curious { gamma, ramp_epochs } => {
                if epoch > ramp_epochs {
                    base
                } else if epoch == ramp_epochs {
                    gamma * base
                } else {
                    gamma * base * (epoch as f64 / ramp_epochs as f64)
                }
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoSchedule {
    pub rho_initial: f64,
    pub double_at_epoch: Option<usize>,
}

impl RhoSchedule {
    pub fn constant(rho: f64) -> Self {
        Self {
            rho_initial: rho,
            double_at_epoch: None,
        }
    }

    pub fn validate(&self, total_epochs: usize) -> Result<()> {
        if !(self.rho_initial > 0.0) {
            return Err(Error::invalid(format!("rho must be > 0, got {}", self.rho_initial)));
        }
        if let Some(e) = self.double_at_epoch {
            if e == 0 || e > total_epochs {
                return Err(Error::invalid(format!(
                    "rho doubling epoch {e} outside 1..={total_epochs}"
                )));
            }
        }
        Ok(())
    }

    pub fn rho_at(&self, epoch: usize) -> f64 {
        match self.double_at_epoch {
            Some(e) if epoch >= e => 2.0 * self.rho_initial,
            _ => self.rho_initial,
        }
    }
}
