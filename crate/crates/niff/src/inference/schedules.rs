//! Step-size, memorizing-size, and partition-annealing schedules.

use serde::{Deserialize, Serialize};

/// Step-size schedule ρ_k. All variants are monotone non-increasing, which
/// is the testable face of the Robbins-Monro requirement; asymptotic
/// summability is a design property of the chosen constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { value: f64 },
    /// ρ_k = init · factor^⌊k/interval⌋ with factor ≤ 1.
    StepDecay { init: f64, factor: f64, interval: u64 },
    /// Geometric interpolation from `init` to `end` over `over` iterations,
    /// held at `end` afterwards.
    ExpDecayTo { init: f64, end: f64, over: u64 },
}

impl LrSchedule {
    pub fn at(&self, it: u64) -> f64 {
        match *self {
            LrSchedule::Constant { value } => value,
            LrSchedule::StepDecay { init, factor, interval } => {
                let k = if interval == 0 { 0 } else { it / interval };
                init * factor.powi(k as i32)
            }
            LrSchedule::ExpDecayTo { init, end, over } => {
                if over == 0 || it >= over {
                    return end;
                }
                let frac = it as f64 / over as f64;
                init * (end / init).powf(frac)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            // a zero constant step is legal: the chain is then stationary
            LrSchedule::Constant { value } => value >= 0.0,
            LrSchedule::StepDecay { init, factor, interval } => {
                init > 0.0 && factor > 0.0 && factor <= 1.0 && interval > 0
            }
            LrSchedule::ExpDecayTo { init, end, over: _ } => init > 0.0 && end > 0.0 && end <= init,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid step-size schedule {self:?}"))
        }
    }
}

/// Memorizing size α: either a fixed value or a linear ramp from `init` to 1
/// over `ramp_iters`, held at 1 afterwards so the preconditioner freezes late
/// in sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Constant { value: f64 },
    RampToOne { init: f64, ramp_iters: u64 },
}

impl AlphaSchedule {
    pub fn constant(value: f64) -> Self {
        AlphaSchedule::Constant { value }
    }

    pub fn at(&self, it: u64) -> f64 {
        match *self {
            AlphaSchedule::Constant { value } => value,
            AlphaSchedule::RampToOne { init, ramp_iters } => {
                if ramp_iters == 0 || it >= ramp_iters {
                    return 1.0;
                }
                init + (1.0 - init) * it as f64 / ramp_iters as f64
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let v = match *self {
            AlphaSchedule::Constant { value } => value,
            AlphaSchedule::RampToOne { init, .. } => init,
        };
        if v > 0.0 && v <= 1.0 {
            Ok(())
        } else {
            Err(format!("memorizing size {v} outside (0, 1]"))
        }
    }
}

/// Ramp λ(it) ∈ [0, 1] multiplying the partition-gradient term of the
/// posterior ELBO: linear from 0 to 1 over `ramp_iters`, 1 afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAnneal {
    pub ramp_iters: u64,
}

impl PartitionAnneal {
    pub fn none() -> Self {
        PartitionAnneal { ramp_iters: 0 }
    }

    pub fn at(&self, it: u64) -> f64 {
        if self.ramp_iters == 0 || it >= self.ramp_iters {
            return 1.0;
        }
        it as f64 / self.ramp_iters as f64
    }
}

/// Bundle of the schedules an experiment uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub lr: LrSchedule,
    pub alpha: AlphaSchedule,
    pub partition: PartitionAnneal,
}
