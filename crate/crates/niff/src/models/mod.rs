//! ODE system definitions, forward integration, and synthetic-data
//! generation.
//!
//! Each built-in system provides the vector field `f`, the measurement
//! response `R`, and normalization constants for states, parameters, and
//! measurements. Inference always operates on normalized variables; the
//! `*_scaled` methods wrap the physical model so Hamiltonians stay
//! scale-free, and the harness converts back on output.

mod integrate;
mod series;
mod systems;

pub use integrate::{rk4_integrate, synthesize_dataset, Dataset, NoiseRule, Trajectory};
pub use series::TimeSeries;
pub use systems::{
    bouc_wen_frame, duffing, exp_decay, nes, two_dof_duffing, zero_field, BoucWenFrame, Duffing,
    ExpDecay, Nes, TwoDofDuffing, ZeroField,
};

use crate::diffengine::Scalar;

/// Problem dimensions of an ODE model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_x: usize,
    pub d_theta: usize,
    pub d_y: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("mass m{index} is zero; the mass matrix cannot be inverted")]
    ZeroMass { index: usize },
    #[error("time {t} outside excitation support [{lo}, {hi}]")]
    ExcitationOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("state diverged (non-finite) during integration at t = {t}")]
    Divergence { t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("dataset invalid: {0}")]
    InvalidData(String),
}

/// A dynamical system ẋ = f(x, t; θ) with measurement response R(x, t; θ),
/// plus per-component normalization constants.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub enum OdeModel {
    Duffing(Duffing),
    TwoDofDuffing(TwoDofDuffing),
    BoucWenFrame(BoucWenFrame),
    Nes(Nes),
    /// ẋ = −x with identity measurement; test and oracle system.
    ExpDecay(ExpDecay),
    /// ẋ = 0 with identity measurement; test and oracle system.
    ZeroField(ZeroField),
}

macro_rules! dispatch {
    ($self:ident, $m:ident, $($arg:expr),*) => {
        match $self {
            OdeModel::Duffing(inner) => inner.$m($($arg),*),
            OdeModel::TwoDofDuffing(inner) => inner.$m($($arg),*),
            OdeModel::BoucWenFrame(inner) => inner.$m($($arg),*),
            OdeModel::Nes(inner) => inner.$m($($arg),*),
            OdeModel::ExpDecay(inner) => inner.$m($($arg),*),
            OdeModel::ZeroField(inner) => inner.$m($($arg),*),
        }
    };
}

impl OdeModel {
    pub fn dims(&self) -> Dims {
        dispatch!(self, dims,)
    }

    pub fn state_scale(&self) -> &[f64] {
        dispatch!(self, state_scale,)
    }

    pub fn theta_scale(&self) -> &[f64] {
        dispatch!(self, theta_scale,)
    }

    pub fn y_scale(&self) -> &[f64] {
        dispatch!(self, y_scale,)
    }

    pub fn theta_names(&self) -> Vec<String> {
        dispatch!(self, theta_names,)
    }

    /// Vector field in physical units.
    pub fn f<S: Scalar>(&self, x: &[S], t: f64, theta: &[S]) -> Result<Vec<S>, ModelError> {
        self.check_dims(x.len(), theta.len())?;
        dispatch!(self, f, x, t, theta)
    }

    /// Measurement response in physical units.
    pub fn measure<S: Scalar>(&self, x: &[S], t: f64, theta: &[S]) -> Result<Vec<S>, ModelError> {
        self.check_dims(x.len(), theta.len())?;
        dispatch!(self, measure, x, t, theta)
    }

    /// Vector field on normalized variables: d(x/x̄)/dt given x/x̄ and θ/θ̄.
    pub fn f_scaled<S: Scalar>(
        &self,
        x_norm: &[S],
        t: f64,
        theta_norm: &[S],
    ) -> Result<Vec<S>, ModelError> {
        let xs = self.state_scale();
        let ts = self.theta_scale();
        let x: Vec<S> = x_norm.iter().zip(xs).map(|(&v, &s)| v * s).collect();
        let th: Vec<S> = theta_norm.iter().zip(ts).map(|(&v, &s)| v * s).collect();
        let mut out = self.f(&x, t, &th)?;
        for (o, &s) in out.iter_mut().zip(xs) {
            *o = *o / s;
        }
        Ok(out)
    }

    /// Measurement response on normalized variables, in units of ȳ.
    pub fn measure_scaled<S: Scalar>(
        &self,
        x_norm: &[S],
        t: f64,
        theta_norm: &[S],
    ) -> Result<Vec<S>, ModelError> {
        let xs = self.state_scale();
        let ts = self.theta_scale();
        let x: Vec<S> = x_norm.iter().zip(xs).map(|(&v, &s)| v * s).collect();
        let th: Vec<S> = theta_norm.iter().zip(ts).map(|(&v, &s)| v * s).collect();
        let mut out = self.measure(&x, t, &th)?;
        for (o, &s) in out.iter_mut().zip(self.y_scale()) {
            *o = *o / s;
        }
        Ok(out)
    }

    fn check_dims(&self, x_len: usize, theta_len: usize) -> Result<(), ModelError> {
        let dims = self.dims();
        if x_len != dims.d_x {
            return Err(ModelError::Dim { expected: dims.d_x, got: x_len });
        }
        if theta_len != dims.d_theta {
            return Err(ModelError::Dim { expected: dims.d_theta, got: theta_len });
        }
        Ok(())
    }
}
