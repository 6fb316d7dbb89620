//! The built-in benchmark systems.

use super::{Dims, ModelError, OdeModel, TimeSeries};
use crate::diffengine::Scalar;

/// Single-degree-of-freedom Duffing oscillator driven by a cosine force.
///
/// States (x₁, x₂) = (position, velocity); parameters θ = (k₁, k₂, k₃) are
/// the damping, linear, and cubic stiffness coefficients. The position is
/// measured.
#[derive(Debug, Clone)]
pub struct Duffing {
    /// Forcing amplitude, m.
    pub gamma: f64,
    /// Forcing frequency, rad/s.
    pub omega: f64,
    state_scale: Vec<f64>,
    theta_scale: Vec<f64>,
    y_scale: Vec<f64>,
}

/// Duffing oscillator with the benchmark constants: γ = 0.37 m, ω = 1.2
/// rad/s, scales (x̄₁, x̄₂) = (1.5, 1), k̄ = (1, 1, 1), ȳ = 1.5.
pub fn duffing() -> OdeModel {
    OdeModel::Duffing(Duffing {
        gamma: 0.37,
        omega: 1.2,
        state_scale: vec![1.5, 1.0],
        theta_scale: vec![1.0, 1.0, 1.0],
        y_scale: vec![1.5],
    })
}

impl Duffing {
    pub fn dims(&self) -> Dims {
        Dims { d_x: 2, d_theta: 3, d_y: 1 }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.state_scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &self.theta_scale
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    pub fn theta_names(&self) -> Vec<String> {
        vec!["k1".into(), "k2".into(), "k3".into()]
    }

    pub fn f<S: Scalar>(&self, x: &[S], t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        let (x1, x2) = (x[0], x[1]);
        let (k1, k2, k3) = (th[0], th[1], th[2]);
        let force = self.gamma * (self.omega * t).cos();
        let a = -(k1 * x2) - k2 * x1 - k3 * x1.powi(3) + force;
        Ok(vec![x2, a])
    }

    pub fn measure<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(vec![x[0]])
    }
}

/// Two-degree-of-freedom system: mass m₁ on a linear damper plus
/// linear-plus-cubic spring, mass m₂ coupled through a linear spring and a
/// linear-plus-cubic damper, with sinusoidal forcing on m₁.
///
/// States (q₁, q̇₁, q₂, q̇₂); parameters θ = (m₁, m₂, c₁, c₂, k₁, k₂, ε₁, ε₂);
/// measurements (q₁, q₁+q₂).
#[derive(Debug, Clone)]
pub struct TwoDofDuffing {
    /// Forcing amplitude F₀ (no default; experiment configuration must set it).
    pub f0: f64,
    /// Forcing frequency ω₀.
    pub omega0: f64,
    state_scale: Vec<f64>,
    theta_scale: Vec<f64>,
    y_scale: Vec<f64>,
}

pub fn two_dof_duffing(f0: f64, omega0: f64) -> OdeModel {
    OdeModel::TwoDofDuffing(TwoDofDuffing {
        f0,
        omega0,
        state_scale: vec![1.0; 4],
        theta_scale: vec![1.0; 8],
        y_scale: vec![1.0, 2.0],
    })
}

impl TwoDofDuffing {
    pub fn dims(&self) -> Dims {
        Dims { d_x: 4, d_theta: 8, d_y: 2 }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.state_scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &self.theta_scale
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    pub fn theta_names(&self) -> Vec<String> {
        ["m1", "m2", "c1", "c2", "k1", "k2", "eps1", "eps2"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn f<S: Scalar>(&self, x: &[S], t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        let (q1, q1d, q2, q2d) = (x[0], x[1], x[2], x[3]);
        let (m1, m2) = (th[0], th[1]);
        let (c1, c2) = (th[2], th[3]);
        let (k1, k2) = (th[4], th[5]);
        let (e1, e2) = (th[6], th[7]);
        if m1.val() == 0.0 {
            return Err(ModelError::ZeroMass { index: 1 });
        }
        if m2.val() == 0.0 {
            return Err(ModelError::ZeroMass { index: 2 });
        }
        let force = self.f0 * (self.omega0 * t).sin();
        // M q̈ = F − C q̇ − K q − g_nl with lower-triangular M = [[m1,0],[m2,m2]]
        let nl1 = k1 * e1 * q1.powi(3) - c2 * e2 * q2d.powi(3);
        let nl2 = c2 * e2 * q2d.powi(3);
        let rhs1 = -(c1 * q1d - c2 * q2d) - (k1 * q1 - k2 * q2) - nl1 + force;
        let rhs2 = -(c2 * q2d) - (k2 * q2) - nl2;
        let q1dd = rhs1 / m1;
        let q2dd = (rhs2 - m2 * q1dd) / m2;
        Ok(vec![q1d, q1dd, q2d, q2dd])
    }

    pub fn measure<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(vec![x[0], x[0] + x[2]])
    }
}

/// Multi-story shear frame with Bouc-Wen hysteresis, driven by a ground
/// acceleration record.
///
/// States are the story velocities v₁..v_n followed by the hysteretic
/// displacements z₁..z_n; parameters are the story stiffnesses s₁..s_n.
/// Accelerations are derived and measured per story.
#[derive(Debug, Clone)]
pub struct BoucWenFrame {
    pub n_stories: usize,
    pub ground_accel: TimeSeries,
    /// Bouc-Wen shape parameters. These are fixed constants of the model,
    /// not estimated quantities.
    pub bw_beta: f64,
    pub bw_gamma: f64,
    pub bw_exponent: f64,
    pub masses: Vec<f64>,
    pub dampings: Vec<f64>,
    state_scale: Vec<f64>,
    theta_scale: Vec<f64>,
    y_scale: Vec<f64>,
}

/// Frame with the benchmark constants: unit masses, dampings 0.25 N·s/m,
/// Bouc-Wen (β, γ, n) = (2, 1, 1), stiffness normalization 9 (the midpoint
/// of the U([8, 10]) sampling range for the true stiffnesses).
pub fn bouc_wen_frame(n_stories: usize, ground_accel: TimeSeries) -> OdeModel {
    assert!(n_stories >= 1, "need at least one story");
    OdeModel::BoucWenFrame(BoucWenFrame {
        n_stories,
        ground_accel,
        bw_beta: 2.0,
        bw_gamma: 1.0,
        bw_exponent: 1.0,
        masses: vec![1.0; n_stories],
        dampings: vec![0.25; n_stories],
        state_scale: vec![1.0; 2 * n_stories],
        theta_scale: vec![9.0; n_stories],
        y_scale: vec![1.0; n_stories],
    })
}

impl BoucWenFrame {
    pub fn dims(&self) -> Dims {
        Dims {
            d_x: 2 * self.n_stories,
            d_theta: self.n_stories,
            d_y: self.n_stories,
        }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.state_scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &self.theta_scale
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    pub fn set_y_scale(&mut self, y_scale: Vec<f64>) {
        assert_eq!(y_scale.len(), self.n_stories);
        self.y_scale = y_scale;
    }

    pub fn theta_names(&self) -> Vec<String> {
        (1..=self.n_stories).map(|i| format!("s{i}")).collect()
    }

    /// Story accelerations: a = −a_g·1 − M⁻¹(C v + S z).
    fn accel<S: Scalar>(&self, v: &[S], z: &[S], s: &[S], a_g: f64) -> Vec<S> {
        let n = self.n_stories;
        let c = &self.dampings;
        let mut out = Vec::with_capacity(n);
        for l in 0..n {
            // tridiagonal damping and stiffness rows
            let mut cv = if l + 1 < n {
                v[l] * (c[l] + c[l + 1]) - v[l + 1] * c[l + 1]
            } else {
                v[l] * c[l]
            };
            if l > 0 {
                cv = cv - v[l - 1] * c[l];
            }
            let mut sz = if l + 1 < n {
                s[l] * z[l] + s[l + 1] * (z[l] - z[l + 1])
            } else {
                s[l] * z[l]
            };
            if l > 0 {
                sz = sz - s[l] * z[l - 1];
            }
            out.push(-(cv + sz) / self.masses[l] - a_g);
        }
        out
    }

    fn split<'a, S>(&self, x: &'a [S]) -> (&'a [S], &'a [S]) {
        x.split_at(self.n_stories)
    }

    pub fn f<S: Scalar>(&self, x: &[S], t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        let a_g = self.ground_accel.at(t)?;
        let (v, z) = self.split(x);
        let accel = self.accel(v, z, th, a_g);
        let mut out = accel;
        let (beta, gamma, n_exp) = (self.bw_beta, self.bw_gamma, self.bw_exponent);
        for l in 0..self.n_stories {
            let u = if l == 0 { v[0] } else { v[l] - v[l - 1] };
            let za = z[l].abs();
            let zdot = u - u.abs() * za.powf(n_exp - 1.0) * z[l] * beta - u * za.powf(n_exp) * gamma;
            out.push(zdot);
        }
        Ok(out)
    }

    pub fn measure<S: Scalar>(&self, x: &[S], t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        let a_g = self.ground_accel.at(t)?;
        let (v, z) = self.split(x);
        Ok(self.accel(v, z, th, a_g))
    }
}

/// Nonlinear energy sink device: two independent experiments of the same
/// Duffing-type oscillator with Coulomb damping smoothed as tanh(200·ẋ),
/// stacked into one four-dimensional state so both datasets share the
/// parameters θ = (c_ν, c_f, k, z).
///
/// Measurements are the displacement and relative acceleration of each
/// experiment.
#[derive(Debug, Clone)]
pub struct Nes {
    /// Device mass, kg.
    pub mass: f64,
    pub excitations: [TimeSeries; 2],
    state_scale: Vec<f64>,
    theta_scale: Vec<f64>,
    y_scale: Vec<f64>,
}

/// NES model with the known mass 0.664 kg and unit normalization.
pub fn nes(excitations: [TimeSeries; 2]) -> OdeModel {
    OdeModel::Nes(Nes {
        mass: 0.664,
        excitations,
        state_scale: vec![1.0; 4],
        theta_scale: vec![1.0; 4],
        y_scale: vec![1.0; 4],
    })
}

impl Nes {
    pub fn dims(&self) -> Dims {
        Dims { d_x: 4, d_theta: 4, d_y: 4 }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.state_scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &self.theta_scale
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    pub fn theta_names(&self) -> Vec<String> {
        vec!["c_nu".into(), "c_f".into(), "k".into(), "z".into()]
    }

    /// −(c_ν ẋ + c_f tanh(200 ẋ) + k x + z x³)/m
    fn restoring<S: Scalar>(&self, pos: S, vel: S, th: &[S]) -> S {
        let (c_nu, c_f, k, z) = (th[0], th[1], th[2], th[3]);
        -(c_nu * vel + c_f * (vel * 200.0).tanh() + k * pos + z * pos.powi(3)) / self.mass
    }

    pub fn f<S: Scalar>(&self, x: &[S], t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        let xg1 = self.excitations[0].at(t)?;
        let xg2 = self.excitations[1].at(t)?;
        Ok(vec![
            x[1],
            self.restoring(x[0], x[1], th) - xg1,
            x[3],
            self.restoring(x[2], x[3], th) - xg2,
        ])
    }

    pub fn measure<S: Scalar>(&self, x: &[S], _t: f64, th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(vec![
            x[0],
            self.restoring(x[0], x[1], th),
            x[2],
            self.restoring(x[2], x[3], th),
        ])
    }
}

/// ẋ = −x, identity measurement, no parameters.
#[derive(Debug, Clone)]
pub struct ExpDecay {
    pub dim: usize,
    scale: Vec<f64>,
}

pub fn exp_decay(dim: usize) -> OdeModel {
    OdeModel::ExpDecay(ExpDecay { dim, scale: vec![1.0; dim] })
}

impl ExpDecay {
    pub fn dims(&self) -> Dims {
        Dims { d_x: self.dim, d_theta: 0, d_y: self.dim }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &[]
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn theta_names(&self) -> Vec<String> {
        Vec::new()
    }

    pub fn f<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(x.iter().map(|&v| -v).collect())
    }

    pub fn measure<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(x.to_vec())
    }
}

/// ẋ = 0, identity measurement, no parameters.
#[derive(Debug, Clone)]
pub struct ZeroField {
    pub dim: usize,
    scale: Vec<f64>,
}

pub fn zero_field(dim: usize) -> OdeModel {
    OdeModel::ZeroField(ZeroField { dim, scale: vec![1.0; dim] })
}

impl ZeroField {
    pub fn dims(&self) -> Dims {
        Dims { d_x: self.dim, d_theta: 0, d_y: self.dim }
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn theta_scale(&self) -> &[f64] {
        &[]
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn theta_names(&self) -> Vec<String> {
        Vec::new()
    }

    pub fn f<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(x.iter().map(|&v| v * 0.0).collect())
    }

    pub fn measure<S: Scalar>(&self, x: &[S], _t: f64, _th: &[S]) -> Result<Vec<S>, ModelError> {
        Ok(x.to_vec())
    }
}
