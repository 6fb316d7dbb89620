//! Posterior-predictive simulation: integrate the model forward per
//! parameter sample and band the resulting ensembles.

use super::summary::{quantile, StateBand};
use super::HarnessError;
use crate::models::{rk4_integrate, OdeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct PredictiveBands {
    pub times: Vec<f64>,
    pub states: Vec<StateBand>,
    pub measurements: Vec<StateBand>,
    /// Samples whose trajectory diverged; they are flagged and excluded, not
    /// fatal.
    pub n_divergent: usize,
}

/// RK4-integrate the model once per θ sample (physical units) from `x_init`
/// over `[0, horizon]` and return pointwise quantile bands for states and
/// noisy measurements.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predictive(
    model: &OdeModel,
    theta_samples: &[Vec<f64>],
    x_init: &[f64],
    horizon: f64,
    dt: f64,
    sigma_y: &[f64],
    noise_seed: u64,
) -> Result<PredictiveBands, HarnessError> {
    if theta_samples.is_empty() {
        return Err(HarnessError::Invalid("posterior predictive needs parameter samples".into()));
    }
    let dims = model.dims();
    if horizon == 0.0 {
        // initial state only
        let mut states = Vec::new();
        for s in 0..dims.d_x {
            states.push(StateBand {
                name: format!("x{}", s + 1),
                q05: vec![x_init[s]],
                q50: vec![x_init[s]],
                q95: vec![x_init[s]],
            });
        }
        let y0 = model.measure(x_init, 0.0, &theta_samples[0])?;
        let measurements = (0..dims.d_y)
            .map(|j| StateBand {
                name: format!("y{}", j + 1),
                q05: vec![y0[j]],
                q50: vec![y0[j]],
                q95: vec![y0[j]],
            })
            .collect();
        return Ok(PredictiveBands {
            times: vec![0.0],
            states,
            measurements,
            n_divergent: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let normal = StandardNormal;
    let mut times: Option<Vec<f64>> = None;
    let mut state_matrix: Vec<Vec<Vec<f64>>> = Vec::new(); // per state, per time, ensemble
    let mut meas_matrix: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut n_divergent = 0;
    for theta in theta_samples {
        let traj = match rk4_integrate(model, x_init, theta, (0.0, horizon), dt) {
            Ok(t) => t,
            Err(_) => {
                n_divergent += 1;
                continue;
            }
        };
        if times.is_none() {
            let n_t = traj.times.len();
            times = Some(traj.times.clone());
            state_matrix = vec![vec![Vec::new(); n_t]; dims.d_x];
            meas_matrix = vec![vec![Vec::new(); n_t]; dims.d_y];
        }
        let mut diverged_measurement = false;
        let mut meas_rows = Vec::with_capacity(traj.times.len());
        for (ti, x) in traj.states.iter().enumerate() {
            match model.measure(x, traj.times[ti], theta) {
                Ok(y) => meas_rows.push(y),
                Err(_) => {
                    diverged_measurement = true;
                    break;
                }
            }
        }
        if diverged_measurement {
            n_divergent += 1;
            continue;
        }
        for (ti, x) in traj.states.iter().enumerate() {
            for s in 0..dims.d_x {
                state_matrix[s][ti].push(x[s]);
            }
            for j in 0..dims.d_y {
                let z: f64 = normal.sample(&mut rng);
                meas_matrix[j][ti].push(meas_rows[ti][j] + sigma_y[j] * z);
            }
        }
    }
    let times = times.ok_or_else(|| {
        HarnessError::Invalid("every predictive sample diverged".into())
    })?;
    let states = state_matrix
        .into_iter()
        .enumerate()
        .map(|(s, m)| band(format!("x{}", s + 1), &m))
        .collect();
    let measurements = meas_matrix
        .into_iter()
        .enumerate()
        .map(|(j, m)| band(format!("y{}", j + 1), &m))
        .collect();
    Ok(PredictiveBands { times, states, measurements, n_divergent })
}

fn band(name: String, per_time: &[Vec<f64>]) -> StateBand {
    StateBand {
        name,
        q05: per_time.iter().map(|v| quantile(v, 0.05)).collect(),
        q50: per_time.iter().map(|v| quantile(v, 0.50)).collect(),
        q95: per_time.iter().map(|v| quantile(v, 0.95)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::duffing;

    #[test]
    fn single_sample_bands_collapse_to_the_trajectory() {
        let model = duffing();
        let theta = vec![0.3, -1.0, 1.0];
        let bands = posterior_predictive(
            &model,
            &[theta.clone()],
            &[1.0, 0.0],
            2.0,
            0.01,
            &[0.0],
            1,
        )
        .unwrap();
        let traj = rk4_integrate(&model, &[1.0, 0.0], &theta, (0.0, 2.0), 0.01).unwrap();
        assert_eq!(bands.times, traj.times);
        for (ti, x) in traj.states.iter().enumerate() {
            assert_eq!(bands.states[0].q05[ti], x[0]);
            assert_eq!(bands.states[0].q50[ti], x[0]);
            assert_eq!(bands.states[0].q95[ti], x[0]);
        }
        assert_eq!(bands.n_divergent, 0);
    }

    #[test]
    fn zero_horizon_returns_the_initial_state() {
        let model = duffing();
        let bands = posterior_predictive(
            &model,
            &[vec![0.3, -1.0, 1.0]],
            &[0.7, -0.1],
            0.0,
            0.01,
            &[0.075],
            1,
        )
        .unwrap();
        assert_eq!(bands.times, vec![0.0]);
        assert_eq!(bands.states[0].q50, vec![0.7]);
        assert_eq!(bands.states[1].q50, vec![-0.1]);
    }

    #[test]
    fn divergent_samples_are_flagged_not_fatal() {
        let model = duffing();
        let good = vec![0.3, -1.0, 1.0];
        let bad = vec![0.0, -1e12, 1e12];
        let bands =
            posterior_predictive(&model, &[good, bad], &[1.0, 0.0], 2.0, 0.05, &[0.075], 3)
                .unwrap();
        assert_eq!(bands.n_divergent, 1);
        assert!(!bands.times.is_empty());
    }
}
