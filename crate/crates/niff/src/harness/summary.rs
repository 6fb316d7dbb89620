//! Posterior summaries: pointwise 5%/50%/95% quantile bands of states over a
//! time grid and of model parameters, in physical units.

use super::HarnessError;
use crate::diffengine::Scalar;
use crate::guides::Guide;
use crate::inference::phi_dim;
use crate::models::OdeModel;
use crate::paths::{eval_path, PathKind, PathSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ParamQuantiles {
    pub name: String,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StateBand {
    pub name: String,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PosteriorSummary {
    pub time_grid: Vec<f64>,
    pub states: Vec<StateBand>,
    pub params: Vec<ParamQuantiles>,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn band_from_matrix(name: String, per_time: &[Vec<f64>]) -> StateBand {
    let q05 = per_time.iter().map(|v| quantile(v, 0.05)).collect();
    let q50 = per_time.iter().map(|v| quantile(v, 0.50)).collect();
    let q95 = per_time.iter().map(|v| quantile(v, 0.95)).collect();
    StateBand { name, q05, q50, q95 }
}

/// Evenly spaced summary grid over [0, horizon].
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect()
}

/// Summarize explicit (w, θ) samples: state bands are quantiles of x̂(t; w)
/// over the grid, converted to physical units; parameter quantiles are
/// converted with the model's normalization constants.
pub fn summarize_samples(
    model: &OdeModel,
    spec: &PathSpec,
    w_samples: &[Vec<f64>],
    theta_samples: &[Vec<f64>],
    time_grid: &[f64],
) -> Result<PosteriorSummary, HarnessError> {
    if w_samples.is_empty() {
        return Err(HarnessError::Invalid("no path samples to summarize".into()));
    }
    let d_x = model.dims().d_x;
    let x_scale = model.state_scale();
    // per state, per time point, the ensemble values
    let mut per_state: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::with_capacity(w_samples.len()); time_grid.len()]; d_x];
    for w in w_samples {
        for (ti, &t) in time_grid.iter().enumerate() {
            let x = eval_path(spec, w, t)?;
            for s in 0..d_x {
                per_state[s][ti].push(x[s].val() * x_scale[s]);
            }
        }
    }
    let states = per_state
        .into_iter()
        .enumerate()
        .map(|(s, m)| band_from_matrix(format!("x{}", s + 1), &m))
        .collect();

    let theta_scale = model.theta_scale();
    let names = model.theta_names();
    let mut params = Vec::new();
    if !theta_samples.is_empty() && !theta_samples[0].is_empty() {
        for (j, name) in names.iter().enumerate() {
            let vals: Vec<f64> =
                theta_samples.iter().map(|th| th[j] * theta_scale[j]).collect();
            params.push(ParamQuantiles {
                name: name.clone(),
                q05: quantile(&vals, 0.05),
                q50: quantile(&vals, 0.50),
                q95: quantile(&vals, 0.95),
            });
        }
    }
    Ok(PosteriorSummary { time_grid: time_grid.to_vec(), states, params })
}

/// Summarize variational guides by drawing samples: `chi` supplies the
/// embedded initial state for the reparameterized kind, `psi` the model
/// parameters when present.
#[allow(clippy::too_many_arguments)]
pub fn summarize_guide(
    model: &OdeModel,
    spec: &PathSpec,
    phi: &Guide,
    chi: Option<&Guide>,
    psi: Option<&Guide>,
    n_draws: usize,
    seed: u64,
    time_grid: &[f64],
) -> Result<PosteriorSummary, HarnessError> {
    if phi.dim() != phi_dim(spec) {
        return Err(HarnessError::Invalid("guide does not match the path layout".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reparam = matches!(spec.kind, PathKind::ReparamFourier { .. });
    if reparam && chi.is_none() {
        return Err(HarnessError::Invalid(
            "reparameterized path needs the initial-state guide to summarize".into(),
        ));
    }
    let mut w_samples = Vec::with_capacity(n_draws);
    let mut theta_samples = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut w = phi.draw(&mut rng);
        if reparam {
            w.extend(chi.unwrap().draw(&mut rng));
        }
        w_samples.push(w);
        if let Some(psi) = psi {
            theta_samples.push(psi.draw(&mut rng));
        }
    }
    summarize_samples(model, spec, &w_samples, &theta_samples, time_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::duffing;
    use proptest::prelude::*;

    #[test]
    fn quantile_of_three_values() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.0), 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }

    #[test]
    fn degenerate_ensemble_collapses_the_band() {
        let model = duffing();
        let spec = PathSpec::fourier(2, 2, 4.0);
        let w = crate::paths::init_params(&spec, 1);
        let grid = uniform_grid(4.0, 7);
        let s = summarize_samples(&model, &spec, &[w.clone(), w.clone(), w], &[], &grid).unwrap();
        for band in &s.states {
            for i in 0..grid.len() {
                assert_eq!(band.q05[i], band.q50[i]);
                assert_eq!(band.q50[i], band.q95[i]);
            }
        }
        assert!(s.params.is_empty());
    }

    #[test]
    fn parameter_quantiles_are_physical() {
        let model = duffing();
        let spec = PathSpec::fourier(2, 1, 4.0);
        let w = crate::paths::init_params(&spec, 2);
        // normalized theta samples 1, 2, 3 -> physical quantiles via unit scales
        let thetas = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]];
        let s = summarize_samples(&model, &spec, &[w], &thetas, &[0.0, 1.0]).unwrap();
        assert_eq!(s.params[0].name, "k1");
        assert_eq!(s.params[0].q50, 2.0);
    }

    #[test]
    fn guide_summary_with_tiny_spread_matches_the_mean_path() {
        let model = duffing();
        let spec = PathSpec::fourier(2, 2, 4.0);
        let n = spec.n_params();
        let mut phi = Guide::diag(n, 1e-12);
        let mut flat = phi.flat();
        for (i, v) in flat.iter_mut().enumerate().take(n) {
            *v = 0.1 * (i as f64 - 2.0);
        }
        phi.set_flat(&flat);
        let grid = uniform_grid(4.0, 5);
        let s = summarize_guide(&model, &spec, &phi, None, None, 50, 9, &grid).unwrap();
        let mean_path: Vec<Vec<f64>> = grid
            .iter()
            .map(|&t| eval_path(&spec, phi.mean(), t).unwrap())
            .collect();
        for (ti, x) in mean_path.iter().enumerate() {
            for s_i in 0..2 {
                let physical = x[s_i] * model.state_scale()[s_i];
                assert!((s.states[s_i].q50[ti] - physical).abs() < 1e-6);
            }
        }
    }

    proptest! {
        // q05 <= q50 <= q95 always
        #[test]
        fn quantiles_are_ordered(values in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let a = quantile(&values, 0.05);
            let b = quantile(&values, 0.50);
            let c = quantile(&values, 0.95);
            prop_assert!(a <= b && b <= c);
        }
    }
}
