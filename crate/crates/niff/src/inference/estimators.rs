//! Shared taped estimator pieces: normalized data, the minibatch
//! log-likelihood, and path-parameter assembly for the reparameterized kind.

use super::InferError;
use crate::diffengine::{Scalar, Tape, Var};
use crate::models::{Dataset, OdeModel};
use crate::paths::{eval_path, PathKind, PathSpec};

const LOG_2PI: f64 = 1.8378770664093453;

/// Measurement data pre-divided by the measurement normalization constants,
/// with the per-point Gaussian normalizer folded into one constant.
#[derive(Debug, Clone)]
pub struct NormalizedData {
    pub times: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Σ_j (−½ ln 2π − ln σ̃_j): the y-independent part of one point's
    /// log-density.
    pub log_norm_const: f64,
}

impl NormalizedData {
    pub fn new(model: &OdeModel, ds: &Dataset) -> Result<Self, InferError> {
        ds.validate()?;
        let d_y = model.dims().d_y;
        if ds.sigma_y.len() != d_y {
            return Err(InferError::Config(format!(
                "dataset has {} noise channels, model measures {d_y}",
                ds.sigma_y.len()
            )));
        }
        let scale = model.y_scale();
        let sigma: Vec<f64> = ds.sigma_y.iter().zip(scale).map(|(s, c)| s / c).collect();
        let y = ds
            .y
            .iter()
            .map(|row| {
                if row.len() != d_y {
                    return Err(InferError::Config(format!(
                        "measurement row has {} channels, expected {d_y}",
                        row.len()
                    )));
                }
                Ok(row.iter().zip(scale).map(|(v, c)| v / c).collect())
            })
            .collect::<Result<_, _>>()?;
        let log_norm_const = sigma.iter().map(|s| -0.5 * LOG_2PI - s.ln()).sum();
        Ok(NormalizedData { times: ds.times.clone(), y, sigma, log_norm_const })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }
}

/// Minibatch log-likelihood (n_d/m_d)·Σ_{k∈idx} log N(y_k | R̃(x̂(t_k; w), t_k,
/// θ), diag σ̃²) in normalized units.
pub fn log_likelihood_minibatch<S: Scalar>(
    model: &OdeModel,
    spec: &PathSpec,
    path_params: &[S],
    theta: &[S],
    data: &NormalizedData,
    idx: &[usize],
) -> Result<S, InferError> {
    if idx.is_empty() {
        return Err(InferError::Config("empty minibatch".into()));
    }
    let mut sum: Option<S> = None;
    for &k in idx {
        let t = data.times[k];
        let x = eval_path(spec, path_params, t)?;
        let r = model.measure_scaled(&x, t, theta)?;
        for (j, rj) in r.into_iter().enumerate() {
            let standardized = (rj - data.y[k][j]) * (1.0 / data.sigma[j]);
            let term = standardized * standardized;
            sum = Some(match sum {
                None => term,
                Some(acc) => acc + term,
            });
        }
    }
    let quad = sum.expect("nonempty minibatch");
    let scale = data.n() as f64 / idx.len() as f64;
    Ok((-(quad * 0.5) + idx.len() as f64 * data.log_norm_const) * scale)
}

/// Dimension of the free path-parameter block the w-guide or w-chain covers.
/// Equal to the full layout except for the reparameterized kind, where the
/// embedded initial-state block is owned by the x0 guide or chain instead.
pub fn phi_dim(spec: &PathSpec) -> usize {
    let layout = spec.layout();
    match spec.kind {
        PathKind::ReparamFourier { .. } => layout.basis.len(),
        _ => layout.total,
    }
}

/// Concatenate the free block with x0 for the reparameterized kind; a plain
/// copy otherwise.
pub(crate) fn assemble_path<'t>(
    spec: &PathSpec,
    w: &[Var<'t>],
    x0: &[Var<'t>],
) -> Vec<Var<'t>> {
    match spec.kind {
        PathKind::ReparamFourier { .. } => w.iter().chain(x0).copied().collect(),
        _ => w.to_vec(),
    }
}

/// Same assembly for plain values.
pub(crate) fn assemble_path_values(spec: &PathSpec, w: &[f64], x0: &[f64]) -> Vec<f64> {
    match spec.kind {
        PathKind::ReparamFourier { .. } => w.iter().chain(x0).copied().collect(),
        _ => w.to_vec(),
    }
}

/// Lift plain values onto the tape as constants (no adjoints flow back).
pub(crate) fn constants<'t>(tape: &'t Tape, values: &[f64]) -> Vec<Var<'t>> {
    values.iter().map(|&v| tape.constant(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::grad;
    use crate::models::{duffing, rk4_integrate, synthesize_dataset, NoiseRule};
    use crate::paths::init_params;
    use crate::verify::fd_grad;

    fn duffing_data() -> (crate::models::OdeModel, NormalizedData) {
        let model = duffing();
        let theta = [0.3, -1.0, 1.0];
        let traj = rk4_integrate(&model, &[1.0, 0.0], &theta, (0.0, 5.0), 0.01).unwrap();
        let ds =
            synthesize_dataset(&model, &traj, 25, NoiseRule::ScaleFraction, 0.05, &theta, 11)
                .unwrap();
        let data = NormalizedData::new(&model, &ds).unwrap();
        (model, data)
    }

    #[test]
    fn full_batch_equals_sum_of_pointwise_terms() {
        let (model, data) = duffing_data();
        let spec = PathSpec::fourier(2, 3, 5.0);
        let w = init_params(&spec, 4);
        let theta = [0.2, -0.8, 0.9];
        let full_idx: Vec<usize> = (0..data.n()).collect();
        let full = log_likelihood_minibatch(&model, &spec, &w, &theta, &data, &full_idx).unwrap();
        let mut acc = 0.0;
        for k in 0..data.n() {
            acc += log_likelihood_minibatch(&model, &spec, &w, &theta, &data, &[k]).unwrap()
                / data.n() as f64;
        }
        assert!((full - acc).abs() < 1e-9 * full.abs());
    }

    #[test]
    fn minibatch_scale_factor() {
        let (model, data) = duffing_data();
        let spec = PathSpec::fourier(2, 3, 5.0);
        let w = init_params(&spec, 4);
        let theta = [0.2, -0.8, 0.9];
        // a single point scales by n_d
        let one = log_likelihood_minibatch(&model, &spec, &w, &theta, &data, &[3]).unwrap();
        let raw = {
            let x = eval_path(&spec, &w, data.times[3]).unwrap();
            let r = model.measure_scaled(&x, data.times[3], &theta).unwrap();
            let z = (r[0] - data.y[3][0]) / data.sigma[0];
            -0.5 * z * z + data.log_norm_const
        };
        assert!((one - data.n() as f64 * raw).abs() < 1e-12 * one.abs().max(1.0));
    }

    #[test]
    fn zero_residual_leaves_only_the_normalizer() {
        // build data whose y equals the path response exactly
        let model = duffing();
        let spec = PathSpec::fourier(2, 1, 1.0);
        let w = vec![0.4, 0.1, -0.2, 0.0, 0.3, 0.2];
        let times = vec![0.2, 0.7];
        let theta = [0.3, -1.0, 1.0];
        let mut y = Vec::new();
        for &t in &times {
            let x = eval_path(&spec, &w, t).unwrap();
            let r = model.measure_scaled(&x, t, &theta).unwrap();
            // convert back to physical units for the dataset
            y.push(vec![r[0] * model.y_scale()[0]]);
        }
        let ds = Dataset { times, y, sigma_y: vec![0.075] };
        let data = NormalizedData::new(&model, &ds).unwrap();
        let ll = log_likelihood_minibatch(&model, &spec, &w, &theta, &data, &[0, 1]).unwrap();
        assert!((ll - 2.0 * data.log_norm_const).abs() < 1e-12);
    }

    #[test]
    fn likelihood_gradients_match_finite_differences() {
        let (model, data) = duffing_data();
        let spec = PathSpec::fourier(2, 2, 5.0);
        let w = init_params(&spec, 21);
        let theta = [0.3, -1.0, 1.0];
        let idx = [0, 2, 5];
        let n_w = w.len();
        let joined: Vec<f64> = w.iter().chain(theta.iter()).copied().collect();
        let g = grad(
            |_, vars| {
                let (wv, th) = vars.split_at(n_w);
                log_likelihood_minibatch(&model, &spec, wv, th, &data, &idx).unwrap()
            },
            &joined,
        )
        .unwrap();
        let fd = fd_grad(
            |vals| {
                let (wv, th) = vals.split_at(n_w);
                log_likelihood_minibatch(&model, &spec, wv, th, &data, &idx).unwrap()
            },
            &joined,
            1e-5,
        );
        for i in 0..joined.len() {
            let rel = (g[i] - fd[i]).abs() / fd[i].abs().max(1.0);
            assert!(rel < 1e-5, "component {i}: {} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn phi_dim_excludes_the_reparam_initial_state() {
        assert_eq!(phi_dim(&PathSpec::fourier(2, 40, 50.0)), 162);
        assert_eq!(phi_dim(&PathSpec::reparam_fourier(2, 40, 50.0)), 160);
    }
}
