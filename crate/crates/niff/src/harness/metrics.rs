//! Posterior-predictive validation metric.

use super::HarnessError;

/// Default displacement variance, m².
pub const DEFAULT_SIGMA_D2: f64 = 1.44e-12;
/// Default acceleration variance, (m/s²)².
pub const DEFAULT_SIGMA_A2: f64 = 5.32e-3;

/// Normalized mean-square error of posterior-predictive displacement and
/// acceleration series against measurements:
///
/// ```text
/// MSE = E over predictive samples of
///       (100/N) Σ_i [ (x_i − X̂_i)²/σ_d² + (ẍ_i − Ẍ̂_i)²/σ_a² ]
/// ```
pub fn mse_metric(
    pred_disp_samples: &[Vec<f64>],
    pred_acc_samples: &[Vec<f64>],
    meas_disp: &[f64],
    meas_acc: &[f64],
    sigma_d2: f64,
    sigma_a2: f64,
) -> Result<f64, HarnessError> {
    let n = meas_disp.len();
    if n == 0 {
        return Err(HarnessError::Invalid("mse metric needs at least one time point".into()));
    }
    if meas_acc.len() != n {
        return Err(HarnessError::Invalid(format!(
            "displacement and acceleration series differ in length: {n} vs {}",
            meas_acc.len()
        )));
    }
    if pred_disp_samples.is_empty() || pred_disp_samples.len() != pred_acc_samples.len() {
        return Err(HarnessError::Invalid(
            "need matching, nonempty predictive sample sets".into(),
        ));
    }
    let mut total = 0.0;
    for (pd, pa) in pred_disp_samples.iter().zip(pred_acc_samples) {
        if pd.len() != n || pa.len() != n {
            return Err(HarnessError::Invalid(format!(
                "predictive sample length {} does not match measurements {n}",
                pd.len()
            )));
        }
        let mut acc = 0.0;
        for i in 0..n {
            let dd = meas_disp[i] - pd[i];
            let da = meas_acc[i] - pa[i];
            acc += dd * dd / sigma_d2 + da * da / sigma_a2;
        }
        total += 100.0 / n as f64 * acc;
    }
    Ok(total / pred_disp_samples.len() as f64)
}
