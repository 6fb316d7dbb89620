//! Independent oracles used by the test and acceptance suites.
//!
//! Nothing here calls the code paths it validates: gradients come from
//! central finite differences, posteriors from the conjugate-normal formula,
//! and Hamiltonians from exact closed-form integrals.

/// Central finite-difference gradient: (f(x+h·eᵢ) − f(x−h·eᵢ)) / (2h).
///
/// The default step for 64-bit inputs in [−2, 2] is h = 1e−5, balancing
/// truncation against rounding.
pub fn fd_grad<F>(f: F, at: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut x = at.to_vec();
    let mut g = vec![0.0; at.len()];
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Conjugate update for a scalar Gaussian prior and one Gaussian observation.
///
/// Returns the posterior mean and variance. Infinite observation variance
/// returns the prior unchanged; zero prior variance pins the prior mean.
pub fn gaussian_conjugate_posterior(
    prior_mean: f64,
    prior_var: f64,
    obs: f64,
    obs_var: f64,
) -> (f64, f64) {
    assert!(prior_var >= 0.0 && obs_var > 0.0, "variances must be positive");
    if prior_var == 0.0 {
        return (prior_mean, 0.0);
    }
    if obs_var.is_infinite() {
        return (prior_mean, prior_var);
    }
    let precision = 1.0 / prior_var + 1.0 / obs_var;
    let var = 1.0 / precision;
    let mean = var * (prior_mean / prior_var + obs / obs_var);
    (mean, var)
}

/// Exact information Hamiltonian of a constant path under the model ẋ = −x:
/// the residual is ‖0 −(−c)‖² pointwise, so the integral over [0, T] is
/// T·‖c‖².
pub fn exact_h1_constant_path(c: &[f64], horizon: f64) -> f64 {
    horizon * c.iter().map(|v| v * v).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_square() {
        let g = fd_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn fd_norm_sq() {
        let g = fd_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-9);
        assert!((g[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn conjugate_standard_case() {
        let (m, v) = gaussian_conjugate_posterior(0.0, 1.0, 1.0, 1.0);
        assert!((m - 0.5).abs() < 1e-15);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conjugate_uninformative_observation() {
        let (m, v) = gaussian_conjugate_posterior(0.3, 2.0, 99.0, f64::INFINITY);
        assert_eq!((m, v), (0.3, 2.0));
    }

    #[test]
    fn conjugate_degenerate_prior() {
        let (m, _) = gaussian_conjugate_posterior(0.7, 0.0, 99.0, 1.0);
        assert_eq!(m, 0.7);
    }

    #[test]
    fn constant_path_hamiltonian() {
        assert!((exact_h1_constant_path(&[1.0], 2.0) - 2.0).abs() < 1e-15);
        assert_eq!(exact_h1_constant_path(&[0.0, 0.0], 5.0), 0.0);
        // linear in T
        let a = exact_h1_constant_path(&[0.5, -1.5], 1.0);
        let b = exact_h1_constant_path(&[0.5, -1.5], 3.0);
        assert!((b - 3.0 * a).abs() < 1e-12);
    }
}
