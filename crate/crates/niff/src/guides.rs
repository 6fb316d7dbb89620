//! Variational families with reparameterized sampling.
//!
//! Two families are provided: a diagonal Gaussian (scales kept in log-space)
//! and a full-rank Gaussian (Cholesky factor with log-space diagonal, so the
//! covariance is symmetric positive definite by construction).
//!
//! Sampling and log-density are generic over [`Scalar`]: evaluated on tape
//! variables they expose the full pathwise dependence on the variational
//! parameters, which is exactly what the reparameterization-trick gradient
//! estimators differentiate.

use crate::diffengine::Scalar;
use rand::Rng;
use rand_distr::StandardNormal;

const LOG_2PI: f64 = 1.8378770664093453;

/// Mean-field Gaussian: independent components with log-space scales.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

/// Gaussian with a dense lower-triangular Cholesky factor. The factor is
/// packed row-major; diagonal entries are stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRankGaussian {
    pub mu: Vec<f64>,
    pub packed: Vec<f64>,
}

fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// A variational guide of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Guide {
    Diag(DiagGaussian),
    FullRank(FullRankGaussian),
}

impl Guide {
    /// Diagonal guide at μ = 0, σ = `sigma0`.
    pub fn diag(n: usize, sigma0: f64) -> Self {
        assert!(sigma0 > 0.0);
        Guide::Diag(DiagGaussian { mu: vec![0.0; n], log_sigma: vec![sigma0.ln(); n] })
    }

    /// Full-rank guide at μ = 0, L = `sigma0`·I.
    pub fn full_rank(n: usize, sigma0: f64) -> Self {
        assert!(sigma0 > 0.0);
        let mut packed = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            packed[tri_index(i, i)] = sigma0.ln();
        }
        Guide::FullRank(FullRankGaussian { mu: vec![0.0; n], packed })
    }

    /// Default initialization: small spread keeps early Hamiltonian
    /// evaluations finite.
    pub fn init_diag(n: usize) -> Self {
        Guide::diag(n, 0.1)
    }

    pub fn init_full_rank(n: usize) -> Self {
        Guide::full_rank(n, 0.1)
    }

    /// Dimension of the sampled variable.
    pub fn dim(&self) -> usize {
        match self {
            Guide::Diag(g) => g.mu.len(),
            Guide::FullRank(g) => g.mu.len(),
        }
    }

    /// Number of variational parameters in the flat layout.
    pub fn n_params(&self) -> usize {
        match self {
            Guide::Diag(g) => 2 * g.mu.len(),
            Guide::FullRank(g) => g.mu.len() + g.packed.len(),
        }
    }

    /// Flat view: means first, then scales (log-σ or packed Cholesky).
    pub fn flat(&self) -> Vec<f64> {
        match self {
            Guide::Diag(g) => g.mu.iter().chain(&g.log_sigma).copied().collect(),
            Guide::FullRank(g) => g.mu.iter().chain(&g.packed).copied().collect(),
        }
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        match self {
            Guide::Diag(g) => {
                let n = g.mu.len();
                g.mu.copy_from_slice(&flat[..n]);
                g.log_sigma.copy_from_slice(&flat[n..]);
            }
            Guide::FullRank(g) => {
                let n = g.mu.len();
                g.mu.copy_from_slice(&flat[..n]);
                g.packed.copy_from_slice(&flat[n..]);
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Guide::Diag(g) => &g.mu,
            Guide::FullRank(g) => &g.mu,
        }
    }

    /// Reparameterized sample z = g_φ(ε) evaluated on caller-supplied
    /// parameter values (typically tape variables mirroring [`Guide::flat`]).
    pub fn sample_with<S: Scalar>(&self, params: &[S], eps: &[f64]) -> Vec<S> {
        let n = self.dim();
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(eps.len(), n);
        match self {
            Guide::Diag(_) => (0..n)
                .map(|i| params[i] + params[n + i].exp() * eps[i])
                .collect(),
            Guide::FullRank(_) => {
                let packed = &params[n..];
                (0..n)
                    .map(|i| {
                        let mut z = params[i];
                        for j in 0..i {
                            z = z + packed[tri_index(i, j)] * eps[j];
                        }
                        z + packed[tri_index(i, i)].exp() * eps[i]
                    })
                    .collect()
            }
        }
    }

    /// Exact Gaussian log-density at `z`, with parameters supplied the same
    /// way as [`Guide::sample_with`].
    pub fn log_density_with<S: Scalar>(&self, params: &[S], z: &[S]) -> S {
        let n = self.dim();
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(z.len(), n);
        match self {
            Guide::Diag(_) => {
                let mut acc = (z[0] - params[0]) * (-params[n]).exp();
                let mut quad = acc * acc;
                let mut logdet = params[n];
                for i in 1..n {
                    acc = (z[i] - params[i]) * (-params[n + i]).exp();
                    quad = quad + acc * acc;
                    logdet = logdet + params[n + i];
                }
                -(quad * 0.5) - logdet - 0.5 * n as f64 * LOG_2PI
            }
            Guide::FullRank(_) => {
                let packed = &params[n..];
                // forward substitution: L v = z − μ
                let mut v: Vec<S> = Vec::with_capacity(n);
                let mut logdet = packed[tri_index(0, 0)];
                for i in 0..n {
                    let mut rhs = z[i] - params[i];
                    for j in 0..i {
                        rhs = rhs - packed[tri_index(i, j)] * v[j];
                    }
                    let log_diag = packed[tri_index(i, i)];
                    if i > 0 {
                        logdet = logdet + log_diag;
                    }
                    v.push(rhs * (-log_diag).exp());
                }
                let mut quad = v[0] * v[0];
                for vi in &v[1..] {
                    quad = quad + *vi * *vi;
                }
                -(quad * 0.5) - logdet - 0.5 * n as f64 * LOG_2PI
            }
        }
    }

    /// Plain-valued sample from this guide's own parameters.
    pub fn sample_values(&self, eps: &[f64]) -> Vec<f64> {
        let flat = self.flat();
        self.sample_with(&flat, eps)
    }

    /// Plain-valued log-density at `z` under this guide's own parameters.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let flat = self.flat();
        self.log_density_with(&flat, z)
    }

    /// Draw a sample, consuming `dim` standard normals from the rng.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let eps = standard_normal_vec(self.dim(), rng);
        self.sample_values(&eps)
    }
}

/// i.i.d. standard normal vector.
pub fn standard_normal_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Σᵢ −½zᵢ² − ½ln(2π): the standard-normal log prior used for normalized
/// parameters and auxiliary initial states.
pub fn standard_normal_log_prior<S: Scalar>(z: &[S]) -> S {
    debug_assert!(!z.is_empty());
    let mut quad = z[0] * z[0];
    for zi in &z[1..] {
        quad = quad + *zi * *zi;
    }
    -(quad * 0.5) - 0.5 * z.len() as f64 * LOG_2PI
}
