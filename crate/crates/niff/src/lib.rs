//! Neural information field filter: Bayesian reconstruction of ODE state
//! paths and model parameters from noisy measurements.
//!
//! The library parameterizes the unknown state path with a finite basis or a
//! Fourier-encoding residual network, places a relaxed physics-informed
//! conditional prior on the parameterization (an ODE-residual Hamiltonian
//! plus a Gaussian kernel tying the path's initial value to an auxiliary
//! initial state), and approximates the marginal posterior over path and
//! model parameters with either nested stochastic variational inference or
//! nested preconditioned stochastic gradient Langevin dynamics.
//!
//! Module map:
//! - [`diffengine`]: reverse-mode autodiff tape and the [`diffengine::Scalar`]
//!   abstraction shared by plain and taped evaluation.
//! - [`models`]: benchmark ODE systems, RK4 integration, synthetic datasets.
//! - [`paths`]: state-path parameterizations.
//! - [`priors`]: information and kernel Hamiltonians, log-prior estimator.
//! - [`guides`]: Gaussian variational families.
//! - [`inference`]: the optimization and sampling algorithms.
//! - [`harness`]: experiment configuration, CLI entry points, summaries.
//! - [`verify`]: independent oracles for the test suites.

pub mod diffengine;
pub mod guides;
pub mod harness;
pub mod inference;
pub mod models;
pub mod paths;
pub mod priors;
pub mod verify;
