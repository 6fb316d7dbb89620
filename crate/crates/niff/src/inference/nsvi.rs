//! Stochastic variational inference on the conditional prior (the inner
//! loop) and nested SVI on the marginal posterior (the outer loop).
//!
//! The outer iteration draws one reparameterized sample of each latent
//! block, advances the persistent auxiliary guide a few steps against the
//! conditional prior at the sampled (x0, θ), and then ascends a five-term
//! surrogate objective whose gradient is the published estimator:
//! minibatch likelihood, Hamiltonian terms, latent log-prior, guide entropy,
//! and the partition correction built from auxiliary-guide samples treated
//! as constants. The partition correction is multiplied by an annealing
//! ramp λ(it).

use super::adam::{adam_step, AdamParams, AdamState};
use super::estimators::{assemble_path, constants, log_likelihood_minibatch, phi_dim};
use super::schedules::{LrSchedule, PartitionAnneal};
use super::{EstimationMode, InferError, Problem, Workspace};
use crate::diffengine::Var;
use crate::guides::{standard_normal_log_prior, standard_normal_vec, Guide};
use crate::models::OdeModel;
use crate::paths::PathSpec;
use crate::priors::{log_pi_estimate, sample_times, PriorConfig};
use rand_chacha::ChaCha8Rng;

/// Monte Carlo sample counts: (n_εηζ, n_t, ñ_ε, ñ_t, m_y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsviSizes {
    /// Joint draws of (ε, η, ζ) per outer iteration.
    pub n_eez: usize,
    /// Hamiltonian time samples per outer draw.
    pub n_t: usize,
    /// Guide samples per inner-loop step.
    pub aux_eps: usize,
    /// Time samples per inner-loop step, and per auxiliary sample in the
    /// partition correction.
    pub aux_t: usize,
    /// Minibatch size.
    pub m_y: usize,
    /// Auxiliary-guide samples for the partition correction.
    pub n_w_tilde: usize,
}

impl NsviSizes {
    /// The benchmark default (1, 10, 1, 10, 10) with one auxiliary sample.
    pub fn reference() -> Self {
        NsviSizes { n_eez: 1, n_t: 10, aux_eps: 1, aux_t: 10, m_y: 10, n_w_tilde: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsviOpts {
    pub niter: u64,
    pub niter_auxi: u64,
    pub sizes: NsviSizes,
    pub lr: LrSchedule,
    /// Constant Adam step size of the inner loop.
    pub inner_lr: f64,
    pub partition: PartitionAnneal,
    pub adam: AdamParams,
    /// Trace interval in iterations; 0 disables tracing.
    pub trace_every: u64,
    pub mode: EstimationMode,
}

/// Variational state: guides over w (φ), θ (ψ), x0 (χ), the persistent
/// auxiliary guide over w̃ (φ̃), and Adam moments for the outer and inner
/// problems.
#[derive(Debug, Clone)]
pub struct NsviState {
    pub phi: Guide,
    pub psi: Guide,
    pub chi: Guide,
    pub phi_tilde: Guide,
    pub moments: AdamState,
    pub aux_moments: AdamState,
    pub iter: u64,
}

impl NsviState {
    /// Reference guide families: diagonal over w, x0, and w̃; full-rank over
    /// θ. The w-guide means start at a drawn path initialization (zero
    /// output layer, Glorot hidden layers) rather than all zeros, which a
    /// residual network needs to have usable features to train.
    pub fn init(model: &OdeModel, spec: &PathSpec, mode: &EstimationMode, seed: u64) -> Self {
        let dims = model.dims();
        let n_w = phi_dim(spec);
        let mut phi = Guide::init_diag(n_w);
        // parameters start at their nominal scale (normalized value 1); a
        // zero mean would put mass-like parameters at a singular point
        let mut psi = Guide::init_full_rank(dims.d_theta);
        if let Guide::FullRank(g) = &mut psi {
            g.mu.fill(1.0);
        }
        let chi = Guide::init_diag(dims.d_x);
        let mut phi_tilde = Guide::init_diag(n_w);
        let w0 = crate::paths::init_params(spec, seed);
        if let Guide::Diag(g) = &mut phi {
            g.mu.copy_from_slice(&w0[..n_w]);
        }
        let w0_tilde = crate::paths::init_params(spec, seed.wrapping_add(1));
        if let Guide::Diag(g) = &mut phi_tilde {
            g.mu.copy_from_slice(&w0_tilde[..n_w]);
        }
        let outer_dim = match mode {
            EstimationMode::Joint => phi.n_params() + psi.n_params() + chi.n_params(),
            EstimationMode::FilterOnly { .. } => phi.n_params(),
        };
        NsviState {
            moments: AdamState::new(outer_dim),
            aux_moments: AdamState::new(phi_tilde.n_params()),
            phi,
            psi,
            chi,
            phi_tilde,
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsviTraceRow {
    pub iter: u64,
    pub like: f64,
    pub ham: f64,
    pub prior: f64,
    pub entropy: f64,
    pub partition: f64,
    /// Current ψ mean (normalized units); empty in filter-only mode.
    pub theta_mean: Vec<f64>,
    /// Current χ mean (normalized units); empty in filter-only mode.
    pub x0_mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NsviResult {
    pub state: NsviState,
    pub trace: Vec<NsviTraceRow>,
}

/// Primal values of the surrogate terms, for tracing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct TermValues {
    pub like: f64,
    pub ham: f64,
    pub prior: f64,
    pub entropy: f64,
    pub partition: f64,
}

/// One inner-loop gradient estimate: value and gradient of the prior ELBO
/// surrogate at the guide's current parameters.
#[allow(clippy::too_many_arguments)]
pub(crate) fn svi_prior_gradient(
    model: &OdeModel,
    spec: &PathSpec,
    prior: &PriorConfig,
    x0: &[f64],
    theta: &[f64],
    guide: &Guide,
    n_eps: usize,
    n_t: usize,
    ws: &mut Workspace,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>), InferError> {
    let tape = &ws.tape;
    tape.clear();
    let flat = guide.flat();
    let inputs = tape.vars(&flat);
    let x0c = constants(tape, x0);
    let thc = constants(tape, theta);
    let mut obj: Option<Var<'_>> = None;
    for _ in 0..n_eps {
        let eps = standard_normal_vec(guide.dim(), rng);
        let times = sample_times(prior, n_t, rng)?;
        let w = guide.sample_with(&inputs, &eps);
        let path = assemble_path(spec, &w, &x0c);
        let lp = log_pi_estimate(prior, model, spec, &path, &x0c, &thc, &times)?;
        let lq = guide.log_density_with(&inputs, &w);
        let term = lp - lq;
        obj = Some(match obj {
            None => term,
            Some(acc) => acc + term,
        });
    }
    let root = obj.expect("n_eps >= 1") / n_eps as f64;
    tape.backward_into(root, &mut ws.adj)?;
    Ok((root.value(), ws.adj[..flat.len()].to_vec()))
}

/// SVI approximation to the relaxed conditional prior p(w | x0, θ): `niter`
/// Adam ascent steps on the prior ELBO, updating `guide` and `moments` in
/// place. Calling this twice for n and m iterations with a continuous rng
/// stream is identical to calling it once for n+m.
#[allow(clippy::too_many_arguments)]
pub fn svi_prior(
    model: &OdeModel,
    spec: &PathSpec,
    prior: &PriorConfig,
    x0: &[f64],
    theta: &[f64],
    guide: &mut Guide,
    moments: &mut AdamState,
    niter: u64,
    n_eps: usize,
    n_t: usize,
    lr: f64,
    adam: AdamParams,
    ws: &mut Workspace,
    rng: &mut ChaCha8Rng,
) -> Result<(), InferError> {
    if n_eps == 0 {
        return Err(InferError::Config("n_eps must be >= 1".into()));
    }
    let mut flat = guide.flat();
    for it in 0..niter {
        let (_, mut g) =
            svi_prior_gradient(model, spec, prior, x0, theta, guide, n_eps, n_t, ws, rng)
                .map_err(|e| e.at_iter(it))?;
        for gi in g.iter_mut() {
            *gi = -*gi; // ascend
        }
        flat.copy_from_slice(&guide.flat());
        adam_step(&mut flat, &g, moments, lr, adam);
        guide.set_flat(&flat);
    }
    Ok(())
}

/// Explicit Monte Carlo draws for one outer NSVI iteration.
pub(crate) struct OuterSamples {
    pub eps: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    /// Per outer draw, the auxiliary samples w̃ (treated as constants).
    pub w_tilde: Vec<Vec<Vec<f64>>>,
    pub times: Vec<Vec<f64>>,
    /// Per outer draw and auxiliary sample, the t̃ samples.
    pub t_tilde: Vec<Vec<Vec<f64>>>,
    pub idx: Vec<usize>,
}

/// Build the five-term posterior surrogate at the guides' current parameters
/// and return the term values plus the gradient with respect to the flat
/// concatenation [φ | ψ | χ].
#[allow(clippy::too_many_arguments)]
pub(crate) fn posterior_surrogate_grad(
    prob: &Problem<'_>,
    phi: &Guide,
    psi: &Guide,
    chi: &Guide,
    samples: &OuterSamples,
    lambda: f64,
    ws: &mut Workspace,
) -> Result<(TermValues, Vec<f64>), InferError> {
    let n_eez = samples.eps.len();
    let d_theta = psi.dim();
    let tape = &ws.tape;
    tape.clear();

    let flat_phi = phi.flat();
    let flat_psi = psi.flat();
    let flat_chi = chi.flat();
    let p_phi = tape.vars(&flat_phi);
    let p_psi = tape.vars(&flat_psi);
    let p_chi = tape.vars(&flat_chi);
    let total = flat_phi.len() + flat_psi.len() + flat_chi.len();

    let mut like: Option<Var<'_>> = None;
    let mut ham: Option<Var<'_>> = None;
    let mut prior_t: Option<Var<'_>> = None;
    let mut entropy: Option<Var<'_>> = None;
    let mut partition: Option<Var<'_>> = None;
    fn add<'t>(slot: &mut Option<Var<'t>>, v: Var<'t>) {
        *slot = Some(match slot.take() {
            None => v,
            Some(acc) => acc + v,
        })
    }

    for i in 0..n_eez {
        let w = phi.sample_with(&p_phi, &samples.eps[i]);
        let theta = if d_theta > 0 {
            psi.sample_with(&p_psi, &samples.eta[i])
        } else {
            Vec::new()
        };
        let x0 = chi.sample_with(&p_chi, &samples.zeta[i]);
        let path = assemble_path(prob.spec, &w, &x0);

        add(
            &mut like,
            log_likelihood_minibatch(prob.model, prob.spec, &path, &theta, prob.data, &samples.idx)?,
        );
        add(
            &mut ham,
            log_pi_estimate(prob.prior, prob.model, prob.spec, &path, &x0, &theta, &samples.times[i])?,
        );
        let mut lp = standard_normal_log_prior(&x0);
        if d_theta > 0 {
            lp = lp + standard_normal_log_prior(&theta);
        }
        add(&mut prior_t, lp);
        let mut lq = phi.log_density_with(&p_phi, &w) + chi.log_density_with(&p_chi, &x0);
        if d_theta > 0 {
            lq = lq + psi.log_density_with(&p_psi, &theta);
        }
        add(&mut entropy, -lq);

        // partition correction: −log π at auxiliary samples held constant
        let n_w = samples.w_tilde[i].len();
        for (k, w_tilde) in samples.w_tilde[i].iter().enumerate() {
            let wt = constants(tape, w_tilde);
            let path_t = assemble_path(prob.spec, &wt, &x0);
            let lp_t = log_pi_estimate(
                prob.prior,
                prob.model,
                prob.spec,
                &path_t,
                &x0,
                &theta,
                &samples.t_tilde[i][k],
            )?;
            add(&mut partition, -lp_t / n_w as f64);
        }
    }

    let scale = 1.0 / n_eez as f64;
    let like = like.expect("n_eez >= 1") * scale;
    let ham = ham.unwrap() * scale;
    let prior_t = prior_t.unwrap() * scale;
    let entropy = entropy.unwrap() * scale;
    let partition = partition.unwrap() * scale;
    let root = like + ham + prior_t + entropy + partition * lambda;

    tape.backward_into(root, &mut ws.adj)?;
    let grad = ws.adj[..total].to_vec();
    let terms = TermValues {
        like: like.value(),
        ham: ham.value(),
        prior: prior_t.value(),
        entropy: entropy.value(),
        partition: partition.value(),
    };
    Ok((terms, grad))
}

/// Filter-only surrogate: likelihood + Hamiltonian + entropy over the w
/// guide alone, with θ and the kernel anchor fixed.
#[allow(clippy::too_many_arguments)]
fn filter_surrogate_grad(
    prob: &Problem<'_>,
    phi: &Guide,
    theta: &[f64],
    x0: &[f64],
    eps: &[Vec<f64>],
    times: &[Vec<f64>],
    idx: &[usize],
    ws: &mut Workspace,
) -> Result<(TermValues, Vec<f64>), InferError> {
    let tape = &ws.tape;
    tape.clear();
    let flat_phi = phi.flat();
    let p_phi = tape.vars(&flat_phi);
    let thc = constants(tape, theta);
    let x0c = constants(tape, x0);

    let mut like: Option<Var<'_>> = None;
    let mut ham: Option<Var<'_>> = None;
    let mut entropy: Option<Var<'_>> = None;
    for i in 0..eps.len() {
        let w = phi.sample_with(&p_phi, &eps[i]);
        let path = assemble_path(prob.spec, &w, &x0c);
        let l = log_likelihood_minibatch(prob.model, prob.spec, &path, &thc, prob.data, idx)?;
        let h = log_pi_estimate(prob.prior, prob.model, prob.spec, &path, &x0c, &thc, &times[i])?;
        let e = -phi.log_density_with(&p_phi, &w);
        like = Some(match like {
            None => l,
            Some(a) => a + l,
        });
        ham = Some(match ham {
            None => h,
            Some(a) => a + h,
        });
        entropy = Some(match entropy {
            None => e,
            Some(a) => a + e,
        });
    }
    let scale = 1.0 / eps.len() as f64;
    let like = like.expect("n_eez >= 1") * scale;
    let ham = ham.unwrap() * scale;
    let entropy = entropy.unwrap() * scale;
    let root = like + ham + entropy;
    tape.backward_into(root, &mut ws.adj)?;
    let grad = ws.adj[..flat_phi.len()].to_vec();
    let terms = TermValues {
        like: like.value(),
        ham: ham.value(),
        prior: 0.0,
        entropy: entropy.value(),
        partition: 0.0,
    };
    Ok((terms, grad))
}

fn validate(prob: &Problem<'_>, opts: &NsviOpts, state: &NsviState) -> Result<(), InferError> {
    let s = &opts.sizes;
    if s.n_eez == 0 || s.n_t == 0 || s.aux_eps == 0 || s.aux_t == 0 || s.n_w_tilde == 0 {
        return Err(InferError::Config("all sample sizes must be >= 1".into()));
    }
    if s.m_y == 0 || s.m_y > prob.data.n() {
        return Err(InferError::Config(format!(
            "minibatch size {} outside 1..={}",
            s.m_y,
            prob.data.n()
        )));
    }
    let dims = prob.model.dims();
    if state.phi.dim() != phi_dim(prob.spec) {
        return Err(InferError::Config("phi guide does not match the path layout".into()));
    }
    if let EstimationMode::FilterOnly { theta, x0 } = &opts.mode {
        if theta.len() != dims.d_theta || x0.len() != dims.d_x {
            return Err(InferError::Config(
                "filter-only theta/x0 do not match the model dimensions".into(),
            ));
        }
    } else if state.psi.dim() != dims.d_theta || state.chi.dim() != dims.d_x {
        return Err(InferError::Config("psi/chi guides do not match the model dimensions".into()));
    }
    Ok(())
}

/// Nested SVI approximation to the marginal posterior p(w, θ | y).
///
/// With zero iterations the guides are returned at their initial values.
pub fn nsvi_posterior(
    prob: &Problem<'_>,
    opts: &NsviOpts,
    mut state: NsviState,
    rng: &mut ChaCha8Rng,
) -> Result<NsviResult, InferError> {
    validate(prob, opts, &state)?;
    let mut ws = Workspace::new();
    let mut trace = Vec::new();
    let sizes = opts.sizes;
    let d_theta = state.psi.dim();
    let d_x = prob.model.dims().d_x;

    let mut flat_outer = Vec::new();
    for _ in 0..opts.niter {
        // schedules run on the state's global counter so a run split into
        // chunks (with one continuous rng stream) matches a single run
        let it = state.iter;
        let lr = opts.lr.at(it);
        let (terms, grad_len) = match &opts.mode {
            EstimationMode::Joint => {
                // 1. joint base draws
                let eps: Vec<Vec<f64>> = (0..sizes.n_eez)
                    .map(|_| standard_normal_vec(state.phi.dim(), rng))
                    .collect();
                let eta: Vec<Vec<f64>> = (0..sizes.n_eez)
                    .map(|_| standard_normal_vec(d_theta, rng))
                    .collect();
                let zeta: Vec<Vec<f64>> =
                    (0..sizes.n_eez).map(|_| standard_normal_vec(d_x, rng)).collect();

                // 2. persistent inner loop at the first sampled (x0, θ)
                let theta1: Vec<f64> = if d_theta > 0 {
                    state.psi.sample_values(&eta[0])
                } else {
                    Vec::new()
                };
                let x01 = state.chi.sample_values(&zeta[0]);
                svi_prior(
                    prob.model,
                    prob.spec,
                    prob.prior,
                    &x01,
                    &theta1,
                    &mut state.phi_tilde,
                    &mut state.aux_moments,
                    opts.niter_auxi,
                    sizes.aux_eps,
                    sizes.aux_t,
                    opts.inner_lr,
                    opts.adam,
                    &mut ws,
                    rng,
                )
                .map_err(|e| e.at_iter(it))?;

                // 3. auxiliary draws, time samples, minibatch
                let w_tilde: Vec<Vec<Vec<f64>>> = (0..sizes.n_eez)
                    .map(|_| (0..sizes.n_w_tilde).map(|_| state.phi_tilde.draw(rng)).collect())
                    .collect();
                let times: Vec<Vec<f64>> = (0..sizes.n_eez)
                    .map(|_| sample_times(prob.prior, sizes.n_t, rng))
                    .collect::<Result<_, _>>()?;
                let t_tilde: Vec<Vec<Vec<f64>>> = (0..sizes.n_eez)
                    .map(|_| {
                        (0..sizes.n_w_tilde)
                            .map(|_| sample_times(prob.prior, sizes.aux_t, rng))
                            .collect::<Result<_, _>>()
                    })
                    .collect::<Result<_, _>>()?;
                let idx: Vec<usize> = rand::seq::index::sample(rng, prob.data.n(), sizes.m_y)
                    .iter()
                    .collect();

                let samples = OuterSamples { eps, eta, zeta, w_tilde, times, t_tilde, idx };
                let lambda = opts.partition.at(it);
                let (terms, mut grad) = posterior_surrogate_grad(
                    prob,
                    &state.phi,
                    &state.psi,
                    &state.chi,
                    &samples,
                    lambda,
                    &mut ws,
                )
                .map_err(|e| e.at_iter(it))?;
                for g in grad.iter_mut() {
                    *g = -*g;
                }
                flat_outer.clear();
                flat_outer.extend(state.phi.flat());
                flat_outer.extend(state.psi.flat());
                flat_outer.extend(state.chi.flat());
                adam_step(&mut flat_outer, &grad, &mut state.moments, lr, opts.adam);
                let (phi_flat, rest) = flat_outer.split_at(state.phi.n_params());
                let (psi_flat, chi_flat) = rest.split_at(state.psi.n_params());
                state.phi.set_flat(phi_flat);
                state.psi.set_flat(psi_flat);
                state.chi.set_flat(chi_flat);
                (terms, grad.len())
            }
            EstimationMode::FilterOnly { theta, x0 } => {
                let eps: Vec<Vec<f64>> = (0..sizes.n_eez)
                    .map(|_| standard_normal_vec(state.phi.dim(), rng))
                    .collect();
                let times: Vec<Vec<f64>> = (0..sizes.n_eez)
                    .map(|_| sample_times(prob.prior, sizes.n_t, rng))
                    .collect::<Result<_, _>>()?;
                let idx: Vec<usize> = rand::seq::index::sample(rng, prob.data.n(), sizes.m_y)
                    .iter()
                    .collect();
                let (terms, mut grad) =
                    filter_surrogate_grad(prob, &state.phi, theta, x0, &eps, &times, &idx, &mut ws)
                        .map_err(|e| e.at_iter(it))?;
                for g in grad.iter_mut() {
                    *g = -*g;
                }
                flat_outer.clear();
                flat_outer.extend(state.phi.flat());
                adam_step(&mut flat_outer, &grad, &mut state.moments, lr, opts.adam);
                state.phi.set_flat(&flat_outer);
                (terms, grad.len())
            }
        };
        debug_assert!(grad_len > 0);
        state.iter += 1;

        if opts.trace_every > 0 && it % opts.trace_every == 0 {
            let (theta_mean, x0_mean) = match &opts.mode {
                EstimationMode::Joint => {
                    (state.psi.mean().to_vec(), state.chi.mean().to_vec())
                }
                EstimationMode::FilterOnly { .. } => (Vec::new(), Vec::new()),
            };
            trace.push(NsviTraceRow {
                iter: it,
                like: terms.like,
                ham: terms.ham,
                prior: terms.prior,
                entropy: terms.entropy,
                partition: terms.partition,
                theta_mean,
                x0_mean,
            });
        }
    }
    Ok(NsviResult { state, trace })
}
