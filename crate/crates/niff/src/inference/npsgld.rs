//! Preconditioned stochastic gradient Langevin dynamics on the conditional
//! prior (the auxiliary chain) and the nested preconditioned sampler on the
//! marginal posterior.
//!
//! One Langevin step ascends the stochastic log-target gradient through a
//! diagonal RMSprop metric:
//!
//! ```text
//! V ← α V + (1−α) g ⊙ g,   M = 1 / (δ + √V)
//! Δz = ρ·M ⊙ g + √(2ρ)·√M ⊙ ξ,   ξ ~ N(0, I)
//! ```
//!
//! The curvature term Γ of the full Riemannian update is dropped: with a
//! diagonal RMSprop metric its exact value is intractable through the
//! gradient history. Setting `precondition = false` fixes M ≡ I, which is
//! the plain SGLD update.
//!
//! The outer sampler keeps one persistent auxiliary chain per posterior
//! chain; at every outer step the auxiliary chain advances a few steps
//! against p(w | x0, θ) at the current chain position, and its state supplies
//! the single-sample partition-gradient correction. Chains run independently
//! (optionally on threads); a failed chain reports its error without
//! aborting the siblings.

use super::estimators::{
    assemble_path, assemble_path_values, constants, log_likelihood_minibatch, phi_dim,
};
use super::schedules::{AlphaSchedule, LrSchedule};
use super::{EstimationMode, InferError, Problem, Workspace};
use crate::guides::standard_normal_log_prior;
use crate::models::OdeModel;
use crate::paths::{init_params, PathSpec};
use crate::priors::{log_pi_estimate, sample_times, PriorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// RMSprop accumulators: V and the derived diagonal metric M = 1/(δ + √V).
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub v: Vec<f64>,
    pub m: Vec<f64>,
}

impl RmspropState {
    pub fn new(n: usize) -> Self {
        RmspropState { v: vec![0.0; n], m: vec![1.0; n] }
    }

    fn update(&mut self, g: &[f64], alpha: f64, delta: f64) {
        for i in 0..self.v.len() {
            self.v[i] = alpha * self.v[i] + (1.0 - alpha) * g[i] * g[i];
            self.m[i] = 1.0 / (delta + self.v[i].sqrt());
        }
    }
}

/// One preconditioned Langevin step in place. With `precondition` off the
/// metric is the identity and the accumulators are left untouched.
fn langevin_step<R: Rng>(
    z: &mut [f64],
    g: &[f64],
    rms: &mut RmspropState,
    alpha: f64,
    delta: f64,
    rho: f64,
    precondition: bool,
    rng: &mut R,
) {
    let noise_scale = (2.0 * rho).sqrt();
    if precondition {
        rms.update(g, alpha, delta);
        for i in 0..z.len() {
            let xi: f64 = rng.sample(StandardNormal);
            z[i] += rho * rms.m[i] * g[i] + noise_scale * rms.m[i].sqrt() * xi;
        }
    } else {
        for i in 0..z.len() {
            let xi: f64 = rng.sample(StandardNormal);
            z[i] += rho * g[i] + noise_scale * xi;
        }
    }
}

fn check_finite(z: &[f64], iter: u64) -> Result<(), InferError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(InferError::Config("chain state became non-finite".into()).at_iter(iter));
    }
    Ok(())
}

/// PSGLD sampling from the relaxed conditional prior p(w | x0, θ): `niter`
/// preconditioned Langevin steps updating `w` and the RMSprop state in
/// place. Schedules are evaluated at the local step index, so nested callers
/// pass constants chosen at the outer iteration.
#[allow(clippy::too_many_arguments)]
pub fn psgld_prior(
    model: &OdeModel,
    spec: &PathSpec,
    prior: &PriorConfig,
    w: &mut [f64],
    x0: &[f64],
    theta: &[f64],
    niter: u64,
    n_t: usize,
    rho: &LrSchedule,
    alpha: &AlphaSchedule,
    delta: f64,
    rms: &mut RmspropState,
    precondition: bool,
    ws: &mut Workspace,
    rng: &mut ChaCha8Rng,
) -> Result<(), InferError> {
    let n_w = w.len();
    for k in 0..niter {
        let times = sample_times(prior, n_t, rng)?;
        {
            let tape = &ws.tape;
            tape.clear();
            let w_vars = tape.vars(w);
            let x0c = constants(tape, x0);
            let thc = constants(tape, theta);
            let path = assemble_path(spec, &w_vars, &x0c);
            let root = log_pi_estimate(prior, model, spec, &path, &x0c, &thc, &times)
                .map_err(|e| InferError::from(e).at_iter(k))?;
            tape.backward_into(root, &mut ws.adj).map_err(|e| InferError::from(e).at_iter(k))?;
        }
        let g = &ws.adj[..n_w];
        langevin_step(w, g, rms, alpha.at(k), delta, rho.at(k), precondition, rng);
        check_finite(w, k)?;
    }
    Ok(())
}

/// Sample counts (n_t, ñ_t, ñ_w, m_y) of the posterior sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpsgldSizes {
    pub n_t: usize,
    pub aux_t: usize,
    pub n_w_tilde: usize,
    pub m_y: usize,
}

impl NpsgldSizes {
    pub fn reference() -> Self {
        NpsgldSizes { n_t: 10, aux_t: 10, n_w_tilde: 1, m_y: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpsgldOpts {
    pub niter: u64,
    pub niter_auxi: u64,
    pub sizes: NpsgldSizes,
    pub lr: LrSchedule,
    pub aux_lr: LrSchedule,
    pub alpha: AlphaSchedule,
    pub delta: f64,
    pub aux_alpha: AlphaSchedule,
    pub aux_delta: f64,
    /// With preconditioning off the update reduces to plain (N)SGLD.
    pub precondition: bool,
    pub n_chains: usize,
    /// Record the chain state every this many steps (memory control; the
    /// harness applies burn-in and final thinning on top). 0 records only
    /// the final state.
    pub record_every: u64,
    /// Trace θ every this many steps; 0 disables.
    pub trace_every: u64,
    /// Worker threads for chain parallelism; 1 runs chains sequentially.
    pub threads: usize,
    pub mode: EstimationMode,
}

/// Per-chain sampler state: main chain (w, θ, x0), the persistent auxiliary
/// chain w̃, and the RMSprop accumulators of both.
#[derive(Debug, Clone, PartialEq)]
pub struct NpsgldChainState {
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
    pub aux_w: Vec<f64>,
    pub rms: RmspropState,
    pub aux_rms: RmspropState,
    pub iter: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpsgldTraceRow {
    pub iter: u64,
    pub theta: Vec<f64>,
}

/// Output of one chain. `w_samples` holds the full path-parameter vector
/// (for the reparameterized kind the embedded initial state is part of it).
/// The auxiliary initial-state draws are kept only for diagnostics; external
/// artifacts marginalize them out.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub iters: Vec<u64>,
    pub w_samples: Vec<Vec<f64>>,
    pub theta_samples: Vec<Vec<f64>>,
    pub x0_samples: Vec<Vec<f64>>,
    pub trace: Vec<NpsgldTraceRow>,
    pub final_state: NpsgldChainState,
}

#[derive(Debug)]
pub struct NpsgldOutput {
    pub chains: Vec<Result<ChainOutput, InferError>>,
}

fn chain_seed(seed: u64, salt: u64, chain: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(chain as u64 + salt))
}

fn init_chain_state(prob: &Problem<'_>, opts: &NpsgldOpts, seed: u64, chain: usize) -> NpsgldChainState {
    let dims = prob.model.dims();
    let n_w = phi_dim(prob.spec);
    let w = init_params(prob.spec, chain_seed(seed, 1, chain))[..n_w].to_vec();
    let aux_w = init_params(prob.spec, chain_seed(seed, 2, chain))[..n_w].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(seed, 3, chain));
    let (theta, x0) = match &opts.mode {
        EstimationMode::Joint => {
            let theta: Vec<f64> =
                (0..dims.d_theta).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            let x0: Vec<f64> =
                (0..dims.d_x).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            (theta, x0)
        }
        EstimationMode::FilterOnly { theta, x0 } => (theta.clone(), x0.clone()),
    };
    let z_dim = match opts.mode {
        EstimationMode::Joint => n_w + dims.d_theta + dims.d_x,
        EstimationMode::FilterOnly { .. } => n_w,
    };
    NpsgldChainState {
        w,
        theta,
        x0,
        aux_w,
        rms: RmspropState::new(z_dim),
        aux_rms: RmspropState::new(n_w),
        iter: 0,
    }
}

/// Combined stochastic gradient of the log joint target at the chain state:
/// minibatch likelihood + conditional-prior estimate + partition correction
/// + standard-normal priors, differentiated with respect to [w | θ | x0].
fn joint_gradient(
    prob: &Problem<'_>,
    st: &NpsgldChainState,
    times: &[f64],
    t_tilde: &[Vec<f64>],
    w_tilde: &[Vec<f64>],
    idx: &[usize],
    ws: &mut Workspace,
) -> Result<Vec<f64>, InferError> {
    let d_theta = st.theta.len();
    let tape = &ws.tape;
    tape.clear();
    let w_v = tape.vars(&st.w);
    let th_v = tape.vars(&st.theta);
    let x0_v = tape.vars(&st.x0);
    let total = st.w.len() + d_theta + st.x0.len();

    let path = assemble_path(prob.spec, &w_v, &x0_v);
    let like = log_likelihood_minibatch(prob.model, prob.spec, &path, &th_v, prob.data, idx)?;
    let logpi = log_pi_estimate(prob.prior, prob.model, prob.spec, &path, &x0_v, &th_v, times)?;
    let mut root = like + logpi;
    for (m, wt) in w_tilde.iter().enumerate() {
        let wt_c = constants(tape, wt);
        let path_t = assemble_path(prob.spec, &wt_c, &x0_v);
        let lp_t = log_pi_estimate(
            prob.prior,
            prob.model,
            prob.spec,
            &path_t,
            &x0_v,
            &th_v,
            &t_tilde[m],
        )?;
        root = root - lp_t / w_tilde.len() as f64;
    }
    root = root + standard_normal_log_prior(&x0_v);
    if d_theta > 0 {
        root = root + standard_normal_log_prior(&th_v);
    }
    tape.backward_into(root, &mut ws.adj)?;
    Ok(ws.adj[..total].to_vec())
}

fn filter_gradient(
    prob: &Problem<'_>,
    st: &NpsgldChainState,
    times: &[f64],
    idx: &[usize],
    ws: &mut Workspace,
) -> Result<Vec<f64>, InferError> {
    let tape = &ws.tape;
    tape.clear();
    let w_v = tape.vars(&st.w);
    let thc = constants(tape, &st.theta);
    let x0c = constants(tape, &st.x0);
    let path = assemble_path(prob.spec, &w_v, &x0c);
    let like = log_likelihood_minibatch(prob.model, prob.spec, &path, &thc, prob.data, idx)?;
    let logpi = log_pi_estimate(prob.prior, prob.model, prob.spec, &path, &x0c, &thc, times)?;
    let root = like + logpi;
    tape.backward_into(root, &mut ws.adj)?;
    Ok(ws.adj[..st.w.len()].to_vec())
}

fn run_chain(
    prob: &Problem<'_>,
    opts: &NpsgldOpts,
    seed: u64,
    chain: usize,
) -> Result<ChainOutput, InferError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    let mut st = init_chain_state(prob, opts, seed, chain);
    let mut ws = Workspace::new();
    let joint = matches!(opts.mode, EstimationMode::Joint);
    let d_theta = st.theta.len();
    let d_x = st.x0.len();
    let n_w = st.w.len();

    let mut out = ChainOutput {
        iters: Vec::new(),
        w_samples: Vec::new(),
        theta_samples: Vec::new(),
        x0_samples: Vec::new(),
        trace: Vec::new(),
        final_state: st.clone(),
    };

    let mut z = vec![0.0; if joint { n_w + d_theta + d_x } else { n_w }];
    for k in 0..opts.niter {
        if joint {
            // advance the persistent auxiliary chain at the current (x0, θ)
            let aux_rho = LrSchedule::Constant { value: opts.aux_lr.at(k) };
            let aux_alpha = AlphaSchedule::constant(opts.aux_alpha.at(k));
            let mut aux_w = std::mem::take(&mut st.aux_w);
            psgld_prior(
                prob.model,
                prob.spec,
                prob.prior,
                &mut aux_w,
                &st.x0,
                &st.theta,
                opts.niter_auxi,
                opts.sizes.aux_t,
                &aux_rho,
                &aux_alpha,
                opts.aux_delta,
                &mut st.aux_rms,
                opts.precondition,
                &mut ws,
                &mut rng,
            )
            .map_err(|e| e.at_iter(k))?;
            st.aux_w = aux_w;

            let times = sample_times(prob.prior, opts.sizes.n_t, &mut rng)?;
            let w_tilde: Vec<Vec<f64>> =
                (0..opts.sizes.n_w_tilde).map(|_| st.aux_w.clone()).collect();
            let t_tilde: Vec<Vec<f64>> = (0..opts.sizes.n_w_tilde)
                .map(|_| sample_times(prob.prior, opts.sizes.aux_t, &mut rng))
                .collect::<Result<_, _>>()?;
            let idx: Vec<usize> = rand::seq::index::sample(&mut rng, prob.data.n(), opts.sizes.m_y)
                .iter()
                .collect();
            let g = joint_gradient(prob, &st, &times, &t_tilde, &w_tilde, &idx, &mut ws)
                .map_err(|e| e.at_iter(k))?;

            z[..n_w].copy_from_slice(&st.w);
            z[n_w..n_w + d_theta].copy_from_slice(&st.theta);
            z[n_w + d_theta..].copy_from_slice(&st.x0);
            langevin_step(
                &mut z,
                &g,
                &mut st.rms,
                opts.alpha.at(k),
                opts.delta,
                opts.lr.at(k),
                opts.precondition,
                &mut rng,
            );
            check_finite(&z, k)?;
            st.w.copy_from_slice(&z[..n_w]);
            st.theta.copy_from_slice(&z[n_w..n_w + d_theta]);
            st.x0.copy_from_slice(&z[n_w + d_theta..]);
        } else {
            let times = sample_times(prob.prior, opts.sizes.n_t, &mut rng)?;
            let idx: Vec<usize> = rand::seq::index::sample(&mut rng, prob.data.n(), opts.sizes.m_y)
                .iter()
                .collect();
            let g = filter_gradient(prob, &st, &times, &idx, &mut ws).map_err(|e| e.at_iter(k))?;
            z[..n_w].copy_from_slice(&st.w);
            langevin_step(
                &mut z,
                &g,
                &mut st.rms,
                opts.alpha.at(k),
                opts.delta,
                opts.lr.at(k),
                opts.precondition,
                &mut rng,
            );
            check_finite(&z, k)?;
            st.w.copy_from_slice(&z[..n_w]);
        }
        st.iter = k + 1;

        if opts.record_every > 0 && (k + 1) % opts.record_every == 0 {
            out.iters.push(k + 1);
            out.w_samples.push(assemble_path_values(prob.spec, &st.w, &st.x0));
            out.theta_samples.push(st.theta.clone());
            out.x0_samples.push(st.x0.clone());
        }
        if opts.trace_every > 0 && (k % opts.trace_every == 0 || k + 1 == opts.niter) {
            out.trace.push(NpsgldTraceRow { iter: k, theta: st.theta.clone() });
        }
    }
    if out.iters.is_empty() {
        out.iters.push(opts.niter);
        out.w_samples.push(assemble_path_values(prob.spec, &st.w, &st.x0));
        out.theta_samples.push(st.theta.clone());
        out.x0_samples.push(st.x0.clone());
    }
    out.final_state = st;
    Ok(out)
}

fn validate(prob: &Problem<'_>, opts: &NpsgldOpts) -> Result<(), InferError> {
    let s = &opts.sizes;
    if s.n_t == 0 || s.aux_t == 0 || s.n_w_tilde == 0 {
        return Err(InferError::Config("all sample sizes must be >= 1".into()));
    }
    if s.m_y == 0 || s.m_y > prob.data.n() {
        return Err(InferError::Config(format!(
            "minibatch size {} outside 1..={}",
            s.m_y,
            prob.data.n()
        )));
    }
    if opts.n_chains == 0 {
        return Err(InferError::Config("need at least one chain".into()));
    }
    if !(opts.delta > 0.0) || !(opts.aux_delta > 0.0) {
        return Err(InferError::Config("delta must be positive".into()));
    }
    opts.lr.validate().map_err(InferError::Config)?;
    opts.aux_lr.validate().map_err(InferError::Config)?;
    opts.alpha.validate().map_err(InferError::Config)?;
    opts.aux_alpha.validate().map_err(InferError::Config)?;
    if let EstimationMode::FilterOnly { theta, x0 } = &opts.mode {
        let dims = prob.model.dims();
        if theta.len() != dims.d_theta || x0.len() != dims.d_x {
            return Err(InferError::Config(
                "filter-only theta/x0 do not match the model dimensions".into(),
            ));
        }
    }
    Ok(())
}

/// NPSGLD sampling from the marginal posterior p(w, θ | y). Chains are
/// seeded from counter-based streams of the master seed, so the trajectory
/// of chain c does not depend on how many chains run. Per-chain failures
/// are isolated in the output.
pub fn npsgld_posterior(prob: &Problem<'_>, opts: &NpsgldOpts, seed: u64) -> NpsgldOutput {
    if let Err(e) = validate(prob, opts) {
        return NpsgldOutput { chains: vec![Err(e)] };
    }
    let chains: Vec<Result<ChainOutput, InferError>> = if opts.threads > 1 && opts.n_chains > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..opts.n_chains)
                .map(|c| scope.spawn(move || run_chain(prob, opts, seed, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(InferError::Config("chain thread panicked".into()))
                    })
                })
                .collect()
        })
    } else {
        (0..opts.n_chains).map(|c| run_chain(prob, opts, seed, c)).collect()
    };
    NpsgldOutput { chains }
}

/// Options for sampling a user-supplied log-density gradient, used to
/// benchmark the update rule on synthetic targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SgldTargetOpts {
    pub niter: u64,
    pub lr: LrSchedule,
    pub alpha: AlphaSchedule,
    pub delta: f64,
    pub precondition: bool,
    /// Record every this many steps (1 keeps everything).
    pub record_every: u64,
}

/// Run the (preconditioned) SGLD update against an arbitrary gradient
/// oracle. Returns the recorded states.
pub fn preconditioned_sgld<F>(
    mut grad_log_target: F,
    z0: Vec<f64>,
    opts: &SgldTargetOpts,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, InferError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut z = z0;
    let mut rms = RmspropState::new(z.len());
    let mut out = Vec::new();
    for k in 0..opts.niter {
        let g = grad_log_target(&z);
        langevin_step(
            &mut z,
            &g,
            &mut rms,
            opts.alpha.at(k),
            opts.delta,
            opts.lr.at(k),
            opts.precondition,
            rng,
        );
        check_finite(&z, k)?;
        if opts.record_every > 0 && (k + 1) % opts.record_every == 0 {
            out.push(z.clone());
        }
    }
    if out.is_empty() {
        out.push(z);
    }
    Ok(out)
}
