//! Parameterizations of the state path x̂(t; w).
//!
//! Four kinds are supported:
//! - `Fourier`: truncated Fourier series w₀ + Σ_k (w_{2k−1} sin(2πkt/T̄) +
//!   w_{2k} cos(2πkt/T̄)) per state.
//! - `ReparamFourier`: the same series with one dependent coefficient solved
//!   from the initial state, so x̂(0; w) equals the supplied x₀ by
//!   construction. The parameter vector is the free coefficients followed by
//!   x₀ itself.
//! - `Rbf`: Gaussian radial basis on time rescaled to [0, 1], so a given
//!   center/scale geometry is independent of the window length.
//! - `ResidualNet`: a linear basis plus a fully connected network whose first
//!   layer is a Fourier feature encoding of time; the network corrects the
//!   basis error. Swish activations; the output layer starts at zero so the
//!   initial path is the pure basis.
//!
//! All evaluations are generic over [`Scalar`], so the same code produces
//! plain values and taped values, and time derivatives are propagated
//! analytically alongside values.

use crate::diffengine::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::ops::Range;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum PathError {
    #[error("parameter vector has length {got}, layout requires {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("basis {index} vanishes at t = 0 and cannot be the dependent basis")]
    SingularBasis { index: usize },
    #[error("invalid path spec: {0}")]
    BadSpec(String),
}

/// A finite linear basis for the identity part of a path.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearBasis {
    /// 2·modes + 1 functions: the constant, then sin/cos pairs.
    Fourier { modes: usize },
    /// Gaussian bumps exp(−(τ−z_k)²/(2·scale)) on normalized time τ = t/T.
    Rbf { centers: Vec<f64>, scale: f64 },
}

impl LinearBasis {
    fn count(&self) -> usize {
        match self {
            LinearBasis::Fourier { modes } => 2 * modes + 1,
            LinearBasis::Rbf { centers, .. } => centers.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind {
    Fourier {
        modes: usize,
    },
    ReparamFourier {
        modes: usize,
        /// Index of the dependent basis function; ψ_dep(0) must be nonzero.
        dependent: usize,
    },
    Rbf {
        centers: Vec<f64>,
        scale: f64,
    },
    ResidualNet {
        basis: LinearBasis,
        encoder_modes: usize,
        hidden: Vec<usize>,
    },
}

/// Full description of a path parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub d_x: usize,
    /// Inference window T in seconds; rbf centers live on t/T.
    pub window: f64,
    /// Encoder/basis period T̄ in seconds. Defaults to the window.
    pub period: f64,
    pub kind: PathKind,
}

impl PathSpec {
    pub fn fourier(d_x: usize, modes: usize, window: f64) -> Self {
        PathSpec { d_x, window, period: window, kind: PathKind::Fourier { modes } }
    }

    pub fn reparam_fourier(d_x: usize, modes: usize, window: f64) -> Self {
        PathSpec {
            d_x,
            window,
            period: window,
            kind: PathKind::ReparamFourier { modes, dependent: 0 },
        }
    }

    /// Radial basis with `count` centers evenly spaced on normalized time
    /// [0, 1].
    pub fn rbf(d_x: usize, count: usize, scale: f64, window: f64) -> Self {
        PathSpec {
            d_x,
            window,
            period: window,
            kind: PathKind::Rbf { centers: even_centers(count), scale },
        }
    }

    pub fn residual_net(
        d_x: usize,
        basis: LinearBasis,
        encoder_modes: usize,
        hidden: Vec<usize>,
        window: f64,
    ) -> Self {
        PathSpec {
            d_x,
            window,
            period: window,
            kind: PathKind::ResidualNet { basis, encoder_modes, hidden },
        }
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn validate(&self) -> Result<(), PathError> {
        if self.d_x == 0 {
            return Err(PathError::BadSpec("d_x must be >= 1".into()));
        }
        if !(self.window > 0.0) || !(self.period > 0.0) {
            return Err(PathError::BadSpec("window and period must be positive".into()));
        }
        match &self.kind {
            PathKind::Fourier { modes } | PathKind::ReparamFourier { modes, .. } => {
                if *modes < 1 {
                    return Err(PathError::BadSpec("fourier modes must be >= 1".into()));
                }
            }
            PathKind::Rbf { centers, scale } => {
                validate_rbf(centers, *scale)?;
            }
            PathKind::ResidualNet { basis, encoder_modes, hidden } => {
                if *encoder_modes < 1 {
                    return Err(PathError::BadSpec("encoder modes must be >= 1".into()));
                }
                if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
                    return Err(PathError::BadSpec(
                        "residual net needs at least one nonempty hidden layer".into(),
                    ));
                }
                if let LinearBasis::Rbf { centers, scale } = basis {
                    validate_rbf(centers, *scale)?;
                }
            }
        }
        if let PathKind::ReparamFourier { modes, dependent } = &self.kind {
            if *dependent >= 2 * modes + 1 {
                return Err(PathError::BadSpec("dependent index out of range".into()));
            }
        }
        Ok(())
    }

    /// Named slices of the flat parameter vector.
    pub fn layout(&self) -> PathLayout {
        match &self.kind {
            PathKind::Fourier { modes } => PathLayout::basis_only(self.d_x, 2 * modes + 1),
            PathKind::ReparamFourier { modes, .. } => {
                let n_free = 2 * modes; // one coefficient per state is dependent
                let basis_len = self.d_x * n_free;
                PathLayout {
                    total: basis_len + self.d_x,
                    n_basis: n_free,
                    basis: 0..basis_len,
                    x0: Some(basis_len..basis_len + self.d_x),
                    net: None,
                }
            }
            PathKind::Rbf { centers, .. } => PathLayout::basis_only(self.d_x, centers.len()),
            PathKind::ResidualNet { basis, encoder_modes, hidden } => {
                let n_basis = basis.count();
                let basis_len = self.d_x * n_basis;
                let mut layers = Vec::new();
                let mut offset = basis_len;
                let mut in_dim = 2 * encoder_modes + 1;
                for &width in hidden {
                    layers.push(LayerSlice::new(&mut offset, in_dim, width));
                    in_dim = width;
                }
                let out = LayerSlice::new(&mut offset, in_dim, self.d_x);
                layers.push(out);
                PathLayout {
                    total: offset,
                    n_basis,
                    basis: 0..basis_len,
                    x0: None,
                    net: Some(NetLayout { layers }),
                }
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }

    fn check_len(&self, w_len: usize) -> Result<(), PathError> {
        let expected = self.n_params();
        if w_len != expected {
            return Err(PathError::LayoutMismatch { expected, got: w_len });
        }
        Ok(())
    }
}

fn even_centers(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5];
    }
    (0..count).map(|k| k as f64 / (count - 1) as f64).collect()
}

fn validate_rbf(centers: &[f64], scale: f64) -> Result<(), PathError> {
    if centers.is_empty() {
        return Err(PathError::BadSpec("rbf needs at least one center".into()));
    }
    if !(scale > 0.0) {
        return Err(PathError::BadSpec("rbf scale must be positive".into()));
    }
    if centers.iter().any(|&z| !(0.0..=1.0).contains(&z)) {
        return Err(PathError::BadSpec("rbf centers must lie in [0, 1]".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlice {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSlice {
    fn new(offset: &mut usize, in_dim: usize, out_dim: usize) -> Self {
        let w = *offset..*offset + in_dim * out_dim;
        *offset = w.end;
        let b = *offset..*offset + out_dim;
        *offset = b.end;
        LayerSlice { w, b, in_dim, out_dim }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetLayout {
    /// Hidden layers in order, then the linear output layer.
    pub layers: Vec<LayerSlice>,
}

/// Slice map for the flat parameter vector `w`. Slices tile the vector
/// exactly with no overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLayout {
    pub total: usize,
    /// Basis coefficients per state.
    pub n_basis: usize,
    /// Range of the per-state basis block (state-major).
    pub basis: Range<usize>,
    /// For the reparameterized kind: range of the initial-state block.
    pub x0: Option<Range<usize>>,
    pub net: Option<NetLayout>,
}

impl PathLayout {
    fn basis_only(d_x: usize, n_basis: usize) -> Self {
        PathLayout {
            total: d_x * n_basis,
            n_basis,
            basis: 0..d_x * n_basis,
            x0: None,
            net: None,
        }
    }

    /// Basis coefficients of one state.
    pub fn state_slice(&self, state: usize) -> Range<usize> {
        let start = self.basis.start + state * self.n_basis;
        start..start + self.n_basis
    }
}

/// Values of the Fourier basis (1, sin, cos, ...) at `t`.
fn fourier_features(modes: usize, period: f64, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * modes + 1);
    out.push(1.0);
    for k in 1..=modes {
        let arg = 2.0 * PI * k as f64 * t / period;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

fn fourier_features_dot(modes: usize, period: f64, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * modes + 1);
    out.push(0.0);
    for k in 1..=modes {
        let omega = 2.0 * PI * k as f64 / period;
        let arg = omega * t;
        out.push(omega * arg.cos());
        out.push(-omega * arg.sin());
    }
    out
}

fn rbf_features(centers: &[f64], scale: f64, window: f64, t: f64) -> Vec<f64> {
    let tau = t / window;
    centers
        .iter()
        .map(|&z| {
            let d = tau - z;
            (-d * d / (2.0 * scale)).exp()
        })
        .collect()
}

fn rbf_features_dot(centers: &[f64], scale: f64, window: f64, t: f64) -> Vec<f64> {
    let tau = t / window;
    centers
        .iter()
        .map(|&z| {
            let d = tau - z;
            let phi = (-d * d / (2.0 * scale)).exp();
            -d / scale * phi / window
        })
        .collect()
}

fn basis_features(basis: &LinearBasis, period: f64, window: f64, t: f64) -> Vec<f64> {
    match basis {
        LinearBasis::Fourier { modes } => fourier_features(*modes, period, t),
        LinearBasis::Rbf { centers, scale } => rbf_features(centers, *scale, window, t),
    }
}

fn basis_features_dot(basis: &LinearBasis, period: f64, window: f64, t: f64) -> Vec<f64> {
    match basis {
        LinearBasis::Fourier { modes } => fourier_features_dot(*modes, period, t),
        LinearBasis::Rbf { centers, scale } => rbf_features_dot(centers, *scale, window, t),
    }
}

/// Linear combination Σ wᵢ·ψᵢ with constant features, fused to one tape
/// node.
fn combine<S: Scalar>(coeffs: &[S], features: &[f64]) -> S {
    S::lincomb(coeffs, features)
}

/// x̂(t; w).
pub fn eval_path<S: Scalar>(spec: &PathSpec, w: &[S], t: f64) -> Result<Vec<S>, PathError> {
    spec.check_len(w.len())?;
    eval_inner(spec, w, t, false).map(|(x, _)| x)
}

/// Exact time derivative ẋ̂(t; w): analytic for the basis kinds, propagated
/// tangents for the residual network.
pub fn eval_path_dot<S: Scalar>(spec: &PathSpec, w: &[S], t: f64) -> Result<Vec<S>, PathError> {
    eval_path_and_dot(spec, w, t).map(|(_, d)| d)
}

/// Value and time derivative in one pass, sharing the hidden-layer work.
pub fn eval_path_and_dot<S: Scalar>(
    spec: &PathSpec,
    w: &[S],
    t: f64,
) -> Result<(Vec<S>, Vec<S>), PathError> {
    spec.check_len(w.len())?;
    let (x, dot) = eval_inner(spec, w, t, true)?;
    Ok((x, dot.expect("dot requested")))
}

/// x̂(0; w); for the reparameterized kind this equals the embedded x₀ up to
/// rounding, by construction.
pub fn initial_value<S: Scalar>(spec: &PathSpec, w: &[S]) -> Result<Vec<S>, PathError> {
    eval_path(spec, w, 0.0)
}

#[allow(clippy::type_complexity)]
fn eval_inner<S: Scalar>(
    spec: &PathSpec,
    w: &[S],
    t: f64,
    want_dot: bool,
) -> Result<(Vec<S>, Option<Vec<S>>), PathError> {
    let layout = spec.layout();
    match &spec.kind {
        PathKind::Fourier { modes } => {
            let feats = fourier_features(*modes, spec.period, t);
            let x: Vec<S> = (0..spec.d_x)
                .map(|s| combine(&w[layout.state_slice(s)], &feats))
                .collect();
            let dot = want_dot.then(|| {
                let dfeats = fourier_features_dot(*modes, spec.period, t);
                (0..spec.d_x)
                    .map(|s| combine(&w[layout.state_slice(s)], &dfeats))
                    .collect()
            });
            Ok((x, dot))
        }
        PathKind::ReparamFourier { modes, dependent } => {
            let x0 = &w[layout.x0.clone().expect("reparam layout has x0")];
            let dep = reparam_fourier_dependent(spec, &w[layout.basis.clone()], x0, *dependent)?;
            let feats = fourier_features(*modes, spec.period, t);
            let mut x = Vec::with_capacity(spec.d_x);
            for s in 0..spec.d_x {
                let free = &w[layout.state_slice(s)];
                x.push(combine_reparam(free, dep[s], *dependent, &feats));
            }
            let dot = want_dot.then(|| {
                let dfeats = fourier_features_dot(*modes, spec.period, t);
                (0..spec.d_x)
                    .map(|s| {
                        combine_reparam(&w[layout.state_slice(s)], dep[s], *dependent, &dfeats)
                    })
                    .collect()
            });
            Ok((x, dot))
        }
        PathKind::Rbf { centers, scale } => {
            let feats = rbf_features(centers, *scale, spec.window, t);
            let x: Vec<S> = (0..spec.d_x)
                .map(|s| combine(&w[layout.state_slice(s)], &feats))
                .collect();
            let dot = want_dot.then(|| {
                let dfeats = rbf_features_dot(centers, *scale, spec.window, t);
                (0..spec.d_x)
                    .map(|s| combine(&w[layout.state_slice(s)], &dfeats))
                    .collect()
            });
            Ok((x, dot))
        }
        PathKind::ResidualNet { basis, encoder_modes, hidden } => {
            let feats = basis_features(basis, spec.period, spec.window, t);
            let mut x: Vec<S> = (0..spec.d_x)
                .map(|s| combine(&w[layout.state_slice(s)], &feats))
                .collect();
            let mut dot: Option<Vec<S>> = want_dot.then(|| {
                let dfeats = basis_features_dot(basis, spec.period, spec.window, t);
                (0..spec.d_x)
                    .map(|s| combine(&w[layout.state_slice(s)], &dfeats))
                    .collect()
            });
            let net = layout.net.as_ref().expect("residual layout has a net");
            let (net_x, net_dot) =
                net_forward(w, net, *encoder_modes, spec.period, t, want_dot, hidden.len());
            for s in 0..spec.d_x {
                x[s] = x[s] + net_x[s];
            }
            if let (Some(dot), Some(net_dot)) = (dot.as_mut(), net_dot) {
                for s in 0..spec.d_x {
                    dot[s] = dot[s] + net_dot[s];
                }
            }
            Ok((x, dot))
        }
    }
}

/// Dependent coefficient of the reparameterized Fourier path, one per state:
/// w_dep = (x₀ − Σ_{j≠dep} w_j ψ_j(0)) / ψ_dep(0).
pub fn reparam_fourier_dependent<S: Scalar>(
    spec: &PathSpec,
    w_minus: &[S],
    x0: &[S],
    dependent: usize,
) -> Result<Vec<S>, PathError> {
    let modes = match &spec.kind {
        PathKind::ReparamFourier { modes, .. } => *modes,
        PathKind::Fourier { modes } => *modes,
        _ => return Err(PathError::BadSpec("reparameterization requires a fourier kind".into())),
    };
    let psi0 = fourier_features(modes, spec.period, 0.0);
    let denom = psi0[dependent];
    if denom == 0.0 {
        return Err(PathError::SingularBasis { index: dependent });
    }
    let n_free = 2 * modes;
    if w_minus.len() != spec.d_x * n_free {
        return Err(PathError::LayoutMismatch { expected: spec.d_x * n_free, got: w_minus.len() });
    }
    if x0.len() != spec.d_x {
        return Err(PathError::LayoutMismatch { expected: spec.d_x, got: x0.len() });
    }
    let mut out = Vec::with_capacity(spec.d_x);
    for s in 0..spec.d_x {
        let free = &w_minus[s * n_free..(s + 1) * n_free];
        // free coefficients are the basis order with `dependent` removed
        let mut acc = x0[s];
        let mut fi = 0;
        for (j, &psi) in psi0.iter().enumerate() {
            if j == dependent {
                continue;
            }
            if psi != 0.0 {
                acc = acc - free[fi] * psi;
            }
            fi += 1;
        }
        out.push(acc / denom);
    }
    Ok(out)
}

/// Σ over the full basis with the dependent coefficient spliced in.
fn combine_reparam<S: Scalar>(free: &[S], dep: S, dependent: usize, features: &[f64]) -> S {
    let mut coeffs = Vec::with_capacity(features.len());
    let mut weights = Vec::with_capacity(features.len());
    coeffs.push(dep);
    weights.push(features[dependent]);
    let mut fi = 0;
    for (j, &psi) in features.iter().enumerate() {
        if j == dependent {
            continue;
        }
        coeffs.push(free[fi]);
        weights.push(psi);
        fi += 1;
    }
    S::lincomb(&coeffs, &weights)
}

/// Forward pass of the residual network: Fourier encoder, swish hidden
/// layers, linear output heads. Tangents with respect to t are carried along
/// when requested.
fn net_forward<S: Scalar>(
    w: &[S],
    net: &NetLayout,
    encoder_modes: usize,
    period: f64,
    t: f64,
    want_dot: bool,
    n_hidden: usize,
) -> (Vec<S>, Option<Vec<S>>) {
    let enc = fourier_features(encoder_modes, period, t);
    let enc_dot = fourier_features_dot(encoder_modes, period, t);

    // first hidden layer: features are constants
    let first = &net.layers[0];
    let mut act: Vec<S> = Vec::with_capacity(first.out_dim);
    let mut act_dot: Vec<S> = Vec::with_capacity(if want_dot { first.out_dim } else { 0 });
    for j in 0..first.out_dim {
        let row = &w[first.w.start + j * first.in_dim..first.w.start + (j + 1) * first.in_dim];
        let pre = combine(row, &enc) + w[first.b.start + j];
        let sig = pre.sigmoid();
        act.push(pre * sig);
        if want_dot {
            // the constant feature's tangent is zero; skip it
            let pre_dot = S::lincomb(&row[1..], &enc_dot[1..]);
            let swish_d = sig + pre * sig * (-sig + 1.0);
            act_dot.push(swish_d * pre_dot);
        }
    }

    // remaining hidden layers: inputs are taped values
    for layer in &net.layers[1..n_hidden] {
        let mut next: Vec<S> = Vec::with_capacity(layer.out_dim);
        let mut next_dot: Vec<S> = Vec::with_capacity(if want_dot { layer.out_dim } else { 0 });
        for j in 0..layer.out_dim {
            let row = &w[layer.w.start + j * layer.in_dim..layer.w.start + (j + 1) * layer.in_dim];
            let mut pre = row[0] * act[0];
            for i in 1..layer.in_dim {
                pre = pre + row[i] * act[i];
            }
            let pre = pre + w[layer.b.start + j];
            let sig = pre.sigmoid();
            next.push(pre * sig);
            if want_dot {
                let mut pre_dot = row[0] * act_dot[0];
                for i in 1..layer.in_dim {
                    pre_dot = pre_dot + row[i] * act_dot[i];
                }
                let swish_d = sig + pre * sig * (-sig + 1.0);
                next_dot.push(swish_d * pre_dot);
            }
        }
        act = next;
        act_dot = next_dot;
    }

    // linear output heads
    let out_layer = net.layers.last().expect("net has an output layer");
    let mut out: Vec<S> = Vec::with_capacity(out_layer.out_dim);
    let mut out_dot: Vec<S> = Vec::with_capacity(if want_dot { out_layer.out_dim } else { 0 });
    for j in 0..out_layer.out_dim {
        let row = &w
            [out_layer.w.start + j * out_layer.in_dim..out_layer.w.start + (j + 1) * out_layer.in_dim];
        let mut pre = row[0] * act[0];
        for i in 1..out_layer.in_dim {
            pre = pre + row[i] * act[i];
        }
        out.push(pre + w[out_layer.b.start + j]);
        if want_dot {
            let mut pre_dot = row[0] * act_dot[0];
            for i in 1..out_layer.in_dim {
                pre_dot = pre_dot + row[i] * act_dot[i];
            }
            out_dot.push(pre_dot);
        }
    }
    (out, want_dot.then_some(out_dot))
}

/// Draw initial parameters: basis coefficients N(0, 0.1²), hidden weights
/// Glorot-uniform with zero biases, output layer zero. Deterministic given
/// the seed.
pub fn init_params(spec: &PathSpec, seed: u64) -> Vec<f64> {
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; layout.total];
    let normal = StandardNormal;
    for i in layout.basis.clone() {
        let z: f64 = normal.sample(&mut rng);
        w[i] = 0.1 * z;
    }
    if let Some(x0_range) = &layout.x0 {
        for i in x0_range.clone() {
            let z: f64 = normal.sample(&mut rng);
            w[i] = 0.1 * z;
        }
    }
    if let Some(net) = &layout.net {
        let n_layers = net.layers.len();
        for (li, layer) in net.layers.iter().enumerate() {
            if li + 1 == n_layers {
                break; // output layer stays zero
            }
            let a = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for i in layer.w.clone() {
                w[i] = rng.random_range(-a..a);
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::{grad, value_and_grad};
    use crate::verify::fd_grad;

    fn three_coeff_spec() -> PathSpec {
        PathSpec::fourier(1, 1, 1.0)
    }

    #[test]
    fn fourier_eval_at_known_points() {
        let spec = three_coeff_spec();
        let w = [1.0, 2.0, 3.0];
        let x = eval_path(&spec, &w, 0.0).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-15);
        let x = eval_path(&spec, &w, 0.25).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_dot_at_zero() {
        let spec = three_coeff_spec();
        let w = [1.0, 2.0, 3.0];
        let d = eval_path_dot(&spec, &w, 0.0).unwrap();
        assert!((d[0] - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn encoder_features_at_zero() {
        assert_eq!(fourier_features(1, 1.0, 0.0), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn rbf_peak_has_zero_slope() {
        let spec = PathSpec {
            d_x: 1,
            window: 1.0,
            period: 1.0,
            kind: PathKind::Rbf { centers: vec![0.0], scale: 1.0 },
        };
        let d = eval_path_dot(&spec, &[1.0], 0.0).unwrap();
        assert_eq!(d[0], 0.0);
        let x = eval_path(&spec, &[1.0], 0.0).unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn rbf_far_from_centers_decays() {
        let spec = PathSpec {
            d_x: 1,
            window: 1.0,
            period: 1.0,
            kind: PathKind::Rbf { centers: vec![0.9, 1.0], scale: 1e-4 },
        };
        let x = initial_value(&spec, &[1.0, 1.0]).unwrap();
        assert!(x[0].abs() < 1e-10);
    }

    #[test]
    fn layout_dimensions_match_reference_counts() {
        assert_eq!(PathSpec::fourier(2, 40, 50.0).n_params(), 162);
        assert_eq!(PathSpec::rbf(4, 20, 0.05, 50.0).n_params(), 80);
        let residual = PathSpec::residual_net(
            4,
            LinearBasis::Rbf { centers: even_centers(20), scale: 0.05 },
            10,
            vec![10],
            50.0,
        );
        assert_eq!(residual.n_params(), 344);
        assert_eq!(PathSpec::reparam_fourier(2, 40, 50.0).n_params(), 162);
    }

    #[test]
    fn layout_slices_tile_exactly() {
        let spec = PathSpec::residual_net(
            3,
            LinearBasis::Fourier { modes: 4 },
            5,
            vec![7, 6],
            10.0,
        );
        let layout = spec.layout();
        let mut covered = vec![false; layout.total];
        let mut mark = |r: Range<usize>| {
            for i in r {
                assert!(!covered[i], "overlapping slice at {i}");
                covered[i] = true;
            }
        };
        mark(layout.basis.clone());
        for layer in &layout.net.as_ref().unwrap().layers {
            mark(layer.w.clone());
            mark(layer.b.clone());
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn reparam_dependent_solves_initial_condition() {
        let spec = PathSpec::reparam_fourier(1, 1, 1.0);
        // free coefficients per state: (sin, cos) = (0, 3); x0 = 4
        let dep = reparam_fourier_dependent(&spec, &[0.0, 3.0], &[4.0], 0).unwrap();
        assert!((dep[0] - 1.0).abs() < 1e-15);
        // all free coefficients zero pins w0 = x0
        let dep = reparam_fourier_dependent(&spec, &[0.0, 0.0], &[2.5], 0).unwrap();
        assert_eq!(dep[0], 2.5);
    }

    #[test]
    fn reparam_initial_value_matches_embedded_x0() {
        let spec = PathSpec::reparam_fourier(2, 3, 5.0);
        let w = init_params(&spec, 99);
        let layout = spec.layout();
        let x0 = &w[layout.x0.clone().unwrap()];
        let x = initial_value(&spec, &w).unwrap();
        for s in 0..2 {
            assert!((x[s] - x0[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn reparam_sin_basis_is_singular() {
        let spec = PathSpec::reparam_fourier(1, 1, 1.0);
        let err = reparam_fourier_dependent(&spec, &[0.0, 0.0], &[1.0], 1).unwrap_err();
        assert_eq!(err, PathError::SingularBasis { index: 1 });
    }

    #[test]
    fn residual_net_starts_as_pure_basis() {
        let spec = PathSpec::residual_net(
            2,
            LinearBasis::Fourier { modes: 2 },
            3,
            vec![6],
            4.0,
        );
        let w = init_params(&spec, 5);
        let basis_spec = PathSpec::fourier(2, 2, 4.0);
        let layout = spec.layout();
        for &t in &[0.0, 0.7, 2.3, 4.0] {
            let full = eval_path(&spec, &w, t).unwrap();
            let basis = eval_path(&basis_spec, &w[layout.basis.clone()], t).unwrap();
            for s in 0..2 {
                assert!((full[s] - basis[s]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn init_params_is_deterministic() {
        let spec = PathSpec::residual_net(
            2,
            LinearBasis::Rbf { centers: even_centers(5), scale: 0.05 },
            4,
            vec![8],
            2.0,
        );
        assert_eq!(init_params(&spec, 123), init_params(&spec, 123));
        assert_ne!(init_params(&spec, 123), init_params(&spec, 124));
    }

    // eval_path_dot equals a central finite difference of eval_path in t for
    // every kind, including the network tangent propagation.
    #[test]
    fn dot_matches_finite_difference_for_all_kinds() {
        let window = 3.0;
        let specs = vec![
            PathSpec::fourier(2, 3, window),
            PathSpec::reparam_fourier(2, 3, window),
            PathSpec::rbf(2, 6, 0.05, window),
            PathSpec::residual_net(2, LinearBasis::Fourier { modes: 2 }, 4, vec![5], window),
        ];
        for spec in specs {
            let mut w = init_params(&spec, 17);
            // give the residual net a nonzero output layer so its tangent is exercised
            if let Some(net) = spec.layout().net {
                let out = net.layers.last().unwrap();
                for (k, i) in out.w.clone().enumerate() {
                    w[i] = 0.3 * ((k % 5) as f64 - 2.0);
                }
            }
            let h = 1e-6 * window;
            for &t in &[0.3, 1.1, 2.4] {
                let dot = eval_path_dot(&spec, &w, t).unwrap();
                let xp = eval_path(&spec, &w, t + h).unwrap();
                let xm = eval_path(&spec, &w, t - h).unwrap();
                for s in 0..spec.d_x {
                    let fd = (xp[s] - xm[s]) / (2.0 * h);
                    let rel = (dot[s] - fd).abs() / fd.abs().max(1e-6);
                    assert!(rel < 1e-4, "{:?} state {s} at t {t}: rel {rel}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn swish_value_and_slope_at_zero() {
        let swish = |x: f64| x / (1.0 + (-x).exp());
        assert_eq!(swish(0.0), 0.0);
        let g = fd_grad(|x| swish(x[0]), &[0.0], 1e-6);
        assert!((g[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn taped_path_gradients_match_finite_differences() {
        let spec = PathSpec::residual_net(
            1,
            LinearBasis::Fourier { modes: 1 },
            2,
            vec![4],
            2.0,
        );
        let mut w = init_params(&spec, 31);
        for (k, v) in w.iter_mut().enumerate() {
            *v += 0.05 * ((k % 7) as f64 - 3.0);
        }
        let t = 0.9;
        let g = grad(
            |_, vars| eval_path_and_dot(&spec, vars, t).unwrap().1[0],
            &w,
        )
        .unwrap();
        let fd = fd_grad(
            |vals| eval_path_and_dot(&spec, vals, t).unwrap().1[0],
            &w,
            1e-5,
        );
        for i in 0..w.len() {
            let rel = (g[i] - fd[i]).abs() / fd[i].abs().max(1.0);
            assert!(rel < 1e-6, "param {i}: {} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let spec = PathSpec::fourier(2, 2, 1.0);
        let err = eval_path(&spec, &[0.0; 3], 0.5).unwrap_err();
        assert_eq!(err, PathError::LayoutMismatch { expected: 10, got: 3 });
    }

    #[test]
    fn taped_eval_value_matches_plain() {
        let spec = PathSpec::rbf(2, 5, 0.1, 2.0);
        let w = init_params(&spec, 8);
        let plain = eval_path(&spec, &w, 1.3).unwrap();
        let (taped, _) = value_and_grad(
            |_, vars| eval_path(&spec, vars, 1.3).unwrap()[1],
            &w,
        )
        .unwrap();
        assert_eq!(plain[1].to_bits(), taped.to_bits());
    }
}
