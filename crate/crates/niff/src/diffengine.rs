//! Reverse-mode automatic differentiation over `f64` computations.
//!
//! The engine records a flat Wengert tape while an expression is evaluated
//! (define-by-run) and replays it backwards to accumulate adjoints. It is used
//! to obtain gradients of Hamiltonians, log-densities, and network outputs
//! with respect to path parameters, model parameters, auxiliary initial
//! states, and guide parameters.
//!
//! Design notes:
//! - The primitive set is closed: expressions can only be built from the
//!   operations [`Var`] and [`Scalar`] expose, so an unsupported operation
//!   fails when the expression is written, not when it is differentiated.
//! - Every node stores at most two parents with local partials; scalar
//!   constants are folded into the partials and never allocate a node.
//! - A [`Tape`] is single-threaded. Independent tapes may live on different
//!   threads; there is no shared state between them.
//! - Tapes are rebuilt per evaluation. [`Tape::clear`] retains the allocation
//!   so hot loops can reuse one tape without churning the allocator.
//!
//! The [`Scalar`] trait lets numerical code be written once and run either on
//! plain `f64` (no recording) or on [`Var`] (recorded). Both paths execute the
//! same operations in the same order, so primal values agree bit-for-bit.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Errors produced while building or differentiating a tape expression.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DiffError {
    /// A node evaluated to NaN or ±inf during the forward pass.
    #[error("non-finite value {value} at tape node {node} ({op})")]
    NonFinite {
        node: usize,
        op: &'static str,
        value: f64,
    },
    /// An input to `grad`/`value_and_grad` was not finite.
    #[error("non-finite input at component {index}: {value}")]
    NonFiniteInput { index: usize, value: f64 },
}

const SENTINEL: u32 = u32::MAX;
/// parents[0] marker: the node's parents live in the n-ary arena, and
/// parents[1] indexes its span.
const NARY: u32 = u32::MAX - 1;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Operation tags, kept per node purely for error reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow,
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Sqrt,
    Abs,
    Max,
    LinComb,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Pow => "pow",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Sqrt => "sqrt",
            Op::Abs => "abs",
            Op::Max => "max",
            Op::LinComb => "lincomb",
        }
    }
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    ops: Vec<Op>,
    /// (parent, partial) pairs of n-ary nodes.
    nary_arena: Vec<(u32, f64)>,
    /// (start, len) into the arena, indexed by a node's parents[1].
    nary_spans: Vec<(u32, u32)>,
}

/// Append-only record of primitive operations.
///
/// Nodes are stored in topological order by construction: an operation can
/// only reference [`Var`]s that already exist on the tape.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner::default()),
        }
    }

    /// Number of nodes currently recorded.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocations for reuse.
    pub fn clear(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.clear();
        inner.values.clear();
        inner.ops.clear();
        inner.nary_arena.clear();
        inner.nary_spans.clear();
    }

    fn push(&self, op: Op, value: f64, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node { parents, partials });
        inner.values.push(value);
        inner.ops.push(op);
        idx
    }

    /// Register an independent input variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Op::Input, value, [SENTINEL, SENTINEL], [0.0, 0.0]);
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    /// Register a batch of input variables, in order.
    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Register a constant. It participates in the forward value but carries
    /// no adjoint.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let idx = self.push(Op::Const, value, [SENTINEL, SENTINEL], [0.0, 0.0]);
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    fn unary(&self, op: Op, value: f64, parent: u32, partial: f64) -> u32 {
        self.push(op, value, [parent, SENTINEL], [partial, 0.0])
    }

    fn binary(&self, op: Op, value: f64, pa: u32, pb: u32, da: f64, db: f64) -> u32 {
        self.push(op, value, [pa, pb], [da, db])
    }

    /// One node holding an arbitrary number of (parent, partial) pairs; the
    /// workhorse behind fused linear combinations.
    fn nary(&self, op: Op, value: f64, pairs: impl Iterator<Item = (u32, f64)>) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let start = inner.nary_arena.len() as u32;
        inner.nary_arena.extend(pairs);
        let len = inner.nary_arena.len() as u32 - start;
        let span = inner.nary_spans.len() as u32;
        inner.nary_spans.push((start, len));
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node { parents: [NARY, span], partials: [0.0, 0.0] });
        inner.values.push(value);
        inner.ops.push(op);
        idx
    }

    /// Reverse sweep from a scalar root. Returns one adjoint per node;
    /// adjoints of nodes the root does not depend on are exactly zero.
    ///
    /// Fails if any node on the tape holds a non-finite value, naming the
    /// offending node.
    pub fn backward(&self, root: Var<'_>) -> Result<Adjoints, DiffError> {
        let mut adj = Vec::new();
        self.backward_into(root, &mut adj)?;
        Ok(Adjoints { adj })
    }

    /// As [`Tape::backward`], writing into a caller-owned buffer to avoid
    /// reallocation in hot loops.
    pub fn backward_into(&self, root: Var<'_>, adj: &mut Vec<f64>) -> Result<(), DiffError> {
        debug_assert!(std::ptr::eq(root.tape, self), "root from a foreign tape");
        let inner = self.inner.borrow();
        let n = inner.nodes.len();
        for (i, &v) in inner.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DiffError::NonFinite {
                    node: i,
                    op: inner.ops[i].name(),
                    value: v,
                });
            }
        }
        adj.clear();
        adj.resize(n, 0.0);
        adj[root.idx as usize] = 1.0;
        for i in (0..=root.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = inner.nodes[i];
            if node.parents[0] == NARY {
                let (start, len) = inner.nary_spans[node.parents[1] as usize];
                for &(parent, partial) in
                    &inner.nary_arena[start as usize..(start + len) as usize]
                {
                    adj[parent as usize] += a * partial;
                }
                continue;
            }
            if node.parents[0] != SENTINEL {
                adj[node.parents[0] as usize] += a * node.partials[0];
            }
            if node.parents[1] != SENTINEL {
                adj[node.parents[1] as usize] += a * node.partials[1];
            }
        }
        Ok(())
    }
}

/// Handle to one tape node: the primal value plus the node id binding it to
/// the tape that recorded it.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var[{}]={}", self.idx, self.val)
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    fn same_tape(self, other: Var<'t>) {
        debug_assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }
}

/// Adjoints from one backward sweep, indexed by tape node.
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    /// Adjoint of a single variable.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    /// Adjoints of a batch of variables, in order.
    pub fn wrt_slice(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.adj[v.idx as usize]).collect()
    }
}

// Var ⊕ Var
impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(rhs);
        let val = self.val + rhs.val;
        let idx = self
            .tape
            .binary(Op::Add, val, self.idx, rhs.idx, 1.0, 1.0);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(rhs);
        let val = self.val - rhs.val;
        let idx = self
            .tape
            .binary(Op::Sub, val, self.idx, rhs.idx, 1.0, -1.0);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(rhs);
        let val = self.val * rhs.val;
        let idx = self
            .tape
            .binary(Op::Mul, val, self.idx, rhs.idx, rhs.val, self.val);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(rhs);
        let val = self.val / rhs.val;
        let da = 1.0 / rhs.val;
        let db = -self.val / (rhs.val * rhs.val);
        let idx = self.tape.binary(Op::Div, val, self.idx, rhs.idx, da, db);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let idx = self.tape.unary(Op::Neg, -self.val, self.idx, -1.0);
        Var { tape: self.tape, idx, val: -self.val }
    }
}

// Var ⊕ f64: the constant is folded into the partial, no node allocated for it.
impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        let val = self.val + c;
        let idx = self.tape.unary(Op::Add, val, self.idx, 1.0);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        let val = self.val - c;
        let idx = self.tape.unary(Op::Sub, val, self.idx, 1.0);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        let val = self.val * c;
        let idx = self.tape.unary(Op::Mul, val, self.idx, c);
        Var { tape: self.tape, idx, val }
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        let val = self.val / c;
        let idx = self.tape.unary(Op::Div, val, self.idx, 1.0 / c);
        Var { tape: self.tape, idx, val }
    }
}

// f64 ⊕ Var
impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        let val = self - v.val;
        let idx = v.tape.unary(Op::Sub, val, v.idx, -1.0);
        Var { tape: v.tape, idx, val }
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, v: Var<'t>) -> Var<'t> {
        let val = self / v.val;
        let idx = v
            .tape
            .unary(Op::Div, val, v.idx, -self / (v.val * v.val));
        Var { tape: v.tape, idx, val }
    }
}

/// Numeric scalar abstraction shared by plain evaluation (`f64`) and taped
/// evaluation ([`Var`]). Model, path, prior, and guide code is generic over
/// this trait so the differentiated computation is the plain computation.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn val(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
    fn max(self, other: Self) -> Self;
    /// Fused Σᵢ wᵢ·coeffsᵢ with constant weights, accumulated left to
    /// right. On the tape this is a single node regardless of length.
    fn lincomb(coeffs: &[Self], weights: &[f64]) -> Self;
}

impl Scalar for f64 {
    fn val(self) -> f64 {
        self
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn sigmoid(self) -> f64 {
        1.0 / (1.0 + f64::exp(-self))
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
    fn powf(self, p: f64) -> f64 {
        f64::powf(self, p)
    }
    fn max(self, other: f64) -> f64 {
        f64::max(self, other)
    }
    fn lincomb(coeffs: &[f64], weights: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), weights.len());
        debug_assert!(!coeffs.is_empty());
        let mut acc = coeffs[0] * weights[0];
        for i in 1..coeffs.len() {
            acc += coeffs[i] * weights[i];
        }
        acc
    }
}

impl<'t> Scalar for Var<'t> {
    fn val(self) -> f64 {
        self.val
    }

    fn sin(self) -> Self {
        let val = self.val.sin();
        let idx = self.tape.unary(Op::Sin, val, self.idx, self.val.cos());
        Var { tape: self.tape, idx, val }
    }

    fn cos(self) -> Self {
        let val = self.val.cos();
        let idx = self.tape.unary(Op::Cos, val, self.idx, -self.val.sin());
        Var { tape: self.tape, idx, val }
    }

    fn exp(self) -> Self {
        let val = self.val.exp();
        let idx = self.tape.unary(Op::Exp, val, self.idx, val);
        Var { tape: self.tape, idx, val }
    }

    fn ln(self) -> Self {
        let val = self.val.ln();
        let idx = self.tape.unary(Op::Ln, val, self.idx, 1.0 / self.val);
        Var { tape: self.tape, idx, val }
    }

    fn tanh(self) -> Self {
        let val = self.val.tanh();
        let idx = self.tape.unary(Op::Tanh, val, self.idx, 1.0 - val * val);
        Var { tape: self.tape, idx, val }
    }

    fn sigmoid(self) -> Self {
        let val = 1.0 / (1.0 + (-self.val).exp());
        let idx = self
            .tape
            .unary(Op::Sigmoid, val, self.idx, val * (1.0 - val));
        Var { tape: self.tape, idx, val }
    }

    fn sqrt(self) -> Self {
        let val = self.val.sqrt();
        let idx = self.tape.unary(Op::Sqrt, val, self.idx, 0.5 / val);
        Var { tape: self.tape, idx, val }
    }

    fn abs(self) -> Self {
        let val = self.val.abs();
        // subgradient 0 at the kink
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        let idx = self.tape.unary(Op::Abs, val, self.idx, d);
        Var { tape: self.tape, idx, val }
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => {
                let idx = self.tape.unary(Op::Pow, 1.0, self.idx, 0.0);
                Var { tape: self.tape, idx, val: 1.0 }
            }
            1 => self,
            _ => {
                let val = self.val.powi(n);
                let d = f64::from(n) * self.val.powi(n - 1);
                let idx = self.tape.unary(Op::Pow, val, self.idx, d);
                Var { tape: self.tape, idx, val }
            }
        }
    }

    fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            let idx = self.tape.unary(Op::Pow, 1.0, self.idx, 0.0);
            return Var { tape: self.tape, idx, val: 1.0 };
        }
        if p == 1.0 {
            return self;
        }
        let val = self.val.powf(p);
        let d = p * self.val.powf(p - 1.0);
        let idx = self.tape.unary(Op::Pow, val, self.idx, d);
        Var { tape: self.tape, idx, val }
    }

    fn max(self, other: Self) -> Self {
        self.same_tape(other);
        let val = self.val.max(other.val);
        // ties resolved in favor of the first operand
        let (da, db) = if self.val >= other.val { (1.0, 0.0) } else { (0.0, 1.0) };
        let idx = self
            .tape
            .binary(Op::Max, val, self.idx, other.idx, da, db);
        Var { tape: self.tape, idx, val }
    }

    fn lincomb(coeffs: &[Self], weights: &[f64]) -> Self {
        debug_assert_eq!(coeffs.len(), weights.len());
        debug_assert!(!coeffs.is_empty());
        let tape = coeffs[0].tape;
        let mut val = coeffs[0].val * weights[0];
        for i in 1..coeffs.len() {
            debug_assert!(std::ptr::eq(coeffs[i].tape, tape));
            val += coeffs[i].val * weights[i];
        }
        let idx = tape.nary(
            Op::LinComb,
            val,
            coeffs.iter().zip(weights).map(|(c, &w)| (c.idx, w)),
        );
        Var { tape, idx, val }
    }
}

/// Sum of a non-empty slice, accumulated left to right.
pub fn sum<S: Scalar>(xs: &[S]) -> S {
    debug_assert!(!xs.is_empty(), "sum of empty slice");
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = acc + x;
    }
    acc
}

/// Dot product of equal-length non-empty slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    debug_assert!(!a.is_empty(), "dot of empty slices");
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Squared Euclidean norm of a non-empty slice.
pub fn norm_sq<S: Scalar>(xs: &[S]) -> S {
    debug_assert!(!xs.is_empty(), "norm_sq of empty slice");
    let mut acc = xs[0] * xs[0];
    for &x in &xs[1..] {
        acc = acc + x * x;
    }
    acc
}

fn check_inputs(at: &[f64]) -> Result<(), DiffError> {
    for (i, &v) in at.iter().enumerate() {
        if !v.is_finite() {
            return Err(DiffError::NonFiniteInput { index: i, value: v });
        }
    }
    Ok(())
}

/// Gradient of a scalar function at a point.
///
/// The closure receives the tape plus one [`Var`] per input component and
/// returns the scalar root. Evaluating through the tape does not perturb the
/// primal value: it is computed by the same operations in the same order.
pub fn grad<F>(f: F, at: &[f64]) -> Result<Vec<f64>, DiffError>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    value_and_grad(f, at).map(|(_, g)| g)
}

/// Primal value and gradient in one forward/backward pass.
pub fn value_and_grad<F>(f: F, at: &[f64]) -> Result<(f64, Vec<f64>), DiffError>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    check_inputs(at)?;
    let tape = Tape::new();
    let inputs = tape.vars(at);
    let root = f(&tape, &inputs);
    let adj = tape.backward(root)?;
    Ok((root.value(), adj.wrt_slice(&inputs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::fd_grad;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn square_gradient() {
        let (v, g) = value_and_grad(|_, x| x[0] * x[0], &[3.0]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn norm_sq_gradient() {
        let g = grad(|_, x| norm_sq(x), &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn log_value_and_grad() {
        let (v, g) = value_and_grad(|_, x| x[0].ln(), &[1.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn sin_exp_matches_finite_difference() {
        let f = |x: &[f64]| x[0].sin() * x[0].exp();
        let g = grad(|_, x| x[0].sin() * x[0].exp(), &[0.5]).unwrap();
        let fd = fd_grad(f, &[0.5], 1e-5);
        let rel = (g[0] - fd[0]).abs() / fd[0].abs();
        assert!(rel < 1e-6, "rel err {rel}");
    }

    #[test]
    fn non_finite_intermediate_names_the_node() {
        let err = grad(|_, x| x[0].ln(), &[-1.0]).unwrap_err();
        match err {
            DiffError::NonFinite { op, .. } => assert_eq!(op, "ln"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let err = grad(|_, x| x[0] + 1.0, &[f64::NAN]).unwrap_err();
        assert!(matches!(err, DiffError::NonFiniteInput { index: 0, .. }));
    }

    #[test]
    fn unreachable_nodes_have_zero_adjoint() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = tape.var(5.0);
        let _orphan = y * y;
        let root = x * 3.0;
        let adj = tape.backward(root).unwrap();
        assert_eq!(adj.wrt(x), 3.0);
        assert_eq!(adj.wrt(y), 0.0);
    }

    #[test]
    fn repeated_backward_is_deterministic() {
        let tape = Tape::new();
        let xs = tape.vars(&[0.3, -1.2, 0.8]);
        let root = (xs[0] * xs[1]).sin() + xs[2].exp() * xs[0];
        let a = tape.backward(root).unwrap().wrt_slice(&xs);
        let b = tape.backward(root).unwrap().wrt_slice(&xs);
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let at: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g_f = grad(|_, x| (x[0] * x[1]).sin() + x[2] * x[3], &at).unwrap();
            let g_h = grad(|_, x| x[0].tanh() * x[2] + x[3].sigmoid(), &at).unwrap();
            let g_sum = grad(
                |_, x| ((x[0] * x[1]).sin() + x[2] * x[3]) + (x[0].tanh() * x[2] + x[3].sigmoid()),
                &at,
            )
            .unwrap();
            for i in 0..4 {
                assert!((g_sum[i] - (g_f[i] + g_h[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_nodes_carry_no_adjoint() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let c = tape.constant(4.0);
        let root = x * c;
        let adj = tape.backward(root).unwrap();
        assert_eq!(adj.wrt(x), 4.0);
        assert_eq!(adj.wrt(c), 1.5);
    }

    #[test]
    fn clear_retains_usability() {
        let tape = Tape::new();
        {
            let x = tape.var(2.0);
            let _ = x * x;
        }
        tape.clear();
        let x = tape.var(3.0);
        let root = x * x;
        let adj = tape.backward(root).unwrap();
        assert_eq!(adj.wrt(x), 6.0);
    }

    // Every supported primitive against central finite differences with
    // inputs in [-2, 2] and step 1e-5, relative error < 1e-6.
    #[test]
    fn primitives_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(42);
        type Case = (
            &'static str,
            fn(&[f64]) -> f64,
            for<'t> fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
        );
        let cases: Vec<Case> = vec![
            ("add", |x| x[0] + x[1], |_, x| x[0] + x[1]),
            ("sub", |x| x[0] - x[1], |_, x| x[0] - x[1]),
            ("mul", |x| x[0] * x[1], |_, x| x[0] * x[1]),
            ("div", |x| x[0] / (x[1] + 3.0), |_, x| x[0] / (x[1] + 3.0)),
            ("pow", |x| (x[0] + 3.0).powf(1.7), |_, x| (x[0] + 3.0).powf(1.7)),
            ("powi", |x| x[0].powi(3), |_, x| x[0].powi(3)),
            ("exp", |x| x[0].exp(), |_, x| x[0].exp()),
            ("ln", |x| (x[0] + 3.0).ln(), |_, x| (x[0] + 3.0).ln()),
            ("sin", |x| x[0].sin(), |_, x| x[0].sin()),
            ("cos", |x| x[0].cos(), |_, x| x[0].cos()),
            ("tanh", |x| x[0].tanh(), |_, x| x[0].tanh()),
            (
                "sigmoid",
                |x| 1.0 / (1.0 + (-x[0]).exp()),
                |_, x| x[0].sigmoid(),
            ),
            ("sqrt", |x| (x[0] + 3.0).sqrt(), |_, x| (x[0] + 3.0).sqrt()),
            ("sum", |x| x.iter().sum(), |_, x| sum(x)),
            (
                "dot",
                |x| x[0] * x[2] + x[1] * x[3],
                |_, x| dot(&x[..2], &x[2..]),
            ),
            ("norm_sq", |x| x.iter().map(|v| v * v).sum(), |_, x| norm_sq(x)),
        ];
        for (name, f_plain, f_tape) in cases {
            for _ in 0..20 {
                let at: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = grad(f_tape, &at).unwrap();
                let fd = fd_grad(f_plain, &at, 1e-5);
                for i in 0..4 {
                    let scale = fd[i].abs().max(1.0);
                    let rel = (g[i] - fd[i]).abs() / scale;
                    assert!(rel < 1e-6, "{name}: component {i} rel err {rel}");
                }
            }
        }
    }

    #[test]
    fn lincomb_matches_unfused_fold_bitwise() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(1..12usize);
            let at: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let plain = f64::lincomb(&at, &w);
            let folded = {
                let mut acc = at[0] * w[0];
                for i in 1..n {
                    acc += at[i] * w[i];
                }
                acc
            };
            assert_eq!(plain.to_bits(), folded.to_bits());
            let (taped, g) =
                value_and_grad(|_, xs| Scalar::lincomb(xs, &w), &at).unwrap();
            assert_eq!(taped.to_bits(), plain.to_bits());
            for i in 0..n {
                assert_eq!(g[i], w[i]);
            }
        }
    }

    #[test]
    fn lincomb_accumulates_duplicate_parents() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let root = Scalar::lincomb(&[x, x, x], &[1.0, 2.0, 3.0]);
        assert_eq!(root.value(), 12.0);
        let adj = tape.backward(root).unwrap();
        assert_eq!(adj.wrt(x), 6.0);
    }

    #[test]
    fn lincomb_composes_with_other_primitives() {
        let g = grad(
            |_, xs| Scalar::lincomb(&[xs[0].sin(), xs[1]], &[2.0, -1.5]).exp(),
            &[0.4, 0.7],
        )
        .unwrap();
        let fd = fd_grad(
            |xs| (2.0 * xs[0].sin() - 1.5 * xs[1]).exp(),
            &[0.4, 0.7],
            1e-5,
        );
        for i in 0..2 {
            assert!((g[i] - fd[i]).abs() / fd[i].abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn max_and_abs_partials() {
        let g = grad(|_, x| x[0].max(x[1]), &[2.0, 1.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        let g = grad(|_, x| x[0].max(x[1]), &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
        let g = grad(|_, x| x[0].abs(), &[-1.5]).unwrap();
        assert_eq!(g, vec![-1.0]);
    }

    #[test]
    fn taped_value_is_bit_identical_to_plain() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let at: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let plain = (at[0] * at[1]).sin() * at[2].exp() + (at[0] - at[2]).tanh();
            let (taped, _) = value_and_grad(
                |_, x| (x[0] * x[1]).sin() * x[2].exp() + (x[0] - x[2]).tanh(),
                &at,
            )
            .unwrap();
            assert_eq!(plain.to_bits(), taped.to_bits());
        }
    }

    proptest! {
        // Linearity of the backward sweep: grad(a*f) = a*grad(f).
        #[test]
        fn backward_is_linear_in_root_scaling(
            x0 in -2.0f64..2.0,
            x1 in -2.0f64..2.0,
            a in -3.0f64..3.0,
        ) {
            let g1 = grad(|_, x| (x[0] * x[1]).sin() + x[0].exp(), &[x0, x1]).unwrap();
            let ga = grad(|_, x| ((x[0] * x[1]).sin() + x[0].exp()) * a, &[x0, x1]).unwrap();
            for i in 0..2 {
                prop_assert!((ga[i] - a * g1[i]).abs() < 1e-10 * (1.0 + g1[i].abs() * a.abs()));
            }
        }
    }
}
