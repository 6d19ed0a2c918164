//! Reverse-mode automatic differentiation on a flat scalar tape.
//!
//! Every intermediate scalar of a forward computation is recorded as a node
//! on a [`Tape`]; [`Tape::backward`] then walks the nodes in reverse and
//! accumulates adjoints, yielding the gradient of one output node with
//! respect to every leaf. Model code is written once against the [`Engine`]
//! trait so the identical arithmetic runs either on the tape (for training)
//! or on bare `f64` values (for inference and finite-difference checks).
//!
//! Non-finite intermediates are treated as errors at the op that produced
//! them rather than silently propagating through the graph.

use thiserror::Error;

/// Errors raised while building or differentiating an expression.
#[derive(Debug, Error)]
pub enum TapeError {
    /// An operation produced NaN or an infinity.
    #[error("{op} produced a non-finite value at node {node}")]
    NonFinite { op: &'static str, node: usize },
    /// An operand was outside the operation's domain.
    #[error("{op} domain violation at node {node}: {detail}")]
    Domain {
        op: &'static str,
        node: usize,
        detail: String,
    },
    /// A node id did not come from this tape.
    #[error("node {node} is not on this tape (tape has {len} nodes)")]
    UnknownNode { node: usize, len: usize },
    /// Backward produced a non-finite adjoint.
    #[error("non-finite gradient at node {node}")]
    NonFiniteGradient { node: usize },
}

/// Handle to one scalar node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    /// Position of the node on its tape.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Tanh(u32),
    Exp(u32),
    Ln(u32),
    Square(u32),
    Softplus(u32),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    op: Op,
}

/// Append-only record of a scalar computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all nodes but keeps the allocation for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Current value of a node recorded on this tape.
    ///
    /// Panics if the id comes from a different tape that has grown further.
    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value
    }

    fn push(&mut self, op: &'static str, node: Op, value: f64) -> Result<NodeId, TapeError> {
        if !value.is_finite() {
            return Err(TapeError::NonFinite {
                op,
                node: self.nodes.len(),
            });
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { value, op: node });
        Ok(id)
    }

    /// Records an input node. Leaves are where gradients are read off.
    pub fn leaf(&mut self, value: f64) -> Result<NodeId, TapeError> {
        self.push("leaf", Op::Leaf, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a) + self.value(b);
        self.push("add", Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a) - self.value(b);
        self.push("sub", Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a) * self.value(b);
        self.push("mul", Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let den = self.value(b);
        if den == 0.0 {
            return Err(TapeError::Domain {
                op: "div",
                node: self.nodes.len(),
                detail: "division by zero".into(),
            });
        }
        let v = self.value(a) / den;
        self.push("div", Op::Div(a.0, b.0), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a).tanh();
        self.push("tanh", Op::Tanh(a.0), v)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a).exp();
        self.push("exp", Op::Exp(a.0), v)
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let x = self.value(a);
        if x <= 0.0 {
            return Err(TapeError::Domain {
                op: "ln",
                node: self.nodes.len(),
                detail: format!("argument {x} is not positive"),
            });
        }
        self.push("ln", Op::Ln(a.0), x.ln())
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let x = self.value(a);
        self.push("square", Op::Square(a.0), x * x)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let v = softplus(self.value(a));
        self.push("softplus", Op::Softplus(a.0), v)
    }

    /// Left-fold sum of a slice of nodes; an empty slice sums to zero.
    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId, TapeError> {
        match xs.split_first() {
            None => self.leaf(0.0),
            Some((&first, rest)) => {
                let mut acc = first;
                for &x in rest {
                    acc = self.add(acc, x)?;
                }
                Ok(acc)
            }
        }
    }

    /// Gradient of `output` with respect to every node on the tape.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, TapeError> {
        let out = output.index();
        if out >= self.nodes.len() {
            return Err(TapeError::UnknownNode {
                node: out,
                len: self.nodes.len(),
            });
        }
        let mut grads = vec![0.0f64; self.nodes.len()];
        grads[out] = 1.0;
        for i in (0..=out).rev() {
            let g = grads[i];
            if g == 0.0 {
                continue;
            }
            let node = self.nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grads[a as usize] += g;
                    grads[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    grads[a as usize] += g;
                    grads[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    grads[a as usize] += g * self.nodes[b as usize].value;
                    grads[b as usize] += g * self.nodes[a as usize].value;
                }
                Op::Div(a, b) => {
                    let den = self.nodes[b as usize].value;
                    grads[a as usize] += g / den;
                    grads[b as usize] -= g * node.value / den;
                }
                Op::Tanh(a) => {
                    grads[a as usize] += g * (1.0 - node.value * node.value);
                }
                Op::Exp(a) => {
                    grads[a as usize] += g * node.value;
                }
                Op::Ln(a) => {
                    grads[a as usize] += g / self.nodes[a as usize].value;
                }
                Op::Square(a) => {
                    grads[a as usize] += g * 2.0 * self.nodes[a as usize].value;
                }
                Op::Softplus(a) => {
                    grads[a as usize] += g * sigmoid(self.nodes[a as usize].value);
                }
            }
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(TapeError::NonFiniteGradient { node: bad });
        }
        Ok(Gradients { grads })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> f64 {
        self.grads[id.index()]
    }
}

/// Abstraction over where a forward computation runs.
///
/// Model code written against this trait evaluates identically on the
/// [`Tape`] (via [`Recorder`], for gradients) and on plain floats (via
/// [`Eval`], for inference). Both engines enforce the same domain and
/// finiteness checks.
pub trait Engine {
    type Value: Copy;

    /// Introduces a trainable input. [`Recorder`] collects these so the
    /// caller can scatter gradients back after the backward pass.
    fn param(&mut self, value: f64) -> Result<Self::Value, TapeError>;
    /// Introduces a constant input.
    fn lit(&mut self, value: f64) -> Result<Self::Value, TapeError>;
    fn add(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value, TapeError>;
    fn sub(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value, TapeError>;
    fn mul(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value, TapeError>;
    fn div(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value, TapeError>;
    fn tanh(&mut self, a: Self::Value) -> Result<Self::Value, TapeError>;
    fn exp(&mut self, a: Self::Value) -> Result<Self::Value, TapeError>;
    fn ln(&mut self, a: Self::Value) -> Result<Self::Value, TapeError>;
    fn square(&mut self, a: Self::Value) -> Result<Self::Value, TapeError>;
    fn softplus(&mut self, a: Self::Value) -> Result<Self::Value, TapeError>;
    fn sum(&mut self, xs: &[Self::Value]) -> Result<Self::Value, TapeError>;
    /// Concrete value behind an engine handle.
    fn value(&self, v: Self::Value) -> f64;
}

/// Records a computation on a tape and remembers which nodes were parameters.
#[derive(Debug)]
pub struct Recorder<'t> {
    pub tape: &'t mut Tape,
    pub params: Vec<NodeId>,
}

impl<'t> Recorder<'t> {
    pub fn new(tape: &'t mut Tape) -> Self {
        Self {
            tape,
            params: Vec::new(),
        }
    }
}

impl Engine for Recorder<'_> {
    type Value = NodeId;

    fn param(&mut self, value: f64) -> Result<NodeId, TapeError> {
        let id = self.tape.leaf(value)?;
        self.params.push(id);
        Ok(id)
    }

    fn lit(&mut self, value: f64) -> Result<NodeId, TapeError> {
        self.tape.leaf(value)
    }

    fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.tape.add(a, b)
    }

    fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.tape.sub(a, b)
    }

    fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.tape.mul(a, b)
    }

    fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.tape.div(a, b)
    }

    fn tanh(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.tape.tanh(a)
    }

    fn exp(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.tape.exp(a)
    }

    fn ln(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.tape.ln(a)
    }

    fn square(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.tape.square(a)
    }

    fn softplus(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.tape.softplus(a)
    }

    fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId, TapeError> {
        self.tape.sum(xs)
    }

    fn value(&self, v: NodeId) -> f64 {
        self.tape.value(v)
    }
}

/// Evaluates the same computations directly on `f64` values.
///
/// Keeps an op counter so error messages point at the same position the
/// taped run would report.
#[derive(Debug, Default)]
pub struct Eval {
    next: usize,
}

impl Eval {
    pub fn new() -> Self {
        Self::default()
    }

    fn checked(&mut self, op: &'static str, value: f64) -> Result<f64, TapeError> {
        if !value.is_finite() {
            return Err(TapeError::NonFinite {
                op,
                node: self.next,
            });
        }
        self.next += 1;
        Ok(value)
    }
}

impl Engine for Eval {
    type Value = f64;

    fn param(&mut self, value: f64) -> Result<f64, TapeError> {
        self.checked("leaf", value)
    }

    fn lit(&mut self, value: f64) -> Result<f64, TapeError> {
        self.checked("leaf", value)
    }

    fn add(&mut self, a: f64, b: f64) -> Result<f64, TapeError> {
        self.checked("add", a + b)
    }

    fn sub(&mut self, a: f64, b: f64) -> Result<f64, TapeError> {
        self.checked("sub", a - b)
    }

    fn mul(&mut self, a: f64, b: f64) -> Result<f64, TapeError> {
        self.checked("mul", a * b)
    }

    fn div(&mut self, a: f64, b: f64) -> Result<f64, TapeError> {
        if b == 0.0 {
            return Err(TapeError::Domain {
                op: "div",
                node: self.next,
                detail: "division by zero".into(),
            });
        }
        self.checked("div", a / b)
    }

    fn tanh(&mut self, a: f64) -> Result<f64, TapeError> {
        self.checked("tanh", a.tanh())
    }

    fn exp(&mut self, a: f64) -> Result<f64, TapeError> {
        self.checked("exp", a.exp())
    }

    fn ln(&mut self, a: f64) -> Result<f64, TapeError> {
        if a <= 0.0 {
            return Err(TapeError::Domain {
                op: "ln",
                node: self.next,
                detail: format!("argument {a} is not positive"),
            });
        }
        self.checked("ln", a.ln())
    }

    fn square(&mut self, a: f64) -> Result<f64, TapeError> {
        self.checked("square", a * a)
    }

    fn softplus(&mut self, a: f64) -> Result<f64, TapeError> {
        self.checked("softplus", softplus(a))
    }

    fn sum(&mut self, xs: &[f64]) -> Result<f64, TapeError> {
        match xs.split_first() {
            None => self.checked("leaf", 0.0),
            Some((&first, rest)) => {
                let mut acc = first;
                for &x in rest {
                    acc = self.add(acc, x)?;
                }
                Ok(acc)
            }
        }
    }

    fn value(&self, v: f64) -> f64 {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // f(a, b) = tanh(a*b) + softplus(ln(a)), with hand-derived gradients as
    // the oracle:
    //   softplus(ln a) = ln(1 + a)
    //   df/da = (1 - tanh(ab)^2) * b + 1 / (1 + a)
    //   df/db = (1 - tanh(ab)^2) * a
    fn sample_graph(tape: &mut Tape, a: f64, b: f64) -> (NodeId, NodeId, NodeId) {
        let va = tape.leaf(a).unwrap();
        let vb = tape.leaf(b).unwrap();
        let prod = tape.mul(va, vb).unwrap();
        let t = tape.tanh(prod).unwrap();
        let l = tape.ln(va).unwrap();
        let s = tape.softplus(l).unwrap();
        let out = tape.add(t, s).unwrap();
        (va, vb, out)
    }

    #[test]
    fn gradients_match_closed_form() {
        let (a, b) = (1.3, 0.4);
        let mut tape = Tape::new();
        let (va, vb, out) = sample_graph(&mut tape, a, b);
        let grads = tape.backward(out).unwrap();

        let t = (a * b).tanh();
        let expected_value = t + (1.0 + a).ln();
        let expected_da = (1.0 - t * t) * b + 1.0 / (1.0 + a);
        let expected_db = (1.0 - t * t) * a;

        assert_relative_eq!(tape.value(out), expected_value, epsilon = 1e-12);
        assert_relative_eq!(grads.get(va), expected_da, epsilon = 1e-12);
        assert_relative_eq!(grads.get(vb), expected_db, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let (a, b) = (1.3, 0.4);
        let mut tape = Tape::new();
        let (va, vb, out) = sample_graph(&mut tape, a, b);
        let grads = tape.backward(out).unwrap();

        let f = |a: f64, b: f64| (a * b).tanh() + softplus(a.ln());
        let h = 1e-6;
        let fd_a = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        let fd_b = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        assert_relative_eq!(grads.get(va), fd_a, epsilon = 1e-6);
        assert_relative_eq!(grads.get(vb), fd_b, epsilon = 1e-6);
    }

    // A random straight-line program over safe domains, interpreted two
    // ways: once through the tape and once by a plain-f64 interpreter used
    // for central differences.
    #[derive(Clone, Copy)]
    enum Step {
        Add(usize, usize),
        Sub(usize, usize),
        Mul(usize, usize),
        Tanh(usize),
        Square(usize),
        Softplus(usize),
        ScaledExp(usize),
        SafeLn(usize),
        SafeDiv(usize, usize),
    }

    fn random_program(rng: &mut ChaCha8Rng, n_leaves: usize, n_steps: usize) -> Vec<Step> {
        let mut steps = Vec::with_capacity(n_steps);
        for i in 0..n_steps {
            let pick = |rng: &mut ChaCha8Rng| rng.random_range(0..n_leaves + i);
            let step = match rng.random_range(0..9u32) {
                0 => Step::Add(pick(rng), pick(rng)),
                1 => Step::Sub(pick(rng), pick(rng)),
                2 => Step::Mul(pick(rng), pick(rng)),
                3 => Step::Tanh(pick(rng)),
                4 => Step::Square(pick(rng)),
                5 => Step::Softplus(pick(rng)),
                6 => Step::ScaledExp(pick(rng)),
                7 => Step::SafeLn(pick(rng)),
                _ => Step::SafeDiv(pick(rng), pick(rng)),
            };
            steps.push(step);
        }
        steps
    }

    // Interpreter used as the finite-difference oracle. ScaledExp, SafeLn
    // and SafeDiv wrap their operands into safe domains (tanh squashing,
    // shifted squares, offset denominators) so random programs stay finite
    // and differentiable.
    fn run_plain(steps: &[Step], leaves: &[f64]) -> f64 {
        let mut vals: Vec<f64> = leaves.to_vec();
        for step in steps {
            let v = match *step {
                Step::Add(a, b) => vals[a] + vals[b],
                Step::Sub(a, b) => vals[a] - vals[b],
                Step::Mul(a, b) => vals[a] * vals[b],
                Step::Tanh(a) => vals[a].tanh(),
                Step::Square(a) => vals[a] * vals[a],
                Step::Softplus(a) => softplus(vals[a]),
                Step::ScaledExp(a) => vals[a].tanh().exp(),
                Step::SafeLn(a) => (vals[a] * vals[a] + 0.5).ln(),
                Step::SafeDiv(a, b) => vals[a] / (vals[b] * vals[b] + 1.0),
            };
            vals.push(v);
        }
        // Squash the tail so magnitudes stay comparable across programs.
        vals.iter().map(|v| v.tanh()).sum()
    }

    fn run_taped(steps: &[Step], leaves: &[f64]) -> (Tape, Vec<NodeId>, NodeId) {
        let mut tape = Tape::new();
        let leaf_ids: Vec<NodeId> = leaves.iter().map(|&v| tape.leaf(v).unwrap()).collect();
        let mut ids = leaf_ids.clone();
        for step in steps {
            let v = match *step {
                Step::Add(a, b) => tape.add(ids[a], ids[b]).unwrap(),
                Step::Sub(a, b) => tape.sub(ids[a], ids[b]).unwrap(),
                Step::Mul(a, b) => tape.mul(ids[a], ids[b]).unwrap(),
                Step::Tanh(a) => tape.tanh(ids[a]).unwrap(),
                Step::Square(a) => tape.square(ids[a]).unwrap(),
                Step::Softplus(a) => tape.softplus(ids[a]).unwrap(),
                Step::ScaledExp(a) => {
                    let t = tape.tanh(ids[a]).unwrap();
                    tape.exp(t).unwrap()
                }
                Step::SafeLn(a) => {
                    let sq = tape.square(ids[a]).unwrap();
                    let half = tape.leaf(0.5).unwrap();
                    let shifted = tape.add(sq, half).unwrap();
                    tape.ln(shifted).unwrap()
                }
                Step::SafeDiv(a, b) => {
                    let sq = tape.square(ids[b]).unwrap();
                    let one = tape.leaf(1.0).unwrap();
                    let den = tape.add(sq, one).unwrap();
                    tape.div(ids[a], den).unwrap()
                }
            };
            ids.push(v);
        }
        let squashed: Vec<NodeId> = ids.iter().map(|&id| tape.tanh(id).unwrap()).collect();
        let out = tape.sum(&squashed).unwrap();
        (tape, leaf_ids, out)
    }

    #[test]
    fn random_graphs_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n_leaves = 6;
            let steps = random_program(&mut rng, n_leaves, 30);
            let leaves: Vec<f64> = (0..n_leaves).map(|_| rng.random_range(-1.5..1.5)).collect();

            let (tape, leaf_ids, out) = run_taped(&steps, &leaves);
            assert_relative_eq!(tape.value(out), run_plain(&steps, &leaves), epsilon = 1e-12);
            let grads = tape.backward(out).unwrap();

            let h = 1e-5;
            for (i, &id) in leaf_ids.iter().enumerate() {
                let mut lo = leaves.clone();
                let mut hi = leaves.clone();
                lo[i] -= h;
                hi[i] += h;
                let fd = (run_plain(&steps, &hi) - run_plain(&steps, &lo)) / (2.0 * h);
                let ad = grads.get(id);
                let denom = ad.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((ad - fd) / denom).abs() < 1e-5,
                    "leaf {i}: ad {ad} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn ln_rejects_nonpositive() {
        let mut tape = Tape::new();
        let zero = tape.leaf(0.0).unwrap();
        let neg = tape.leaf(-1.0).unwrap();
        assert!(matches!(tape.ln(zero), Err(TapeError::Domain { .. })));
        assert!(matches!(tape.ln(neg), Err(TapeError::Domain { .. })));
    }

    #[test]
    fn div_rejects_zero_denominator() {
        let mut tape = Tape::new();
        let a = tape.leaf(1.0).unwrap();
        let b = tape.leaf(0.0).unwrap();
        assert!(matches!(tape.div(a, b), Err(TapeError::Domain { .. })));
    }

    #[test]
    fn overflow_raises_rather_than_propagating() {
        let mut tape = Tape::new();
        let big = tape.leaf(800.0).unwrap();
        assert!(matches!(tape.exp(big), Err(TapeError::NonFinite { .. })));
        let huge = tape.leaf(1e308).unwrap();
        assert!(matches!(
            tape.mul(huge, huge),
            Err(TapeError::NonFinite { .. })
        ));
    }

    #[test]
    fn nonfinite_leaf_rejected() {
        let mut tape = Tape::new();
        assert!(tape.leaf(f64::NAN).is_err());
        assert!(tape.leaf(f64::INFINITY).is_err());
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        let mut tape = Tape::new();
        let lo = tape.leaf(-800.0).unwrap();
        let hi = tape.leaf(800.0).unwrap();
        let a = tape.softplus(lo).unwrap();
        let b = tape.softplus(hi).unwrap();
        assert_eq!(tape.value(a), 0.0);
        assert_eq!(tape.value(b), 800.0);
    }

    #[test]
    fn backward_rejects_foreign_node() {
        let mut tape = Tape::new();
        let a = tape.leaf(1.0).unwrap();
        let _ = a;
        let mut other = Tape::new();
        for _ in 0..5 {
            other.leaf(0.0).unwrap();
        }
        let foreign = other.leaf(1.0).unwrap();
        assert!(matches!(
            tape.backward(foreign),
            Err(TapeError::UnknownNode { .. })
        ));
    }

    #[test]
    fn sum_of_empty_slice_is_zero() {
        let mut tape = Tape::new();
        let s = tape.sum(&[]).unwrap();
        assert_eq!(tape.value(s), 0.0);
    }

    #[test]
    fn unused_branches_get_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(2.0).unwrap();
        let b = tape.leaf(3.0).unwrap();
        let out = tape.square(a).unwrap();
        let grads = tape.backward(out).unwrap();
        assert_eq!(grads.get(b), 0.0);
        assert_eq!(grads.get(a), 4.0);
    }

    #[test]
    fn eval_engine_matches_recorder_engine() {
        fn forward<E: Engine>(eng: &mut E) -> Result<E::Value, TapeError> {
            let a = eng.param(0.7)?;
            let b = eng.param(-1.2)?;
            let c = eng.lit(2.5)?;
            let p = eng.mul(a, b)?;
            let t = eng.tanh(p)?;
            let s = eng.softplus(b)?;
            let q = eng.div(t, c)?;
            let sq = eng.square(a)?;
            let e = eng.exp(t)?;
            let l = eng.ln(c)?;
            eng.sum(&[q, s, sq, e, l])
        }

        let mut eval = Eval::new();
        let out = forward(&mut eval).unwrap();
        let plain = eval.value(out);

        let mut tape = Tape::new();
        let mut rec = Recorder::new(&mut tape);
        let out = forward(&mut rec).unwrap();
        assert_eq!(rec.params.len(), 2);
        assert_eq!(tape.value(out), plain);
    }
}
