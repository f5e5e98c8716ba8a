use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::ParamGradient;
use crate::error::{Error, Result};
use crate::network::NetworkParams;

#[derive(Debug, Clone, Copy)]
struct Node {
    op: &'static str,
    value: f64,
    parents: [(usize, f64); 2],
    arity: u8,
}

/// Wengert list for reverse-mode differentiation of scalar programs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, op: &'static str, value: f64, parents: &[(usize, f64)]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let mut p = [(0, 0.0); 2];
        p[..parents.len()].copy_from_slice(parents);
        nodes.push(Node { op, value, parents: p, arity: parents.len() as u8 });
        Var { tape: self, idx: nodes.len() - 1, value }
    }

    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push("leaf", value, &[])
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push("const", value, &[])
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `output` with respect to every recorded node.
    ///
    /// Fails on the first non-finite node, naming its position and operation.
    pub fn adjoints(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        if let Some((i, n)) = nodes[..=output.idx].iter().enumerate().find(|(_, n)| !n.value.is_finite()) {
            return Err(Error::Numeric(format!("tape node {i} ({}) = {}", n.op, n.value)));
        }
        let mut adj = vec![0.0; nodes.len()];
        adj[output.idx] = 1.0;
        for i in (0..=output.idx).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            for &(p, w) in &n.parents[..n.arity as usize] {
                adj[p] += a * w;
            }
        }
        Ok(adj)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    fn unary(self, op: &'static str, value: f64, d: f64) -> Self {
        self.tape.push(op, value, &[(self.idx, d)])
    }

    pub fn tanh(self) -> Self {
        let y = self.value.tanh();
        self.unary("tanh", y, 1.0 - y * y)
    }

    pub fn exp(self) -> Self {
        let y = self.value.exp();
        self.unary("exp", y, y)
    }

    pub fn ln(self) -> Self {
        self.unary("ln", self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Self {
        let y = self.value.sqrt();
        self.unary("sqrt", y, 0.5 / y)
    }

    pub fn powi(self, n: i32) -> Self {
        self.unary("powi", self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    pub fn square(self) -> Self {
        self.unary("square", self.value * self.value, 2.0 * self.value)
    }

    pub fn cos(self) -> Self {
        self.unary("cos", self.value.cos(), -self.value.sin())
    }

    pub fn sin(self) -> Self {
        self.unary("sin", self.value.sin(), self.value.cos())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.push("add", self.value + rhs.value, &[(self.idx, 1.0), (rhs.idx, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.push("sub", self.value - rhs.value, &[(self.idx, 1.0), (rhs.idx, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape.push("mul", self.value * rhs.value, &[(self.idx, rhs.value), (rhs.idx, self.value)])
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.tape.push("div", q, &[(self.idx, 1.0 / rhs.value), (rhs.idx, -q / rhs.value)])
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary("neg", -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary("add_c", self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary("sub_c", self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary("mul_c", self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary("div_c", self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary("rsub_c", self - rhs.value, -1.0)
    }
}

/// Reverse-accumulated gradient of `objective` at the flat point `at`.
pub fn gradient_at<F>(objective: F, at: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = at.iter().map(|&v| tape.leaf(v)).collect();
    let out = objective(&tape, &leaves);
    let adj = tape.adjoints(out)?;
    Ok((out.value, leaves.iter().map(|l| adj[l.idx]).collect()))
}

/// Gradient of a scalar objective of the network parameters.
pub fn parameter_gradient<F>(objective: F, at: &NetworkParams) -> Result<ParamGradient>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let (_, g) = gradient_at(objective, at.as_slice())?;
    ParamGradient::new(at.shapes().to_vec(), g)
}
