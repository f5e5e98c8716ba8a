//! Exact first and second input derivatives for small networks, plus a
//! reverse-mode scalar tape for parameter gradients.
//!
//! Input derivatives travel forward as [`DiffValue`] jets (value, gradient,
//! Hessian). Parameter gradients are accumulated in reverse, either by the
//! general [`Tape`] or by the batched network engine in
//! [`crate::network::batch`], which hand-codes the adjoint of the jet
//! propagation.

mod tape;

pub use tape::{gradient_at, parameter_gradient, Tape, Var};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::LayerShape;

/// Largest supported input dimension (S, v, t for the Heston model).
pub const MAX_DIM: usize = 3;

/// A scalar together with its gradient and Hessian with respect to the
/// network inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffValue {
    dim: usize,
    pub value: f64,
    first: [f64; MAX_DIM],
    second: [[f64; MAX_DIM]; MAX_DIM],
}

impl DiffValue {
    pub fn constant(dim: usize, value: f64) -> Self {
        assert!(dim <= MAX_DIM, "input dimension {dim} exceeds {MAX_DIM}");
        Self { dim, value, first: [0.0; MAX_DIM], second: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    /// The coordinate function x_index, seeded with unit gradient.
    pub fn variable(dim: usize, index: usize, value: f64) -> Self {
        let mut v = Self::constant(dim, value);
        v.first[index] = 1.0;
        v
    }

    /// Builds a jet from explicit parts; `second` is row-major `dim x dim`.
    pub fn new(value: f64, first: &[f64], second: &[f64]) -> Result<Self> {
        let dim = first.len();
        if dim > MAX_DIM || second.len() != dim * dim {
            return Err(Error::Shape(format!("jet with {} first and {} second entries", first.len(), second.len())));
        }
        let mut v = Self::constant(dim, value);
        v.first[..dim].copy_from_slice(first);
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (second[i * dim + j], second[j * dim + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Shape(format!("Hessian not symmetric at ({i},{j})")));
                }
                v.second[i][j] = 0.5 * (a + b);
            }
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn first(&self) -> &[f64] {
        &self.first[..self.dim]
    }

    /// ∂/∂x_i
    pub fn d(&self, i: usize) -> f64 {
        self.first[i]
    }

    /// ∂²/∂x_i∂x_j
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        self.second[i][j]
    }

    pub fn set_d(&mut self, i: usize, v: f64) {
        self.first[i] = v;
    }

    /// Sets both (i, j) and (j, i).
    pub fn set_d2(&mut self, i: usize, j: usize, v: f64) {
        self.second[i][j] = v;
        self.second[j][i] = v;
    }

    pub fn second_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            out.extend_from_slice(&self.second[i][..self.dim]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.first().iter().all(|v| v.is_finite())
            && self.second_row_major().iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        out.value *= c;
        for i in 0..self.dim {
            out.first[i] *= c;
            for j in 0..self.dim {
                out.second[i][j] *= c;
            }
        }
        out
    }

    /// a·self + b·other
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        out.value = a * self.value + b * other.value;
        for i in 0..self.dim {
            out.first[i] = a * self.first[i] + b * other.first[i];
            for j in 0..self.dim {
                out.second[i][j] = a * self.second[i][j] + b * other.second[i][j];
            }
        }
        out
    }
}

/// Applies `y = W x + b` to a vector of jets.
pub fn propagate_affine(inputs: &[DiffValue], weights: &Matrix, bias: &[f64]) -> Result<Vec<DiffValue>> {
    if weights.cols() != inputs.len() || weights.rows() != bias.len() {
        return Err(Error::Shape(format!(
            "{}x{} weights, {} inputs, {} biases",
            weights.rows(),
            weights.cols(),
            inputs.len(),
            bias.len()
        )));
    }
    let dim = inputs.first().map_or(0, |v| v.dim);
    if inputs.iter().any(|v| v.dim != dim) {
        return Err(Error::Shape("inputs with mixed dimensions".into()));
    }
    let out = (0..weights.rows())
        .map(|r| {
            let mut acc = DiffValue::constant(dim, bias[r]);
            for (w, x) in weights.row(r).iter().zip(inputs) {
                acc.value += w * x.value;
                for i in 0..dim {
                    acc.first[i] += w * x.first[i];
                    for j in 0..dim {
                        acc.second[i][j] += w * x.second[i][j];
                    }
                }
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Chain rule through tanh, with tanh' = 1 - tanh² and tanh'' = -2 tanh (1 - tanh²).
pub fn propagate_tanh(x: &DiffValue) -> DiffValue {
    let y = x.value.tanh();
    let s = 1.0 - y * y;
    let s2 = -2.0 * y * s;
    let mut out = DiffValue::constant(x.dim, y);
    for i in 0..x.dim {
        out.first[i] = s * x.first[i];
        for j in 0..x.dim {
            out.second[i][j] = s * x.second[i][j] + s2 * x.first[i] * x.first[j];
        }
    }
    out
}

/// Partial derivatives of a scalar objective, laid out like the
/// [`crate::network::NetworkParams`] they differentiate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    shapes: Vec<LayerShape>,
    values: Vec<f64>,
}

impl ParamGradient {
    pub fn new(shapes: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shapes.iter().map(LayerShape::len).sum();
        if expected != values.len() {
            return Err(Error::Shape(format!("{} partials for {expected} parameters", values.len())));
        }
        Ok(Self { shapes, values })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64]) -> DiffValue, x: &[f64], h: f64, tol: f64) {
        let jet = f(x);
        let d = x.len();
        let val = |x: &[f64]| f(x).value;
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (val(&xp) - val(&xm)) / (2.0 * h);
            assert!((fd - jet.d(i)).abs() <= tol * fd.abs().max(1.0), "first {i}: {fd} vs {}", jet.d(i));
            for j in 0..d {
                // second derivative from differences of the exact first derivative
                let fdj = (f(&xp).d(j) - f(&xm).d(j)) / (2.0 * h);
                assert!(
                    (fdj - jet.d2(i, j)).abs() <= tol * fdj.abs().max(1.0),
                    "second ({i},{j}): {fdj} vs {}",
                    jet.d2(i, j)
                );
            }
        }
    }

    fn seeds(x: &[f64]) -> Vec<DiffValue> {
        (0..x.len()).map(|i| DiffValue::variable(x.len(), i, x[i])).collect()
    }

    #[test]
    fn identity_affine_leaves_inputs_unchanged() {
        let x = [DiffValue::variable(2, 0, 0.3), DiffValue::variable(2, 1, -1.2)];
        let out = propagate_affine(&x, &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out, x.to_vec());
    }

    #[test]
    fn zero_weights_give_bias_constants() {
        let x = [DiffValue::variable(2, 0, 0.3), DiffValue::variable(2, 1, -1.2)];
        let out = propagate_affine(&x, &Matrix::zeros(3, 2), &[1.0, 2.0, 3.0]).unwrap();
        for (o, b) in out.iter().zip([1.0, 2.0, 3.0]) {
            assert_eq!(*o, DiffValue::constant(2, b));
        }
    }

    #[test]
    fn affine_shape_mismatch() {
        let x = [DiffValue::variable(2, 0, 0.3)];
        assert!(matches!(propagate_affine(&x, &Matrix::zeros(3, 2), &[0.0; 3]), Err(Error::Shape(_))));
        let x = [DiffValue::variable(2, 0, 0.3), DiffValue::variable(2, 1, 0.3)];
        assert!(matches!(propagate_affine(&x, &Matrix::zeros(3, 2), &[0.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn affine_of_nonlinear_inputs_matches_finite_differences() {
        // 2 -> 3 map applied to a curved input so the second field is exercised
        let w = Matrix::from_vec(3, 2, vec![0.7, -1.3, 0.2, 0.9, -0.4, 1.1]).unwrap();
        let b = [0.1, -0.2, 0.3];
        for r in 0..3 {
            let f = |x: &[f64]| {
                let s = seeds(x);
                let curved = [propagate_tanh(&s[0].lin_comb(1.0, &s[1], 0.5)), propagate_tanh(&s[1])];
                propagate_affine(&curved, &w, &b).unwrap()[r]
            };
            fd_check(f, &[0.4, -0.3], 1e-4, 1e-5);
        }
    }

    #[test]
    fn tanh_at_origin() {
        let out = propagate_tanh(&DiffValue::variable(2, 0, 0.0));
        assert_eq!(out.value, 0.0);
        assert_eq!(out.first(), &[1.0, 0.0]);
        assert_eq!(out.second_row_major(), vec![0.0; 4]);
    }

    #[test]
    fn tanh_of_constant_is_constant() {
        let out = propagate_tanh(&DiffValue::constant(3, 0.4));
        assert_eq!(out, DiffValue::constant(3, 0.4f64.tanh()));
    }

    #[test]
    fn tanh_mixed_seed_matches_finite_differences() {
        let f = |x: &[f64]| {
            let s = seeds(x);
            // value 0.7 at the probe point with both coordinates mixed in
            let pre = s[0].lin_comb(0.8, &s[1], -0.6);
            propagate_tanh(&propagate_tanh(&pre).lin_comb(2.0, &s[0], 0.3))
        };
        let x = [0.5, -0.5];
        fd_check(f, &x, 1e-4, 1e-6);
    }

    #[test]
    fn new_rejects_asymmetric_hessian() {
        assert!(DiffValue::new(1.0, &[0.0, 0.0], &[1.0, 2.0, 3.0, 1.0]).is_err());
        let v = DiffValue::new(1.0, &[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(v.d2(0, 1), v.d2(1, 0));
    }

    #[test]
    fn linearity_of_jets() {
        let x = [0.2, 0.9];
        let s = seeds(&x);
        let f = propagate_tanh(&s[0].lin_comb(1.5, &s[1], 0.5));
        let g = propagate_tanh(&propagate_tanh(&s[1]));
        let (a, b) = (0.3, -2.0);
        let combo = f.lin_comb(a, &g, b);
        assert!((combo.value - (a * f.value + b * g.value)).abs() < 1e-15);
        for i in 0..2 {
            assert!((combo.d(i) - (a * f.d(i) + b * g.d(i))).abs() < 1e-15);
            for j in 0..2 {
                assert!((combo.d2(i, j) - (a * f.d2(i, j) + b * g.d2(i, j))).abs() < 1e-15);
            }
        }
    }
}
