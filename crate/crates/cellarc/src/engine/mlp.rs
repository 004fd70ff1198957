//! The per-cell update rule: a two-layer MLP applied to every cell's feature
//! vector. Cells are flattened to rows of a matrix so both passes run as
//! GEMMs — this is the hot path of training.
//!
//! The output layer is zero-initialized (weights and bias), which makes a
//! freshly built automaton the identity map: every update it proposes is
//! exactly zero until training moves the weights.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::real::Real;

/// A dense layer with co-located gradient buffers.
#[derive(Debug, Clone)]
pub struct Dense<F: Real> {
    /// Weights, shape `(inputs, outputs)`.
    pub w: Array2<F>,
    pub b: Array1<F>,
    pub w_grad: Array2<F>,
    pub b_grad: Array1<F>,
}

impl<F: Real> Dense<F> {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| {
            F::from_f64(rng.random_range(-limit..limit))
        });
        Dense {
            w,
            b: Array1::zeros(outputs),
            w_grad: Array2::zeros((inputs, outputs)),
            b_grad: Array1::zeros(outputs),
        }
    }

    /// All-zero weights and bias (identity-at-init output layers).
    pub fn zeroed(inputs: usize, outputs: usize) -> Self {
        Dense {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
            w_grad: Array2::zeros((inputs, outputs)),
            b_grad: Array1::zeros(outputs),
        }
    }

    /// `x · W + b` for row-major cell batches, shape `(cells, inputs)`.
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
        general_mat_mul(F::one(), &x.t(), dy, F::one(), &mut self.w_grad);
        self.b_grad += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn zero_grad(&mut self) {
        self.w_grad.fill(F::zero());
        self.b_grad.fill(F::zero());
    }
}

/// Feature → update MLP: dense → ReLU → (dense → ReLU …) → zero-init dense.
///
/// Hidden widths come from the variant (64 for the standard automaton,
/// `(32, 32)` or `(132, 132)` for the composites).
#[derive(Debug, Clone)]
pub struct UpdateMlp<F: Real> {
    pub hidden: Vec<Dense<F>>,
    pub out: Dense<F>,
}

impl<F: Real> UpdateMlp<F> {
    pub fn new<R: Rng>(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut R) -> Self {
        assert!(!hidden.is_empty(), "update MLP needs a hidden layer");
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            layers.push(Dense::glorot(width, h, rng));
            width = h;
        }
        UpdateMlp {
            hidden: layers,
            out: Dense::zeroed(width, outputs),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut a = self.hidden[0].forward(x);
        relu_inplace(&mut a);
        for layer in &self.hidden[1..] {
            a = layer.forward(&a);
            relu_inplace(&mut a);
        }
        self.out.forward(&a)
    }

    /// Backward with activation recomputation: the forward activations are
    /// rebuilt from `x` rather than stored, trading a little compute for not
    /// holding per-step buffers across a whole rollout.
    pub fn backward(&mut self, x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
        // Recompute pre-activations.
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut a = self.hidden[0].forward(x);
        pre.push(a.clone());
        relu_inplace(&mut a);
        let mut acts = vec![a];
        for layer in &self.hidden[1..] {
            let mut z = layer.forward(acts.last().unwrap());
            pre.push(z.clone());
            relu_inplace(&mut z);
            acts.push(z);
        }

        let mut grad = self.out.backward(acts.last().unwrap(), dy);
        for (idx, layer) in self.hidden.iter_mut().enumerate().rev() {
            relu_backward_inplace(&mut grad, &pre[idx]);
            let upstream: &Array2<F> = if idx == 0 { x } else { &acts[idx - 1] };
            grad = layer.backward(upstream, &grad);
        }
        grad
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.hidden {
            layer.zero_grad();
        }
        self.out.zero_grad();
    }
}

#[inline]
fn relu_inplace<F: Real>(a: &mut Array2<F>) {
    a.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Masks `grad` by the ReLU derivative of `pre` (1 where pre > 0, else 0).
#[inline]
fn relu_backward_inplace<F: Real>(grad: &mut Array2<F>, pre: &Array2<F>) {
    ndarray::Zip::from(grad)
        .and(pre)
        .for_each(|g, &p| *g = if p > F::zero() { *g } else { F::zero() });
}
