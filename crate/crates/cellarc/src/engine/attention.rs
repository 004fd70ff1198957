//! Channel-wise local self-attention over the 3×3 neighborhood.
//!
//! Each channel attends independently: a cell forms a scalar query from its
//! own value and scalar keys from each neighbor's value (same channel), takes
//! a softmax over the products, and outputs the attention-weighted average of
//! the neighbor values. The result is one extra feature per perceived channel,
//! concatenated after the stencil features.
//!
//! Neighbors outside the lattice are excluded from the softmax under the zero
//! boundary (weights renormalize over the valid ones), and wrap under the
//! toroidal boundary — so the weights always sum to 1 and a uniform lattice
//! passes through unchanged.
//!
//! Queries and keys are affine per channel (`q = wq·x + bq`, `k = wk·x + bk`)
//! with weights drawn from `U(−0.1, 0.1)` and biases starting at 1, which
//! keeps the initial attention near-uniform but with live gradients.

use ndarray::{Array1, Array3, Array4};
use rand::Rng;

use crate::real::Real;

use super::perception::Boundary;

/// The 9 neighborhood offsets in row-major order; index 4 is the center.
const OFFSETS: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[inline]
fn neighbor(
    i: usize,
    j: usize,
    off: (isize, isize),
    h: usize,
    w: usize,
    boundary: Boundary,
) -> Option<(usize, usize)> {
    let ii = i as isize + off.0;
    let jj = j as isize + off.1;
    match boundary {
        Boundary::Toroidal => Some((
            ii.rem_euclid(h as isize) as usize,
            jj.rem_euclid(w as isize) as usize,
        )),
        Boundary::Zero => {
            if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                None
            } else {
                Some((ii as usize, jj as usize))
            }
        }
    }
}

/// Per-channel scalar query/key attention over the 3×3 neighborhood.
#[derive(Debug, Clone)]
pub struct NeighborhoodAttention<F: Real> {
    pub boundary: Boundary,
    pub wq: Array1<F>,
    pub bq: Array1<F>,
    pub wk: Array1<F>,
    pub bk: Array1<F>,
    pub wq_grad: Array1<F>,
    pub bq_grad: Array1<F>,
    pub wk_grad: Array1<F>,
    pub bk_grad: Array1<F>,
}

impl<F: Real> NeighborhoodAttention<F> {
    pub fn new<R: Rng>(channels: usize, boundary: Boundary, rng: &mut R) -> Self {
        let mut draw = || F::from_f64(rng.random_range(-0.1..0.1));
        NeighborhoodAttention {
            boundary,
            wq: Array1::from_shape_fn(channels, |_| draw()),
            bq: Array1::from_elem(channels, F::one()),
            wk: Array1::from_shape_fn(channels, |_| draw()),
            bk: Array1::from_elem(channels, F::one()),
            wq_grad: Array1::zeros(channels),
            bq_grad: Array1::zeros(channels),
            wk_grad: Array1::zeros(channels),
            bk_grad: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.wq.len()
    }

    /// Attention output, shape `(h, w, C)`.
    pub fn forward(&self, x: ndarray::ArrayView3<F>) -> Array3<F> {
        let (h, w, c) = x.dim();
        debug_assert_eq!(c, self.channels());
        let mut out = Array3::zeros((h, w, c));
        let mut vals = [0.0f64; 9];
        let mut weights = [0.0f64; 9];
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let n = self.cell_weights(x, i, j, ch, &mut vals, &mut weights);
                    let mut acc = 0.0;
                    for u in 0..n {
                        acc += weights[u] * vals[u];
                    }
                    out[[i, j, ch]] = F::from_f64(acc);
                }
            }
        }
        out
    }

    /// Softmax weights per cell and channel, shape `(h, w, 9, C)`; invalid
    /// neighbors (zero boundary) hold weight 0. Diagnostic/test accessor.
    pub fn attention_weights(&self, x: ndarray::ArrayView3<F>) -> Array4<F> {
        let (h, w, c) = x.dim();
        let mut out = Array4::zeros((h, w, OFFSETS.len(), c));
        let mut vals = [0.0f64; 9];
        let mut weights = [0.0f64; 9];
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let mut slot = 0usize;
                    for (u, &off) in OFFSETS.iter().enumerate() {
                        if neighbor(i, j, off, h, w, self.boundary).is_some() {
                            // Recompute in the same order cell_weights packs.
                            let _ = u;
                            slot += 1;
                        }
                    }
                    let n = self.cell_weights(x, i, j, ch, &mut vals, &mut weights);
                    debug_assert_eq!(n, slot);
                    let mut packed = 0usize;
                    for (u, &off) in OFFSETS.iter().enumerate() {
                        if neighbor(i, j, off, h, w, self.boundary).is_some() {
                            out[[i, j, u, ch]] = F::from_f64(weights[packed]);
                            packed += 1;
                        }
                    }
                }
            }
        }
        out
    }

    /// Packs valid-neighbor values and softmax weights for one cell/channel
    /// into the scratch buffers; returns how many neighbors are valid.
    #[inline]
    fn cell_weights(
        &self,
        x: ndarray::ArrayView3<F>,
        i: usize,
        j: usize,
        ch: usize,
        vals: &mut [f64; 9],
        weights: &mut [f64; 9],
    ) -> usize {
        let (h, w, _) = x.dim();
        let wq = self.wq[ch].to_f64();
        let bq = self.bq[ch].to_f64();
        let wk = self.wk[ch].to_f64();
        let bk = self.bk[ch].to_f64();
        let q = wq * x[[i, j, ch]].to_f64() + bq;
        let mut n = 0usize;
        let mut max_e = f64::NEG_INFINITY;
        for &off in &OFFSETS {
            if let Some((ii, jj)) = neighbor(i, j, off, h, w, self.boundary) {
                let v = x[[ii, jj, ch]].to_f64();
                let e = q * (wk * v + bk);
                vals[n] = v;
                weights[n] = e;
                max_e = max_e.max(e);
                n += 1;
            }
        }
        let mut sum = 0.0;
        for wgt in weights.iter_mut().take(n) {
            *wgt = (*wgt - max_e).exp();
            sum += *wgt;
        }
        for wgt in weights.iter_mut().take(n) {
            *wgt /= sum;
        }
        n
    }

    /// Backpropagates output gradients; accumulates parameter gradients and
    /// returns the input gradient.
    pub fn backward(&mut self, x: ndarray::ArrayView3<F>, dout: ndarray::ArrayView3<F>) -> Array3<F> {
        let (h, w, c) = x.dim();
        debug_assert_eq!(dout.dim(), (h, w, c));
        let mut dx = Array3::zeros((h, w, c));
        let mut vals = [0.0f64; 9];
        let mut weights = [0.0f64; 9];
        let mut cells: [(usize, usize); 9] = [(0, 0); 9];
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let g = dout[[i, j, ch]].to_f64();
                    if g == 0.0 {
                        continue;
                    }
                    let mut n = 0usize;
                    for &off in &OFFSETS {
                        if let Some(idx) = neighbor(i, j, off, h, w, self.boundary) {
                            cells[n] = idx;
                            n += 1;
                        }
                    }
                    let packed = self.cell_weights(x, i, j, ch, &mut vals, &mut weights);
                    debug_assert_eq!(packed, n);

                    let wq = self.wq[ch].to_f64();
                    let bq = self.bq[ch].to_f64();
                    let wk = self.wk[ch].to_f64();
                    let bk = self.bk[ch].to_f64();
                    let xc = x[[i, j, ch]].to_f64();
                    let q = wq * xc + bq;

                    // Value path and softmax backward.
                    let mut s = 0.0;
                    let mut da = [0.0f64; 9];
                    for u in 0..n {
                        da[u] = g * vals[u];
                        s += weights[u] * da[u];
                    }
                    let mut dq = 0.0;
                    let mut gwk = 0.0;
                    let mut gbk = 0.0;
                    for u in 0..n {
                        let de = weights[u] * (da[u] - s);
                        let k_u = wk * vals[u] + bk;
                        dq += de * k_u;
                        let dk = de * q;
                        gwk += dk * vals[u];
                        gbk += dk;
                        let (ii, jj) = cells[u];
                        // Neighbor value receives the value-path gradient and
                        // the key-path gradient.
                        let dv = g * weights[u] + dk * wk;
                        dx[[ii, jj, ch]] += F::from_f64(dv);
                    }
                    dx[[i, j, ch]] += F::from_f64(dq * wq);
                    self.wq_grad[ch] += F::from_f64(dq * xc);
                    self.bq_grad[ch] += F::from_f64(dq);
                    self.wk_grad[ch] += F::from_f64(gwk);
                    self.bk_grad[ch] += F::from_f64(gbk);
                }
            }
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.wq_grad.fill(F::zero());
        self.bq_grad.fill(F::zero());
        self.wk_grad.fill(F::zero());
        self.bk_grad.fill(F::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn uniform_lattice_passes_through_unchanged() {
        for boundary in [Boundary::Toroidal, Boundary::Zero] {
            let att = NeighborhoodAttention::<f64>::new(3, boundary, &mut rng());
            let x = Array3::from_elem((4, 4, 3), 0.6);
            let out = att.forward(x.view());
            for v in out.iter() {
                assert!((v - 0.6).abs() < 1e-12, "{boundary:?}");
            }
        }
    }

    #[test]
    fn weights_are_a_valid_distribution() {
        let att = NeighborhoodAttention::<f64>::new(2, Boundary::Zero, &mut rng());
        let x = Array3::from_shape_fn((3, 5, 2), |(i, j, c)| (i + 2 * j + c) as f64 * 0.07 - 0.3);
        let w = att.attention_weights(x.view());
        for i in 0..3 {
            for j in 0..5 {
                for c in 0..2 {
                    let mut sum = 0.0;
                    for u in 0..9 {
                        let wu = w[[i, j, u, c]];
                        assert!(wu >= 0.0);
                        sum += wu;
                    }
                    assert!((sum - 1.0).abs() < 1e-6, "cell ({i},{j}) ch {c}");
                }
            }
        }
        // Corner cell only has 4 valid neighbors under the zero boundary.
        let valid = (0..9).filter(|&u| w[[0, 0, u, 0]] > 0.0).count();
        assert_eq!(valid, 4);
    }

    #[test]
    fn matches_hand_softmax_on_single_impulse() {
        // One distinct value in an otherwise-zero 3×3 torus: weights and
        // output recomputed here from the explicit formula.
        let mut att = NeighborhoodAttention::<f64>::new(1, Boundary::Toroidal, &mut rng());
        att.wq[0] = 0.7;
        att.bq[0] = 0.2;
        att.wk[0] = -0.4;
        att.bk[0] = 0.5;
        let mut x = Array3::<f64>::zeros((3, 3, 1));
        x[[1, 1, 0]] = 0.9;

        let out = att.forward(x.view());
        // Center cell: q = 0.7·0.9 + 0.2; all nine neighbors valid, one of
        // them (itself) has value 0.9, the rest 0.
        let q: f64 = 0.7 * 0.9 + 0.2;
        let e_hot = q * (-0.4 * 0.9 + 0.5);
        let e_cold = q * 0.5;
        let z = (e_hot).exp() + 8.0 * (e_cold).exp();
        let want = (e_hot).exp() / z * 0.9;
        assert!((out[[1, 1, 0]] - want).abs() < 1e-12);

        // A neighboring cell sees the impulse once among its nine neighbors.
        let q0: f64 = 0.2; // its own value is 0
        let e_hot0 = q0 * (-0.4 * 0.9 + 0.5);
        let e_cold0 = q0 * 0.5;
        let z0 = e_hot0.exp() + 8.0 * e_cold0.exp();
        let want0 = e_hot0.exp() / z0 * 0.9;
        assert!((out[[0, 0, 0]] - want0).abs() < 1e-12);
    }

    #[test]
    fn sharp_logits_concentrate_on_the_hot_neighbor() {
        // Strong positive query/key weights make the large center value
        // dominate the softmax, so the output approaches that value.
        let mut att = NeighborhoodAttention::<f64>::new(1, Boundary::Toroidal, &mut rng());
        att.wq[0] = 10.0;
        att.bq[0] = 0.0;
        att.wk[0] = 10.0;
        att.bk[0] = 0.0;
        let mut x = Array3::from_elem((3, 3, 1), 0.1);
        x[[1, 1, 0]] = 1.0;
        let out = att.forward(x.view());
        assert!((out[[1, 1, 0]] - 1.0).abs() < 1e-3, "got {}", out[[1, 1, 0]]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng as _;
        for boundary in [Boundary::Toroidal, Boundary::Zero] {
            let mut r = rng();
            let mut att = NeighborhoodAttention::<f64>::new(2, boundary, &mut r);
            let x = Array3::from_shape_fn((3, 4, 2), |_| r.random_range(-1.0..1.0));
            let wgt = Array3::from_shape_fn((3, 4, 2), |_| r.random_range(-1.0..1.0));
            let loss =
                |a: &NeighborhoodAttention<f64>, xx: &Array3<f64>| (a.forward(xx.view()) * &wgt).sum();

            let dx = att.backward(x.view(), wgt.view());
            let eps = 1e-6;
            for idx in [[0usize, 0, 0], [1, 2, 1], [2, 3, 0], [1, 1, 1]] {
                let mut xp = x.clone();
                xp[idx] += eps;
                let mut xm = x.clone();
                xm[idx] -= eps;
                let fd = (loss(&att, &xp) - loss(&att, &xm)) / (2.0 * eps);
                assert!(
                    (dx[idx] - fd).abs() < 1e-6,
                    "{boundary:?} dx[{idx:?}] {} vs {fd}",
                    dx[idx]
                );
            }
            fn param_mut<'a>(
                a: &'a mut NeighborhoodAttention<f64>,
                name: &str,
                ch: usize,
            ) -> &'a mut f64 {
                match name {
                    "wq" => &mut a.wq[ch],
                    "bq" => &mut a.bq[ch],
                    "wk" => &mut a.wk[ch],
                    _ => &mut a.bk[ch],
                }
            }
            for ch in 0..2 {
                for name in ["wq", "bq", "wk", "bk"] {
                    let grad = match name {
                        "wq" => att.wq_grad[ch],
                        "bq" => att.bq_grad[ch],
                        "wk" => att.wk_grad[ch],
                        _ => att.bk_grad[ch],
                    };
                    let mut ap = att.clone();
                    *param_mut(&mut ap, name, ch) += eps;
                    let mut am = att.clone();
                    *param_mut(&mut am, name, ch) -= eps;
                    let fd = (loss(&ap, &x) - loss(&am, &x)) / (2.0 * eps);
                    assert!(
                        (grad - fd).abs() < 1e-6,
                        "{boundary:?} {name}[{ch}] {grad} vs {fd}"
                    );
                }
            }
        }
    }
}
