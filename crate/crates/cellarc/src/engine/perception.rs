//! Neighborhood perception: depthwise 3×3 stencils over the lattice.
//!
//! Every channel is filtered with the same four kernels — identity, Sobel-x,
//! Sobel-y, and a 4-neighbor Laplacian — producing a `4 × C`-wide feature
//! block per cell, laid out kernel-major (`k * C + c`). In learnable mode the
//! kernels start from those stencils and receive gradients; in fixed mode
//! they are constants.
//!
//! The lattice boundary is either toroidal (indices wrap) or zero (cells
//! outside the lattice read as zero). Both the forward pass and the hand-
//! rolled backward pass are implemented with shifted slices over a padded
//! copy, so the gradient fold-back mirrors the padding exactly.

use ndarray::{s, Array3, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use crate::real::Real;

/// How lattice edges behave during perception (and attention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Indices wrap: the lattice is a torus.
    Toroidal,
    /// Out-of-range neighbors read as zero.
    Zero,
}

/// Whether perception kernels are trained or held at the fixed stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    Fixed,
    Learnable,
}

/// Number of perception kernels.
pub const KERNEL_COUNT: usize = 4;

/// The four fixed stencils, shape `(4, 3, 3)`: identity, Sobel-x, Sobel-y,
/// Laplacian. Learnable perception initializes from these.
pub fn fixed_kernels<F: Real>() -> Array3<F> {
    let raw: [[[f64; 3]; 3]; KERNEL_COUNT] = [
        // identity
        [[0., 0., 0.], [0., 1., 0.], [0., 0., 0.]],
        // Sobel-x (horizontal gradient)
        [[-1., 0., 1.], [-2., 0., 2.], [-1., 0., 1.]],
        // Sobel-y (vertical gradient)
        [[-1., -2., -1.], [0., 0., 0.], [1., 2., 1.]],
        // 4-neighbor Laplacian
        [[0., 1., 0.], [1., -4., 1.], [0., 1., 0.]],
    ];
    let mut kernels = Array3::zeros((KERNEL_COUNT, 3, 3));
    for k in 0..KERNEL_COUNT {
        for a in 0..3 {
            for b in 0..3 {
                kernels[[k, a, b]] = F::from_f64(raw[k][a][b]);
            }
        }
    }
    kernels
}

/// Depthwise stencil perception with gradient accumulation.
#[derive(Debug, Clone)]
pub struct Perception<F: Real> {
    pub mode: SensingMode,
    pub boundary: Boundary,
    pub kernels: Array3<F>,
    pub kernels_grad: Array3<F>,
}

impl<F: Real> Perception<F> {
    pub fn new(mode: SensingMode, boundary: Boundary) -> Self {
        let kernels = fixed_kernels();
        let kernels_grad = Array3::zeros(kernels.dim());
        Perception {
            mode,
            boundary,
            kernels,
            kernels_grad,
        }
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels.dim().0
    }

    /// Feature width produced for an input of `channels` channels.
    pub fn out_width(&self, channels: usize) -> usize {
        self.kernel_count() * channels
    }

    /// Applies all kernels; output `(h, w, K·C)`, kernel-major blocks.
    pub fn forward(&self, x: ArrayView3<F>) -> Array3<F> {
        let (h, w, c) = x.dim();
        let p = pad(x, self.boundary);
        let mut out = Array3::zeros((h, w, self.kernel_count() * c));
        for k in 0..self.kernel_count() {
            let mut block = out.slice_mut(s![.., .., k * c..(k + 1) * c]);
            for a in 0..3 {
                for b in 0..3 {
                    let coeff = self.kernels[[k, a, b]];
                    if coeff == F::zero() {
                        continue;
                    }
                    block.scaled_add(coeff, &p.slice(s![a..a + h, b..b + w, ..]));
                }
            }
        }
        out
    }

    /// Backpropagates feature gradients to the input (returned) and, in
    /// learnable mode, accumulates kernel gradients.
    pub fn backward(&mut self, x: ArrayView3<F>, dfeat: ArrayView3<F>) -> Array3<F> {
        let (h, w, c) = x.dim();
        debug_assert_eq!(dfeat.dim(), (h, w, self.kernel_count() * c));
        let mut dpad = Array3::zeros((h + 2, w + 2, c));
        for k in 0..self.kernel_count() {
            let dblock = dfeat.slice(s![.., .., k * c..(k + 1) * c]);
            for a in 0..3 {
                for b in 0..3 {
                    let coeff = self.kernels[[k, a, b]];
                    if coeff != F::zero() {
                        dpad.slice_mut(s![a..a + h, b..b + w, ..])
                            .scaled_add(coeff, &dblock);
                    }
                }
            }
        }
        if self.mode == SensingMode::Learnable {
            let p = pad(x, self.boundary);
            for k in 0..self.kernel_count() {
                let dblock = dfeat.slice(s![.., .., k * c..(k + 1) * c]);
                for a in 0..3 {
                    for b in 0..3 {
                        let mut acc = F::zero();
                        Zip::from(&p.slice(s![a..a + h, b..b + w, ..]))
                            .and(&dblock)
                            .for_each(|&pv, &dv| acc += pv * dv);
                        self.kernels_grad[[k, a, b]] += acc;
                    }
                }
            }
        }
        unpad_fold(dpad, self.boundary)
    }

    pub fn zero_grad(&mut self) {
        self.kernels_grad.fill(F::zero());
    }
}

/// Pads a lattice by one cell on each side according to the boundary rule.
fn pad<F: Real>(x: ArrayView3<F>, boundary: Boundary) -> Array3<F> {
    let (h, w, c) = x.dim();
    let mut p = Array3::zeros((h + 2, w + 2, c));
    p.slice_mut(s![1..h + 1, 1..w + 1, ..]).assign(&x);
    if boundary == Boundary::Toroidal {
        // Wrap rows first, then columns from the already-wrapped array so the
        // four corners land correctly.
        let top = x.slice(s![h - 1..h, .., ..]).to_owned();
        let bottom = x.slice(s![0..1, .., ..]).to_owned();
        p.slice_mut(s![0..1, 1..w + 1, ..]).assign(&top);
        p.slice_mut(s![h + 1..h + 2, 1..w + 1, ..]).assign(&bottom);
        let left = p.slice(s![.., w..w + 1, ..]).to_owned();
        let right = p.slice(s![.., 1..2, ..]).to_owned();
        p.slice_mut(s![.., 0..1, ..]).assign(&left);
        p.slice_mut(s![.., w + 1..w + 2, ..]).assign(&right);
    }
    p
}

/// Inverse of [`pad`] for gradients: folds border contributions back onto the
/// cells they were read from (toroidal) or drops them (zero boundary).
fn unpad_fold<F: Real>(dpad: Array3<F>, boundary: Boundary) -> Array3<F> {
    let (hp, wp, c) = dpad.dim();
    let (h, w) = (hp - 2, wp - 2);
    let mut dx: Array3<F> = dpad.slice(s![1..h + 1, 1..w + 1, ..]).to_owned();
    if boundary == Boundary::Toroidal {
        // Rows.
        dx.slice_mut(s![h - 1..h, .., ..])
            .scaled_add(F::one(), &dpad.slice(s![0..1, 1..w + 1, ..]));
        dx.slice_mut(s![0..1, .., ..])
            .scaled_add(F::one(), &dpad.slice(s![h + 1..h + 2, 1..w + 1, ..]));
        // Columns.
        dx.slice_mut(s![.., w - 1..w, ..])
            .scaled_add(F::one(), &dpad.slice(s![1..h + 1, 0..1, ..]));
        dx.slice_mut(s![.., 0..1, ..])
            .scaled_add(F::one(), &dpad.slice(s![1..h + 1, w + 1..w + 2, ..]));
        // Corners.
        let _ = c;
        for (pi, pj, xi, xj) in [
            (0, 0, h - 1, w - 1),
            (0, w + 1, h - 1, 0),
            (h + 1, 0, 0, w - 1),
            (h + 1, w + 1, 0, 0),
        ] {
            let corner = dpad.slice(s![pi..pi + 1, pj..pj + 1, ..]).to_owned();
            dx.slice_mut(s![xi..xi + 1, xj..xj + 1, ..])
                .scaled_add(F::one(), &corner);
        }
    }
    dx
}
