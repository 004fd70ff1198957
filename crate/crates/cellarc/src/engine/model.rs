//! Lattice update rule: subnet composition, stochastic firing, alive masking,
//! rollouts, and backpropagation through time.
//!
//! A [`CellModel`] applies its subnets in order. Each subnet reads a channel
//! range (plus, optionally, the cell's own values from a second range),
//! proposes a per-cell update for its write range, and the update lands
//! residually, gated by an independent Bernoulli fire mask per cell. After
//! all subnets have fired, alive masking (when enabled) zeroes every cell
//! whose 3×3 neighborhood had no alpha above the threshold both before and
//! after the step — growth can only happen adjacent to live cells, and
//! detached cells die.
//!
//! The backward pass consumes a [`Trajectory`] (states + fire masks, the only
//! things recorded during the forward pass) and recomputes each step's
//! internals, giving BPTT memory proportional to states alone.

use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayViewMutD, Axis};
use rand::Rng;

use crate::real::Real;

use super::attention::NeighborhoodAttention;
use super::mlp::UpdateMlp;
use super::perception::{Boundary, Perception, SensingMode};

/// One perception → (attention) → MLP unit writing a channel range.
#[derive(Debug, Clone)]
pub struct SubNet<F: Real> {
    pub name: String,
    /// Channels perceived by stencils (and attention, when present).
    pub perceive: Range<usize>,
    /// Channels concatenated raw into the feature vector (a cell reading its
    /// own private state without perceiving the neighbors').
    pub own_concat: Option<Range<usize>>,
    /// Channels this subnet updates.
    pub write: Range<usize>,
    pub perception: Perception<F>,
    pub attention: Option<NeighborhoodAttention<F>>,
    pub mlp: UpdateMlp<F>,
}

impl<F: Real> SubNet<F> {
    /// Builds a subnet with a correctly sized MLP.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: impl Into<String>,
        perceive: Range<usize>,
        own_concat: Option<Range<usize>>,
        write: Range<usize>,
        sensing: SensingMode,
        boundary: Boundary,
        attention: bool,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let perception = Perception::new(sensing, boundary);
        let attention = attention
            .then(|| NeighborhoodAttention::new(perceive.len(), boundary, rng));
        let in_width = perception.out_width(perceive.len())
            + attention.as_ref().map_or(0, |_| perceive.len())
            + own_concat.as_ref().map_or(0, |r| r.len());
        let mlp = UpdateMlp::new(in_width, hidden, write.len(), rng);
        SubNet {
            name: name.into(),
            perceive,
            own_concat,
            write,
            perception,
            attention,
            mlp,
        }
    }

    /// Width of the per-cell feature vector fed to the MLP.
    pub fn in_width(&self) -> usize {
        self.perception.out_width(self.perceive.len())
            + self.attention.as_ref().map_or(0, |_| self.perceive.len())
            + self.own_concat.as_ref().map_or(0, |r| r.len())
    }

    /// Assembles per-cell features: stencil block, then attention block,
    /// then raw own-channel block.
    fn features(&self, x: &Array3<F>) -> Array3<F> {
        let (h, w, _) = x.dim();
        let cp = self.perceive.len();
        let x_sub = x.slice(s![.., .., self.perceive.clone()]);
        let mut feats = Array3::zeros((h, w, self.in_width()));
        let conv_w = self.perception.out_width(cp);
        feats
            .slice_mut(s![.., .., 0..conv_w])
            .assign(&self.perception.forward(x_sub));
        let mut offset = conv_w;
        if let Some(att) = &self.attention {
            feats
                .slice_mut(s![.., .., offset..offset + cp])
                .assign(&att.forward(x_sub));
            offset += cp;
        }
        if let Some(own) = &self.own_concat {
            feats
                .slice_mut(s![.., .., offset..offset + own.len()])
                .assign(&x.slice(s![.., .., own.clone()]));
        }
        feats
    }

    /// The proposed update for the write range, shape `(h, w, write.len())`.
    pub fn delta(&self, x: &Array3<F>) -> Array3<F> {
        let (h, w, _) = x.dim();
        let feats = self.features(x);
        let flat = feats
            .into_shape_with_order((h * w, self.in_width()))
            .expect("features are contiguous");
        let out = self.mlp.forward(&flat);
        out.into_shape_with_order((h, w, self.write.len()))
            .expect("mlp output is contiguous")
    }

    /// Backpropagates a delta gradient to the full-width input gradient,
    /// accumulating parameter gradients along the way.
    pub fn backward(&mut self, x: &Array3<F>, ddelta: &Array3<F>) -> Array3<F> {
        let (h, w, c) = x.dim();
        let cp = self.perceive.len();
        let feats = self.features(x);
        let flat = feats
            .into_shape_with_order((h * w, self.in_width()))
            .expect("features are contiguous");
        let dflat = ddelta
            .to_owned()
            .into_shape_with_order((h * w, self.write.len()))
            .expect("delta grad is contiguous");
        let dfeat = self
            .mlp
            .backward(&flat, &dflat)
            .into_shape_with_order((h, w, self.in_width()))
            .expect("feature grad is contiguous");

        let mut dx = Array3::zeros((h, w, c));
        let x_sub = x.slice(s![.., .., self.perceive.clone()]);
        let conv_w = self.perception.out_width(cp);
        let dconv = self.perception.backward(x_sub, dfeat.slice(s![.., .., 0..conv_w]));
        dx.slice_mut(s![.., .., self.perceive.clone()])
            .scaled_add(F::one(), &dconv);
        let mut offset = conv_w;
        if let Some(att) = &mut self.attention {
            let datt = att.backward(x_sub, dfeat.slice(s![.., .., offset..offset + cp]));
            dx.slice_mut(s![.., .., self.perceive.clone()])
                .scaled_add(F::one(), &datt);
            offset += cp;
        }
        if let Some(own) = &self.own_concat {
            dx.slice_mut(s![.., .., own.clone()])
                .scaled_add(F::one(), &dfeat.slice(s![.., .., offset..offset + own.len()]));
        }
        dx
    }

    fn zero_grad(&mut self) {
        self.perception.zero_grad();
        if let Some(att) = &mut self.attention {
            att.zero_grad();
        }
        self.mlp.zero_grad();
    }
}

/// Visitor over named parameter arrays, paired with their gradient buffers.
pub type ParamVisitor<'a, F> = dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewMutD<'_, F>) + 'a;

/// Fire masks drawn during one step, one `(h, w)` 0/1 mask per subnet.
#[derive(Debug, Clone)]
pub struct StepRecord<F: Real> {
    pub fire: Vec<Array2<F>>,
}

/// A recorded rollout: `states[0]` is the seed, `states[t]` the state after
/// `t` steps, and `records[t]` the masks drawn during step `t`.
#[derive(Debug, Clone)]
pub struct Trajectory<F: Real> {
    pub states: Vec<Array3<F>>,
    pub records: Vec<StepRecord<F>>,
}

impl<F: Real> Trajectory<F> {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn final_state(&self) -> &Array3<F> {
        self.states.last().expect("trajectory holds the seed state")
    }
}

/// A complete lattice update rule.
#[derive(Debug, Clone)]
pub struct CellModel<F: Real> {
    pub channels: usize,
    pub subnets: Vec<SubNet<F>>,
    /// Probability that a cell applies its update on a given step.
    pub fire_rate: f64,
    /// Whether alpha-based alive masking is applied after each step.
    pub alive_masking: bool,
    /// Alpha threshold a 3×3 neighborhood must exceed for a cell to live.
    pub alive_threshold: f64,
    /// Channel holding alpha.
    pub alpha_channel: usize,
}

impl<F: Real> CellModel<F> {
    pub fn new(channels: usize, subnets: Vec<SubNet<F>>, fire_rate: f64, alive_masking: bool) -> Self {
        assert!(!subnets.is_empty(), "model needs at least one subnet");
        for (i, sub) in subnets.iter().enumerate() {
            assert!(
                sub.perceive.end <= channels && !sub.perceive.is_empty(),
                "subnet {i}: perceive range out of bounds"
            );
            assert!(
                sub.write.end <= channels && !sub.write.is_empty(),
                "subnet {i}: write range out of bounds"
            );
            if let Some(own) = &sub.own_concat {
                assert!(own.end <= channels, "subnet {i}: own range out of bounds");
            }
            for other in &subnets[..i] {
                assert!(
                    sub.write.end <= other.write.start || other.write.end <= sub.write.start,
                    "subnet write ranges overlap"
                );
            }
        }
        CellModel {
            channels,
            subnets,
            fire_rate,
            alive_masking,
            alive_threshold: 0.1,
            alpha_channel: crate::codec::ALPHA_CHANNEL,
        }
    }

    /// Boundary used for the alive-mask max-pool: toroidal only when every
    /// subnet perceives toroidally (keeping translation equivariance exact),
    /// zero otherwise.
    pub fn alive_boundary(&self) -> Boundary {
        if self
            .subnets
            .iter()
            .all(|sub| sub.perception.boundary == Boundary::Toroidal)
        {
            Boundary::Toroidal
        } else {
            Boundary::Zero
        }
    }

    /// Cells whose 3×3 neighborhood contains alpha above the threshold.
    pub fn alive_cells(&self, x: &Array3<F>) -> Array2<bool> {
        let alpha = x.index_axis(Axis(2), self.alpha_channel);
        let pooled = maxpool3(alpha, self.alive_boundary());
        pooled.mapv(|v| v.to_f64() > self.alive_threshold)
    }

    /// One update step, recording the fire masks it drew.
    pub fn step_recorded<R: Rng>(&self, x: &Array3<F>, rng: &mut R) -> (Array3<F>, StepRecord<F>) {
        let (h, w, _) = x.dim();
        let fire: Vec<Array2<F>> = self
            .subnets
            .iter()
            .map(|_| {
                Array2::from_shape_fn((h, w), |_| {
                    if rng.random::<f64>() < self.fire_rate {
                        F::one()
                    } else {
                        F::zero()
                    }
                })
            })
            .collect();
        let out = self.apply_step(x, &fire);
        (out, StepRecord { fire })
    }

    /// One update step.
    pub fn step<R: Rng>(&self, x: &Array3<F>, rng: &mut R) -> Array3<F> {
        self.step_recorded(x, rng).0
    }

    /// Applies the update with the given fire masks (deterministic replay).
    fn apply_step(&self, x: &Array3<F>, fire: &[Array2<F>]) -> Array3<F> {
        let mut state = x.clone();
        for (sub, mask) in self.subnets.iter().zip(fire) {
            let delta = sub.delta(&state);
            apply_masked_delta(&mut state, &delta, mask, &sub.write);
        }
        if self.alive_masking {
            let alive = combine_alive(&self.alive_cells(x), &self.alive_cells(&state));
            kill_dead_cells(&mut state, &alive);
        }
        state
    }

    /// Intermediate states within one step: element `n` is the state after
    /// the first `n` subnets have fired (before alive masking).
    fn intermediate_states(&self, x: &Array3<F>, fire: &[Array2<F>]) -> Vec<Array3<F>> {
        let mut states = Vec::with_capacity(self.subnets.len() + 1);
        states.push(x.clone());
        for (sub, mask) in self.subnets.iter().zip(fire) {
            let mut next = states.last().unwrap().clone();
            let delta = sub.delta(states.last().unwrap());
            apply_masked_delta(&mut next, &delta, mask, &sub.write);
            states.push(next);
        }
        states
    }

    /// Backward through one recorded step: returns the gradient with respect
    /// to the step input, accumulating parameter gradients.
    ///
    /// The alive mask is treated as a constant gate (its threshold is flat
    /// almost everywhere), matching the forward zeroing exactly.
    pub fn step_backward(
        &mut self,
        x: &Array3<F>,
        record: &StepRecord<F>,
        dout: &Array3<F>,
    ) -> Array3<F> {
        let inner = self.intermediate_states(x, &record.fire);
        let mut ds = dout.clone();
        if self.alive_masking {
            let alive = combine_alive(
                &self.alive_cells(x),
                &self.alive_cells(inner.last().unwrap()),
            );
            mask_gradient(&mut ds, &alive);
        }
        for (n, sub) in self.subnets.iter_mut().enumerate().rev() {
            let mask = &record.fire[n];
            // Gradient reaching this subnet's delta: the write slice of ds,
            // gated by the fire mask.
            let mut ddelta = ds.slice(s![.., .., sub.write.clone()]).to_owned();
            let m3 = mask.view().insert_axis(Axis(2));
            ndarray::Zip::from(&mut ddelta)
                .and_broadcast(&m3)
                .for_each(|d, &m| *d *= m);
            let dsub = sub.backward(&inner[n], &ddelta);
            // Residual identity path keeps ds; the delta path adds dsub.
            ds.scaled_add(F::one(), &dsub);
        }
        ds
    }

    /// Rolls the lattice forward, recording states and masks for BPTT.
    pub fn rollout_recorded<R: Rng>(&self, x0: Array3<F>, steps: usize, rng: &mut R) -> Trajectory<F> {
        let mut states = Vec::with_capacity(steps + 1);
        let mut records = Vec::with_capacity(steps);
        states.push(x0);
        for _ in 0..steps {
            let (next, record) = self.step_recorded(states.last().unwrap(), rng);
            states.push(next);
            records.push(record);
        }
        Trajectory { states, records }
    }

    /// Rolls forward without recording, returning the final state only.
    pub fn rollout<R: Rng>(&self, x0: Array3<F>, steps: usize, rng: &mut R) -> Array3<F> {
        let mut state = x0;
        for _ in 0..steps {
            state = self.step(&state, rng);
        }
        state
    }

    /// Backpropagates a final-state gradient through a recorded trajectory,
    /// accumulating parameter gradients; returns the seed-state gradient.
    pub fn backprop(&mut self, traj: &Trajectory<F>, dfinal: Array3<F>) -> Array3<F> {
        let mut d = dfinal;
        for t in (0..traj.steps()).rev() {
            d = self.step_backward(&traj.states[t], &traj.records[t], &d);
        }
        d
    }

    pub fn zero_grads(&mut self) {
        for sub in &mut self.subnets {
            sub.zero_grad();
        }
    }

    /// Visits every trainable parameter array (with its gradient buffer) in a
    /// deterministic order. Fixed-mode perception kernels are not visited.
    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        for sub in &mut self.subnets {
            let prefix = sub.name.clone();
            if sub.perception.mode == SensingMode::Learnable {
                f(
                    &format!("{prefix}.kernels"),
                    sub.perception.kernels.view_mut().into_dyn(),
                    sub.perception.kernels_grad.view_mut().into_dyn(),
                );
            }
            if let Some(att) = &mut sub.attention {
                f(
                    &format!("{prefix}.attention.wq"),
                    att.wq.view_mut().into_dyn(),
                    att.wq_grad.view_mut().into_dyn(),
                );
                f(
                    &format!("{prefix}.attention.bq"),
                    att.bq.view_mut().into_dyn(),
                    att.bq_grad.view_mut().into_dyn(),
                );
                f(
                    &format!("{prefix}.attention.wk"),
                    att.wk.view_mut().into_dyn(),
                    att.wk_grad.view_mut().into_dyn(),
                );
                f(
                    &format!("{prefix}.attention.bk"),
                    att.bk.view_mut().into_dyn(),
                    att.bk_grad.view_mut().into_dyn(),
                );
            }
            for (i, layer) in sub.mlp.hidden.iter_mut().enumerate() {
                f(
                    &format!("{prefix}.mlp.h{i}.w"),
                    layer.w.view_mut().into_dyn(),
                    layer.w_grad.view_mut().into_dyn(),
                );
                f(
                    &format!("{prefix}.mlp.h{i}.b"),
                    layer.b.view_mut().into_dyn(),
                    layer.b_grad.view_mut().into_dyn(),
                );
            }
            f(
                &format!("{prefix}.mlp.out.w"),
                sub.mlp.out.w.view_mut().into_dyn(),
                sub.mlp.out.w_grad.view_mut().into_dyn(),
            );
            f(
                &format!("{prefix}.mlp.out.b"),
                sub.mlp.out.b.view_mut().into_dyn(),
                sub.mlp.out.b_grad.view_mut().into_dyn(),
            );
        }
    }

    /// Total number of trainable scalars.
    pub fn param_count(&mut self) -> usize {
        let mut count = 0;
        self.visit_params(&mut |_, value, _| count += value.len());
        count
    }
}

/// `state[write] += mask ⊙ delta`, mask broadcast over channels.
fn apply_masked_delta<F: Real>(
    state: &mut Array3<F>,
    delta: &Array3<F>,
    mask: &Array2<F>,
    write: &Range<usize>,
) {
    let mut block = state.slice_mut(s![.., .., write.clone()]);
    let m3 = mask.view().insert_axis(Axis(2));
    ndarray::Zip::from(&mut block)
        .and(delta)
        .and_broadcast(&m3)
        .for_each(|s, &d, &m| *s += m * d);
}

fn combine_alive(pre: &Array2<bool>, post: &Array2<bool>) -> Array2<bool> {
    let mut alive = pre.clone();
    ndarray::Zip::from(&mut alive).and(post).for_each(|a, &b| *a = *a && b);
    alive
}

/// Zeroes all channels of cells not in the alive mask.
fn kill_dead_cells<F: Real>(state: &mut Array3<F>, alive: &Array2<bool>) {
    for ((i, j), &live) in alive.indexed_iter() {
        if !live {
            state.slice_mut(s![i, j, ..]).fill(F::zero());
        }
    }
}

/// Zeroes the gradient of dead cells (they were zeroed in the forward pass).
fn mask_gradient<F: Real>(grad: &mut Array3<F>, alive: &Array2<bool>) {
    for ((i, j), &live) in alive.indexed_iter() {
        if !live {
            grad.slice_mut(s![i, j, ..]).fill(F::zero());
        }
    }
}

/// 3×3 max-pool of a scalar field under the given boundary rule.
fn maxpool3<F: Real>(x: ArrayView2<F>, boundary: Boundary) -> Array2<F> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut max = F::neg_infinity();
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                let v = match boundary {
                    Boundary::Toroidal => {
                        x[[ii.rem_euclid(h as isize) as usize, jj.rem_euclid(w as isize) as usize]]
                    }
                    Boundary::Zero => {
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            F::zero()
                        } else {
                            x[[ii as usize, jj as usize]]
                        }
                    }
                };
                if v > max {
                    max = v;
                }
            }
        }
        max
    })
}
