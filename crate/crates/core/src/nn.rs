//! Small dense-network toolkit shared by the fusion layers and the trained
//! routers: a flat parameter store, AdamW, a cosine learning-rate schedule
//! and a central finite-difference gradient checker.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Named 2-D tensor inside a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All parameters of a model in one flat buffer, addressed by tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    specs: Vec<TensorSpec>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its slot.
    pub fn push(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> usize {
        assert_eq!(values.len(), rows * cols, "tensor `{name}` has the wrong size");
        self.specs.push(TensorSpec { name: name.to_string(), rows, cols, offset: self.values.len() });
        self.values.extend(values);
        self.specs.len() - 1
    }

    /// Appends a tensor drawn from U(−bound, bound).
    pub fn push_uniform<R: Rng>(&mut self, rng: &mut R, name: &str, rows: usize, cols: usize, bound: f64) -> usize {
        let values = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.push(name, rows, cols, values)
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn view(&self, slot: usize) -> ArrayView2<'_, f64> {
        let s = &self.specs[slot];
        ArrayView2::from_shape((s.rows, s.cols), &self.values[s.range()]).expect("tensor shape")
    }

    pub fn tensor(&self, slot: usize) -> &[f64] {
        &self.values[self.specs[slot].range()]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut [f64] {
        let r = self.specs[slot].range();
        &mut self.values[r]
    }

    /// Zeroed gradient buffer with this store's layout.
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }

    /// Mutable 2-D view of `slot` inside a gradient buffer with this layout.
    pub fn grad_view<'g>(&self, grad: &'g mut [f64], slot: usize) -> ArrayViewMut2<'g, f64> {
        let s = &self.specs[slot];
        ArrayViewMut2::from_shape((s.rows, s.cols), &mut grad[s.range()]).expect("tensor shape")
    }

    /// Rebuilds a store from specs and values (checkpoint loading).
    pub fn from_parts(specs: Vec<TensorSpec>, values: Vec<f64>) -> Option<Self> {
        let mut offset = 0;
        for s in &specs {
            if s.offset != offset {
                return None;
            }
            offset += s.len();
        }
        (offset == values.len()).then_some(Self { specs, values })
    }

    /// Rounds every parameter to the nearest float32.
    pub fn quantize_f32(&mut self) {
        self.values.iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
}

/// `U(−1/√fan_in, 1/√fan_in)` bound.
pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *p);
        }
    }
}

/// `lr · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let progress = (step as f64 / total as f64).min(1.0);
    0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Sum over rows, as a `1 × cols` matrix.
pub fn column_sums(a: &ArrayView2<f64>) -> Array2<f64> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Outcome of a central finite-difference check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub coordinates: usize,
    /// `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)`.
    pub relative_error: f64,
}

/// Compares `analytic` against central differences of `loss` at `point`,
/// over the coordinates in `coords`.
pub fn check_gradient<F>(point: &[f64], analytic: &[f64], coords: &[usize], step: f64, mut loss: F) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let up = loss(&x);
        x[i] = orig - step;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        diff += (analytic[i] - numeric).powi(2);
        na += analytic[i].powi(2);
        nn += numeric.powi(2);
    }
    let denom = na.sqrt().max(nn.sqrt());
    let relative_error = if denom == 0.0 { 0.0 } else { diff.sqrt() / denom };
    GradCheck { coordinates: coords.len(), relative_error }
}
