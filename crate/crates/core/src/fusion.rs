//! Fusion of a sample's image embedding `v` and text embedding `q` into one
//! routing feature.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{column_sums, init_bound, ParamStore};

pub const DEFAULT_FUSED_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    OnlyText,
    OnlyImage,
    Concat,
    NormalizeConcat,
    WeightedAverage,
    Gmu,
    Mlb,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 7] = [
        FusionMethod::OnlyText,
        FusionMethod::OnlyImage,
        FusionMethod::Concat,
        FusionMethod::NormalizeConcat,
        FusionMethod::WeightedAverage,
        FusionMethod::Gmu,
        FusionMethod::Mlb,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::OnlyText => "text",
            FusionMethod::OnlyImage => "image",
            FusionMethod::Concat => "concat",
            FusionMethod::NormalizeConcat => "normconcat",
            FusionMethod::WeightedAverage => "wavg",
            FusionMethod::Gmu => "gmu",
            FusionMethod::Mlb => "mlb",
        }
    }

    pub fn is_learnable(self) -> bool {
        matches!(self, FusionMethod::WeightedAverage | FusionMethod::Gmu | FusionMethod::Mlb)
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fusion `{s}`")))
    }
}

/// A fusion method with its input dims and (possibly learnable) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionSpec {
    pub method: FusionMethod,
    pub dim_text: usize,
    pub dim_image: usize,
    /// Width of the GMU/MLB branches; unused otherwise.
    pub hidden: usize,
    pub params: ParamStore,
}

// Parameter slots, in push order.
const WAVG_LOGIT: usize = 0;
const GMU_WZV: usize = 0;
const GMU_WZQ: usize = 1;
const GMU_BZ: usize = 2;
const GMU_WV: usize = 3;
const GMU_WQ: usize = 4;
const MLB_WV: usize = 0;
const MLB_WQ: usize = 1;

/// Intermediate values kept for the backward pass.
#[derive(Debug)]
pub struct FusionCache {
    v: Array2<f64>,
    q: Array2<f64>,
    gate: Option<Array2<f64>>,
    branch_v: Option<Array2<f64>>,
    branch_q: Option<Array2<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FusionSpec {
    pub fn new<R: Rng>(method: FusionMethod, dim_text: usize, dim_image: usize, rng: &mut R) -> Result<Self> {
        Self::with_hidden(method, dim_text, dim_image, DEFAULT_FUSED_DIM, rng)
    }

    pub fn with_hidden<R: Rng>(
        method: FusionMethod,
        dim_text: usize,
        dim_image: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dim_text == 0 || dim_image == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("fusion dims must be positive".into()));
        }
        let (dv, dq) = (dim_image, dim_text);
        let mut params = ParamStore::new();
        match method {
            FusionMethod::WeightedAverage => {
                if dv != dq {
                    return Err(Error::InvalidConfig(format!(
                        "weighted average needs equal dims, got text {dq} and image {dv}"
                    )));
                }
                // logistic(0) = ½
                params.push("fusion.alpha_logit", 1, 1, vec![0.0]);
            }
            FusionMethod::Gmu => {
                params.push_uniform(rng, "fusion.w_zv", dv, hidden, init_bound(dv));
                params.push_uniform(rng, "fusion.w_zq", dq, hidden, init_bound(dq));
                params.push_uniform(rng, "fusion.b_z", 1, hidden, init_bound(dv + dq));
                params.push_uniform(rng, "fusion.w_v", dv, hidden, init_bound(dv));
                params.push_uniform(rng, "fusion.w_q", dq, hidden, init_bound(dq));
            }
            FusionMethod::Mlb => {
                params.push_uniform(rng, "fusion.w_v", dv, hidden, init_bound(dv));
                params.push_uniform(rng, "fusion.w_q", dq, hidden, init_bound(dq));
            }
            _ => {}
        }
        Ok(Self { method, dim_text, dim_image, hidden, params })
    }

    /// Weighted average with a fixed `α` (1 = image only, 0 = text only).
    pub fn weighted_average_with_alpha(dim: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        let mut params = ParamStore::new();
        let logit = (alpha / (1.0 - alpha)).ln();
        params.push("fusion.alpha_logit", 1, 1, vec![logit]);
        Ok(Self {
            method: FusionMethod::WeightedAverage,
            dim_text: dim,
            dim_image: dim,
            hidden: DEFAULT_FUSED_DIM,
            params,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self.method {
            FusionMethod::OnlyText | FusionMethod::WeightedAverage => self.dim_text,
            FusionMethod::OnlyImage => self.dim_image,
            FusionMethod::Concat | FusionMethod::NormalizeConcat => self.dim_image + self.dim_text,
            FusionMethod::Gmu | FusionMethod::Mlb => self.hidden,
        }
    }

    pub fn is_learnable(&self) -> bool {
        !self.params.is_empty()
    }

    pub fn alpha(&self) -> Option<f64> {
        (self.method == FusionMethod::WeightedAverage).then(|| sigmoid(self.params.tensor(WAVG_LOGIT)[0]))
    }

    /// Fuses one sample.
    pub fn fuse(&self, v: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let vb = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
        let qb = Array2::from_shape_vec((1, q.len()), q.to_vec()).expect("row");
        let (z, _) = self.forward(vb.view(), qb.view())?;
        Ok(z.into_raw_vec_and_offset().0)
    }

    /// Fuses a batch: `v` is `B × dim_image`, `q` is `B × dim_text`.
    pub fn forward(&self, v: ArrayView2<f64>, q: ArrayView2<f64>) -> Result<(Array2<f64>, FusionCache)> {
        if v.ncols() != self.dim_image {
            return Err(Error::DimMismatch { expected: self.dim_image, found: v.ncols() });
        }
        if q.ncols() != self.dim_text {
            return Err(Error::DimMismatch { expected: self.dim_text, found: q.ncols() });
        }
        if v.nrows() != q.nrows() {
            return Err(Error::DimMismatch { expected: v.nrows(), found: q.nrows() });
        }
        let mut cache = FusionCache { v: v.to_owned(), q: q.to_owned(), gate: None, branch_v: None, branch_q: None };
        let z = match self.method {
            FusionMethod::OnlyText => q.to_owned(),
            FusionMethod::OnlyImage => v.to_owned(),
            FusionMethod::Concat => concatenate(Axis(1), &[v, q]).expect("same rows"),
            FusionMethod::NormalizeConcat => {
                let vn = l2_normalize_rows(&v);
                let qn = l2_normalize_rows(&q);
                concatenate(Axis(1), &[vn.view(), qn.view()]).expect("same rows")
            }
            FusionMethod::WeightedAverage => {
                let a = sigmoid(self.params.tensor(WAVG_LOGIT)[0]);
                // α = 1 must give `v` exactly, so skip the (1 − α)·q term.
                if a == 1.0 {
                    v.to_owned()
                } else {
                    &v * a + &q * (1.0 - a)
                }
            }
            FusionMethod::Gmu => {
                let pre = v.dot(&self.params.view(GMU_WZV)) + q.dot(&self.params.view(GMU_WZQ)) + self.params.view(GMU_BZ);
                let gate = pre.mapv(sigmoid);
                let tv = v.dot(&self.params.view(GMU_WV)).mapv(f64::tanh);
                let tq = q.dot(&self.params.view(GMU_WQ)).mapv(f64::tanh);
                let z = &gate * &tv + &gate.mapv(|g| 1.0 - g) * &tq;
                cache.gate = Some(gate);
                cache.branch_v = Some(tv);
                cache.branch_q = Some(tq);
                z
            }
            FusionMethod::Mlb => {
                let a = v.dot(&self.params.view(MLB_WV)).mapv(f64::tanh);
                let b = q.dot(&self.params.view(MLB_WQ)).mapv(f64::tanh);
                let z = &a * &b;
                cache.branch_v = Some(a);
                cache.branch_q = Some(b);
                z
            }
        };
        Ok((z, cache))
    }

    /// Accumulates `∂L/∂params` into `grad` (laid out like `self.params`)
    /// given `dz = ∂L/∂z`.
    pub fn backward(&self, cache: &FusionCache, dz: ArrayView2<f64>, grad: &mut [f64]) {
        match self.method {
            FusionMethod::WeightedAverage => {
                let a = sigmoid(self.params.tensor(WAVG_LOGIT)[0]);
                let d_alpha: f64 = (&dz * &(&cache.v - &cache.q)).sum();
                grad[self.params.specs()[WAVG_LOGIT].offset] += d_alpha * a * (1.0 - a);
            }
            FusionMethod::Gmu => {
                let gate = cache.gate.as_ref().expect("gmu cache");
                let tv = cache.branch_v.as_ref().expect("gmu cache");
                let tq = cache.branch_q.as_ref().expect("gmu cache");
                let d_pre = &dz * &(tv - tq) * &gate.mapv(|g| g * (1.0 - g));
                let d_v_lin = &dz * gate * &tv.mapv(|t| 1.0 - t * t);
                let d_q_lin = &dz * &gate.mapv(|g| 1.0 - g) * &tq.mapv(|t| 1.0 - t * t);
                let p = &self.params;
                p.grad_view(grad, GMU_WZV).scaled_add(1.0, &cache.v.t().dot(&d_pre));
                p.grad_view(grad, GMU_WZQ).scaled_add(1.0, &cache.q.t().dot(&d_pre));
                p.grad_view(grad, GMU_BZ).scaled_add(1.0, &column_sums(&d_pre.view()));
                p.grad_view(grad, GMU_WV).scaled_add(1.0, &cache.v.t().dot(&d_v_lin));
                p.grad_view(grad, GMU_WQ).scaled_add(1.0, &cache.q.t().dot(&d_q_lin));
            }
            FusionMethod::Mlb => {
                let a = cache.branch_v.as_ref().expect("mlb cache");
                let b = cache.branch_q.as_ref().expect("mlb cache");
                let d_a = &dz * b * &a.mapv(|t| 1.0 - t * t);
                let d_b = &dz * a * &b.mapv(|t| 1.0 - t * t);
                let p = &self.params;
                p.grad_view(grad, MLB_WV).scaled_add(1.0, &cache.v.t().dot(&d_a));
                p.grad_view(grad, MLB_WQ).scaled_add(1.0, &cache.q.t().dot(&d_b));
            }
            _ => {}
        }
    }

    /// Splits a concatenated (image, text) feature back into its parts.
    pub fn split_concat<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.dim_image)
    }
}

fn l2_normalize_rows(a: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        } else {
            row.fill(0.0);
        }
    }
    out
}

/// Builds `v` and `q` batches for `rows` of an embedding source.
pub fn gather_batch(
    rows: &[usize],
    dim_image: usize,
    dim_text: usize,
    image: impl Fn(usize) -> Vec<f64>,
    text: impl Fn(usize) -> Vec<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut v = Array2::zeros((rows.len(), dim_image));
    let mut q = Array2::zeros((rows.len(), dim_text));
    for (r, &i) in rows.iter().enumerate() {
        v.slice_mut(s![r, ..]).assign(&ndarray::Array1::from(image(i)));
        q.slice_mut(s![r, ..]).assign(&ndarray::Array1::from(text(i)));
    }
    (v, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn normalize_concat_example() {
        let f = FusionSpec::new(FusionMethod::NormalizeConcat, 2, 2, &mut rng()).unwrap();
        let z = f.fuse(&[3.0, 4.0], &[0.0, 5.0]).unwrap();
        assert_eq!(z, vec![0.6, 0.8, 0.0, 1.0]);
    }

    #[test]
    fn normalize_concat_zero_modality() {
        let f = FusionSpec::new(FusionMethod::NormalizeConcat, 2, 2, &mut rng()).unwrap();
        let z = f.fuse(&[0.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_concat_scale_invariant() {
        let f = FusionSpec::new(FusionMethod::NormalizeConcat, 3, 2, &mut rng()).unwrap();
        let v = [0.3, -1.2];
        let q = [2.0, 0.1, -0.7];
        let base = f.fuse(&v, &q).unwrap();
        for s in [1e-3, 0.5, 7.0, 1e4] {
            let vs: Vec<f64> = v.iter().map(|x| x * s).collect();
            let qs: Vec<f64> = q.iter().map(|x| x * s).collect();
            let z = f.fuse(&vs, &qs).unwrap();
            assert!(z.iter().zip(&base).all(|(a, b)| (a - b).abs() < 1e-7));
        }
    }

    #[test]
    fn concat_preserves_inputs() {
        let f = FusionSpec::new(FusionMethod::Concat, 3, 2, &mut rng()).unwrap();
        let v = [0.25, -9.0];
        let q = [1.5, 0.0, 3.0];
        let z = f.fuse(&v, &q).unwrap();
        let (zv, zq) = f.split_concat(&z);
        assert_eq!(zv, v);
        assert_eq!(zq, q);
        assert_eq!(f.output_dim(), 5);
    }

    #[test]
    fn single_modality_is_identity() {
        let t = FusionSpec::new(FusionMethod::OnlyText, 3, 2, &mut rng()).unwrap();
        let i = FusionSpec::new(FusionMethod::OnlyImage, 3, 2, &mut rng()).unwrap();
        assert_eq!(t.fuse(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap(), vec![3.0, 4.0, 5.0]);
        assert_eq!(i.fuse(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn weighted_average_boundaries() {
        let f = FusionSpec::weighted_average_with_alpha(3, 1.0).unwrap();
        let v = [0.1, 0.2, 0.3];
        assert_eq!(f.fuse(&v, &[9.0, 9.0, 9.0]).unwrap(), v.to_vec());
        let f = FusionSpec::weighted_average_with_alpha(2, 0.25).unwrap();
        let z = f.fuse(&[4.0, 0.0], &[0.0, 4.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] - 3.0).abs() < 1e-12);
        assert!(FusionSpec::new(FusionMethod::WeightedAverage, 3, 2, &mut rng()).is_err());
    }

    #[test]
    fn gmu_zero_parameters_give_zero() {
        let mut f = FusionSpec::with_hidden(FusionMethod::Gmu, 3, 2, 4, &mut rng()).unwrap();
        f.params.values_mut().fill(0.0);
        assert_eq!(f.fuse(&[1.0, -2.0], &[0.5, 0.5, 3.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn gmu_gate_in_open_interval() {
        let f = FusionSpec::with_hidden(FusionMethod::Gmu, 4, 3, 8, &mut rng()).unwrap();
        let v = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.7);
        let q = Array2::from_shape_fn((5, 4), |(i, j)| (i * j) as f64 * 0.3 - 1.0);
        let (_, cache) = f.forward(v.view(), q.view()).unwrap();
        assert!(cache.gate.unwrap().iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn dim_mismatch() {
        let f = FusionSpec::new(FusionMethod::Concat, 3, 2, &mut rng()).unwrap();
        assert!(matches!(f.fuse(&[1.0], &[1.0, 2.0, 3.0]), Err(Error::DimMismatch { expected: 2, found: 1 })));
    }

    /// Analytic parameter gradients of `Σ W ⊙ fuse(v, q)` against central
    /// differences.
    #[test]
    fn learnable_fusion_gradients() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for method in [FusionMethod::WeightedAverage, FusionMethod::Gmu, FusionMethod::Mlb] {
            let (dt, di) = if method == FusionMethod::WeightedAverage { (4, 4) } else { (4, 3) };
            for _ in 0..10 {
                let mut f = FusionSpec::with_hidden(method, dt, di, 5, &mut r).unwrap();
                if method == FusionMethod::WeightedAverage {
                    f.params.values_mut()[0] = r.random_range(-2.0..2.0);
                }
                let v = Array2::from_shape_fn((3, di), |_| r.random_range(-1.0..1.0));
                let q = Array2::from_shape_fn((3, dt), |_| r.random_range(-1.0..1.0));
                let w = Array2::from_shape_fn((3, f.output_dim()), |_| r.random_range(-1.0..1.0));
                let (_, cache) = f.forward(v.view(), q.view()).unwrap();
                let mut grad = f.params.zeros_like();
                f.backward(&cache, w.view(), &mut grad);
                let coords: Vec<usize> = (0..grad.len()).collect();
                let point = f.params.values().to_vec();
                let res = check_gradient(&point, &grad, &coords, 1e-6, |x| {
                    let mut g = f.clone();
                    g.params.values_mut().copy_from_slice(x);
                    let (z, _) = g.forward(v.view(), q.view()).unwrap();
                    (&z * &w).sum()
                });
                assert!(res.relative_error < 1e-4, "{method}: {}", res.relative_error);
            }
        }
    }
}
