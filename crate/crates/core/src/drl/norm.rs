use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{ParamShape, ParamVector};

/// Standardized values are clipped to this magnitude.
pub const NORM_CLIP: f64 = 10.0;

/// Per-coordinate running mean and variance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    count: f64,
    mean: Array1<f64>,
    m2: Array1<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0.0,
            mean: Array1::zeros(dim),
            m2: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn update(&mut self, x: ArrayView1<'_, f64>) {
        self.count += 1.0;
        let delta = &x - &self.mean;
        self.mean.scaled_add(1.0 / self.count, &delta);
        let delta2 = &x - &self.mean;
        self.m2 += &(&delta * &delta2);
    }

    pub fn variance(&self) -> Array1<f64> {
        if self.count < 2.0 {
            Array1::ones(self.dim())
        } else {
            &self.m2 / self.count
        }
    }

    pub fn normalize(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let std = self.variance().mapv(|v| (v + 1e-8).sqrt());
        ((&x - &self.mean) / std).mapv(|v| v.clamp(-NORM_CLIP, NORM_CLIP))
    }

    pub fn normalize_rows(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let std = self.variance().mapv(|v| (v + 1e-8).sqrt());
        ((&x - &self.mean) / &std).mapv(|v| v.clamp(-NORM_CLIP, NORM_CLIP))
    }

    pub fn to_params(&self) -> ParamVector {
        let d = self.dim();
        let mut values = vec![self.count];
        values.extend(self.mean.iter());
        values.extend(self.m2.iter());
        ParamVector::from_values(
            vec![
                ParamShape::new("count", vec![1]),
                ParamShape::new("mean", vec![d]),
                ParamShape::new("m2", vec![d]),
            ],
            values,
        )
        .expect("finite statistics")
    }

    pub fn from_params(p: &ParamVector) -> Result<Self> {
        let v = p.values();
        if v.is_empty() || (v.len() - 1) % 2 != 0 {
            return Err(Error::Layout("state normalizer section malformed".into()));
        }
        let d = (v.len() - 1) / 2;
        Ok(RunningNorm {
            count: v[0],
            mean: Array1::from(v[1..1 + d].to_vec()),
            m2: Array1::from(v[1 + d..].to_vec()),
        })
    }
}
