use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::params::{ParamShape, ParamVector};
use super::optim::{adam_step, sgd_step, AdamHyper, AdamState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }
}

/// Initialization of the output layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadInit {
    /// Same fan-in scaled scheme as the hidden layers.
    Kaiming,
    /// Uniform in `[-limit, limit]` for weights and biases.
    Small(f64),
}

/// Multilayer perceptron: rectifier hidden layers and a configurable output
/// activation. Layer `l` stores a weight matrix of shape `(in, out)` followed
/// by a bias of length `out`.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: ParamVector,
    version: u64,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Output of the last layer after its activation.
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn layout_for(sizes: &[usize]) -> Vec<ParamShape> {
    let mut layout = Vec::new();
    for (l, w) in sizes.windows(2).enumerate() {
        layout.push(ParamShape::new(format!("l{l}.weight"), vec![w[0], w[1]]));
        layout.push(ParamShape::new(format!("l{l}.bias"), vec![w[1]]));
    }
    layout
}

impl Mlp {
    /// `sizes` = [input, hidden..., output].
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, head: HeadInit, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let mut params = ParamVector::zeros(layout_for(sizes));
        let n_layers = sizes.len() - 1;
        let values = params.values_mut_unchecked();
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (w_lim, b_lim) = match head {
                HeadInit::Small(lim) if l + 1 == n_layers => (lim, lim),
                _ => ((6.0 / fan_in as f64).sqrt(), 1.0 / (fan_in as f64).sqrt()),
            };
            for v in &mut values[offset..offset + fan_in * fan_out] {
                *v = rng.random_range(-w_lim..=w_lim);
            }
            offset += fan_in * fan_out;
            for v in &mut values[offset..offset + fan_out] {
                *v = rng.random_range(-b_lim..=b_lim);
            }
            offset += fan_out;
        }
        Mlp {
            sizes: sizes.to_vec(),
            output,
            params,
            version: 0,
        }
    }

    pub fn from_params(sizes: &[usize], output: Activation, params: ParamVector) -> Result<Self> {
        let layout = layout_for(sizes);
        if params.layout() != layout.as_slice() {
            return Err(Error::Layout(format!(
                "parameters do not match an MLP of widths {sizes:?}"
            )));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            output,
            params,
            version: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        if !self.params.same_layout(params) {
            return Err(Error::Layout("parameter layout differs from network".into()));
        }
        self.params.set_values(params.values())?;
        self.version += 1;
        Ok(())
    }

    pub fn update_params<F: FnOnce(&mut [f64])>(&mut self, f: F) -> Result<()> {
        self.params.update(f)?;
        self.version += 1;
        Ok(())
    }

    pub fn sgd(&mut self, grad: &ParamVector, lr: f64, momentum: f64, velocity: &mut [f64]) -> Result<()> {
        self.check_grad(grad)?;
        self.update_params(|p| sgd_step(p, grad.values(), lr, momentum, velocity))
    }

    pub fn adam(&mut self, grad: &ParamVector, state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
        self.check_grad(grad)?;
        self.update_params(|p| adam_step(p, grad.values(), state, hyper))
    }

    /// `self <- omega * source + (1 - omega) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, omega: f64) -> Result<()> {
        if !self.params.same_layout(&source.params) {
            return Err(Error::Layout("soft update between different layouts".into()));
        }
        let src = source.params.values();
        self.update_params(|p| {
            for (t, s) in p.iter_mut().zip(src) {
                *t = omega * s + (1.0 - omega) * *t;
            }
        })
    }

    fn check_grad(&self, grad: &ParamVector) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let mut offset = 0;
        for w in self.sizes.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let values = self.params.values();
        let weight = ArrayView2::from_shape((fan_in, fan_out), &values[offset..offset + fan_in * fan_out])
            .expect("layout checked at construction");
        let b0 = offset + fan_in * fan_out;
        let bias = ArrayView1::from(&values[b0..b0 + fan_out]);
        (weight, bias)
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Forward pass on a batch of row vectors.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape {
                expected: self.input_width(),
                actual: input.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut x = input.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = x.dot(&w);
            z += &b;
            let act = if l + 1 == self.n_layers() {
                self.output
            } else {
                Activation::Relu
            };
            act.apply(&mut z);
            inputs.push(x);
            x = z;
        }
        let tape = Tape {
            version: self.version,
            inputs,
            output: x.clone(),
        };
        Ok((x, tape))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape {
                expected: self.input_width(),
                actual: input.ncols(),
            });
        }
        let mut x = input.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = x.dot(&w);
            z += &b;
            if l + 1 == self.n_layers() {
                self.output.apply(&mut z);
            } else {
                Activation::Relu.apply(&mut z);
            }
            x = z;
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass: gradient of `sum(grad_out * output)` with respect to the
    /// parameters and to the input batch.
    pub fn backward(&self, tape: &Tape, grad_out: ArrayView2<'_, f64>) -> Result<(ParamVector, Array2<f64>)> {
        if tape.version != self.version {
            return Err(Error::StaleTape {
                tape: tape.version,
                current: self.version,
            });
        }
        if grad_out.dim() != tape.output.dim() {
            return Err(Error::Shape {
                expected: tape.output.len(),
                actual: grad_out.len(),
            });
        }
        let mut grad = ParamVector::zeros(self.params.layout().to_vec());
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        let mut dz = grad_out.to_owned();
        match self.output {
            Activation::Identity => {}
            Activation::Relu => dz.zip_mut_with(&tape.output, |d, y| {
                if *y <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => dz.zip_mut_with(&tape.output, |d, y| *d *= 1.0 - y * y),
        }

        let gvals = grad.values_mut_unchecked();
        for l in (0..self.n_layers()).rev() {
            let x = &tape.inputs[l];
            let (w, _) = self.layer(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let dw = x.t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            let o = offsets[l];
            for (dst, v) in gvals[o..o + fan_in * fan_out].iter_mut().zip(dw.iter()) {
                *dst = *v;
            }
            for (dst, v) in gvals[o + fan_in * fan_out..o + fan_in * fan_out + fan_out].iter_mut().zip(db.iter()) {
                *dst = *v;
            }
            let mut dx = dz.dot(&w.t());
            if l > 0 {
                // x is the rectified output of layer l-1.
                dx.zip_mut_with(x, |d, a| {
                    if *a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            dz = dx;
        }
        Ok((grad, dz))
    }
}
