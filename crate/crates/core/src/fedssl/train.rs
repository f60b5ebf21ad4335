use rand::Rng;

use super::images::{augment_batch, ImageBatch, ImageFormat};
use super::loss::{contrastive_loss, contrastive_loss_and_grad, ContrastiveViews};
use crate::config::{AggregationMode, SimConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, HeadInit, Mlp, ParamVector};

pub const ENCODER_HIDDEN: usize = 128;
pub const EMBEDDING_DIM: usize = 64;

pub fn encoder_sizes(format: ImageFormat) -> [usize; 3] {
    [format.pixels(), ENCODER_HIDDEN, EMBEDDING_DIM]
}

pub fn new_encoder<R: Rng + ?Sized>(format: ImageFormat, rng: &mut R) -> Mlp {
    Mlp::new(&encoder_sizes(format), Activation::Identity, HeadInit::Kaiming, rng)
}

pub fn encoder_from(format: ImageFormat, params: ParamVector) -> Result<Mlp> {
    Mlp::from_params(&encoder_sizes(format), Activation::Identity, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslHyper {
    pub lr: f64,
    pub momentum: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl SslHyper {
    pub fn from_config(cfg: &SimConfig) -> Self {
        SslHyper {
            lr: cfg.ssl_lr,
            momentum: cfg.ssl_momentum,
            tau1: cfg.tau1,
            tau2: cfg.tau2,
        }
    }
}

/// Encoder plus its SGD velocity. Running `i` then `j` iterations on one
/// trainer is the same as running `i + j`.
#[derive(Debug, Clone)]
pub struct SslTrainer {
    pub encoder: Mlp,
    velocity: Vec<f64>,
}

impl SslTrainer {
    pub fn new(encoder: Mlp) -> Self {
        let n = encoder.params().len();
        SslTrainer {
            encoder,
            velocity: vec![0.0; n],
        }
    }

    /// Runs `iterations` SGD steps, each on freshly augmented views of the
    /// whole batch. Returns the loss measured before each step.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        batch: &ImageBatch,
        iterations: u64,
        hyper: &SslHyper,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(iterations as usize);
        for _ in 0..iterations {
            let (first, second) = augment_batch(batch, rng);
            let views = ContrastiveViews {
                first,
                second,
                raw: batch.images.clone(),
            };
            let out = contrastive_loss_and_grad(&self.encoder, &views, hyper.tau1, hyper.tau2)?;
            losses.push(out.loss);
            self.encoder.sgd(&out.grad, hyper.lr, hyper.momentum, &mut self.velocity)?;
        }
        Ok(losses)
    }

    pub fn into_params(self) -> ParamVector {
        self.encoder.params().clone()
    }
}

/// Trains a copy of `model` with zero initial velocity. Used for both the
/// vehicle branch and the RSU branch of a round.
pub fn local_train<R: Rng + ?Sized>(
    model: &ParamVector,
    batch: &ImageBatch,
    iterations: u64,
    hyper: &SslHyper,
    rng: &mut R,
) -> Result<ParamVector> {
    if iterations == 0 {
        return Ok(model.clone());
    }
    let mut trainer = SslTrainer::new(encoder_from(batch.format, model.clone())?);
    trainer.train(batch, iterations, hyper, rng)?;
    Ok(trainer.into_params())
}

/// SGD steps actually executed for `allocated` iterations.
pub fn executed_steps(allocated: u64, scale: f64) -> u64 {
    if allocated == 0 {
        0
    } else {
        (allocated as f64 * scale).ceil() as u64
    }
}

/// Element-wise mean of the round's models. `paper_2n` substitutes a
/// vehicle's own model for a missing RSU model so that 2N models are always
/// averaged.
pub fn aggregate(locals: &[ParamVector], rsu: &[Option<ParamVector>], mode: AggregationMode) -> Result<ParamVector> {
    let first = locals
        .first()
        .ok_or_else(|| Error::Layout("no local models to aggregate".into()))?;
    if rsu.len() != locals.len() {
        return Err(Error::Shape {
            expected: locals.len(),
            actual: rsu.len(),
        });
    }
    let mut chosen: Vec<&ParamVector> = locals.iter().collect();
    for (local, r) in locals.iter().zip(rsu) {
        match (r, mode) {
            (Some(m), _) => chosen.push(m),
            (None, AggregationMode::Paper2n) => chosen.push(local),
            (None, AggregationMode::ProducedOnly) => {}
        }
    }
    let mut sum = vec![0.0; first.len()];
    for m in &chosen {
        if !m.same_layout(first) {
            return Err(Error::Layout("aggregated models differ in layout".into()));
        }
        for (s, v) in sum.iter_mut().zip(m.values()) {
            *s += v;
        }
    }
    let n = chosen.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    ParamVector::from_values(first.layout().to_vec(), sum)
}

/// Loss of `model` on fixed views, used to track the global model.
pub fn evaluation_loss(model: &ParamVector, format: ImageFormat, views: &ContrastiveViews, hyper: &SslHyper) -> Result<f64> {
    contrastive_loss(&encoder_from(format, model.clone())?, views, hyper.tau1, hyper.tau2)
}

pub fn evaluation_views<R: Rng + ?Sized>(batch: &ImageBatch, rng: &mut R) -> ContrastiveViews {
    let (first, second) = augment_batch(batch, rng);
    ContrastiveViews {
        first,
        second,
        raw: batch.images.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedssl::images::make_synthetic_dataset;
    use crate::nn::ParamShape;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn hyper() -> SslHyper {
        SslHyper {
            lr: 0.05,
            momentum: 0.9,
            tau1: 0.1,
            tau2: 1.0,
        }
    }

    fn setup(seed: u64) -> (ParamVector, ImageBatch) {
        let mut rng = stream(seed, Stream::Init, 0, 0, 0);
        let enc = new_encoder(ImageFormat::TOY, &mut rng);
        let pool = make_synthetic_dataset(10, 4, &mut stream(seed, Stream::Dataset, 0, 0, 0));
        let batch = pool.sample(16, &mut rng);
        (enc.params().clone(), batch)
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (p, batch) = setup(1);
        let mut rng = stream(1, Stream::SslLocal, 0, 0, 0);
        assert_eq!(local_train(&p, &batch, 0, &hyper(), &mut rng).unwrap(), p);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (p, batch) = setup(2);
        let mut rng = stream(2, Stream::SslLocal, 0, 0, 0);
        let h = SslHyper { lr: 0.0, ..hyper() };
        assert_eq!(local_train(&p, &batch, 5, &h, &mut rng).unwrap(), p);
    }

    #[test]
    fn training_lowers_smoothed_loss() {
        let (p, batch) = setup(3);
        let mut rng = stream(3, Stream::SslLocal, 0, 0, 0);
        let mut t = SslTrainer::new(encoder_from(batch.format, p).unwrap());
        let losses = t.train(&batch, 50, &hyper(), &mut rng).unwrap();
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[40..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn training_composes() {
        let (p, batch) = setup(4);
        let enc = encoder_from(batch.format, p).unwrap();
        let mut whole = SslTrainer::new(enc.clone());
        whole.train(&batch, 5, &hyper(), &mut stream(4, Stream::SslLocal, 0, 0, 0)).unwrap();
        let mut parts = SslTrainer::new(enc);
        let mut rng = stream(4, Stream::SslLocal, 0, 0, 0);
        parts.train(&batch, 2, &hyper(), &mut rng).unwrap();
        parts.train(&batch, 3, &hyper(), &mut rng).unwrap();
        assert_eq!(whole.into_params(), parts.into_params());
    }

    #[test]
    fn step_scaling() {
        assert_eq!(executed_steps(0, 0.025), 0);
        assert_eq!(executed_steps(1, 0.025), 1);
        assert_eq!(executed_steps(163, 0.025), 5);
        assert_eq!(executed_steps(163, 1.0), 163);
    }

    fn vec4(v: [f64; 4]) -> ParamVector {
        ParamVector::from_values(vec![ParamShape::new("w", vec![4])], v.to_vec()).unwrap()
    }

    #[test]
    fn aggregation_modes() {
        let same = vec4([1.0, 2.0, 3.0, 4.0]);
        let g = aggregate(&[same.clone(), same.clone()], &[Some(same.clone()), Some(same.clone())], AggregationMode::Paper2n)
            .unwrap();
        assert_eq!(g, same);

        let neg = vec4([-1.0, -2.0, -3.0, -4.0]);
        let g = aggregate(&[same.clone(), neg], &[None, None], AggregationMode::ProducedOnly).unwrap();
        assert_eq!(g.values(), &[0.0; 4]);

        // N = 2, vehicle 0 offloads.
        let l0 = vec4([1.0, 0.0, 0.0, 0.0]);
        let l1 = vec4([0.0, 4.0, 0.0, 8.0]);
        let r0 = vec4([2.0, 2.0, 6.0, 1.0]);
        let locals = [l0, l1];
        let rsu = [Some(r0), None];
        let produced = aggregate(&locals, &rsu, AggregationMode::ProducedOnly).unwrap();
        assert_eq!(produced.values(), &[1.0, 2.0, 2.0, 3.0]);
        let paper = aggregate(&locals, &rsu, AggregationMode::Paper2n).unwrap();
        assert_eq!(paper.values(), &[0.75, 2.5, 1.5, 4.25]);
    }

    #[test]
    fn aggregation_rejects_layout_mismatch() {
        let a = vec4([0.0; 4]);
        let b = ParamVector::zeros(vec![ParamShape::new("v", vec![4])]);
        assert!(matches!(
            aggregate(&[a, b], &[None, None], AggregationMode::ProducedOnly),
            Err(Error::Layout(_))
        ));
    }

    proptest! {
        #[test]
        fn aggregation_is_permutation_invariant(
            vals in proptest::collection::vec(proptest::array::uniform4(-10.0f64..10.0), 2..6),
            offload in proptest::collection::vec(any::<bool>(), 6),
            rot in 0usize..6,
        ) {
            let n = vals.len();
            let locals: Vec<_> = vals.iter().map(|v| vec4(*v)).collect();
            let rsu: Vec<_> = (0..n).map(|i| offload[i].then(|| vec4(vals[(i + 1) % n].map(|x| x * 0.5)))).collect();
            let k = rot % n;
            let mut l2 = locals.clone();
            l2.rotate_left(k);
            let mut r2 = rsu.clone();
            r2.rotate_left(k);
            for mode in [AggregationMode::ProducedOnly, AggregationMode::Paper2n] {
                let a = aggregate(&locals, &rsu, mode).unwrap();
                let b = aggregate(&l2, &r2, mode).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
