//! Linear classifier on frozen embeddings.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::images::ImageBatch;
use super::loss::encode;
use crate::error::Result;
use crate::nn::{adam_step, AdamHyper, AdamState, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub top1: f64,
    pub top5: f64,
}

const PROBE_STEPS: usize = 300;
const PROBE_LR: f64 = 0.05;

fn standardize(train: &Array2<f64>, test: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mean = train.mean_axis(Axis(0)).expect("non-empty train split");
    let std = train.std_axis(Axis(0), 0.0).mapv(|s| s.max(1e-8));
    ((train - &mean) / &std, (test - &mean) / &std)
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Softmax regression fitted by full-batch Adam on the training features,
/// scored on the test features.
pub fn linear_probe_features(
    train: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test: ArrayView2<'_, f64>,
    test_labels: &[usize],
    n_classes: usize,
) -> ProbeResult {
    if test_labels.is_empty() || train_labels.is_empty() {
        return ProbeResult { top1: 0.0, top5: 0.0 };
    }
    let (x, xt) = standardize(&train.to_owned(), &test.to_owned());
    let (n, d) = x.dim();
    let mut w = Array2::<f64>::zeros((d, n_classes));
    let mut b = Array1::<f64>::zeros(n_classes);
    let mut onehot = Array2::<f64>::zeros((n, n_classes));
    for (i, &l) in train_labels.iter().enumerate() {
        onehot[[i, l]] = 1.0;
    }
    let hyper = AdamHyper::with_lr(PROBE_LR);
    let mut sw = AdamState::new(d * n_classes);
    let mut sb = AdamState::new(n_classes);
    for _ in 0..PROBE_STEPS {
        let mut p = x.dot(&w) + &b;
        softmax_rows(&mut p);
        let diff = (p - &onehot) / n as f64;
        let gw = x.t().dot(&diff);
        let gb = diff.sum_axis(Axis(0));
        adam_step(w.as_slice_mut().unwrap(), gw.as_slice().unwrap(), &mut sw, &hyper);
        adam_step(b.as_slice_mut().unwrap(), gb.as_slice().unwrap(), &mut sb, &hyper);
    }
    let scores = xt.dot(&w) + &b;
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for (row, &label) in scores.rows().into_iter().zip(test_labels) {
        let target = row[label];
        let rank = row.iter().filter(|&&v| v > target).count();
        hit1 += usize::from(rank == 0);
        hit5 += usize::from(rank < 5);
    }
    let m = test_labels.len() as f64;
    ProbeResult {
        top1: hit1 as f64 / m,
        top5: hit5 as f64 / m,
    }
}

pub fn linear_probe(encoder: &Mlp, train: &ImageBatch, test: &ImageBatch, n_classes: usize) -> Result<ProbeResult> {
    let ztr = encode(encoder, train.images.view())?;
    let zte = encode(encoder, test.images.view())?;
    Ok(linear_probe_features(ztr.view(), &train.labels, zte.view(), &test.labels, n_classes))
}
