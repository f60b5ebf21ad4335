//! InfoNCE probability and the dual-temperature contrastive loss.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::Result;
use crate::nn::{Mlp, ParamVector};

/// Coefficients are replaced by 1 once the positive probability is this close
/// to 1.
pub const DEGENERATE_EPS: f64 = 1e-12;

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax probabilities over `[positive, negatives...]` at temperature tau.
fn softmax_scores(pos: f64, negs: &[f64], tau: f64) -> Vec<f64> {
    let mut logits = Vec::with_capacity(negs.len() + 1);
    logits.push(pos / tau);
    logits.extend(negs.iter().map(|s| s / tau));
    let lse = logsumexp(&logits);
    logits.into_iter().map(|l| (l - lse).exp()).collect()
}

pub fn info_nce(q: ArrayView1<'_, f64>, k_pos: ArrayView1<'_, f64>, negatives: ArrayView2<'_, f64>, tau: f64) -> f64 {
    let pos = q.dot(&k_pos);
    let negs: Vec<f64> = negatives.rows().into_iter().map(|k| q.dot(&k)).collect();
    softmax_scores(pos, &negs, tau)[0]
}

/// Loss of one anchor together with gradients of the loss with respect to
/// the anchor, the positive and each negative, with the coefficient held
/// constant.
#[derive(Debug, Clone)]
pub struct AnchorLoss {
    pub loss: f64,
    pub coefficient: f64,
    pub prob_tau1: f64,
    pub grad_q: Array1<f64>,
    pub grad_pos: Array1<f64>,
    pub grad_negs: Array2<f64>,
}

/// Weight on `-log p` given positive-pair probabilities at both temperatures.
/// `1 - p` is passed in directly to avoid cancellation.
fn coefficient(one_minus_p1: f64, one_minus_p2: f64, p1: f64) -> f64 {
    if p1 >= 1.0 - DEGENERATE_EPS || one_minus_p1 <= 0.0 {
        1.0
    } else {
        one_minus_p2 / one_minus_p1
    }
}

fn anchor_terms(pos: f64, negs: &[f64], tau1: f64, tau2: f64, fixed: Option<f64>) -> (f64, f64, f64, Vec<f64>) {
    let p1 = softmax_scores(pos, negs, tau1);
    let c = fixed.unwrap_or_else(|| {
        let p2 = softmax_scores(pos, negs, tau2);
        coefficient(p1[1..].iter().sum(), p2[1..].iter().sum(), p1[0])
    });
    let mut logits = vec![pos / tau1];
    logits.extend(negs.iter().map(|s| s / tau1));
    let log_p = pos / tau1 - logsumexp(&logits);
    (c * -log_p, c, p1[0], p1)
}

pub fn dual_temperature_loss(
    q: ArrayView1<'_, f64>,
    k_pos: ArrayView1<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    tau1: f64,
    tau2: f64,
) -> AnchorLoss {
    let pos = q.dot(&k_pos);
    let negs: Vec<f64> = negatives.rows().into_iter().map(|k| q.dot(&k)).collect();
    let (loss, c, p_pos, p1) = anchor_terms(pos, &negs, tau1, tau2, None);
    // d(-log p)/d pos = -(1 - p)/tau, d/d neg_j = p_j / tau.
    let d_pos = -c * p1[1..].iter().sum::<f64>() / tau1;
    let mut grad_q = &k_pos * d_pos;
    let mut grad_negs = Array2::zeros(negatives.raw_dim());
    for (j, k) in negatives.rows().into_iter().enumerate() {
        let d = c * p1[j + 1] / tau1;
        grad_q.scaled_add(d, &k);
        grad_negs.row_mut(j).assign(&(&q * d));
    }
    AnchorLoss {
        loss,
        coefficient: c,
        prob_tau1: p_pos,
        grad_q,
        grad_pos: &q * d_pos,
        grad_negs,
    }
}

/// Rows scaled to unit L2 norm, plus the norms.
pub fn normalize_rows(h: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = h.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-300));
    let mut z = h.clone();
    for (mut row, n) in z.rows_mut().into_iter().zip(norms.iter()) {
        row /= *n;
    }
    (z, norms)
}

/// Pulls a gradient on normalized rows back to the raw rows.
fn normalize_backward(z: &Array2<f64>, norms: &Array1<f64>, dz: &Array2<f64>) -> Array2<f64> {
    let mut dh = dz.clone();
    for ((mut d, zr), n) in dh.rows_mut().into_iter().zip(z.rows()).zip(norms.iter()) {
        let proj = zr.dot(&d);
        d.scaled_add(-proj, &zr);
        d /= *n;
    }
    dh
}

/// Unit-norm embeddings of a batch of flattened images.
pub fn encode(encoder: &Mlp, images: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(normalize_rows(&encoder.predict(images)?).0)
}

/// Two augmented views and the raw images of one training batch.
#[derive(Debug, Clone)]
pub struct ContrastiveViews {
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    pub raw: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    /// Mean loss over anchors.
    pub loss: f64,
    pub coefficients: Vec<f64>,
    pub grad: ParamVector,
}

fn stacked(views: &ContrastiveViews) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &[views.first.view(), views.second.view(), views.raw.view()])
        .expect("views share width")
}

/// Batch loss where anchor `i` is the first view of image `i`, its positive
/// the second view of image `i` and its negatives the raw embeddings of every
/// other image. Passing `fixed` evaluates the surrogate with those
/// coefficients instead of recomputing them.
fn batch_loss(
    encoder: &Mlp,
    views: &ContrastiveViews,
    tau1: f64,
    tau2: f64,
    fixed: Option<&[f64]>,
    want_grad: bool,
) -> Result<ContrastiveOutput> {
    let z_n = views.first.nrows();
    let input = stacked(views);
    let (h, tape) = encoder.forward_batch(input.view())?;
    let (z, norms) = normalize_rows(&h);
    let q = z.slice(s![0..z_n, ..]);
    let k = z.slice(s![z_n..2 * z_n, ..]);
    let r = z.slice(s![2 * z_n.., ..]);
    let raw_sims = q.dot(&r.t());

    let mut total = 0.0;
    let mut coefficients = Vec::with_capacity(z_n);
    let inv = 1.0 / z_n as f64;
    // d_pos[i] weighs the positive pair, w[[i, j]] the negative pair (i, j).
    let mut d_pos = Array1::zeros(z_n);
    let mut w = Array2::zeros((z_n, z_n));
    for i in 0..z_n {
        let pos = q.row(i).dot(&k.row(i));
        let negs: Vec<f64> = (0..z_n).filter(|&j| j != i).map(|j| raw_sims[[i, j]]).collect();
        let (loss, c, _, p1) = anchor_terms(pos, &negs, tau1, tau2, fixed.map(|f| f[i]));
        total += loss;
        coefficients.push(c);
        d_pos[i] = -c * p1[1..].iter().sum::<f64>() / tau1 * inv;
        for (slot, j) in (0..z_n).filter(|&j| j != i).enumerate() {
            w[[i, j]] = c * p1[slot + 1] / tau1 * inv;
        }
    }
    let mut dz = Array2::zeros(z.raw_dim());
    if want_grad {
        let dp = d_pos.view().insert_axis(Axis(1));
        let mut dq = &k * &dp;
        dq += &w.dot(&r);
        dz.slice_mut(s![0..z_n, ..]).assign(&dq);
        dz.slice_mut(s![z_n..2 * z_n, ..]).assign(&(&q * &dp));
        dz.slice_mut(s![2 * z_n.., ..]).assign(&w.t().dot(&q));
    }
    let grad = if want_grad {
        let dh = normalize_backward(&z, &norms, &dz);
        encoder.backward(&tape, dh.view())?.0
    } else {
        ParamVector::zeros(encoder.params().layout().to_vec())
    };
    Ok(ContrastiveOutput {
        loss: total * inv,
        coefficients,
        grad,
    })
}

pub fn contrastive_loss_and_grad(encoder: &Mlp, views: &ContrastiveViews, tau1: f64, tau2: f64) -> Result<ContrastiveOutput> {
    batch_loss(encoder, views, tau1, tau2, None, true)
}

pub fn contrastive_loss(encoder: &Mlp, views: &ContrastiveViews, tau1: f64, tau2: f64) -> Result<f64> {
    Ok(batch_loss(encoder, views, tau1, tau2, None, false)?.loss)
}

/// Loss with per-anchor coefficients held at the given values.
pub fn surrogate_loss(encoder: &Mlp, views: &ContrastiveViews, tau1: f64, coefficients: &[f64]) -> Result<f64> {
    Ok(batch_loss(encoder, views, tau1, tau1, Some(coefficients), false)?.loss)
}
