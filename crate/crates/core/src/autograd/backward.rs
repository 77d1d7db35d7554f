//! Hand-written adjoints of the forward graph in `model`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Sequence};
use crate::loss::{loss_and_grad, Target};
use crate::model::config::{Budget, HeadKind, ModelConfig};
use crate::model::gate::gelu_grad;
use crate::model::layer::{LayerCache, SpectralEngine};
use crate::model::network::{model_forward, ModelCache, ModelInput};
use crate::model::norm::norm_backward;
use crate::model::params::{Embedding, LayerParams, ModelParams};

/// Gradients for every parameter tensor, plus the loss they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub grads: ModelParams,
    /// Mean loss over counted elements.
    pub loss: f64,
    pub count: usize,
    pub budget: usize,
}

impl GradientSet {
    pub fn global_norm(&self) -> f64 {
        self.grads.global_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.grads.is_finite()
    }
}

fn check_cache(cache: &LayerCache, p: &LayerParams, upstream: &Sequence) -> Result<()> {
    if cache.capacity != p.capacity()
        || cache.input.cols() != p.skip.cols()
        || cache.features.len() != cache.budget
    {
        return Err(Error::structural("layer cache does not belong to these parameters"));
    }
    if upstream.shape() != cache.input.shape() {
        return Err(Error::structural(format!(
            "upstream gradient {:?} does not match layer output {:?}",
            upstream.shape(),
            cache.input.shape()
        )));
    }
    Ok(())
}

/// Backward pass of [`layer_forward`](crate::model::layer_forward).
///
/// Accumulates into `grads` and returns `dL/du`. Tensors of channels at or
/// above the budget (and, under masked truncation, their gate rows) are
/// never written, so their gradients stay bitwise zero.
pub fn layer_backward(
    cache: &LayerCache,
    p: &LayerParams,
    engine: &SpectralEngine,
    upstream: &Sequence,
    grads: &mut LayerParams,
) -> Result<Sequence> {
    check_cache(cache, p, upstream)?;
    let x = &cache.input;
    let (len, d) = x.shape();
    let k = cache.budget;
    let g = upstream;

    upstream.t_matmul_acc(x, &mut grads.skip);
    let mut dx = g.matmul(&p.skip);

    let mut dalpha = Matrix::zeros(len, k);
    let mut dfeatures = Vec::with_capacity(k);
    let mut scaled_g = Matrix::zeros(len, d);
    for (ch, feat) in cache.features.iter().enumerate() {
        let mut gm = g.matmul(&p.mixing[ch]);
        for t in 0..len {
            let a = cache.alpha[(t, ch)];
            dalpha[(t, ch)] = dot(gm.row(t), feat.row(t));
            gm.row_mut(t).iter_mut().for_each(|v| *v *= a);
            for (o, v) in scaled_g.row_mut(t).iter_mut().zip(g.row(t)) {
                *o = a * v;
            }
        }
        scaled_g.t_matmul_acc(feat, &mut grads.mixing[ch]);
        dfeatures.push(gm);
    }
    dx.add_assign(&engine.bank().adjoint_sum(&dfeatures)?);

    if !cache.mode.gate_enabled {
        return Ok(dx);
    }

    let support = cache.support();
    let scale = (support as f64).sqrt();
    let eps = p.gate.eps;
    let mut dlogits = Matrix::zeros(len, support);
    let mut dscaled = vec![0.0; support];
    for t in 0..len {
        let a = cache.support_weights.row(t);
        let da = &dalpha.row(t)[..k];
        let inner: f64 = a[..k].iter().zip(da).map(|(x, y)| x * y).sum();
        for (j, o) in dscaled.iter_mut().enumerate() {
            let dj = if j < k { da[j] } else { 0.0 };
            *o = a[j] * (dj - inner);
        }
        let s = cache.logits.row(t);
        let r = cache.logit_norms[t];
        let c = scale / (r + eps);
        let norm_term = if r > 0.0 {
            dot(&dscaled, s) * (-scale / ((r + eps) * (r + eps))) / r
        } else {
            0.0
        };
        for (j, o) in dlogits.row_mut(t).iter_mut().enumerate() {
            *o = c * dscaled[j] + norm_term * s[j];
        }
    }

    let dg = p.gate.w1.rows();
    let sums = dlogits.column_sums();
    for (b, v) in grads.gate.b2[..support].iter_mut().zip(&sums) {
        *b += v;
    }
    let dw2 = dlogits.t_matmul(&cache.hidden);
    for (o, v) in grads.gate.w2.as_mut_slice()[..support * dg].iter_mut().zip(dw2.as_slice()) {
        *o += v;
    }
    let w2 = Matrix::from_vec(support, dg, p.gate.w2.as_slice()[..support * dg].to_vec())?;
    let mut dhidden = dlogits.matmul(&w2);
    for (v, pre) in dhidden.as_mut_slice().iter_mut().zip(cache.hidden_pre.as_slice()) {
        *v *= gelu_grad(*pre);
    }
    dhidden.t_matmul_acc(x, &mut grads.gate.w1);
    for (b, v) in grads.gate.b1.iter_mut().zip(dhidden.column_sums()) {
        *b += v;
    }
    dhidden.matmul_acc(&p.gate.w1, &mut dx);
    Ok(dx)
}

/// Backward pass of [`model_forward`]; accumulates into `grads`.
pub fn model_backward(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    cache: &ModelCache,
    doutput: &Matrix,
    grads: &mut ModelParams,
) -> Result<()> {
    if cache.blocks.len() != params.blocks.len() {
        return Err(Error::structural("model cache depth does not match parameters"));
    }
    doutput.t_matmul_acc(&cache.head_input, &mut grads.head_w);
    for (b, v) in grads.head_b.iter_mut().zip(doutput.column_sums()) {
        *b += v;
    }
    let dhead = doutput.matmul(&params.head_w);
    let dnormed = match config.head {
        HeadKind::PerStep => dhead,
        HeadKind::MeanPool => {
            let inv = 1.0 / cache.seq_len as f64;
            Matrix::from_fn(cache.seq_len, dhead.cols(), |_, j| dhead[(0, j)] * inv)
        }
    };
    let mut du = norm_backward(&cache.final_norm, &params.final_norm, &dnormed, &mut grads.final_norm);
    for ((bc, bp), bg) in cache
        .blocks
        .iter()
        .zip(&params.blocks)
        .zip(grads.blocks.iter_mut())
        .rev()
    {
        let dlayer_in = layer_backward(&bc.layer, &bp.layer, engine, &du, &mut bg.layer)?;
        du.add_assign(&norm_backward(&bc.norm, &bp.norm, &dlayer_in, &mut bg.norm));
    }
    match (&cache.input, &mut grads.embed) {
        (ModelInput::Tokens(tokens), Embedding::Lookup(table)) => {
            for (t, &tok) in tokens.iter().enumerate() {
                for (o, v) in table.row_mut(tok).iter_mut().zip(du.row(t)) {
                    *o += v;
                }
            }
        }
        (ModelInput::Real(x), Embedding::Linear { weight, bias }) => {
            du.t_matmul_acc(x, weight);
            for (b, v) in bias.iter_mut().zip(du.column_sums()) {
                *b += v;
            }
        }
        _ => return Err(Error::structural("cached input does not match the embedding")),
    }
    Ok(())
}

/// One supervised sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub target: Target,
}

/// Summed loss and count for one example without gradients.
pub fn example_loss(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    example: &Example,
    budget: Budget,
) -> Result<(f64, usize)> {
    let (out, _) = model_forward(config, params, engine, &example.input, budget)?;
    let l = loss_and_grad(&out, &example.target)?;
    Ok((l.sum, l.count))
}

/// Mean loss over a batch.
pub fn batch_loss(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    batch: &[Example],
    budget: Budget,
) -> Result<f64> {
    let parts = batch
        .par_iter()
        .map(|ex| example_loss(config, params, engine, ex, budget))
        .collect::<Result<Vec<_>>>()?;
    let (sum, count) = parts
        .iter()
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + a, c + b));
    mean(sum, count)
}

fn mean(sum: f64, count: usize) -> Result<f64> {
    if count == 0 {
        return Err(Error::Input("batch has no supervised elements".into()));
    }
    Ok(sum / count as f64)
}

/// Mean loss and its gradient over a batch. Examples run in parallel; the
/// reduction is sequential in batch order, so results are reproducible.
pub fn batch_gradients(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    batch: &[Example],
    budget: Budget,
) -> Result<GradientSet> {
    let parts = batch
        .par_iter()
        .map(|ex| {
            let (out, cache) = model_forward(config, params, engine, &ex.input, budget)?;
            let l = loss_and_grad(&out, &ex.target)?;
            let mut g = params.zeros_like();
            model_backward(config, params, engine, &cache, &l.grad, &mut g)?;
            Ok((l.sum, l.count, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = params.zeros_like();
    let mut sum = 0.0;
    let mut count = 0;
    for (s, c, g) in &parts {
        sum += s;
        count += c;
        grads.add_assign(g);
    }
    let loss = mean(sum, count)?;
    grads.scale_all(1.0 / count as f64);
    Ok(GradientSet {
        grads,
        loss,
        count,
        budget: budget.get(),
    })
}
