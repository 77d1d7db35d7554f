//! Embedding, stacked pre-norm residual blocks, final norm and readout.

use super::config::{Budget, HeadKind, ModelConfig};
use super::layer::{layer_forward, LayerCache, LayerFlops, LayerMode, SpectralEngine};
use super::norm::{norm_forward, NormCache};
use super::params::{BlockParams, Embedding, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Sequence};

/// One input sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    Tokens(Vec<usize>),
    Real(Sequence),
}

impl ModelInput {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Tokens(t) => t.len(),
            ModelInput::Real(x) => x.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    pub(crate) norm: NormCache,
    pub(crate) layer: LayerCache,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    pub(crate) input: ModelInput,
    pub(crate) blocks: Vec<BlockCache>,
    pub(crate) final_norm: NormCache,
    /// Normalised features fed to the head (pooled for mean-pool heads).
    pub(crate) head_input: Matrix,
    pub(crate) seq_len: usize,
}

impl ModelCache {
    pub fn layer_caches(&self) -> impl Iterator<Item = &LayerCache> {
        self.blocks.iter().map(|b| &b.layer)
    }

    /// Summed layer FLOPs over all blocks.
    pub fn layer_flops(&self) -> LayerFlops {
        let mut f = LayerFlops::default();
        for c in self.layer_caches() {
            f.add(&c.flops());
        }
        f
    }
}

pub fn embed(input: &ModelInput, embedding: &Embedding) -> Result<Sequence> {
    match (input, embedding) {
        (ModelInput::Tokens(tokens), Embedding::Lookup(table)) => {
            let mut out = Matrix::zeros(tokens.len(), table.cols());
            for (t, &tok) in tokens.iter().enumerate() {
                if tok >= table.rows() {
                    return Err(Error::Input(format!(
                        "token {tok} at position {t} exceeds vocabulary size {}",
                        table.rows()
                    )));
                }
                out.row_mut(t).copy_from_slice(table.row(tok));
            }
            Ok(out)
        }
        (ModelInput::Real(x), Embedding::Linear { weight, bias }) => {
            if x.cols() != weight.cols() {
                return Err(Error::Input(format!(
                    "input has {} features, embedding expects {}",
                    x.cols(),
                    weight.cols()
                )));
            }
            let mut out = x.matmul_t(weight);
            out.add_row_vector(bias);
            Ok(out)
        }
        _ => Err(Error::Input("input kind does not match the embedding".into())),
    }
}

/// `u + layer(norm(u))`.
pub fn block_forward(
    u: &Sequence,
    block: &BlockParams,
    config: &ModelConfig,
    engine: &SpectralEngine,
    budget: Budget,
) -> Result<(Sequence, BlockCache)> {
    let (normed, norm) = norm_forward(u, &block.norm, config.norm);
    let (mut y, layer) = layer_forward(&normed, &block.layer, engine, budget, layer_mode(config))?;
    y.add_assign(u);
    Ok((y, BlockCache { norm, layer }))
}

pub fn layer_mode(config: &ModelConfig) -> LayerMode {
    LayerMode {
        gate_enabled: config.gate_enabled,
        truncation: config.truncation,
    }
}

/// Full forward pass. Returns `L × output_dim` for per-step heads and
/// `1 × output_dim` for mean-pool heads.
pub fn model_forward(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    input: &ModelInput,
    budget: Budget,
) -> Result<(Matrix, ModelCache)> {
    if input.len() != config.seq_len {
        return Err(Error::Input(format!(
            "sequence has {} steps, model expects L={}",
            input.len(),
            config.seq_len
        )));
    }
    let mut u = embed(input, &params.embed)?;
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let (next, cache) = block_forward(&u, b, config, engine, budget)?;
        blocks.push(cache);
        u = next;
    }
    let (normed, final_norm) = norm_forward(&u, &params.final_norm, config.norm);
    let head_input = match config.head {
        HeadKind::PerStep => normed,
        HeadKind::MeanPool => {
            let mut pooled = Matrix::from_vec(1, normed.cols(), normed.column_sums())?;
            pooled.scale(1.0 / normed.rows() as f64);
            pooled
        }
    };
    let mut out = head_input.matmul_t(&params.head_w);
    out.add_row_vector(&params.head_b);
    Ok((
        out,
        ModelCache {
            input: input.clone(),
            blocks,
            final_norm,
            head_input,
            seq_len: config.seq_len,
        },
    ))
}

/// A configured model: configuration, parameters and the shared engine.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub engine: SpectralEngine,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams, engine: SpectralEngine) -> Result<Self> {
        config.validate()?;
        if engine.seq_len() != config.seq_len || engine.capacity() != config.capacity {
            return Err(Error::Mismatch(format!(
                "basis (L={}, K̄={}) does not match config (L={}, K̄={})",
                engine.seq_len(),
                engine.capacity(),
                config.seq_len,
                config.capacity
            )));
        }
        Ok(Model {
            config,
            params,
            engine,
        })
    }

    pub fn budget(&self, k: usize) -> Result<Budget> {
        Budget::new(k, self.config.capacity)
    }

    pub fn forward(&self, input: &ModelInput, budget: Budget) -> Result<(Matrix, ModelCache)> {
        model_forward(&self.config, &self.params, &self.engine, input, budget)
    }
}
