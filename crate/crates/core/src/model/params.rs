//! Parameter tensors. The same structures hold gradients and optimizer
//! moments, so every consumer walks tensors in one declaration order.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{InputKind, ModelConfig, DEFAULT_GATE_EPS};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    /// `d_g × d` hidden weights.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `K̄ × d_g` logit weights; row `k` produces the logit of channel `k`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// Stabiliser of the logit rescaling.
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `M_k`, one `d × d` matrix per spectral channel.
    pub mixing: Vec<Matrix>,
    /// Direct term `D`.
    pub skip: Matrix,
    pub gate: GateParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub norm: NormParams,
    pub layer: LayerParams,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Embedding {
    /// `vocab × d` table.
    Lookup(Matrix),
    /// `d × dim` weights and `d` bias.
    Linear { weight: Matrix, bias: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embed: Embedding,
    pub blocks: Vec<BlockParams>,
    pub final_norm: NormParams,
    /// `output_dim × d` readout.
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

/// What a tensor is, for masking and weight-decay decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    /// Indexed by nothing budget-related.
    Shared,
    /// `M_k` of spectral channel `k` (0-based).
    Mixing(usize),
    /// Gate logit weights: row `k` belongs to channel `k`.
    GateLogitWeight,
    GateLogitBias,
    /// First gate layer, shared across channels.
    GateHidden,
}

#[derive(Clone, Debug)]
pub struct TensorInfo {
    pub name: String,
    pub role: TensorRole,
    pub rows: usize,
    pub cols: usize,
    /// Owning block, if any.
    pub block: Option<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_matrix(&self) -> bool {
        self.rows > 1 && self.cols > 1
    }
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}

/// Normal truncated at two standard deviations.
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

fn random_matrix(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| draw(rng))
}

impl GateParams {
    pub fn zeros(d_in: usize, d_gate: usize, capacity: usize) -> Self {
        GateParams {
            w1: Matrix::zeros(d_gate, d_in),
            b1: vec![0.0; d_gate],
            w2: Matrix::zeros(capacity, d_gate),
            b2: vec![0.0; capacity],
            eps: DEFAULT_GATE_EPS,
        }
    }
}

impl LayerParams {
    pub fn zeros(d: usize, d_gate: usize, capacity: usize) -> Self {
        LayerParams {
            mixing: vec![Matrix::zeros(d, d); capacity],
            skip: Matrix::zeros(d, d),
            gate: GateParams::zeros(d, d_gate, capacity),
        }
    }

    /// `M_k ~ N(0, 1/(d K̄))`, `D = 0`, gate weights truncated-normal with
    /// fan-in variance and zero biases (near-uniform initial mixture).
    pub fn init(d: usize, d_gate: usize, capacity: usize, eps: f64, rng: &mut ChaCha8Rng) -> Self {
        let mix_std = (1.0 / (d * capacity) as f64).sqrt();
        let mixing = (0..capacity)
            .map(|_| random_matrix(d, d, rng, |r| normal(r, mix_std)))
            .collect();
        let w1_std = (1.0 / d as f64).sqrt();
        let w2_std = (1.0 / d_gate as f64).sqrt();
        let w1 = random_matrix(d_gate, d, rng, |r| truncated_normal(r, w1_std));
        let w2 = random_matrix(capacity, d_gate, rng, |r| truncated_normal(r, w2_std));
        LayerParams {
            mixing,
            skip: Matrix::zeros(d, d),
            gate: GateParams {
                w1,
                b1: vec![0.0; d_gate],
                w2,
                b2: vec![0.0; capacity],
                eps,
            },
        }
    }

    pub fn capacity(&self) -> usize {
        self.mixing.len()
    }
}

impl NormParams {
    pub fn identity(d: usize) -> Self {
        NormParams {
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    fn zeros(d: usize) -> Self {
        NormParams {
            scale: vec![0.0; d],
            shift: vec![0.0; d],
        }
    }
}

impl ModelParams {
    /// Deterministic initialisation from `rng` (the init stream of the run seed).
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.d_model;
        let embed = match config.input {
            InputKind::Tokens { vocab } => {
                Embedding::Lookup(random_matrix(vocab, d, rng, |r| normal(r, 1.0)))
            }
            InputKind::Real { dim } => Embedding::Linear {
                weight: random_matrix(d, dim, rng, |r| normal(r, (1.0 / dim as f64).sqrt())),
                bias: vec![0.0; d],
            },
        };
        let blocks = (0..config.depth)
            .map(|_| BlockParams {
                norm: NormParams::identity(d),
                layer: LayerParams::init(d, config.d_gate, config.capacity, config.gate_eps, rng),
            })
            .collect();
        let head_std = (1.0 / d as f64).sqrt();
        ModelParams {
            embed,
            blocks,
            final_norm: NormParams::identity(d),
            head_w: random_matrix(config.output_dim, d, rng, |r| normal(r, head_std)),
            head_b: vec![0.0; config.output_dim],
        }
    }

    /// All-zero parameters with the structure implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let embed = match config.input {
            InputKind::Tokens { vocab } => Embedding::Lookup(Matrix::zeros(vocab, d)),
            InputKind::Real { dim } => Embedding::Linear {
                weight: Matrix::zeros(d, dim),
                bias: vec![0.0; d],
            },
        };
        let blocks = (0..config.depth)
            .map(|_| {
                let mut layer = LayerParams::zeros(d, config.d_gate, config.capacity);
                layer.gate.eps = config.gate_eps;
                BlockParams {
                    norm: NormParams::zeros(d),
                    layer,
                }
            })
            .collect();
        ModelParams {
            embed,
            blocks,
            final_norm: NormParams::zeros(d),
            head_w: Matrix::zeros(config.output_dim, d),
            head_b: vec![0.0; config.output_dim],
        }
    }

    /// Same structure, every entry zero (gradient accumulators, moments).
    pub fn zeros_like(&self) -> Self {
        let embed = match &self.embed {
            Embedding::Lookup(t) => Embedding::Lookup(Matrix::zeros(t.rows(), t.cols())),
            Embedding::Linear { weight, bias } => Embedding::Linear {
                weight: Matrix::zeros(weight.rows(), weight.cols()),
                bias: vec![0.0; bias.len()],
            },
        };
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let l = &b.layer;
                let mut layer = LayerParams::zeros(l.skip.rows(), l.gate.w1.rows(), l.capacity());
                layer.gate.eps = l.gate.eps;
                BlockParams {
                    norm: NormParams::zeros(b.norm.scale.len()),
                    layer,
                }
            })
            .collect();
        ModelParams {
            embed,
            blocks,
            final_norm: NormParams::zeros(self.final_norm.scale.len()),
            head_w: Matrix::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Metadata for every tensor, in declaration order.
    pub fn tensor_infos(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        self.walk(&mut |info, _| out.push(info));
        out
    }

    /// Read-only view of every tensor in declaration order.
    pub fn tensors(&self) -> Vec<(TensorInfo, &[f64])> {
        let mut out = Vec::new();
        self.walk(&mut |info, data| out.push((info, data)));
        out
    }

    fn walk<'a>(&'a self, f: &mut dyn FnMut(TensorInfo, &'a [f64])) {
        let info = |name: String, role, rows, cols, block| TensorInfo {
            name,
            role,
            rows,
            cols,
            block,
        };
        match &self.embed {
            Embedding::Lookup(t) => f(
                info("embed.table".into(), TensorRole::Shared, t.rows(), t.cols(), None),
                t.as_slice(),
            ),
            Embedding::Linear { weight, bias } => {
                f(
                    info("embed.weight".into(), TensorRole::Shared, weight.rows(), weight.cols(), None),
                    weight.as_slice(),
                );
                f(
                    info("embed.bias".into(), TensorRole::Shared, 1, bias.len(), None),
                    bias,
                );
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("blocks.{i}.{s}");
            let blk = Some(i);
            f(info(p("norm.scale"), TensorRole::Shared, 1, b.norm.scale.len(), blk), &b.norm.scale);
            f(info(p("norm.shift"), TensorRole::Shared, 1, b.norm.shift.len(), blk), &b.norm.shift);
            let l = &b.layer;
            for (k, m) in l.mixing.iter().enumerate() {
                f(
                    info(p(&format!("layer.mixing.{k}")), TensorRole::Mixing(k), m.rows(), m.cols(), blk),
                    m.as_slice(),
                );
            }
            f(
                info(p("layer.skip"), TensorRole::Shared, l.skip.rows(), l.skip.cols(), blk),
                l.skip.as_slice(),
            );
            let g = &l.gate;
            f(
                info(p("layer.gate.w1"), TensorRole::GateHidden, g.w1.rows(), g.w1.cols(), blk),
                g.w1.as_slice(),
            );
            f(info(p("layer.gate.b1"), TensorRole::GateHidden, 1, g.b1.len(), blk), &g.b1);
            f(
                info(p("layer.gate.w2"), TensorRole::GateLogitWeight, g.w2.rows(), g.w2.cols(), blk),
                g.w2.as_slice(),
            );
            f(info(p("layer.gate.b2"), TensorRole::GateLogitBias, 1, g.b2.len(), blk), &g.b2);
        }
        let n = &self.final_norm;
        f(info("final_norm.scale".into(), TensorRole::Shared, 1, n.scale.len(), None), &n.scale);
        f(info("final_norm.shift".into(), TensorRole::Shared, 1, n.shift.len(), None), &n.shift);
        f(
            info("head.w".into(), TensorRole::Shared, self.head_w.rows(), self.head_w.cols(), None),
            self.head_w.as_slice(),
        );
        f(info("head.b".into(), TensorRole::Shared, 1, self.head_b.len(), None), &self.head_b);
    }

    /// Mutable views of every tensor in declaration order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        match &mut self.embed {
            Embedding::Lookup(t) => out.push(t.as_mut_slice()),
            Embedding::Linear { weight, bias } => {
                out.push(weight.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        for b in &mut self.blocks {
            out.push(&mut b.norm.scale);
            out.push(&mut b.norm.shift);
            let l = &mut b.layer;
            for m in &mut l.mixing {
                out.push(m.as_mut_slice());
            }
            out.push(l.skip.as_mut_slice());
            let g = &mut l.gate;
            out.push(g.w1.as_mut_slice());
            out.push(&mut g.b1);
            out.push(g.w2.as_mut_slice());
            out.push(&mut g.b2);
        }
        out.push(&mut self.final_norm.scale);
        out.push(&mut self.final_norm.shift);
        out.push(self.head_w.as_mut_slice());
        out.push(&mut self.head_b);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Flattened copy of every parameter in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Global L2 norm across all tensors.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_all(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += other` tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            assert_eq!(dst.len(), s.len(), "parameter structure mismatch");
            for (a, b) in dst.iter_mut().zip(s) {
                *a += b;
            }
        }
    }

    /// CRC32 over the little-endian bytes of every parameter.
    pub fn fingerprint(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for (_, t) in self.tensors() {
            for v in t {
                h.update(&v.to_le_bytes());
            }
        }
        h.finalize()
    }

    pub fn same_structure(&self, other: &ModelParams) -> bool {
        let a = self.tensor_infos();
        let b = other.tensor_infos();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.rows == y.rows && x.cols == y.cols)
    }
}
