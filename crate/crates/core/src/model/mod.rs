//! The budgeted spectral layer, residual blocks and the full model.

pub mod checkpoint;
pub mod config;
pub mod gate;
pub mod layer;
pub mod network;
pub mod norm;
pub mod params;

pub use checkpoint::Checkpoint;
pub use config::{
    validate_budget_set, Budget, HeadKind, InputKind, ModelConfig, NormKind, Precision,
    TruncationMode, DEFAULT_BUDGET_SET,
};
pub use gate::{gate_logits, gelu, masked_softmax, rms_rescale};
pub use layer::{layer_forward, LayerCache, LayerFlops, LayerMode, SpectralEngine};
pub use network::{block_forward, embed, model_forward, Model, ModelCache, ModelInput};
pub use norm::{norm_forward, NormCache};
pub use params::{BlockParams, Embedding, GateParams, LayerParams, ModelParams, NormParams, TensorInfo, TensorRole};
