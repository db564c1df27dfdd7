//! Dense CPU network: tensors, layer kernels, spatial stochastic max-pooling,
//! network specs, checkpoints and gradient checks.

mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod net;
mod spec;
mod ssmp;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{LayerNoise, Mode, Network, Noise, NoiseKey, Trace};
pub use spec::{
    resolve_preset, LayerSpec, NetworkSpec, Shape, DEFAULT_SLOPE, PRESET_BASELINE, PRESET_SMALL, PRESET_SSMP,
    PRESET_TOY,
};
pub use ssmp::{
    ssmp_backward, ssmp_forward, ssmp_output_len, ssmp_plan, ssmp_plan_with_thresholds, PoolPlan, SsmpStrategy,
    StrideSeries,
};
pub use tensor::{Scalar, Tensor};
