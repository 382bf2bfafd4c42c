//! The learned matching network: shared-weight feature encoder,
//! correlation cost volume, 3-D/2-D aggregation, soft argmin with
//! matchability, and image-guided refinement.

mod config;
mod network;
mod weights;

pub use config::{block_dilation, ModelConfig, DILATION_CYCLE};
pub use network::{
    aggregate_cost, build_cost_volume, extract_features, forward, forward_graph, matchability, refine, soft_argmin,
    Params, StereoOutput, StereoPair, StereoVars,
};
pub use weights::WeightSet;
