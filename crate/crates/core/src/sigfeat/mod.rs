//! Path-signature features.

mod dump;
mod featurize;
mod signature;

pub use dump::{read_dump, write_dump, FeatureDump, DUMP_MAGIC, DUMP_VERSION};
pub use featurize::{featurize, rasterize, FeatureMap, FeatureMode, FeatureParams, WindowSpec};
pub use signature::{
    chen_concat, iterated_sum_oracle, path_signature, segment_signature, signature_into, signature_len,
    SignatureScratch, TruncatedSignature,
};
