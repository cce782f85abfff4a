//! The pose transformer, its configuration and persistence.

mod checkpoint;
mod codec;
mod config;
mod export;
mod potr;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use codec::{GcnNet, PoseDecoder, PoseEncoder};
pub use config::{parse_kv, ActivitySource, Codec, ModelConfig};
pub use export::{attention_file_name, export_attention, matrix_from_csv, matrix_to_csv};
pub use potr::{build_query_sequence, Encoded, Forward, PotrModel, Prediction};
