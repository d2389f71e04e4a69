//! Tile-wise noise-level estimation with a small CNN classifier that reads
//! only the green channel.

mod cnn;
mod sigma_map;
mod weights;

pub use cnn::{
    architecture_string, Conv2d, Dense, InputScaling, Layer, LayerParams, NoiseClassifier, SigmaGrid, SigmaSpace, TILE,
};
pub use sigma_map::{approximate_accuracy, estimate_sigma_map, SigmaMap, TileGrid};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, WEIGHT_MAGIC, WEIGHT_VERSION};
