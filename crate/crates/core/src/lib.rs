#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod filter;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod search;
pub mod synth;
pub mod tensor;

pub use error::{GcpError, Result};
pub use image::{ChannelSemantics, PlanarImage};
