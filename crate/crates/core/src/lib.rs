//! Equivariant multi-agent motion forecasting on a small reverse-mode
//! autodiff engine.

pub mod backbone;
pub mod batch;
pub mod config;
pub mod data;
pub mod error;
pub mod map_encoder;
pub mod ndiff;
pub mod nn;
pub mod objective;
pub mod plot;
pub mod predictor;
pub mod scene;
pub mod train;
