//! Stroke-set prediction and coarse-to-fine painting with a differentiable
//! brush renderer.

pub mod brush;
pub mod canvas;
#[cfg(feature = "model")]
pub mod cli;
pub mod datagen;
pub mod decision;
pub mod error;
pub mod eval;
pub mod inference;
pub mod matcher;
pub mod objective;
pub mod prediction;
pub mod record;
pub mod render;
pub mod stroke;

pub use error::{Error, Result};

#[cfg(feature = "model")]
pub mod nn;
#[cfg(feature = "model")]
pub mod train;
