//! Texture generation on quad-mesh surface hierarchies.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: quad meshes, OBJ I/O and synthetic generators
//! - [`neighborhood`]: canonically ordered 8-neighbourhoods with padding
//! - [`hierarchy`]: multi-level stacks with pooling and unpooling
//! - [`features`]: geometric per-face input features
//! - [`nn`]: tensors, a reverse-mode tape, surface and image operators, Adam
//! - [`render`]: flat per-face-colour rasterizer with colour gradients
//! - [`gan`]: generator, discriminators, losses, training and generation
//! - [`gradsuite`]: finite-difference checks for every differentiable operator
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and runs sequentially otherwise.

pub mod error;
pub mod features;
pub mod gan;
pub mod gradsuite;
pub mod hierarchy;
pub mod mesh;
pub mod neighborhood;
pub mod nn;
pub mod par;
pub mod render;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;
