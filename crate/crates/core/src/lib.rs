pub mod actions;
pub mod camera;
pub mod cli;
pub mod compositor;
pub mod error;
pub mod geometry;
pub mod handpose;
pub mod mesh;
pub mod registration;
pub mod pipeline;
pub mod robot;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
