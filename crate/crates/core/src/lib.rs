//! Differentiable multiphysics simulation with a differentiable soft
//! rasterizer. Every kernel ships a hand-written vector-Jacobian product so
//! gradients of image-space losses flow back to physical parameters,
//! initial conditions and control inputs.

pub mod adjoint;
pub mod bench;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod math;
pub mod mesh;
pub mod mesh_io;
pub mod render;
pub mod scenarios;
pub mod scene;
pub mod state;

pub use error::{Result, SimError};
