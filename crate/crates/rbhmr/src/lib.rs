//! Hierarchical model reduction with reduced-basis transverse spaces for
//! nonlinear elliptic problems on rectangles.
//!
//! The offline stage samples a parametrized 1D transverse problem, compresses
//! solution and operator snapshots with POD, and builds interpolation systems
//! for the nonlinear operator. The online stage solves a coupled system of 1D
//! problems in the dominant direction by Newton's method.

pub mod archive;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod eim;
pub mod epm;
pub mod estimate;
pub mod model;
pub mod newton;
pub mod pod;
pub mod reduced;
pub mod reference;
pub mod training;
pub mod transverse;

pub use error::{Error, Result};
