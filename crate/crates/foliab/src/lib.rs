//! Numerical geometry of Riemannian foliations.
//!
//! The crate evaluates, on explicitly given foliated charts, the O'Neill
//! tensors and the adapted connection of a bundle-like metric, integrates
//! adapted geodesics and Jacobi fields, builds normal foliation charts, and
//! audits bounded-geometry quantities. Everything is checked as numeric
//! residuals against analytic example foliations (see [`fixtures`]).

pub mod audit;
pub mod connections;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod geometry;
pub mod jacobi;
pub mod jet;
pub mod linalg;
pub mod normal_charts;
pub mod transport;

pub use error::{Error, Result};
