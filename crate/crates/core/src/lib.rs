//! Variational objects of the nonnegative-energy Newtonian N-body problem:
//! free-time action potentials, geodesic rays, normalized Busemann
//! functions and fixed-shape hyperbolic velocity fields.

pub mod action;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod horofunction;
mod integrator;
mod linalg;
pub mod rays;
pub mod shape;
pub mod slice;
pub mod model;

pub use error::{JmError, Result};
pub use model::{Configuration, MassSystem, PhaseState, ReducedConfiguration};
