//! Action potentials: discrete trajectory optimization, shooting polish and
//! the Maderna-type uniform bounds.

mod cache;
pub mod discrete;
mod maderna;
mod potential;
mod shooting;

pub use cache::PhiCache;
pub use discrete::{
    discrete_action, euler_lagrange_residual, graded_grid, uniform_grid, ActionValue,
    DiscreteCurve, MinimizeStatus, BARRIER_VALUE,
};
pub use maderna::{fit_maderna, maderna_mu, BoundSample, MadernaFit, FIT_MARGIN};
pub use potential::{
    phi_fixed_time, phi_fixed_time_warm, phi_free, straight_action, ActionOptions, ActionResult,
    FreeTimeResult, Probe,
};
