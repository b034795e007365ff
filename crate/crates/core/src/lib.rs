//! Planar quadruped simulation, motion-imitation experts and a single composer
//! policy that bridges any pair of experts through shrinking tolerance bounds.

pub mod error;
pub mod simcore;
pub mod clips;
pub mod approx;
pub mod experts;
pub mod composer;
pub mod runtime;
pub mod evalbench;
pub mod pipeline;
