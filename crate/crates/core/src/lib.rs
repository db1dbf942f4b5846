//! Closed-loop trajectory planning with annealed sampling, multi-view
//! rendering and ensemble scoring of candidate trajectories.

pub mod evaluator;
pub mod fusion;
pub mod geometry;
pub mod mpc_loop;
pub mod sampler;
pub mod scene;
pub mod trajectory;
pub mod views;
