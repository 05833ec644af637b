//! Brain-body co-optimization of 2D voxel robots under changing
//! environments.
//!
//! Robots are 5x5 voxel grids simulated as mass-spring systems; each
//! robot's controller is tuned inside its lifetime by Bayesian
//! optimization or DDPG, and an outer evolutionary loop compares
//! Darwinian inheritance (offspring restart from mutated genotypes)
//! against Lamarckian inheritance (offspring start from what the parent
//! learned). Runs write line-oriented logs that the analysis and replay
//! tools consume.

pub mod analysis;
pub mod config;
pub mod controller;
pub mod env;
pub mod evo;
pub mod learn;
pub mod morphology;
pub mod rng;
pub mod runlog;
pub mod sim;
pub mod tools;
