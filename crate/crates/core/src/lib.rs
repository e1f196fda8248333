//! Pilot-wave trajectories for a particle in a square box and the relaxation
//! of non-equilibrium ensembles toward `|ψ|²` under a family of guidance laws.

pub mod checks;
pub mod ensemble;
pub mod error;
pub mod guidance;
pub mod integrate;
pub mod nodes;
pub mod parallel;
pub mod runner;
pub mod wavefield;
