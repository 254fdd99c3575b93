//! Online matching of multi-capacity reusable resources to stochastically
//! arriving groups: instance model, benchmark linear programs, guaranteed
//! adaptive policies, LP-guided heuristics, offline oracles, a Monte Carlo
//! simulator, and data generation.

pub mod data;
pub mod experiment;
pub mod grouping;
pub mod lp;
pub mod model;
pub mod offline;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod verify;
