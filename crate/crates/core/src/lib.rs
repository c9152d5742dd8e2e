//! Simulation and verification toolkit for integer height functions on
//! cubic shift-invariant planar lattices.

pub mod audit;
pub mod enrichment;
pub mod experiments;
pub mod exploration;
pub mod gibbs;
pub mod lattice;
pub mod percolation;
pub mod potentials;
