//! Discrete p-modulus laboratory.
//!
//! Computes moduli of dual families of k- and (n-k)-dimensional slices of
//! n-dimensional boxes, checks the duality product against 1 and against
//! the exact product-geometry formulas, and verifies the admissibility
//! constructions (mollified surface densities, dual densities, level sets)
//! at desk scale.

pub mod capacity;
pub mod cli;
pub mod chain;
pub mod config;
pub mod families;
pub mod flow;
pub mod grid;
pub mod homology;
pub mod lab;
pub mod mollifier;
pub mod quadrature;
pub mod report;
pub mod simplex;
pub mod snf;
pub mod solver;

pub use chain::Chain;
pub use grid::{build_grid, BoxSpec, CellId, Deformation, GridComplex, Tag};
