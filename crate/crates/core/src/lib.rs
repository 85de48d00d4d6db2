//! Finite-dimensional topos models of quantum systems and their composites.

pub mod compose;
pub mod contexts;
pub mod linalg;
pub mod quantum;
pub mod suites;
pub mod systems;
pub mod topos;
