//! Computational reliability of edge devices under random capacity and demand.

pub mod cli;
pub mod estimation;
pub mod mcoracle;
pub mod numfmt;
pub mod probkernel;
pub mod quadrature;
pub mod reliability;
pub mod simharness;
pub mod system;
