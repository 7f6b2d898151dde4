//! Executable clone theory at desk scale: finite function clones, the
//! pointwise-convergence topology, polymorphisms of finite structures,
//! HSP membership, lazy Fraisse limits, back-and-forth engines, gate
//! decompositions and monoid constructions.

pub mod back_and_forth;
pub mod birkhoff;
pub mod clone_core;
pub mod fraisse;
pub mod gates;
pub mod monoids;
pub mod topology;
pub mod structures;
pub mod union_find;
