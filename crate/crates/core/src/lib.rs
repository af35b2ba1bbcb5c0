//! Shrinking-target statistics for expanding circle maps and toral
//! translations, thermodynamic formalism on the circle, and Diophantine
//! counting on the space of two-dimensional lattices.

pub mod error;
pub mod precision;
pub mod systems;
pub mod targets;
pub mod hitstats;
pub mod thermo;
pub mod mc;
pub mod verify;
pub mod limits;
pub mod diophantine;
pub mod experiment;

pub use error::{Error, Result};
