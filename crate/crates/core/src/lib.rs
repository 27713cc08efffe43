//! Cold-plate channel synthesis: a finite-difference thermal model steering a
//! pinned Gray-Scott reaction-diffusion generator, plus a straight parallel
//! channel baseline to compare against.

pub mod cli;
pub mod design;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod parallel;
pub mod rd;
pub mod thermal;

pub use grid::{Grid, GridError, ScalarField};
