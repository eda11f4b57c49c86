//! Smooth inner and outer approximation of bounded Lipschitz domains.
//!
//! A domain is described by an atlas of Lipschitz graph charts. Mollifying
//! the charts and gluing them with a partition of unity gives defining
//! functions whose sublevel sets are smooth domains squeezed around the
//! original one. The crate also measures how fast they converge and
//! estimates curvature-weighted isocapacitary quantities.

pub mod error;
pub mod capacity;
pub mod curvature;
pub mod defining;
pub mod geometry;
pub mod grid_io;
pub mod metrics;
pub mod mollify;
pub mod numeric;
pub mod partition;
pub mod suites;

pub use error::{Error, Result};
