//! Exact inference and learning in conjugated exponential-family harmoniums.

pub mod conjugation;
pub mod error;
pub mod experiments;
pub mod exfam;
pub mod harmonium;
pub mod inference;
pub mod learning;
pub mod special;

pub use error::{Error, Result};
pub use exfam::{Family, MeanPoint, NaturalPoint, Observation};
pub use harmonium::{Conjugation, Harmonium};
