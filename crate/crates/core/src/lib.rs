pub mod algebra;
pub mod cli;
pub mod error;
pub mod expectation;
pub mod projection;
pub mod scenario;
pub mod stepper;
pub mod transport;
pub mod unitary;
pub mod verify;

pub use error::{Error, Result};
