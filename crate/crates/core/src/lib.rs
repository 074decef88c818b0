pub mod certificate;
pub mod classifier;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod lpcore;
pub mod model;
pub mod projection;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
