pub mod classical;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod qss;
pub mod report;
pub mod structure;
pub mod trajectory;

pub use error::{QssError, Result};
