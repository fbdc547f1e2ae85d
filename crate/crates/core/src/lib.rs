pub mod atoms;
pub mod certificate;
pub mod dunkl;
pub mod error;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod measure;
pub mod poisson;
pub mod quadrature;
pub mod root_system;
pub mod special;

pub use error::{Error, Result};
