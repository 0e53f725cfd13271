pub mod bathdecomp;
pub mod config;
pub mod error;
pub mod fqme;
pub mod heom;
pub mod model;
pub mod ode;
pub mod plot;
pub mod protocol;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
