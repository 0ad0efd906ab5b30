pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod mlmc;
pub mod rng;
pub mod spde;
pub mod supermesh;
pub mod whitenoise;

pub use error::{Error, Result};
