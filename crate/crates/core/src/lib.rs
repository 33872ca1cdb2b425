pub mod error;
pub mod font;
pub mod frame;
pub mod learn;
pub mod mask;
pub mod scene;
pub mod service;
pub mod store;
pub mod text;
pub mod vision;

pub use error::{Error, Result};
pub use frame::{BBox, Color, Frame};
