//! Joint intent classification and slot labelling with dense-addition and
//! low-rank bilinear fusion of two parallel sequence encoders.

pub mod datapipe;
pub mod error;
pub mod evalcli;
pub mod fusion;
pub mod layers;
pub mod modeltrain;
pub mod numcore;
pub mod rng;

pub use error::{Error, Result};
