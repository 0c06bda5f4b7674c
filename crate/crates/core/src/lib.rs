//! Link-level MU-MIMO OFDM simulation with a trainable neural slot receiver
//! and classical baseline receivers.

pub mod channel;
pub mod classic;
pub mod error;
pub mod harness;
pub mod neural;
pub mod phy;
pub mod sim;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
