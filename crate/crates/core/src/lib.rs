//! Vehicle-platoon simulator with a distributed adaptive MPC that compensates
//! delayed and lost V2X packets.

pub mod adaptation;
pub mod channel;
pub mod check;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod qcqp;
pub mod sim;
pub mod terminal;

pub use error::{Error, Result};
