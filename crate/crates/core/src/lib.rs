//! Simulator and learning stack for a UAV-carried intelligent reflecting
//! surface serving mobile mmWave users in an urban grid.

pub mod channel;
pub mod config;
pub mod env;
pub mod geom;
pub mod nn;
pub mod rl;
pub mod rng;
pub mod scenario;
pub mod uav;

pub use geom::Vec3;
