//! Discrete-event simulation of NDN-style information-centric networking
//! over TSCH and CSMA/CA link layers, plus recursive-tree analytics.

pub mod adaptive;
pub mod config;
pub mod csma;
pub mod error;
pub mod icn;
pub mod kernel;
pub mod metrics;
pub mod packet;
pub mod radio;
pub mod routing;
pub mod sim;
pub mod tsch;
pub mod urt;

pub use error::{ConfigError, ScheduleError, SimError};
pub use radio::{ConnectivityGraph, NodeId};
