//! Multizone building simulation: nodal thermal network, pressure airflow
//! network and zone moisture balance.

pub mod model;
pub mod psychro;
pub mod solar;
pub mod thermal;
pub mod units;
pub mod airflow;
pub mod moisture;
pub mod io;
pub mod engine;
pub mod verify;
