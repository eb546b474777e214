//! Pressure airflow network.
//!
//! Every zone carries one unknown, its static pressure at its reference
//! height. Links between zones (or a zone and the exterior) pass mass flows
//! driven by the pressure difference at the link height, which includes
//! stack and wind terms. The zone pressures are found by zeroing every zone
//! mass balance with an under-relaxed Newton iteration, restarted from
//! Picard passes when it diverges.

mod laws;
mod network;
mod solver;

pub use laws::{
    crack_flow, large_opening_balance_point, large_opening_flow, pressure_coefficient,
    stack_pressure, wind_pressure, TwoWayFlow,
};
pub use network::{AirflowNetwork, Endpoint, ExteriorConditions, FlowLink, FlowLinkKind};
pub use solver::{solve_pressures, AirflowSolution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AirflowError {
    #[error("no pressure coefficient covers wind incidence {incidence}°")]
    MissingPressureCoefficient { incidence: f64 },
    #[error("zone \"{zone}\": pressure is undetermined (no pressure-dependent path to the exterior)")]
    UndeterminedPressure { zone: String },
    #[error("pressure solver did not converge after {iterations} iterations (max residual {residual:e} kg/s)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("pressure solver diverged after {restarts} Picard restarts (max residual {residual:e} kg/s)")]
    Diverged { restarts: usize, residual: f64 },
    #[error("non-finite airflow input: {what}")]
    NonFinite { what: String },
}
