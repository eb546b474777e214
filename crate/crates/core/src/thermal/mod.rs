//! Nodal thermal network.
//!
//! Each zone owns a [`ZoneThermalSystem`]: its air node, the surface and
//! wall-interior nodes of the walls it owns, and optionally a zero-capacity
//! radiant-mean node balancing interior longwave exchange. Surface nodes obey
//!
//! ```text
//! C_si dT_si/dt = h_ci(T_ai − T_si) + h_ri(T_rm − T_si) + K(T_se − T_si) + φ_swi
//! C_se dT_se/dt = h_ce(T_ae − T_se) + h_re(T_sky − T_se) + K(T_si − T_se) + φ_swe
//! ```
//!
//! the air node gains `h_ci·S_j·(T_si(j) − T_ai)` from each surface plus
//! `ṁ·c_p·(T_in − T_ai)` from every incoming air stream, and the radiant node
//! satisfies `Σ h_ri·A_j·(T_si(j) − T_rm) = 0`.
//!
//! Zones are coupled through partition walls and interzone air streams. Those
//! couplings appear in each zone as links to [`Boundary::Remote`] nodes and are
//! resolved by repeated zone-by-zone sweeps in [`ThermalNetwork::solve`].

mod mesh;
mod network;
mod state_space;
mod system;

pub use mesh::{generate_network, Exposure, Facing, Surface};
pub use network::{
    FlowSource, Inflow, NetworkSolution, SolarInputs, ThermalNetwork, ThermalStepReport,
    ZoneStepReport, MAX_SWEEPS, SWEEP_TOLERANCE,
};
pub use state_space::{StateInput, StateSpace};
pub use system::{EnergyBalance, LinearStep, ZoneSolution};

use crate::model::{IdealAirHandler, TimeScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    SurfaceInterior,
    SurfaceExterior,
    WallInterior,
    ZoneAir,
    RadiantMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNode {
    pub kind: NodeKind,
    /// J/K
    pub capacitance: f64,
    pub label: String,
}

/// Prescribed temperatures outside a zone's own unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    OutdoorAir,
    Sky,
    Ground,
    /// Constant temperature, °C.
    Fixed(f64),
    /// A node of another zone's system, frozen during that zone's solve.
    Remote { zone: usize, node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkEnd {
    Node(usize),
    Boundary(Boundary),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Conduction,
    ConvectionInterior,
    ConvectionExterior,
    RadiationInterior,
    RadiationExterior,
    /// One-way heat carried by an incoming air stream into node `a`.
    AirTransport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalLink {
    pub a: usize,
    pub b: LinkEnd,
    /// W/K
    pub conductance: f64,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceOrigin {
    ShortwaveInterior,
    ShortwaveExterior,
    InternalLoad,
    HvacIdeal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    pub node: usize,
    /// W
    pub flux: f64,
    pub origin: SourceOrigin,
}

/// Temperatures of the boundaries shared by every zone, °C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryTemperatures {
    pub outdoor: f64,
    pub sky: f64,
    pub ground: f64,
}

impl BoundaryTemperatures {
    pub fn uniform(t: f64) -> Self {
        BoundaryTemperatures {
            outdoor: t,
            sky: t,
            ground: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneThermalSystem {
    pub zone_id: String,
    pub nodes: Vec<ThermalNode>,
    pub links: Vec<ThermalLink>,
    pub sources: Vec<SourceTerm>,
    /// Committed temperatures at the end of the last step, °C.
    pub temperatures: Vec<f64>,
    /// Number of interior surfaces, N_w.
    pub wall_count: usize,
    pub air_node: usize,
    pub radiant_node: Option<usize>,
    pub hvac: Option<IdealAirHandler>,
    pub scheme: TimeScheme,
    /// Injection vector of the last committed step (Crank–Nicolson only).
    previous_injection: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThermalError {
    #[error("zone \"{zone}\" has no components")]
    EmptyZone { zone: String },
    #[error("zone \"{zone}\": node \"{node}\" has an all-zero row (isolated zero-capacity node)")]
    SingularRow { zone: String, node: String },
    #[error("zone \"{zone}\": thermal system could not be solved")]
    SolveFailed { zone: String },
    #[error("zone \"{zone}\": solution is not finite")]
    NonFinite { zone: String },
    #[error("zone \"{zone}\": zero-capacity node \"{node}\" cannot be eliminated")]
    SingularAlgebraicBlock { zone: String, node: String },
}
