//! Static description of a building: zones, inter-ambiances, their
//! components, and the per-entity model selectors.
//!
//! The tree mirrors the way a building is described to the engine:
//! building → zones / inter-ambiances → components. Zone components live
//! inside a single zone (internal walls, loads, air handlers, extract vents);
//! separation components belong to an inter-ambiance, i.e. the boundary
//! between two zones or between a zone and the exterior.
//!
//! Model selection is local: every wall resolves its own conduction model
//! (its override, else its zone's default), so two walls of the same building
//! can be meshed with different levels of detail.

use std::collections::{HashMap, HashSet};
use std::fmt;

/// Reserved pseudo-zone id whose state is prescribed by the weather.
pub const EXTERIOR: &str = "EXTERIOR";

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingDescription {
    pub name: String,
    pub simulation_type: SimulationType,
    pub coupling: CouplingOptions,
    pub site: Site,
    /// Building-wide film coefficients; walls may override each one.
    pub films: FilmCoefficients,
    pub airflow_solver: SolverConfig,
    pub moisture: MoistureOptions,
    pub time_scheme: TimeScheme,
    pub zones: Vec<Zone>,
    pub inter_ambiances: Vec<InterAmbiance>,
    /// Default output requests for runs of this building.
    pub outputs: Vec<OutputRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimulationType {
    ThermalOnly,
    ThermalAirflow,
    AirflowOnly,
    ThermalAirflowMoisture,
}

impl SimulationType {
    pub fn thermal(self) -> bool {
        !matches!(self, SimulationType::AirflowOnly)
    }

    pub fn airflow(self) -> bool {
        !matches!(self, SimulationType::ThermalOnly)
    }

    pub fn moisture(self) -> bool {
        matches!(self, SimulationType::ThermalAirflowMoisture)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            SimulationType::ThermalOnly => "thermal",
            SimulationType::ThermalAirflow => "thermal-airflow",
            SimulationType::AirflowOnly => "airflow",
            SimulationType::ThermalAirflowMoisture => "thermal-airflow-moisture",
        }
    }

    /// Accepts both the file keywords and the CamelCase names.
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "thermal" | "ThermalOnly" => SimulationType::ThermalOnly,
            "thermal-airflow" | "ThermalAirflow" => SimulationType::ThermalAirflow,
            "airflow" | "AirflowOnly" => SimulationType::AirflowOnly,
            "thermal-airflow-moisture" | "ThermalAirflowMoisture" => {
                SimulationType::ThermalAirflowMoisture
            }
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// Airflow then thermal, once per step.
    OneWay,
    /// Repeat airflow and thermal until temperatures and flows settle.
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOptions {
    pub mode: CouplingMode,
    pub max_iterations: usize,
    /// K
    pub air_temp_tolerance: f64,
    /// kg/s
    pub flow_tolerance: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions {
            mode: CouplingMode::OneWay,
            max_iterations: 20,
            air_temp_tolerance: 1e-3,
            flow_tolerance: 1e-5,
        }
    }
}

/// Settings of the under-relaxed Newton pressure solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Under-relaxation factor ω in (0, 1].
    pub relaxation: f64,
    pub max_iterations: usize,
    /// kg/s, applied to every zone mass balance.
    pub residual_tolerance: f64,
    /// Pa; the full Newton step must also fall below this.
    pub pressure_tolerance: f64,
    pub picard_restarts: usize,
    /// Forward-difference probe for the Jacobian, Pa.
    pub jacobian_probe: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            relaxation: 0.75,
            max_iterations: 100,
            residual_tolerance: 1e-8,
            pressure_tolerance: 1e-10,
            picard_restarts: 3,
            jacobian_probe: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoistureOptions {
    /// One lumped hygroscopic buffer per zone.
    pub buffers: bool,
}

impl Default for MoistureOptions {
    fn default() -> Self {
        MoistureOptions { buffers: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    BackwardEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub latitude: f64,
    /// Degrees east of Greenwich.
    pub longitude: f64,
    /// Offset of the weather file's clock from UTC, hours.
    pub time_zone: f64,
    pub ground_albedo: f64,
    /// Far-side temperature of ground-contact walls, °C. `None` means the
    /// mean outdoor dry-bulb of the weather series.
    pub ground_temperature: Option<f64>,
    /// T_sky = T_ae − offset, K.
    pub sky_temperature_offset: f64,
    /// Wind pressure coefficients by wind incidence angle relative to the
    /// facade normal.
    pub cp_table: Vec<CpSector>,
}

impl Default for Site {
    fn default() -> Self {
        Site {
            latitude: 45.0,
            longitude: 0.0,
            time_zone: 0.0,
            ground_albedo: 0.2,
            ground_temperature: None,
            sky_temperature_offset: 6.0,
            cp_table: default_cp_table(),
        }
    }
}

/// Cp for incidence angles in `[from, to)` degrees, 0° = wind normal to the facade.
#[derive(Debug, Clone, PartialEq)]
pub struct CpSector {
    pub from: f64,
    pub to: f64,
    pub cp: f64,
}

pub fn default_cp_table() -> Vec<CpSector> {
    vec![
        CpSector { from: 0.0, to: 45.0, cp: 0.6 },
        CpSector { from: 45.0, to: 135.0, cp: -0.35 },
        CpSector { from: 135.0, to: 225.0, cp: -0.3 },
        CpSector { from: 225.0, to: 315.0, cp: -0.35 },
        CpSector { from: 315.0, to: 360.0, cp: 0.6 },
    ]
}

/// Linearized surface exchange coefficients, W/(m²·K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilmCoefficients {
    pub h_ci: f64,
    pub h_ri: f64,
    pub h_ce: f64,
    pub h_re: f64,
}

impl Default for FilmCoefficients {
    fn default() -> Self {
        FilmCoefficients {
            h_ci: 3.0,
            h_ri: 5.5,
            h_ce: 17.0,
            h_re: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilmOverrides {
    pub h_ci: Option<f64>,
    pub h_ri: Option<f64>,
    pub h_ce: Option<f64>,
    pub h_re: Option<f64>,
}

impl FilmOverrides {
    pub fn resolve(&self, defaults: &FilmCoefficients) -> FilmCoefficients {
        FilmCoefficients {
            h_ci: self.h_ci.unwrap_or(defaults.h_ci),
            h_ri: self.h_ri.unwrap_or(defaults.h_ri),
            h_ce: self.h_ce.unwrap_or(defaults.h_ce),
            h_re: self.h_re.unwrap_or(defaults.h_re),
        }
    }
}

/// Piecewise-constant hourly profile, repeated with a period of
/// `values.len()` hours. A single value is a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub values: Vec<f64>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            values: vec![value],
        }
    }

    /// Value during the hour that starts `hour` hours after the origin.
    pub fn at_hour(&self, hour: i64) -> f64 {
        match self.values.len() {
            0 => 0.0,
            n => self.values[hour.rem_euclid(n as i64) as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: String,
    /// m³
    pub air_volume: f64,
    /// Height of the pressure reference node above ground, m.
    pub reference_height: f64,
    pub model: ModelSelector,
    /// kg/s
    pub moisture_gain: Schedule,
    pub buffer: Option<BufferParams>,
    pub components: Vec<ZoneComponent>,
}

impl Zone {
    /// Buffer parameters, defaulting to 10 kg per 50 m³ and β = 1e-4 kg/s.
    pub fn buffer_params(&self) -> BufferParams {
        self.buffer.clone().unwrap_or(BufferParams {
            mass: 10.0 * self.air_volume / 50.0,
            exchange: 1e-4,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferParams {
    /// Equivalent dry-air mass of the buffer, kg.
    pub mass: f64,
    /// Exchange coefficient β, kg/s.
    pub exchange: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSelector {
    pub conduction: ConductionModel,
    pub longwave: LongwaveModel,
}

impl Default for ModelSelector {
    fn default() -> Self {
        ModelSelector {
            conduction: ConductionModel::R2C,
            longwave: LongwaveModel::RadiantMeanNode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConductionModel {
    /// Two surface capacitances and one conductance.
    R2C,
    /// Per-layer 1-D finite differences.
    FD1D { nodes_per_layer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LongwaveModel {
    RadiantMeanNode,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterAmbiance {
    pub id: String,
    pub zone_a: String,
    /// A zone id or [`EXTERIOR`].
    pub zone_b: String,
    pub components: Vec<SeparationComponent>,
}

impl InterAmbiance {
    pub fn is_exterior(&self) -> bool {
        self.zone_b == EXTERIOR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZoneComponent {
    InternalWall(Wall),
    IdealAirHandler(IdealAirHandler),
    InternalLoad(InternalLoad),
    VmcVent(VmcVent),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparationComponent {
    SeparationWall(Wall),
    Glazing(Glazing),
    LargeOpening(LargeOpening),
    SmallOpening(SmallOpening),
    KnownFlow(KnownFlow),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    InternalWall,
    IdealAirHandler,
    InternalLoad,
    VmcVent,
    SeparationWall,
    Glazing,
    LargeOpening,
    SmallOpening,
    KnownFlow,
}

impl ZoneComponent {
    pub fn id(&self) -> &str {
        match self {
            ZoneComponent::InternalWall(w) => &w.id,
            ZoneComponent::IdealAirHandler(h) => &h.id,
            ZoneComponent::InternalLoad(l) => &l.id,
            ZoneComponent::VmcVent(v) => &v.id,
        }
    }

    pub fn kind(&self) -> ComponentKind {
        match self {
            ZoneComponent::InternalWall(_) => ComponentKind::InternalWall,
            ZoneComponent::IdealAirHandler(_) => ComponentKind::IdealAirHandler,
            ZoneComponent::InternalLoad(_) => ComponentKind::InternalLoad,
            ZoneComponent::VmcVent(_) => ComponentKind::VmcVent,
        }
    }
}

impl SeparationComponent {
    pub fn id(&self) -> &str {
        match self {
            SeparationComponent::SeparationWall(w) => &w.id,
            SeparationComponent::Glazing(g) => &g.id,
            SeparationComponent::LargeOpening(o) => &o.id,
            SeparationComponent::SmallOpening(o) => &o.id,
            SeparationComponent::KnownFlow(f) => &f.id,
        }
    }

    pub fn kind(&self) -> ComponentKind {
        match self {
            SeparationComponent::SeparationWall(_) => ComponentKind::SeparationWall,
            SeparationComponent::Glazing(_) => ComponentKind::Glazing,
            SeparationComponent::LargeOpening(_) => ComponentKind::LargeOpening,
            SeparationComponent::SmallOpening(_) => ComponentKind::SmallOpening,
            SeparationComponent::KnownFlow(_) => ComponentKind::KnownFlow,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// W/(m·K)
    pub conductivity: f64,
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// m
    pub thickness: f64,
}

impl Layer {
    /// Heat capacity per unit area, J/(m²·K).
    pub fn areal_capacity(&self) -> f64 {
        self.density * self.specific_heat * self.thickness
    }
}

/// Ground-contact variants; all are walls whose far side sits at a fixed
/// temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundContact {
    SlabOnGrade,
    CrawlSpace,
    WallOnGrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub id: String,
    /// m²
    pub area: f64,
    /// Degrees clockwise from North (South = 180).
    pub azimuth: f64,
    /// 0 = facing up, 90 = vertical, 180 = facing down.
    pub tilt: f64,
    /// Height of the wall centre above ground, m.
    pub elevation: f64,
    /// Layers from the zone-A side to the far side.
    pub layers: Vec<Layer>,
    /// Shortwave absorptance of the exposed face.
    pub absorptance: f64,
    /// Longwave emissivity; scales both radiative film coefficients.
    pub emissivity: f64,
    pub films: FilmOverrides,
    /// Overrides the zone's default conduction model.
    pub conduction: Option<ConductionModel>,
    pub ground: Option<GroundContact>,
    /// Far-side temperature for ground contact, °C; defaults to the site value.
    pub far_side_temperature: Option<f64>,
}

impl Wall {
    /// Surface-to-surface conductance per unit area, W/(m²·K).
    pub fn u_surface(&self) -> f64 {
        1.0 / self
            .layers
            .iter()
            .map(|l| l.thickness / l.conductivity)
            .sum::<f64>()
    }

    pub fn areal_capacity(&self) -> f64 {
        self.layers.iter().map(Layer::areal_capacity).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glazing {
    pub id: String,
    pub area: f64,
    pub azimuth: f64,
    pub tilt: f64,
    pub elevation: f64,
    /// Glass surface-to-surface conductance, W/(m²·K).
    pub conductance: f64,
    /// Shortwave transmittance.
    pub transmittance: f64,
    /// Shortwave absorptance of the outer face.
    pub absorptance: f64,
    pub emissivity: f64,
    pub films: FilmOverrides,
}

/// Interior vertical large opening (door, passage).
#[derive(Debug, Clone, PartialEq)]
pub struct LargeOpening {
    pub id: String,
    pub width: f64,
    pub height: f64,
    /// Sill height above ground, m.
    pub bottom_elevation: f64,
    pub discharge_coefficient: f64,
}

/// Crack or vent following ṁ = K·ΔPⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallOpening {
    pub id: String,
    /// kg/(s·Paⁿ)
    pub coefficient: f64,
    pub exponent: f64,
    pub elevation: f64,
    /// Facade azimuth for wind pressure; `None` means no wind exposure.
    pub azimuth: Option<f64>,
}

/// Imposed mass flow from zone A to zone B (negative reverses it).
#[derive(Debug, Clone, PartialEq)]
pub struct KnownFlow {
    pub id: String,
    pub flow: Schedule,
}

/// Mechanical extract vent, kg/s removed from the zone.
#[derive(Debug, Clone, PartialEq)]
pub struct VmcVent {
    pub id: String,
    pub extract: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalLoad {
    pub id: String,
    /// W
    pub power: Schedule,
    /// Share released as radiation onto interior surfaces, the rest goes to the air.
    pub radiative_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvacMode {
    Heating,
    Cooling,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealAirHandler {
    pub id: String,
    /// °C
    pub setpoint: f64,
    /// W, applies to heating and cooling alike.
    pub max_power: f64,
    pub mode: HvacMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// The zone-A face (or first face of an internal wall).
    Interior,
    /// The far face.
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputVariable {
    AirTemperature,
    SurfaceTemperature(Side),
    SurfaceFlux(Side),
    Pressure,
    LinkFlow,
    Humidity,
    HvacPower,
    /// Operative temperature: mean of air and mean radiant temperature.
    Comfort,
}

impl OutputVariable {
    pub fn keyword(self) -> &'static str {
        match self {
            OutputVariable::AirTemperature => "air-temperature",
            OutputVariable::SurfaceTemperature(Side::Interior) => "surface-temperature-interior",
            OutputVariable::SurfaceTemperature(Side::Exterior) => "surface-temperature-exterior",
            OutputVariable::SurfaceFlux(Side::Interior) => "surface-flux-interior",
            OutputVariable::SurfaceFlux(Side::Exterior) => "surface-flux-exterior",
            OutputVariable::Pressure => "pressure",
            OutputVariable::LinkFlow => "link-flow",
            OutputVariable::Humidity => "humidity",
            OutputVariable::HvacPower => "hvac-power",
            OutputVariable::Comfort => "operative-temperature",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [
            OutputVariable::AirTemperature,
            OutputVariable::SurfaceTemperature(Side::Interior),
            OutputVariable::SurfaceTemperature(Side::Exterior),
            OutputVariable::SurfaceFlux(Side::Interior),
            OutputVariable::SurfaceFlux(Side::Exterior),
            OutputVariable::Pressure,
            OutputVariable::LinkFlow,
            OutputVariable::Humidity,
            OutputVariable::HvacPower,
            OutputVariable::Comfort,
        ]
        .into_iter()
        .find(|v| v.keyword() == s)
    }

    pub fn unit(self) -> &'static str {
        match self {
            OutputVariable::AirTemperature
            | OutputVariable::SurfaceTemperature(_)
            | OutputVariable::Comfort => "degC",
            OutputVariable::SurfaceFlux(_) => "W/m2",
            OutputVariable::Pressure => "Pa",
            OutputVariable::LinkFlow => "kg/s",
            OutputVariable::Humidity => "kg/kg",
            OutputVariable::HvacPower => "W",
        }
    }

    fn wants_zone(self) -> bool {
        matches!(
            self,
            OutputVariable::AirTemperature
                | OutputVariable::Pressure
                | OutputVariable::Humidity
                | OutputVariable::HvacPower
                | OutputVariable::Comfort
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRequest {
    /// Zone or component id.
    pub entity: String,
    pub variable: OutputVariable,
}

/// Owner of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Zone(usize),
    InterAmbiance(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentRef {
    pub owner: Owner,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// Offending entity, e.g. `zone "z1"` or `crack "c2"`.
    pub entity: String,
    pub rule: String,
    pub location: Option<Location>,
}

impl Diagnostic {
    pub fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Diagnostic {
            entity: entity.into(),
            rule: rule.into(),
            location: None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(loc) = self.location {
            write!(f, "{loc}: ")?;
        }
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

impl BuildingDescription {
    pub fn new(name: impl Into<String>) -> Self {
        BuildingDescription {
            name: name.into(),
            simulation_type: SimulationType::ThermalOnly,
            coupling: CouplingOptions::default(),
            site: Site::default(),
            films: FilmCoefficients::default(),
            airflow_solver: SolverConfig::default(),
            moisture: MoistureOptions::default(),
            time_scheme: TimeScheme::BackwardEuler,
            zones: Vec::new(),
            inter_ambiances: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    /// Components of `kind` in document order: zones first (each zone's list
    /// in order), then inter-ambiances. `scope` restricts to one owner.
    pub fn enumerate_components(
        &self,
        kind: ComponentKind,
        scope: Option<Owner>,
    ) -> Vec<ComponentRef> {
        let mut out = Vec::new();
        for (zi, zone) in self.zones.iter().enumerate() {
            let owner = Owner::Zone(zi);
            if scope.is_some_and(|s| s != owner) {
                continue;
            }
            for (ci, c) in zone.components.iter().enumerate() {
                if c.kind() == kind {
                    out.push(ComponentRef { owner, index: ci });
                }
            }
        }
        for (ii, ia) in self.inter_ambiances.iter().enumerate() {
            let owner = Owner::InterAmbiance(ii);
            if scope.is_some_and(|s| s != owner) {
                continue;
            }
            for (ci, c) in ia.components.iter().enumerate() {
                if c.kind() == kind {
                    out.push(ComponentRef { owner, index: ci });
                }
            }
        }
        out
    }

    pub fn zone_component(&self, r: ComponentRef) -> Option<&ZoneComponent> {
        match r.owner {
            Owner::Zone(z) => self.zones.get(z)?.components.get(r.index),
            Owner::InterAmbiance(_) => None,
        }
    }

    pub fn separation_component(&self, r: ComponentRef) -> Option<&SeparationComponent> {
        match r.owner {
            Owner::InterAmbiance(i) => self.inter_ambiances.get(i)?.components.get(r.index),
            Owner::Zone(_) => None,
        }
    }

    /// Checks every structural and physical invariant. An empty list means
    /// the description is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        Validator::default().run(self)
    }
}

#[derive(Default)]
struct Validator {
    out: Vec<Diagnostic>,
}

impl Validator {
    fn push(&mut self, entity: String, rule: impl Into<String>) {
        self.out.push(Diagnostic::new(entity, rule));
    }

    fn positive(&mut self, entity: &str, what: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(entity.to_string(), format!("{what} must be > 0 (got {v})"));
        }
    }

    fn non_negative(&mut self, entity: &str, what: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(entity.to_string(), format!("{what} must be >= 0 (got {v})"));
        }
    }

    fn unit_interval(&mut self, entity: &str, what: &str, v: f64) {
        if !(0.0..=1.0).contains(&v) {
            self.push(entity.to_string(), format!("{what} out of [0,1] (got {v})"));
        }
    }

    fn finite(&mut self, entity: &str, what: &str, v: f64) {
        if !v.is_finite() {
            self.push(entity.to_string(), format!("{what} must be finite"));
        }
    }

    fn schedule(&mut self, entity: &str, what: &str, s: &Schedule, signed: bool) {
        if s.values.is_empty() {
            self.push(entity.to_string(), format!("{what} schedule is empty"));
        }
        for &v in &s.values {
            if !v.is_finite() || (!signed && v < 0.0) {
                self.push(entity.to_string(), format!("{what} schedule value {v} invalid"));
                break;
            }
        }
    }

    fn run(mut self, desc: &BuildingDescription) -> Vec<Diagnostic> {
        let building = format!("building \"{}\"", desc.name);
        let c = &desc.coupling;
        if c.max_iterations < 1 {
            self.push(building.clone(), "coupling max_iterations must be >= 1");
        }
        self.positive(&building, "coupling air_temp_tolerance", c.air_temp_tolerance);
        self.positive(&building, "coupling flow_tolerance", c.flow_tolerance);
        let s = &desc.airflow_solver;
        if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            self.push(building.clone(), "solver relaxation out of (0,1]");
        }
        self.positive(&building, "solver residual_tolerance", s.residual_tolerance);
        self.positive(&building, "solver pressure_tolerance", s.pressure_tolerance);
        self.positive(&building, "solver jacobian_probe", s.jacobian_probe);
        if s.max_iterations < 1 {
            self.push(building.clone(), "solver max_iterations must be >= 1");
        }
        let site = &desc.site;
        if !(-90.0..=90.0).contains(&site.latitude) {
            self.push(building.clone(), "site latitude out of [-90,90]");
        }
        self.finite(&building, "site longitude", site.longitude);
        self.finite(&building, "site time_zone", site.time_zone);
        self.unit_interval(&building, "site ground_albedo", site.ground_albedo);
        self.finite(&building, "site sky_temperature_offset", site.sky_temperature_offset);
        if let Some(t) = site.ground_temperature {
            self.finite(&building, "site ground_temperature", t);
        }
        for sector in &site.cp_table {
            if !(sector.from < sector.to && sector.cp.is_finite()) {
                self.push(building.clone(), "cp sector must have from < to and finite cp");
            }
        }
        let f = &desc.films;
        for (what, v) in [("h_ci", f.h_ci), ("h_ri", f.h_ri), ("h_ce", f.h_ce), ("h_re", f.h_re)] {
            self.non_negative(&building, what, v);
        }

        let mut zone_ids = HashSet::new();
        for zone in &desc.zones {
            let e = format!("zone \"{}\"", zone.id);
            if zone.id == EXTERIOR {
                self.push(e.clone(), "zone id EXTERIOR is reserved");
            }
            if !zone_ids.insert(zone.id.as_str()) {
                self.push(e.clone(), "duplicate zone id");
            }
            self.positive(&e, "air volume", zone.air_volume);
            self.finite(&e, "reference height", zone.reference_height);
            self.selector(&e, zone.model.conduction);
            self.schedule(&e, "moisture gain", &zone.moisture_gain, true);
            if let Some(b) = &zone.buffer {
                self.positive(&e, "buffer mass", b.mass);
                self.positive(&e, "buffer exchange coefficient", b.exchange);
            }
            let mut handlers = 0;
            for comp in &zone.components {
                match comp {
                    ZoneComponent::InternalWall(w) => {
                        self.wall(w, "internal wall");
                        if w.ground.is_some() {
                            self.push(format!("internal wall \"{}\"", w.id), "internal walls cannot touch the ground");
                        }
                    }
                    ZoneComponent::IdealAirHandler(h) => {
                        handlers += 1;
                        let e = format!("air handler \"{}\"", h.id);
                        self.finite(&e, "setpoint", h.setpoint);
                        self.non_negative(&e, "max power", h.max_power);
                    }
                    ZoneComponent::InternalLoad(l) => {
                        let e = format!("internal load \"{}\"", l.id);
                        self.schedule(&e, "power", &l.power, true);
                        self.unit_interval(&e, "radiative fraction", l.radiative_fraction);
                    }
                    ZoneComponent::VmcVent(v) => {
                        let e = format!("vmc \"{}\"", v.id);
                        self.schedule(&e, "extract", &v.extract, false);
                    }
                }
            }
            if handlers > 1 {
                self.push(e, "at most one ideal air handler per zone");
            }
        }

        let mut ia_ids = HashSet::new();
        for ia in &desc.inter_ambiances {
            let e = format!("inter-ambiance \"{}\"", ia.id);
            if !ia_ids.insert(ia.id.as_str()) {
                self.push(e.clone(), "duplicate inter-ambiance id");
            }
            if ia.zone_a == ia.zone_b {
                self.push(e.clone(), "self-coupling");
            }
            if !zone_ids.contains(ia.zone_a.as_str()) {
                self.push(e.clone(), format!("zone_a \"{}\" is not a zone", ia.zone_a));
            }
            if ia.zone_b != EXTERIOR && !zone_ids.contains(ia.zone_b.as_str()) {
                self.push(
                    e.clone(),
                    format!("zone_b \"{}\" is neither a zone nor EXTERIOR", ia.zone_b),
                );
            }
            for comp in &ia.components {
                match comp {
                    SeparationComponent::SeparationWall(w) => {
                        self.wall(w, "wall");
                        if w.ground.is_some() && !ia.is_exterior() {
                            self.push(format!("wall \"{}\"", w.id), "ground contact requires zone_b = EXTERIOR");
                        }
                    }
                    SeparationComponent::Glazing(g) => {
                        let e = format!("glazing \"{}\"", g.id);
                        self.positive(&e, "area", g.area);
                        self.positive(&e, "conductance", g.conductance);
                        self.unit_interval(&e, "transmittance", g.transmittance);
                        self.unit_interval(&e, "absorptance", g.absorptance);
                        self.unit_interval(&e, "emissivity", g.emissivity);
                        if g.transmittance + g.absorptance > 1.0 {
                            self.push(e.clone(), "transmittance + absorptance exceeds 1");
                        }
                        self.orientation(&e, g.azimuth, g.tilt);
                        self.finite(&e, "elevation", g.elevation);
                        self.films(&e, &g.films);
                    }
                    SeparationComponent::LargeOpening(o) => {
                        let e = format!("large opening \"{}\"", o.id);
                        if ia.is_exterior() {
                            self.push(e.clone(), "exterior large openings are not supported");
                        }
                        self.positive(&e, "width", o.width);
                        self.positive(&e, "height", o.height);
                        self.finite(&e, "bottom elevation", o.bottom_elevation);
                        if !(o.discharge_coefficient > 0.0 && o.discharge_coefficient <= 1.0) {
                            self.push(e, "discharge coefficient out of (0,1]");
                        }
                    }
                    SeparationComponent::SmallOpening(o) => {
                        let e = format!("crack \"{}\"", o.id);
                        self.positive(&e, "K", o.coefficient);
                        if !(0.5..=1.0).contains(&o.exponent) {
                            self.push(e.clone(), "n out of [0.5,1]");
                        }
                        self.finite(&e, "elevation", o.elevation);
                        if let Some(a) = o.azimuth {
                            self.finite(&e, "azimuth", a);
                        }
                    }
                    SeparationComponent::KnownFlow(k) => {
                        let e = format!("known flow \"{}\"", k.id);
                        self.schedule(&e, "flow", &k.flow, true);
                    }
                }
            }
        }

        let mut component_ids = HashSet::new();
        let all_ids = desc
            .zones
            .iter()
            .flat_map(|z| z.components.iter().map(|c| c.id()))
            .chain(
                desc.inter_ambiances
                    .iter()
                    .flat_map(|ia| ia.components.iter().map(|c| c.id())),
            );
        for id in all_ids {
            if !component_ids.insert(id) {
                self.push(format!("component \"{id}\""), "duplicate component id");
            }
        }

        let kinds: HashMap<&str, ComponentKind> = desc
            .zones
            .iter()
            .flat_map(|z| z.components.iter().map(|c| (c.id(), c.kind())))
            .chain(
                desc.inter_ambiances
                    .iter()
                    .flat_map(|ia| ia.components.iter().map(|c| (c.id(), c.kind()))),
            )
            .collect();
        for req in &desc.outputs {
            let e = format!("output \"{}\"", req.entity);
            let ok = if req.variable.wants_zone() {
                zone_ids.contains(req.entity.as_str())
            } else {
                match (req.variable, kinds.get(req.entity.as_str())) {
                    (
                        OutputVariable::SurfaceTemperature(_) | OutputVariable::SurfaceFlux(_),
                        Some(ComponentKind::SeparationWall | ComponentKind::InternalWall | ComponentKind::Glazing),
                    ) => true,
                    (
                        OutputVariable::LinkFlow,
                        Some(
                            ComponentKind::SmallOpening
                            | ComponentKind::LargeOpening
                            | ComponentKind::KnownFlow
                            | ComponentKind::VmcVent,
                        ),
                    ) => true,
                    _ => false,
                }
            };
            if !ok {
                self.push(
                    e,
                    format!("{} does not resolve to a matching entity", req.variable.keyword()),
                );
            }
        }
        self.out
    }

    fn selector(&mut self, entity: &str, model: ConductionModel) {
        if let ConductionModel::FD1D { nodes_per_layer } = model {
            if nodes_per_layer < 1 {
                self.push(entity.to_string(), "nodes_per_layer must be >= 1");
            }
        }
    }

    fn orientation(&mut self, entity: &str, azimuth: f64, tilt: f64) {
        self.finite(entity, "azimuth", azimuth);
        if !(0.0..=180.0).contains(&tilt) {
            self.push(entity.to_string(), format!("tilt out of [0,180] (got {tilt})"));
        }
    }

    fn films(&mut self, entity: &str, films: &FilmOverrides) {
        for (what, v) in [
            ("h_ci", films.h_ci),
            ("h_ri", films.h_ri),
            ("h_ce", films.h_ce),
            ("h_re", films.h_re),
        ] {
            if let Some(v) = v {
                self.non_negative(entity, what, v);
            }
        }
    }

    fn wall(&mut self, w: &Wall, label: &str) {
        let e = format!("{label} \"{}\"", w.id);
        self.positive(&e, "area", w.area);
        self.orientation(&e, w.azimuth, w.tilt);
        self.finite(&e, "elevation", w.elevation);
        if w.layers.is_empty() {
            self.push(e.clone(), "wall has no layers");
        }
        for (i, l) in w.layers.iter().enumerate() {
            let what = format!("layer {} ", i + 1);
            self.positive(&e, &(what.clone() + "conductivity"), l.conductivity);
            self.positive(&e, &(what.clone() + "thickness"), l.thickness);
            self.non_negative(&e, &(what.clone() + "density"), l.density);
            self.non_negative(&e, &(what + "specific heat"), l.specific_heat);
        }
        self.unit_interval(&e, "absorptance", w.absorptance);
        self.unit_interval(&e, "emissivity", w.emissivity);
        self.films(&e, &w.films);
        if let Some(m) = w.conduction {
            self.selector(&e, m);
        }
        if let Some(t) = w.far_side_temperature {
            self.finite(&e, "far-side temperature", t);
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_box_is_valid() {
        assert_eq!(box_building().validate(), vec![]);
    }

    #[test]
    fn crack_exponent_out_of_range() {
        let mut d = box_building();
        d.inter_ambiances[0]
            .components
            .push(SeparationComponent::SmallOpening(crack("c1", 1e-3, 1.2)));
        let diags = d.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].entity, "crack \"c1\"");
        assert_eq!(diags[0].rule, "n out of [0.5,1]");
    }

    #[test]
    fn self_coupled_inter_ambiance() {
        let mut d = box_building();
        d.inter_ambiances.push(InterAmbiance {
            id: "loop".into(),
            zone_a: "z1".into(),
            zone_b: "z1".into(),
            components: vec![],
        });
        let diags = d.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].entity, "inter-ambiance \"loop\"");
        assert_eq!(diags[0].rule, "self-coupling");
    }

    #[test]
    fn duplicate_ids_and_dangling_zone() {
        let mut d = box_building();
        d.zones.push(zone("z1", 10.0));
        d.inter_ambiances.push(InterAmbiance {
            id: "x".into(),
            zone_a: "z1".into(),
            zone_b: "nowhere".into(),
            components: vec![SeparationComponent::SeparationWall(wall(
                "w0",
                1.0,
                vec![layer(1.0, 1.0, 1.0, 0.1)],
            ))],
        });
        let rules: Vec<_> = d.validate().into_iter().map(|d| d.rule).collect();
        assert!(rules.contains(&"duplicate zone id".to_string()));
        assert!(rules.contains(&"duplicate component id".to_string()));
        assert!(rules.iter().any(|r| r.contains("neither a zone nor EXTERIOR")));
    }

    #[test]
    fn physical_bounds() {
        let mut d = box_building();
        d.zones[0].air_volume = 0.0;
        if let SeparationComponent::SeparationWall(w) = &mut d.inter_ambiances[0].components[0] {
            w.layers[0].conductivity = -1.0;
            w.absorptance = 1.5;
        }
        let rules: Vec<_> = d.validate().into_iter().map(|d| d.rule).collect();
        assert_eq!(rules.len(), 3, "{rules:?}");
    }

    #[test]
    fn exterior_large_opening_rejected() {
        let mut d = box_building();
        d.inter_ambiances[0]
            .components
            .push(SeparationComponent::LargeOpening(LargeOpening {
                id: "door".into(),
                width: 0.8,
                height: 2.0,
                bottom_elevation: 0.0,
                discharge_coefficient: 0.42,
            }));
        assert_eq!(d.validate().len(), 1);
    }

    #[test]
    fn output_requests_must_resolve() {
        let mut d = box_building();
        d.outputs.push(OutputRequest {
            entity: "z1".into(),
            variable: OutputVariable::AirTemperature,
        });
        d.outputs.push(OutputRequest {
            entity: "w0".into(),
            variable: OutputVariable::SurfaceFlux(Side::Interior),
        });
        assert!(d.validate().is_empty());
        d.outputs.push(OutputRequest {
            entity: "w0".into(),
            variable: OutputVariable::Pressure,
        });
        d.outputs.push(OutputRequest {
            entity: "ghost".into(),
            variable: OutputVariable::LinkFlow,
        });
        assert_eq!(d.validate().len(), 2);
    }

    #[test]
    fn enumerate_in_document_order() {
        let d = box_building();
        let walls = d.enumerate_components(ComponentKind::SeparationWall, None);
        assert_eq!(walls.len(), 6);
        let ids: Vec<_> = walls
            .iter()
            .map(|r| d.separation_component(*r).unwrap().id().to_string())
            .collect();
        assert_eq!(ids, ["w0", "w1", "w2", "w3", "w4", "w5"]);
        assert!(d.enumerate_components(ComponentKind::LargeOpening, None).is_empty());
    }

    #[test]
    fn enumerate_scoped_to_partition() {
        let mut d = box_building();
        d.zones.push(zone("z2", 50.0));
        d.inter_ambiances.push(InterAmbiance {
            id: "part".into(),
            zone_a: "z1".into(),
            zone_b: "z2".into(),
            components: vec![SeparationComponent::SeparationWall(wall(
                "p",
                8.0,
                vec![layer(1.0, 1.0, 1.0, 0.1)],
            ))],
        });
        let refs = d.enumerate_components(ComponentKind::SeparationWall, Some(Owner::InterAmbiance(1)));
        assert_eq!(refs.len(), 1);
        assert_eq!(d.separation_component(refs[0]).unwrap().id(), "p");
    }

    #[test]
    fn schedule_repeats() {
        let s = Schedule {
            values: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(s.at_hour(0), 1.0);
        assert_eq!(s.at_hour(4), 2.0);
        assert_eq!(s.at_hour(-1), 3.0);
    }
}
