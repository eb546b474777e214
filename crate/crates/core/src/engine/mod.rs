//! Time loop and phenomenon coupling.
//!
//! Each step runs, as enabled by the simulation type: the airflow solve with
//! densities from the current air temperatures, the thermal sweep with the
//! resulting air streams, optionally repeated until temperatures and flows
//! agree, then the moisture step with the final flows.

mod results;

pub use results::{Column, ModuleCounters, ResultSet, RunSummary};

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};

use crate::airflow::{solve_pressures, AirflowError, AirflowNetwork, AirflowSolution, ExteriorConditions, TwoWayFlow};
use crate::io::{WeatherGap, WeatherRecord, WeatherSeries};
use crate::model::{BuildingDescription, CouplingMode, Diagnostic, OutputRequest, OutputVariable, Side};
use crate::moisture::{MoistureError, MoistureSystem};
use crate::solar::sun_vector;
use crate::thermal::{
    generate_network, BoundaryTemperatures, EnergyBalance, NetworkSolution, SolarInputs, ThermalError,
    ThermalNetwork, ThermalStepReport,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("building description is invalid ({} diagnostics)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("{at}: thermal solve failed (coupling iteration {iteration}): {source}")]
    Thermal {
        at: NaiveDateTime,
        iteration: usize,
        source: ThermalError,
    },
    #[error("{at}: airflow solve failed (coupling iteration {iteration}): {source}")]
    Airflow {
        at: NaiveDateTime,
        iteration: usize,
        source: AirflowError,
    },
    #[error("{at}: moisture step failed: {source}")]
    Moisture { at: NaiveDateTime, source: MoistureError },
    #[error(transparent)]
    Weather(#[from] WeatherGap),
    #[error("weather series is empty")]
    EmptyWeather,
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("output \"{entity}\" {variable} does not resolve")]
    UnknownOutput { entity: String, variable: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// s
    pub timestep: f64,
    pub warmup_days: u32,
    /// End of the step before the first reported one; defaults to one hour
    /// before the first weather record.
    pub start: Option<NaiveDateTime>,
    /// Defaults to the last weather record.
    pub end: Option<NaiveDateTime>,
    /// Empty means the building's own requests, or every zone air temperature.
    pub outputs: Vec<OutputRequest>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            timestep: 3600.0,
            warmup_days: 3,
            start: None,
            end: None,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CouplingStatus {
    /// Thermal solves performed in the step.
    pub iterations: usize,
    /// Iterative coupling met both tolerances.
    pub converged: bool,
    /// Largest flow change of the last airflow re-solve, kg/s.
    pub flow_change: f64,
    /// Largest air-temperature change of the last iteration, K.
    pub temperature_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub time: NaiveDateTime,
    pub thermal: Option<ThermalStepReport>,
    pub airflow_residual: Option<f64>,
    pub coupling: CouplingStatus,
    pub supersaturated: Vec<usize>,
}

/// Complete state of a running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    desc: BuildingDescription,
    /// End of the last committed step.
    pub time: NaiveDateTime,
    pub thermal: Option<ThermalNetwork>,
    pub airflow: Option<AirflowNetwork>,
    pub moisture: Option<MoistureSystem>,
    /// Zone reference pressures, Pa.
    pub pressures: Vec<f64>,
    /// Link flows of the last step.
    pub flows: Vec<TwoWayFlow>,
    /// Zone air temperatures, °C; follows outdoor air when thermal is off.
    pub air_temperatures: Vec<f64>,
    pub hvac_power: Vec<f64>,
    pub counters: ModuleCounters,
    pub coupling: CouplingStatus,
    pub ground_temperature: f64,
    /// Weather of the last step.
    pub weather: WeatherRecord,
}

/// Hours since 1 January 00:00 of the year of `t`, for schedules.
pub fn hour_of_year(t: NaiveDateTime) -> i64 {
    (t.ordinal0() as i64) * 24 + t.hour() as i64
}

fn max_flow_change(a: &[TwoWayFlow], b: &[TwoWayFlow]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.forward - y.forward).abs().max((x.backward - y.backward).abs()))
        .fold(0.0, f64::max)
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn step_duration(dt: f64) -> Duration {
    Duration::milliseconds((dt * 1000.0).round() as i64)
}

impl Simulation {
    /// Everything at the first outdoor state: temperatures at its dry-bulb,
    /// pressures zero, humidities at its humidity ratio.
    pub fn initial_state(
        desc: &BuildingDescription,
        first: &WeatherRecord,
        ground_temperature: f64,
    ) -> Result<Self, EngineError> {
        let n = desc.zones.len();
        let st = desc.simulation_type;
        let thermal = if st.thermal() {
            let mut net = generate_network(desc).map_err(|source| EngineError::Thermal {
                at: first.timestamp,
                iteration: 0,
                source,
            })?;
            net.set_uniform_temperature(first.dry_bulb);
            Some(net)
        } else {
            None
        };
        let airflow = st.airflow().then(|| AirflowNetwork::from_description(desc));
        let moisture = st
            .moisture()
            .then(|| MoistureSystem::from_description(desc, first.humidity_ratio));
        let links = airflow.as_ref().map_or(0, |a| a.links.len());
        Ok(Simulation {
            desc: desc.clone(),
            time: first.timestamp,
            thermal,
            airflow,
            moisture,
            pressures: vec![0.0; n],
            flows: vec![
                TwoWayFlow {
                    forward: 0.0,
                    backward: 0.0
                };
                links
            ],
            air_temperatures: vec![first.dry_bulb; n],
            hvac_power: vec![0.0; n],
            counters: ModuleCounters::default(),
            coupling: CouplingStatus::default(),
            ground_temperature,
            weather: *first,
        })
    }

    pub fn description(&self) -> &BuildingDescription {
        &self.desc
    }

    fn boundary(&self, wx: &WeatherRecord) -> BoundaryTemperatures {
        BoundaryTemperatures {
            outdoor: wx.dry_bulb,
            sky: wx.dry_bulb - self.desc.site.sky_temperature_offset,
            ground: self.ground_temperature,
        }
    }

    fn exterior(wx: &WeatherRecord) -> ExteriorConditions {
        ExteriorConditions {
            temperature: wx.dry_bulb,
            wind_speed: wx.wind_speed,
            wind_direction: wx.wind_direction,
        }
    }

    /// Solves the pressure network with densities from `temperatures`.
    pub fn solve_airflow_at(
        &mut self,
        temperatures: &[f64],
        wx: &WeatherRecord,
        hour: i64,
        iteration: usize,
    ) -> Result<AirflowSolution, EngineError> {
        let at = wx.timestamp;
        let err = |source| EngineError::Airflow { at, iteration, source };
        let net = self.airflow.as_mut().expect("airflow enabled");
        net.update_boundary(temperatures, &Self::exterior(wx), &self.desc.site.cp_table, hour)
            .map_err(err)?;
        self.counters.airflow_solves += 1;
        solve_pressures(net, &self.desc.airflow_solver, &self.pressures).map_err(err)
    }

    fn solve_thermal(
        &mut self,
        flows: Option<&[TwoWayFlow]>,
        dt: f64,
        bnd: &BoundaryTemperatures,
        at: NaiveDateTime,
        iteration: usize,
    ) -> Result<NetworkSolution, EngineError> {
        let inflows = match (flows, &self.airflow) {
            (Some(f), Some(a)) => a.zone_inflows(f),
            _ => vec![Vec::new(); self.desc.zones.len()],
        };
        let net = self.thermal.as_mut().expect("thermal enabled");
        net.set_air_transport(&inflows);
        self.counters.thermal_solves += 1;
        net.solve(dt, bnd)
            .map_err(|source| EngineError::Thermal { at, iteration, source })
    }

    fn iterate_air_temperatures(sol: &NetworkSolution, net: &ThermalNetwork) -> Vec<f64> {
        net.zones
            .iter()
            .zip(&sol.temperatures)
            .map(|(z, t)| t[z.air_node])
            .collect()
    }

    /// Advances by `dt` seconds using the weather at the end of the step.
    pub fn step(&mut self, weather: &WeatherSeries, dt: f64) -> Result<StepReport, EngineError> {
        let t_new = self.time + step_duration(dt);
        let wx = weather.at(t_new)?;
        self.step_with(&wx, dt)
    }

    /// Advances by `dt` seconds to `wx.timestamp`.
    pub fn step_with(&mut self, wx: &WeatherRecord, dt: f64) -> Result<StepReport, EngineError> {
        let at = wx.timestamp;
        let mid = at - step_duration(dt / 2.0);
        let hour = hour_of_year(mid);
        let bnd = self.boundary(wx);
        let st = self.desc.simulation_type;

        if let Some(net) = self.thermal.as_mut() {
            let solar = SolarInputs {
                sun: sun_vector(&self.desc.site, mid),
                direct_normal: wx.direct_normal,
                diffuse_horizontal: wx.diffuse_horizontal,
                albedo: self.desc.site.ground_albedo,
            };
            net.set_sources(Some(&solar), hour);
        }
        if !st.thermal() {
            self.air_temperatures = vec![wx.dry_bulb; self.desc.zones.len()];
        }

        let mut coupling = CouplingStatus::default();
        let mut airflow_residual = None;
        let mut thermal_solution = None;
        if st.airflow() {
            let start_temps = self.air_temperatures.clone();
            let mut air = self.solve_airflow_at(&start_temps, wx, hour, 1)?;
            if st.thermal() {
                let mut sol = self.solve_thermal(Some(&air.flows), dt, &bnd, at, 1)?;
                coupling.iterations = 1;
                if self.desc.coupling.mode == CouplingMode::Iterative {
                    let opts = self.desc.coupling.clone();
                    let mut previous = start_temps;
                    loop {
                        let now = Self::iterate_air_temperatures(&sol, self.thermal.as_ref().unwrap());
                        let resolved = self.solve_airflow_at(&now, wx, hour, coupling.iterations + 1)?;
                        coupling.flow_change = max_flow_change(&resolved.flows, &air.flows);
                        coupling.temperature_change = max_change(&now, &previous);
                        if coupling.flow_change < opts.flow_tolerance
                            && coupling.temperature_change < opts.air_temp_tolerance
                        {
                            coupling.converged = true;
                            break;
                        }
                        if coupling.iterations >= opts.max_iterations {
                            log::warn!("{at}: coupling stopped after {} iterations", coupling.iterations);
                            break;
                        }
                        previous = now;
                        air = resolved;
                        coupling.iterations += 1;
                        sol = self.solve_thermal(Some(&air.flows), dt, &bnd, at, coupling.iterations)?;
                    }
                }
                thermal_solution = Some(sol);
            }
            airflow_residual = Some(air.max_residual);
            self.pressures = air.pressures;
            self.flows = air.flows;
        } else if st.thermal() {
            thermal_solution = Some(self.solve_thermal(None, dt, &bnd, at, 1)?);
            coupling.iterations = 1;
        }

        let thermal_report = match (thermal_solution, self.thermal.as_mut()) {
            (Some(sol), Some(net)) => {
                let report = net.commit(&sol, dt, &bnd);
                self.air_temperatures = net.air_temperatures();
                self.hvac_power = sol.hvac_power.clone();
                if !report.converged {
                    log::warn!("{at}: zone sweeps stopped after {} sweeps", report.sweeps);
                }
                Some(report)
            }
            _ => None,
        };

        let mut supersaturated = Vec::new();
        if let (Some(m), Some(a)) = (self.moisture.as_mut(), self.airflow.as_ref()) {
            let inflows = a.zone_inflows(&self.flows);
            let gains: Vec<f64> = self.desc.zones.iter().map(|z| z.moisture_gain.at_hour(hour)).collect();
            self.counters.moisture_solves += 1;
            m.advance(dt, &inflows, wx.humidity_ratio, &gains)
                .map_err(|source| EngineError::Moisture { at, source })?;
            supersaturated = m.supersaturated(&self.air_temperatures, wx.pressure);
        }

        self.time = at;
        self.weather = *wx;
        self.coupling = coupling;
        Ok(StepReport {
            time: at,
            thermal: thermal_report,
            airflow_residual,
            coupling,
            supersaturated,
        })
    }
}

/// What a result column reads from the state.
#[derive(Debug, Clone, Copy)]
enum Probe {
    Air(usize),
    SurfaceTemperature(usize),
    SurfaceFlux(usize),
    Pressure(usize),
    Link(usize),
    Humidity(usize),
    Hvac(usize),
    Operative(usize),
    Disabled,
}

fn resolve_probe(sim: &Simulation, req: &OutputRequest) -> Result<Probe, EngineError> {
    let desc = sim.description();
    let unknown = || EngineError::UnknownOutput {
        entity: req.entity.clone(),
        variable: req.variable.keyword(),
    };
    let zone = || desc.zone_index(&req.entity).ok_or_else(unknown);
    let st = desc.simulation_type;
    Ok(match req.variable {
        OutputVariable::AirTemperature => Probe::Air(zone()?),
        OutputVariable::Pressure => {
            let z = zone()?;
            if st.airflow() {
                Probe::Pressure(z)
            } else {
                Probe::Disabled
            }
        }
        OutputVariable::Humidity => {
            let z = zone()?;
            if st.moisture() {
                Probe::Humidity(z)
            } else {
                Probe::Disabled
            }
        }
        OutputVariable::HvacPower => {
            let z = zone()?;
            if st.thermal() {
                Probe::Hvac(z)
            } else {
                Probe::Disabled
            }
        }
        OutputVariable::Comfort => {
            let z = zone()?;
            if st.thermal() {
                Probe::Operative(z)
            } else {
                Probe::Air(z)
            }
        }
        OutputVariable::SurfaceTemperature(side) | OutputVariable::SurfaceFlux(side) => {
            let is_temp = matches!(req.variable, OutputVariable::SurfaceTemperature(_));
            match &sim.thermal {
                Some(net) => {
                    let i = net
                        .surfaces
                        .iter()
                        .position(|s| s.component == req.entity && s.side == side)
                        .or_else(|| {
                            // Ground-contact walls have no exterior face node.
                            (side == Side::Exterior && exists_component(desc, &req.entity)).then_some(usize::MAX)
                        })
                        .ok_or_else(unknown)?;
                    match (i, is_temp) {
                        (usize::MAX, _) => Probe::Disabled,
                        (i, true) => Probe::SurfaceTemperature(i),
                        (i, false) => Probe::SurfaceFlux(i),
                    }
                }
                None if exists_component(desc, &req.entity) => Probe::Disabled,
                None => return Err(unknown()),
            }
        }
        OutputVariable::LinkFlow => match &sim.airflow {
            Some(net) => Probe::Link(net.links.iter().position(|l| l.id == req.entity).ok_or_else(unknown)?),
            None if exists_component(desc, &req.entity) => Probe::Disabled,
            None => return Err(unknown()),
        },
    })
}

fn exists_component(desc: &BuildingDescription, id: &str) -> bool {
    desc.zones.iter().any(|z| z.components.iter().any(|c| c.id() == id))
        || desc
            .inter_ambiances
            .iter()
            .any(|ia| ia.components.iter().any(|c| c.id() == id))
}

fn read_probe(sim: &Simulation, p: Probe) -> f64 {
    match p {
        Probe::Air(z) => sim.air_temperatures[z],
        Probe::SurfaceTemperature(i) => {
            let net = sim.thermal.as_ref().unwrap();
            net.surface_temperature(&net.surfaces[i])
        }
        Probe::SurfaceFlux(i) => {
            let net = sim.thermal.as_ref().unwrap();
            net.surface_flux(&net.surfaces[i])
        }
        Probe::Pressure(z) => sim.pressures[z],
        Probe::Link(l) => sim.flows[l].net(),
        Probe::Humidity(z) => sim.moisture.as_ref().unwrap().humidity[z],
        Probe::Hvac(z) => sim.hvac_power[z],
        Probe::Operative(z) => sim.thermal.as_ref().unwrap().operative_temperature(z),
        Probe::Disabled => f64::NAN,
    }
}

/// Requests of the run: the configured ones, else the building's, else
/// every zone air temperature.
pub fn effective_outputs(desc: &BuildingDescription, config: &RunConfig) -> Vec<OutputRequest> {
    if !config.outputs.is_empty() {
        config.outputs.clone()
    } else if !desc.outputs.is_empty() {
        desc.outputs.clone()
    } else {
        desc.zones
            .iter()
            .map(|z| OutputRequest {
                entity: z.id.clone(),
                variable: OutputVariable::AirTemperature,
            })
            .collect()
    }
}

/// Start, end and step count of a run.
fn horizon(weather: &WeatherSeries, config: &RunConfig) -> Result<(NaiveDateTime, NaiveDateTime, usize), EngineError> {
    let first = weather.first_timestamp().ok_or(EngineError::EmptyWeather)?;
    let last = weather.last_timestamp().ok_or(EngineError::EmptyWeather)?;
    if !(config.timestep.is_finite() && config.timestep > 0.0) {
        return Err(EngineError::Config(format!("timestep must be > 0 (got {})", config.timestep)));
    }
    let dt_ms = (config.timestep * 1000.0).round() as i64;
    if dt_ms <= 0 || (dt_ms as f64 - config.timestep * 1000.0).abs() > 1e-6 {
        return Err(EngineError::Config("timestep must be a whole number of milliseconds".into()));
    }
    let start = config.start.unwrap_or(first - Duration::hours(1));
    let end = config.end.unwrap_or(last);
    if end <= start {
        return Err(EngineError::Config(format!("end {end} is not after start {start}")));
    }
    let span = (end - start).num_milliseconds();
    if span % dt_ms != 0 {
        return Err(EngineError::Config("horizon is not a whole number of timesteps".into()));
    }
    Ok((start, end, (span / dt_ms) as usize))
}

/// Runs the whole horizon and collects the requested outputs.
pub fn run(desc: &BuildingDescription, weather: &WeatherSeries, config: &RunConfig) -> Result<ResultSet, EngineError> {
    run_with(desc, weather, config, |_, _| {})
}

/// [`run`], calling `observe` after every reported step.
pub fn run_with(
    desc: &BuildingDescription,
    weather: &WeatherSeries,
    config: &RunConfig,
    mut observe: impl FnMut(&Simulation, &StepReport),
) -> Result<ResultSet, EngineError> {
    let diags = desc.validate();
    if !diags.is_empty() {
        return Err(EngineError::Invalid(diags));
    }
    let (start, _end, steps) = horizon(weather, config)?;
    let dt = config.timestep;
    let warmup_steps = ((config.warmup_days as f64 * 86_400.0) / dt).round() as usize;
    let warmup_span = step_duration(dt) * warmup_steps as i32;
    let ground = desc.site.ground_temperature.unwrap_or_else(|| weather.mean_dry_bulb());

    // Warm up on the preceding weather when it exists, else replay the start
    // of the horizon.
    let preceding = warmup_steps > 0 && weather.at(start - warmup_span).is_ok() && weather.at(start).is_ok();
    let init_time = if preceding { start - warmup_span } else { start };
    let first = match weather.at(init_time) {
        Ok(r) => r,
        Err(_) => WeatherRecord {
            timestamp: init_time,
            ..weather.records[0]
        },
    };
    let mut sim = Simulation::initial_state(desc, &first, ground)?;
    if preceding {
        for _ in 0..warmup_steps {
            sim.step(weather, dt)?;
        }
    } else {
        let mut done = 0;
        while done < warmup_steps {
            for _ in 0..steps.min(warmup_steps - done) {
                sim.step(weather, dt)?;
                done += 1;
            }
            sim.time = start;
        }
    }
    sim.time = start;

    let outputs = effective_outputs(desc, config);
    let probes = outputs
        .iter()
        .map(|r| resolve_probe(&sim, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut result = ResultSet {
        columns: outputs
            .iter()
            .map(|r| Column {
                entity: r.entity.clone(),
                variable: r.variable,
            })
            .collect(),
        timestamps: Vec::with_capacity(steps),
        rows: Vec::with_capacity(steps),
        summary: RunSummary {
            energy: vec![EnergyBalance::default(); desc.zones.len()],
            ..RunSummary::default()
        },
    };
    let counters_before = sim.counters;
    for _ in 0..steps {
        let report = sim.step(weather, dt)?;
        let s = &mut result.summary;
        s.steps += 1;
        if let Some(th) = &report.thermal {
            for (acc, z) in s.energy.iter_mut().zip(&th.zones) {
                acc.accumulate(&z.energy, dt);
                if let Some((res, scale)) = z.radiant_residual {
                    if scale > 0.0 {
                        s.max_radiant_residual = s.max_radiant_residual.max(res.abs() / scale);
                    }
                }
            }
            if !th.converged {
                s.unconverged_sweep_steps += 1;
            }
        }
        if let Some(r) = report.airflow_residual {
            s.max_airflow_residual = s.max_airflow_residual.max(r);
        }
        if desc.coupling.mode == CouplingMode::Iterative && desc.simulation_type.airflow() && desc.simulation_type.thermal() {
            if !report.coupling.converged {
                s.unconverged_coupling_steps += 1;
            }
            s.max_coupling_iterations = s.max_coupling_iterations.max(report.coupling.iterations);
        }
        if !report.supersaturated.is_empty() {
            s.supersaturated_steps += 1;
        }
        result.timestamps.push(report.time);
        result.rows.push(probes.iter().map(|&p| read_probe(&sim, p)).collect());
        observe(&sim, &report);
    }
    let c = sim.counters;
    result.summary.counters = ModuleCounters {
        airflow_solves: c.airflow_solves - counters_before.airflow_solves,
        thermal_solves: c.thermal_solves - counters_before.thermal_solves,
        moisture_solves: c.moisture_solves - counters_before.moisture_solves,
    };
    if result.summary.supersaturated_steps > 0 {
        log::warn!(
            "humidity exceeded saturation in {} steps",
            result.summary.supersaturated_steps
        );
    }
    Ok(result)
}
