//! Bundled verification cases: small buildings with synthetic weather whose
//! results are compared to closed-form or brute-force references.

pub mod oracles;

use std::fmt;
use std::time::{Duration, Instant};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::engine::{hour_of_year, run, run_with, EngineError, ResultSet, RunConfig};
use crate::io::{constant_weather, parse_building, WeatherRecord, WeatherSeries};
use crate::model::{
    BuildingDescription, Diagnostic, OutputVariable, SeparationComponent, Side, Site, ZoneComponent,
};
use crate::psychro::{air_density, REFERENCE_DENSITY, STANDARD_PRESSURE};
use crate::solar::sun_vector;
use crate::airflow::FlowLinkKind;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("unknown verification case \"{0}\"")]
    UnknownCase(String),
    #[error("bundled building of case \"{case}\" is invalid: {}", .diagnostics.first().map(|d| d.to_string()).unwrap_or_default())]
    Building { case: String, diagnostics: Vec<Diagnostic> },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// Tolerance is a fraction of `|expected|`.
    pub relative: bool,
}

impl Check {
    pub fn absolute(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            observed,
            expected,
            tolerance,
            relative: false,
        }
    }

    pub fn relative(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            relative: true,
            ..Check::absolute(name, observed, expected, tolerance)
        }
    }

    pub fn error(&self) -> f64 {
        let e = (self.observed - self.expected).abs();
        if self.relative {
            e / self.expected.abs()
        } else {
            e
        }
    }

    pub fn passed(&self) -> bool {
        self.error() <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: observed {:e}, expected {:e}, {} error {:e} (tolerance {:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.expected,
            if self.relative { "relative" } else { "absolute" },
            self.error(),
            self.tolerance
        )
    }
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub id: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for CaseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {} ({:.2} s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.elapsed.as_secs_f64()
        )?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

pub struct VerificationCase {
    pub id: &'static str,
    pub summary: &'static str,
    /// `.bdn` source of the building.
    pub building: &'static str,
    weather: fn(&BuildingDescription) -> WeatherSeries,
    check: fn(&VerificationCase, &BuildingDescription, &WeatherSeries) -> Result<Vec<Check>, VerifyError>,
}

impl VerificationCase {
    pub fn description(&self) -> Result<BuildingDescription, VerifyError> {
        parse_building(self.building.as_bytes()).map_err(|diagnostics| VerifyError::Building {
            case: self.id.to_string(),
            diagnostics,
        })
    }

    /// Synthetic weather the case runs on.
    pub fn weather(&self) -> Result<WeatherSeries, VerifyError> {
        Ok((self.weather)(&self.description()?))
    }

    pub fn run(&self) -> Result<CaseReport, VerifyError> {
        let started = Instant::now();
        let desc = self.description()?;
        let weather = (self.weather)(&desc);
        let checks = (self.check)(self, &desc, &weather)?;
        Ok(CaseReport {
            id: self.id,
            checks,
            elapsed: started.elapsed(),
        })
    }
}

static CASES: [VerificationCase; 7] = [
    VerificationCase {
        id: "wall-steady",
        summary: "steady conduction through one wall against the series-resistance law",
        building: include_str!("../../cases/wall-steady.bdn"),
        weather: |_| still_weather(10.0, 0.005, 96),
        check: wall_steady,
    },
    VerificationCase {
        id: "mz-conduction-2zone",
        summary: "steady heat flow between two held zones through a partition",
        building: include_str!("../../cases/mz-conduction-2zone.bdn"),
        weather: |_| still_weather(0.0, 0.004, 96),
        check: mz_conduction,
    },
    VerificationCase {
        id: "airflow-3zone",
        summary: "three-zone crack network under wind against nested bisection",
        building: include_str!("../../cases/airflow-3zone.bdn"),
        weather: |_| windy_weather(10.0, 4.0, 0.0, 24),
        check: airflow_three_zones,
    },
    VerificationCase {
        id: "freefloat-box",
        summary: "free-floating annual run of a lightweight cell: determinism, runtime, energy closure",
        building: include_str!("../../cases/freefloat-box.bdn"),
        weather: |desc| synthetic_year(&desc.site),
        check: freefloat_box,
    },
    VerificationCase {
        id: "buffer-decay",
        summary: "relaxation of room air and hygroscopic buffer after a vapour release",
        building: include_str!("../../cases/buffer-decay.bdn"),
        weather: |_| still_weather(15.0, 0.006, 48),
        check: buffer_decay,
    },
    VerificationCase {
        id: "stack-2zone",
        summary: "buoyant two-way doorway exchange against a strip-integral reference",
        building: include_str!("../../cases/stack-2zone.bdn"),
        weather: |_| still_weather(25.0, 0.006, 96),
        check: stack_two_zones,
    },
    VerificationCase {
        id: "coupling-2zone",
        summary: "iterative thermal/airflow coupling reaches a fixed point",
        building: include_str!("../../cases/coupling-2zone.bdn"),
        weather: |_| windy_weather(0.0, 1.5, 200.0, 48),
        check: coupling_two_zones,
    },
];

pub fn cases() -> &'static [VerificationCase] {
    &CASES
}

pub fn find_case(id: &str) -> Option<&'static VerificationCase> {
    CASES.iter().find(|c| c.id == id)
}

pub fn run_case(id: &str) -> Result<CaseReport, VerifyError> {
    find_case(id)
        .ok_or_else(|| VerifyError::UnknownCase(id.to_string()))?
        .run()
}

fn year_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2001, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

fn record(t: f64, humidity: f64, wind_speed: f64, wind_direction: f64) -> WeatherRecord {
    WeatherRecord {
        timestamp: year_start(),
        dry_bulb: t,
        humidity_ratio: humidity,
        wind_speed,
        wind_direction,
        direct_normal: 0.0,
        diffuse_horizontal: 0.0,
        pressure: STANDARD_PRESSURE,
    }
}

/// Constant, calm, dark weather for `hours` records starting at 01:00 on 1 January.
pub fn still_weather(t: f64, humidity: f64, hours: usize) -> WeatherSeries {
    windy_weather_with(record(t, humidity, 0.0, 0.0), hours)
}

fn windy_weather(t: f64, speed: f64, direction: f64, hours: usize) -> WeatherSeries {
    windy_weather_with(record(t, 0.005, speed, direction), hours)
}

fn windy_weather_with(template: WeatherRecord, hours: usize) -> WeatherSeries {
    constant_weather(year_start() + chrono::Duration::hours(1), hours, &template)
}

/// A smooth synthetic year of hourly weather for `site`: annual and daily
/// temperature swings, clear-sky-like irradiance and a veering wind.
pub fn synthetic_year(site: &Site) -> WeatherSeries {
    let tau = std::f64::consts::TAU;
    let records = (1..=8760)
        .map(|h| {
            let timestamp = year_start() + chrono::Duration::hours(h);
            let mid = timestamp - chrono::Duration::minutes(30);
            let day = mid.ordinal0() as f64 + mid.hour() as f64 / 24.0;
            let hour = mid.hour() as f64 + mid.minute() as f64 / 60.0;
            let season = -(tau * (day - 15.0) / 365.0).cos();
            let sun = sun_vector(site, mid);
            let (direct, diffuse) = if sun.up > 0.0 {
                (850.0 * sun.up.powf(0.3), 40.0 + 90.0 * sun.up)
            } else {
                (0.0, 0.0)
            };
            WeatherRecord {
                timestamp,
                dry_bulb: 10.0 + 12.0 * season + 5.0 * (tau * (hour - 9.0) / 24.0).sin(),
                humidity_ratio: 0.0055 + 0.0035 * season,
                wind_speed: 3.0 + 2.0 * (tau * day / 7.3).sin(),
                wind_direction: (day * 37.0).rem_euclid(360.0),
                direct_normal: direct,
                diffuse_horizontal: diffuse,
                pressure: STANDARD_PRESSURE,
            }
        })
        .collect();
    WeatherSeries { records }
}

fn column(results: &ResultSet, entity: &str, variable: OutputVariable) -> Vec<f64> {
    results
        .column_index(entity, variable)
        .map(|c| results.series(c))
        .unwrap_or_default()
}

fn last(series: &[f64]) -> f64 {
    series.last().copied().unwrap_or(f64::NAN)
}

/// Residual checks every run must satisfy.
fn invariants(desc: &BuildingDescription, results: &ResultSet) -> Vec<Check> {
    let mut out = Vec::new();
    let s = &results.summary;
    if desc.simulation_type.thermal() {
        out.push(Check::absolute("radiant-mean balance (relative)", s.max_radiant_residual, 0.0, 1e-9));
        out.push(Check::absolute("unconverged zone sweeps", s.unconverged_sweep_steps as f64, 0.0, 0.0));
    }
    if desc.simulation_type.airflow() {
        out.push(Check::absolute("zone mass balance, kg/s", s.max_airflow_residual, 0.0, 1e-8));
    }
    out
}

fn wall_steady(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let results = run(desc, weather, &RunConfig::default())?;
    let Some(SeparationComponent::SeparationWall(wall)) = desc.inter_ambiances[0].components.first() else {
        unreachable!("bundled case has a wall first");
    };
    let t_in = match &desc.zones[0].components[0] {
        ZoneComponent::IdealAirHandler(h) => h.setpoint,
        _ => unreachable!("bundled case is held"),
    };
    let t_out = weather.records[0].dry_bulb;
    let (h_in, h_out) = (desc.films.h_ci, desc.films.h_ce);
    let q = oracles::series_flux(h_in, &wall.layers, h_out, t_in - t_out);
    let flux = column(&results, &wall.id, OutputVariable::SurfaceFlux(Side::Interior));
    let tsi = column(&results, &wall.id, OutputVariable::SurfaceTemperature(Side::Interior));
    let tse = column(&results, &wall.id, OutputVariable::SurfaceTemperature(Side::Exterior));
    let mut checks = vec![
        Check::relative("interior flux, W/m2", last(&flux), q, 1e-6),
        Check::absolute("interior surface temperature, degC", last(&tsi), t_in - q / h_in, 1e-6),
        Check::absolute("exterior surface temperature, degC", last(&tse), t_out + q / h_out, 1e-6),
    ];
    checks.extend(invariants(desc, &results));
    Ok(checks)
}

fn mz_conduction(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let results = run(desc, weather, &RunConfig::default())?;
    let setpoint = |z: usize| match &desc.zones[z].components[0] {
        ZoneComponent::IdealAirHandler(h) => h.setpoint,
        _ => unreachable!("bundled case is held"),
    };
    let Some(SeparationComponent::SeparationWall(wall)) = desc.inter_ambiances[0].components.first() else {
        unreachable!("bundled case has a partition");
    };
    let h = desc.films.h_ci;
    let q = wall.area * oracles::series_flux(h, &wall.layers, h, setpoint(0) - setpoint(1));
    let hot = column(&results, &desc.zones[0].id, OutputVariable::HvacPower);
    let cold = column(&results, &desc.zones[1].id, OutputVariable::HvacPower);
    let mut checks = vec![
        Check::absolute("heating of the hot zone, W", last(&hot), q, 1e-4),
        Check::absolute("cooling of the cold zone, W", last(&cold), -q, 1e-4),
    ];
    checks.extend(invariants(desc, &results));
    Ok(checks)
}

fn airflow_three_zones(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let results = run(desc, weather, &RunConfig { warmup_days: 0, ..RunConfig::default() })?;
    let wx = weather.records[0];
    let network = oracles::CrackNetwork::new(desc, air_density(wx.dry_bulb), wx.wind_speed, wx.wind_direction);
    let reference = oracles::nested_bisection(desc.zones.len(), 1000.0, &|p, k| network.residual(p, k));
    let mut checks: Vec<Check> = desc
        .zones
        .iter()
        .zip(&reference)
        .map(|(z, &p)| {
            let observed = last(&column(&results, &z.id, OutputVariable::Pressure));
            Check::absolute(format!("pressure of zone {}, Pa", z.id), observed, p, 1e-6)
        })
        .collect();
    checks.extend(invariants(desc, &results));
    Ok(checks)
}

fn freefloat_box(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let config = RunConfig::default();
    let started = Instant::now();
    let first = run(desc, weather, &config)?;
    let runtime = started.elapsed().as_secs_f64();
    let second = run(desc, weather, &config)?;
    let differing = first
        .rows
        .iter()
        .flatten()
        .zip(second.rows.iter().flatten())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count()
        + first.rows.len().abs_diff(second.rows.len());

    // Energy closure over the last week of a four-week constant-weather replay.
    let template = weather.records[weather.len() / 2];
    let steady = constant_weather(year_start() + chrono::Duration::hours(1), 24 * 28, &template);
    let week_start = steady.records[steady.len() - 168].timestamp;
    let (mut residual, mut magnitude) = (0.0, 0.0);
    run_with(desc, &steady, &config, |_, report| {
        if report.time >= week_start {
            if let Some(th) = &report.thermal {
                for z in &th.zones {
                    residual += z.energy.residual();
                    magnitude += z.energy.magnitude;
                }
            }
        }
    })?;

    let mut checks = vec![
        Check::absolute("steps", first.rows.len() as f64, 8760.0, 0.0),
        Check::absolute("values differing between two runs", differing as f64, 0.0, 0.0),
        Check::absolute("annual run time, s (limit)", runtime, 0.0, 5.0),
        Check::absolute("energy closure, final steady week (fraction)", (residual / magnitude).abs(), 0.0, 1e-3),
    ];
    checks.extend(invariants(desc, &first));
    Ok(checks)
}

fn buffer_decay(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let start = year_start();
    let config = RunConfig {
        timestep: 600.0,
        warmup_days: 0,
        start: Some(start),
        end: Some(start + chrono::Duration::hours(24)),
        ..RunConfig::default()
    };
    let results = run(desc, weather, &config)?;
    let zone = &desc.zones[0];
    let humidity = column(&results, &zone.id, OutputVariable::Humidity);
    let at = |hours: i64| {
        let t = start + chrono::Duration::hours(hours);
        results
            .timestamps
            .iter()
            .position(|&s| s == t)
            .map_or(f64::NAN, |i| humidity[i])
    };
    let (r0, r1, r2) = (at(8), at(12), at(16));
    let observed = 4.0 * 3600.0 / ((r0 - r1) / (r1 - r2)).ln();
    let buffer = zone.buffer_params();
    let expected = oracles::buffer_time_constant(REFERENCE_DENSITY * zone.air_volume, buffer.mass, buffer.exchange);
    let mut checks = vec![Check::relative("buffer time constant, s", observed, expected, 0.01)];
    checks.extend(invariants(desc, &results));
    Ok(checks)
}

fn stack_two_zones(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let mut state = None;
    let results = run_with(desc, weather, &RunConfig::default(), |sim, _| {
        let net = sim.airflow.as_ref().expect("airflow enabled");
        let link = net
            .links
            .iter()
            .position(|l| matches!(l.kind, FlowLinkKind::LargeOpeningInterior { .. }))
            .expect("bundled case has a doorway");
        state = Some((sim.flows[link], sim.air_temperatures.clone(), net.links[link].clone()));
    })?;
    let (flow, temps, link) = state.expect("at least one step");
    let FlowLinkKind::LargeOpeningInterior { width, height, discharge } = link.kind else {
        unreachable!("selected above");
    };
    let (forward, backward) =
        oracles::balanced_opening(width, height, discharge, air_density(temps[0]), air_density(temps[1]), 200_000);
    let mut checks = vec![
        Check::relative("warm-to-cool flow, kg/s", flow.forward, forward, 1e-6),
        Check::relative("cool-to-warm flow, kg/s", flow.backward, backward, 1e-6),
        Check::absolute("net doorway flow, kg/s", flow.net(), 0.0, 1e-8),
    ];
    checks.extend(invariants(desc, &results));
    Ok(checks)
}

fn coupling_two_zones(_: &VerificationCase, desc: &BuildingDescription, weather: &WeatherSeries) -> Result<Vec<Check>, VerifyError> {
    let dt = RunConfig::default().timestep;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    let results = run_with(desc, weather, &RunConfig::default(), |sim, report| {
        let mut probe = sim.clone();
        let mid = report.time - chrono::Duration::milliseconds((dt * 500.0) as i64);
        match probe.solve_airflow_at(&sim.air_temperatures, &sim.weather, hour_of_year(mid), 0) {
            Ok(again) => {
                for (a, b) in again.flows.iter().zip(&sim.flows) {
                    worst = worst.max((a.forward - b.forward).abs()).max((a.backward - b.backward).abs());
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut checks = vec![
        Check::absolute(
            "flow change when re-solving at reported temperatures, kg/s",
            worst,
            0.0,
            desc.coupling.flow_tolerance,
        ),
        Check::absolute(
            "steps without coupling convergence",
            results.summary.unconverged_coupling_steps as f64,
            0.0,
            0.0,
        ),
    ];
    checks.extend(invariants(desc, &results));
    Ok(checks)
}
