//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. References are computed here without the engine's solvers.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codasim::airflow::{crack_flow, solve_pressures, AirflowNetwork, Endpoint, FlowLink, FlowLinkKind};
use codasim::engine::{hour_of_year, run, run_with, ResultSet, RunConfig};
use codasim::io::{constant_weather, parse_building, parse_weather, write_weather, WeatherSeries};
use codasim::model::{
    BuildingDescription, ConductionModel, CouplingMode, OutputVariable, Schedule, SeparationComponent, Side, SolverConfig,
    ZoneComponent,
};
use codasim::moisture::MoistureSystem;
use codasim::psychro::{air_density, GRAVITY, REFERENCE_DENSITY};
use codasim::thermal::{FlowSource, Inflow};
use codasim::verify::{cases, find_case};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(checks: Vec<(bool, String)>) -> Outcome {
    Outcome {
        passed: checks.iter().all(|(ok, _)| *ok),
        detail: checks
            .iter()
            .map(|(ok, d)| format!("{}{d}", if *ok { "" } else { "!" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn within(name: &str, observed: f64, expected: f64, tolerance: f64, relative: bool) -> (bool, String) {
    let err = if relative {
        (observed - expected).abs() / expected.abs()
    } else {
        (observed - expected).abs()
    };
    (
        err <= tolerance,
        format!(
            "{name} {observed:.10e} vs {expected:.10e} ({} err {err:.2e} <= {tolerance:.0e})",
            if relative { "rel" } else { "abs" }
        ),
    )
}

fn below(name: &str, observed: f64, limit: f64) -> (bool, String) {
    (observed < limit, format!("{name} {observed:.3e} < {limit:.0e}"))
}

fn case(id: &str) -> (BuildingDescription, WeatherSeries) {
    let c = find_case(id).expect("bundled case");
    (c.description().expect("bundled building parses"), c.weather().expect("bundled weather"))
}

fn series(results: &ResultSet, entity: &str, variable: OutputVariable) -> Vec<f64> {
    results.series(results.column_index(entity, variable).expect("requested output"))
}

fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2001, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn steady_conduction() -> Outcome {
    let (mut desc, weather) = case("wall-steady");
    let films = desc.films;
    let SeparationComponent::SeparationWall(wall) = &desc.inter_ambiances[0].components[0] else {
        panic!("wall expected");
    };
    let u: f64 = 1.0 / wall.layers.iter().map(|l| l.thickness / l.conductivity).sum::<f64>();
    let resistance = 1.0 / films.h_ci + 1.0 / u + 1.0 / films.h_ce;
    let q = (20.0 - weather.records[0].dry_bulb) / resistance;

    let started = Instant::now();
    let r2c = run(&desc, &weather, &RunConfig::default()).expect("R2C run");
    let runtime = started.elapsed().as_secs_f64();
    let flux = *series(&r2c, "specimen", OutputVariable::SurfaceFlux(Side::Interior)).last().unwrap();
    let tsi = *series(&r2c, "specimen", OutputVariable::SurfaceTemperature(Side::Interior)).last().unwrap();

    let mut checks = vec![
        within("K, W/(m2.K)", u, 2.0, 1e-12, true),
        within("flux 13.333 W/m2", flux, 40.0 / 3.0, 1e-6, true),
        within("flux vs series law", flux, q, 1e-6, true),
        below("R2C run time, s", runtime, 1.0),
    ];
    for nodes in [1, 2, 3, 5, 10] {
        if let SeparationComponent::SeparationWall(w) = &mut desc.inter_ambiances[0].components[0] {
            w.conduction = Some(ConductionModel::FD1D { nodes_per_layer: nodes });
        }
        let fd = run(&desc, &weather, &RunConfig::default()).expect("FD1D run");
        let t = *series(&fd, "specimen", OutputVariable::SurfaceTemperature(Side::Interior)).last().unwrap();
        checks.push(within(&format!("FD1D/{nodes} surface temperature, degC"), t, tsi, 0.01, false));
    }
    outcome(checks)
}

fn bundled_runs() -> Vec<(BuildingDescription, ResultSet)> {
    cases()
        .iter()
        .map(|c| {
            let desc = c.description().expect("bundled building parses");
            let weather = c.weather().expect("bundled weather");
            let results = run(&desc, &weather, &RunConfig::default()).unwrap_or_else(|e| panic!("{}: {e}", c.id));
            (desc, results)
        })
        .collect()
}

fn radiant_balance(runs: &[(BuildingDescription, ResultSet)]) -> Outcome {
    outcome(
        runs.iter()
            .filter(|(d, _)| d.simulation_type.thermal())
            .map(|(d, r)| below(&d.name, r.summary.max_radiant_residual, 1e-9))
            .collect(),
    )
}

/// Net inflow into each zone of a crack/extract network at uniform density.
fn crack_balance(desc: &BuildingDescription, rho: f64, speed: f64, direction: f64, p: &[f64], k: usize) -> f64 {
    let index = |id: &str| desc.zones.iter().position(|z| z.id == id);
    let mut inflow = 0.0;
    for ia in &desc.inter_ambiances {
        let a = index(&ia.zone_a).unwrap();
        let b = index(&ia.zone_b);
        for c in &ia.components {
            let SeparationComponent::SmallOpening(o) = c else { continue };
            let inside = |i: usize| p[i] - rho * GRAVITY * (o.elevation - desc.zones[i].reference_height);
            let far = match b {
                Some(j) => inside(j),
                None => {
                    let incidence = (direction - o.azimuth.unwrap()).rem_euclid(360.0);
                    let cp = desc
                        .site
                        .cp_table
                        .iter()
                        .find(|s| s.from <= incidence && incidence < s.to)
                        .unwrap()
                        .cp;
                    0.5 * rho * cp * speed * speed - rho * GRAVITY * o.elevation
                }
            };
            let dp = inside(a) - far;
            let m = o.coefficient * dp.abs().powf(o.exponent) * dp.signum();
            if a == k {
                inflow -= m;
            }
            if b == Some(k) {
                inflow += m;
            }
        }
    }
    for comp in &desc.zones[k].components {
        if let ZoneComponent::VmcVent(v) = comp {
            inflow -= v.extract.values[0];
        }
    }
    inflow
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn nested(k: usize, p: &mut Vec<f64>, residual: &dyn Fn(&[f64], usize) -> f64) {
    if k == p.len() {
        return;
    }
    let root = bisect(
        |x| {
            p[k] = x;
            nested(k + 1, p, residual);
            residual(p, k)
        },
        -500.0,
        500.0,
    );
    p[k] = root;
    nested(k + 1, p, residual);
}

fn single_zone(links: Vec<FlowLinkKind>) -> AirflowNetwork {
    let links = links
        .into_iter()
        .enumerate()
        .map(|(i, kind)| FlowLink {
            id: format!("l{i}"),
            kind,
            from: Endpoint::Zone(0),
            to: Endpoint::Exterior,
            elevation: 0.0,
            azimuth: None,
        })
        .collect();
    AirflowNetwork::new(vec!["z".into()], vec![0.0], links)
}

fn airflow_conservation(runs: &[(BuildingDescription, ResultSet)]) -> Outcome {
    let mut checks: Vec<(bool, String)> = runs
        .iter()
        .filter(|(d, _)| d.simulation_type.airflow())
        .map(|(d, r)| below(&format!("{} residual, kg/s", d.name), r.summary.max_airflow_residual, 1e-8))
        .collect();

    let (desc, weather) = case("airflow-3zone");
    let results = run(&desc, &weather, &RunConfig { warmup_days: 0, ..RunConfig::default() }).unwrap();
    let wx = weather.records[0];
    let rho = air_density(wx.dry_bulb);
    let residual = |p: &[f64], k: usize| crack_balance(&desc, rho, wx.wind_speed, wx.wind_direction, p, k);
    let mut reference = vec![0.0; desc.zones.len()];
    nested(0, &mut reference, &residual);
    for (z, p) in desc.zones.iter().zip(&reference) {
        let observed = *series(&results, &z.id, OutputVariable::Pressure).last().unwrap();
        checks.push(within(&format!("3-zone p_{}, Pa", z.id), observed, *p, 1e-6, false));
    }

    let crack = || FlowLinkKind::Crack { coefficient: 0.01, exponent: 0.65 };
    let mut net = single_zone(vec![crack(), crack()]);
    net.wind_pressures = vec![5.0, 0.0];
    let sol = solve_pressures(&net, &SolverConfig::default(), &[0.0]).unwrap();
    checks.push(within("symmetric cracks, Pa", sol.pressures[0], 2.5, 1e-9, false));
    outcome(checks)
}

fn crack_oddness_and_vmc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut odd = 0;
    for _ in 0..100_000 {
        let k = rng.random_range(1e-5..1.0);
        let n = rng.random_range(0.5..1.0);
        let dp = rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-8..2));
        if crack_flow(k, n, -dp).to_bits() == (-crack_flow(k, n, dp)).to_bits() {
            odd += 1;
        }
    }
    let mut checks = vec![(odd == 100_000, format!("odd in {odd}/100000 samples"))];
    for (k, n, m) in [(0.01, 0.65, 0.02), (0.003, 0.5, 0.004), (0.05, 0.8, 0.5)] {
        let mut net = single_zone(vec![
            FlowLinkKind::Crack { coefficient: k, exponent: n },
            FlowLinkKind::VmcExtract { schedule: Schedule::constant(m) },
        ]);
        net.imposed = vec![0.0, m];
        let sol = solve_pressures(&net, &SolverConfig::default(), &[0.0]).unwrap();
        checks.push(within(
            &format!("VMC K={k} n={n} m={m}, Pa"),
            sol.pressures[0],
            -(m / k).powf(1.0 / n),
            1e-9,
            true,
        ));
    }
    outcome(checks)
}

fn moisture() -> Outcome {
    let (desc, weather) = case("buffer-decay");
    let closed = vec![Vec::new(); desc.zones.len()];

    let mut sys = MoistureSystem::from_description(&desc, 0.004);
    sys.buffer = Some(vec![0.012]);
    let mut worst: f64 = 0.0;
    let mut total = sys.total_water();
    for _ in 0..10_000 {
        sys.advance(60.0, &closed, 0.005, &[0.0]).unwrap();
        let now = sys.total_water();
        worst = worst.max((now - total).abs() / total);
        total = now;
    }
    let mut checks = vec![below("closed water drift per step (rel)", worst, 1e-12)];

    let mut vented = desc.clone();
    vented.moisture.buffers = false;
    let mut sys = MoistureSystem::from_description(&vented, 0.004);
    let (m, r_e, g) = (0.02, 0.005, 1e-5);
    let inflows = vec![vec![Inflow { source: FlowSource::Exterior, mass_flow: m }]];
    for _ in 0..100 {
        sys.advance(3600.0, &inflows, r_e, &[g]).unwrap();
    }
    checks.push(within("vented steady state, kg/kg", sys.humidity[0], r_e + g / m, 1e-6, true));

    let config = RunConfig {
        timestep: 600.0,
        warmup_days: 0,
        start: Some(start()),
        end: Some(start() + Duration::hours(24)),
        ..RunConfig::default()
    };
    let results = run(&desc, &weather, &config).unwrap();
    let r = series(&results, &desc.zones[0].id, OutputVariable::Humidity);
    let at = |h: i64| r[results.timestamps.iter().position(|&t| t == start() + Duration::hours(h)).unwrap()];
    let (r0, r1, r2) = (at(8), at(12), at(16));
    let tau = 4.0 * 3600.0 / ((r0 - r1) / (r1 - r2)).ln();
    // Non-zero eigenvalue of the closed air/buffer pair.
    let zone = &desc.zones[0];
    let (ma, mb, beta) = (REFERENCE_DENSITY * zone.air_volume, zone.buffer_params().mass, zone.buffer_params().exchange);
    let lambda = beta / ma + beta / mb;
    checks.push(within("buffer time constant, s", tau, 1.0 / lambda, 0.01, true));
    outcome(checks)
}

fn coupling_fixed_point() -> Outcome {
    let (desc, weather) = case("coupling-2zone");
    let config = RunConfig::default();
    let half = Duration::milliseconds((config.timestep * 500.0) as i64);
    let mut worst: f64 = 0.0;
    let results = run_with(&desc, &weather, &config, |sim, report| {
        let mut probe = sim.clone();
        let again = probe
            .solve_airflow_at(&sim.air_temperatures, &sim.weather, hour_of_year(report.time - half), 0)
            .unwrap();
        for (a, b) in again.flows.iter().zip(&sim.flows) {
            worst = worst.max((a.forward - b.forward).abs()).max((a.backward - b.backward).abs());
        }
    })
    .unwrap();
    outcome(vec![
        (desc.coupling.mode == CouplingMode::Iterative, "iterative coupling".into()),
        below("flow change on re-solve, kg/s", worst, desc.coupling.flow_tolerance),
        (
            results.summary.unconverged_coupling_steps == 0,
            format!("{} unconverged steps", results.summary.unconverged_coupling_steps),
        ),
    ])
}

fn freefloat() -> Outcome {
    let (desc, weather) = case("freefloat-box");
    let config = RunConfig::default();
    let started = Instant::now();
    let a = run(&desc, &weather, &config).unwrap();
    let runtime = started.elapsed().as_secs_f64();
    let b = run(&desc, &weather, &config).unwrap();
    let identical = a.rows.len() == b.rows.len()
        && a.rows.iter().flatten().zip(b.rows.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits());

    let template = weather.records[weather.len() / 2];
    let steady = constant_weather(start() + Duration::hours(1), 24 * 28, &template);
    let week = steady.records[steady.len() - 168].timestamp;
    let (mut residual, mut magnitude) = (0.0, 0.0);
    run_with(&desc, &steady, &config, |_, report| {
        if report.time >= week {
            for z in &report.thermal.as_ref().unwrap().zones {
                residual += z.energy.residual();
                magnitude += z.energy.magnitude;
            }
        }
    })
    .unwrap();
    let has_walls = desc.inter_ambiances.iter().flat_map(|i| &i.components).count();
    outcome(vec![
        (a.rows.len() == 8760, format!("{} steps", a.rows.len())),
        (has_walls >= 7, format!("{has_walls} envelope components")),
        (identical, "bit-identical reruns".into()),
        below("annual run time, s", runtime, 5.0),
        below("energy closure (fraction)", (residual / magnitude).abs(), 1e-3),
    ])
}

const TOKENS: &[&str] = &[
    "-1", "0", "1e400", "nan", "inf", "\"", "'", "[", "]", "[[", "=", ",", "\n", "#", "\\", "\0", "\u{feff}",
    "\u{fffd}", "m", "degC", "kPa", "W/(m.K)", "\"1 m\"", "\"-5 m2\"", "true", "{}", "zone", "EXTERIOR",
    "1999-13-40T25:61:61", "#codasim-weather 2", "9999999999999999999999",
];

fn mutate(rng: &mut ChaCha8Rng, base: &[u8]) -> Vec<u8> {
    let mut bytes = base.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let len = bytes.len().max(1);
        let at = rng.random_range(0..len).min(bytes.len());
        match rng.random_range(0..7) {
            0 => {
                if at < bytes.len() {
                    bytes[at] ^= 1 << rng.random_range(0..8);
                }
            }
            1 => bytes.insert(at, rng.random()),
            2 => {
                let end = (at + rng.random_range(1..40)).min(bytes.len());
                bytes.drain(at..end);
            }
            3 => {
                let t = TOKENS[rng.random_range(0..TOKENS.len())].as_bytes();
                bytes.splice(at..at, t.iter().copied());
            }
            4 => {
                let end = (at + rng.random_range(1..12)).min(bytes.len());
                let t = TOKENS[rng.random_range(0..TOKENS.len())].as_bytes();
                bytes.splice(at..end, t.iter().copied());
            }
            5 => {
                let line_start = bytes[..at].iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                let line_end = bytes[at..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| at + i + 1);
                let line = bytes[line_start..line_end].to_vec();
                if rng.random_bool(0.5) {
                    bytes.drain(line_start..line_end);
                } else {
                    bytes.splice(line_start..line_start, line);
                }
            }
            _ => bytes.truncate(at),
        }
    }
    bytes
}

fn fuzz<T>(
    name: &str,
    seed: u64,
    corpus: &[Vec<u8>],
    parse: impl Fn(&[u8]) -> Result<T, Vec<codasim::model::Diagnostic>>,
) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut crashes, mut unlocated, mut rejected) = (0, 0, 0);
    for i in 0..100_000 {
        let input = mutate(&mut rng, &corpus[i % corpus.len()]);
        match catch_unwind(AssertUnwindSafe(|| parse(&input))) {
            Err(_) => crashes += 1,
            Ok(Err(d)) => {
                rejected += 1;
                if d.is_empty() || d.iter().any(|d| d.location.is_none()) {
                    unlocated += 1;
                }
            }
            Ok(Ok(_)) => {}
        }
    }
    (
        crashes == 0 && unlocated == 0,
        format!("{name}: 100000 mutations, {rejected} rejected, {crashes} crashes, {unlocated} without location"),
    )
}

fn parser_robustness() -> Outcome {
    let buildings: Vec<Vec<u8>> = cases().iter().map(|c| c.building.as_bytes().to_vec()).collect();
    let weathers: Vec<Vec<u8>> = ["wall-steady", "airflow-3zone"]
        .iter()
        .map(|id| {
            let mut w = case(id).1;
            w.records.truncate(30);
            write_weather(&w).into_bytes()
        })
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let checks = vec![
        fuzz("building", 1, &buildings, parse_building),
        fuzz("weather", 2, &weathers, parse_weather),
    ];
    let _ = std::panic::take_hook();
    outcome(checks)
}

fn main() -> ExitCode {
    let runs = bundled_runs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("steady conduction", Box::new(steady_conduction)),
        ("radiant-mean balance", Box::new(|| radiant_balance(&runs))),
        ("airflow mass conservation", Box::new(|| airflow_conservation(&runs))),
        ("crack oddness and VMC inversion", Box::new(crack_oddness_and_vmc)),
        ("moisture conservation", Box::new(moisture)),
        ("coupling fixed point", Box::new(coupling_fixed_point)),
        ("freefloat determinism and performance", Box::new(freefloat)),
        ("parser robustness", Box::new(parser_robustness)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(o) => o,
            Err(_) => Outcome {
                passed: false,
                detail: "panicked".into(),
            },
        };
        if !o.passed {
            failed += 1;
        }
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
