use super::system::EnergyBalance;
use super::{
    Boundary, BoundaryTemperatures, LinkEnd, LinkKind, SourceOrigin, SourceTerm, Surface,
    ThermalError, ZoneThermalSystem,
};
use crate::model::{InternalLoad, Side};
use crate::psychro::AIR_SPECIFIC_HEAT;
use crate::solar::{incident_irradiance, SunVector};

/// Largest change of a shared node between sweeps, K, at which the zone
/// sweeps stop.
pub const SWEEP_TOLERANCE: f64 = 1e-4;
pub const MAX_SWEEPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GlazingAperture {
    pub zone: usize,
    pub area: f64,
    pub azimuth: f64,
    pub tilt: f64,
    pub transmittance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ZoneLoad {
    pub zone: usize,
    pub load: InternalLoad,
}

/// Where an incoming air stream comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSource {
    Exterior,
    Zone(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inflow {
    pub source: FlowSource,
    /// kg/s, non-negative.
    pub mass_flow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarInputs {
    pub sun: SunVector,
    pub direct_normal: f64,
    pub diffuse_horizontal: f64,
    pub albedo: f64,
}

/// Uncommitted result of a coupled solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    pub temperatures: Vec<Vec<f64>>,
    pub hvac_power: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneStepReport {
    pub hvac_power: f64,
    pub energy: EnergyBalance,
    /// `(residual, Σ h_ri·A)` of the radiant-mean balance.
    pub radiant_residual: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalStepReport {
    pub sweeps: usize,
    pub converged: bool,
    pub zones: Vec<ZoneStepReport>,
}

/// All zone systems of a building plus what is needed to drive them.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNetwork {
    pub zones: Vec<ZoneThermalSystem>,
    pub surfaces: Vec<Surface>,
    glazings: Vec<GlazingAperture>,
    loads: Vec<ZoneLoad>,
    /// Per zone: opaque interior faces `(node, area)` receiving transmitted
    /// solar and radiant loads.
    shortwave_targets: Vec<Vec<(usize, f64)>>,
    /// Per zone: nodes that other zones read.
    remote_refs: Vec<Vec<usize>>,
    last_boundary: BoundaryTemperatures,
}

impl ThermalNetwork {
    pub(crate) fn from_parts(
        zones: Vec<ZoneThermalSystem>,
        surfaces: Vec<Surface>,
        glazings: Vec<GlazingAperture>,
        loads: Vec<ZoneLoad>,
        shortwave_targets: Vec<Vec<(usize, f64)>>,
        remote_refs: Vec<Vec<usize>>,
    ) -> Self {
        ThermalNetwork {
            zones,
            surfaces,
            glazings,
            loads,
            shortwave_targets,
            remote_refs,
            last_boundary: BoundaryTemperatures::uniform(20.0),
        }
    }

    pub fn set_uniform_temperature(&mut self, t: f64) {
        for z in &mut self.zones {
            z.set_uniform_temperature(t);
        }
    }

    pub fn air_temperatures(&self) -> Vec<f64> {
        self.zones.iter().map(|z| z.temperatures[z.air_node]).collect()
    }

    /// Rebuilds the source terms: absorbed solar on exterior faces,
    /// transmitted solar and internal loads in the zones.
    pub fn set_sources(&mut self, solar: Option<&SolarInputs>, hour: i64) {
        let mut per_zone: Vec<Vec<SourceTerm>> = vec![Vec::new(); self.zones.len()];
        if let Some(s) = solar {
            let irradiance = |az: f64, tilt: f64| {
                incident_irradiance(s.sun, az, tilt, s.direct_normal, s.diffuse_horizontal, s.albedo)
            };
            for surf in &self.surfaces {
                if let Some(e) = surf.exposure {
                    let flux = e.absorptance * irradiance(e.azimuth, e.tilt) * surf.area;
                    if flux != 0.0 {
                        per_zone[surf.zone].push(SourceTerm {
                            node: surf.node,
                            flux,
                            origin: SourceOrigin::ShortwaveExterior,
                        });
                    }
                }
            }
            for g in &self.glazings {
                let power = g.transmittance * irradiance(g.azimuth, g.tilt) * g.area;
                if power != 0.0 {
                    distribute(
                        &mut per_zone[g.zone],
                        &self.shortwave_targets[g.zone],
                        self.zones[g.zone].air_node,
                        power,
                        SourceOrigin::ShortwaveInterior,
                    );
                }
            }
        }
        for l in &self.loads {
            let power = l.load.power.at_hour(hour);
            if power == 0.0 {
                continue;
            }
            let radiative = power * l.load.radiative_fraction;
            per_zone[l.zone].push(SourceTerm {
                node: self.zones[l.zone].air_node,
                flux: power - radiative,
                origin: SourceOrigin::InternalLoad,
            });
            if radiative != 0.0 {
                distribute(
                    &mut per_zone[l.zone],
                    &self.shortwave_targets[l.zone],
                    self.zones[l.zone].air_node,
                    radiative,
                    SourceOrigin::InternalLoad,
                );
            }
        }
        for (z, s) in self.zones.iter_mut().zip(per_zone) {
            z.sources = s;
        }
    }

    /// Replaces the air-transport links with `inflows[z]`, the streams
    /// entering zone `z`.
    pub fn set_air_transport(&mut self, inflows: &[Vec<Inflow>]) {
        for (zi, flows) in inflows.iter().enumerate() {
            let mut merged: Vec<(FlowSource, f64)> = Vec::new();
            for f in flows {
                if f.mass_flow <= 0.0 {
                    continue;
                }
                match merged.iter_mut().find(|(s, _)| *s == f.source) {
                    Some(m) => m.1 += f.mass_flow,
                    None => merged.push((f.source, f.mass_flow)),
                }
            }
            let remote_air: Vec<(FlowSource, usize)> = merged
                .iter()
                .map(|(s, _)| match s {
                    FlowSource::Zone(j) => (*s, self.zones[*j].air_node),
                    FlowSource::Exterior => (*s, 0),
                })
                .collect();
            let sys = &mut self.zones[zi];
            sys.links.retain(|l| l.kind != LinkKind::AirTransport);
            for ((source, m), (_, remote_node)) in merged.into_iter().zip(remote_air) {
                let far = match source {
                    FlowSource::Exterior => Boundary::OutdoorAir,
                    FlowSource::Zone(j) if j == zi => continue,
                    FlowSource::Zone(j) => Boundary::Remote {
                        zone: j,
                        node: remote_node,
                    },
                };
                let air = sys.air_node;
                sys.add_link(air, LinkEnd::Boundary(far), m * AIR_SPECIFIC_HEAT, LinkKind::AirTransport);
            }
        }
    }

    fn committed(&self) -> Vec<Vec<f64>> {
        self.zones.iter().map(|z| z.temperatures.clone()).collect()
    }

    /// Solves all zones for one step by sweeping until nodes shared between
    /// zones move less than [`SWEEP_TOLERANCE`] or [`MAX_SWEEPS`] is reached.
    pub fn solve(&self, dt: f64, bnd: &BoundaryTemperatures) -> Result<NetworkSolution, ThermalError> {
        let n = self.zones.len();
        let mut iterate = self.committed();
        let mut hvac = vec![0.0; n];
        let coupled = self.zones.iter().any(|z| {
            z.links
                .iter()
                .any(|l| matches!(l.b, LinkEnd::Boundary(Boundary::Remote { .. })))
        });
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut change: f64 = 0.0;
            for z in 0..n {
                let sol = self.zones[z].solve_step(dt, bnd, &iterate)?;
                for &i in &self.remote_refs[z] {
                    change = change.max((sol.temperatures[i] - iterate[z][i]).abs());
                }
                iterate[z] = sol.temperatures;
                hvac[z] = sol.hvac_power;
            }
            if !coupled || change < SWEEP_TOLERANCE {
                converged = true;
                break;
            }
        }
        Ok(NetworkSolution {
            temperatures: iterate,
            hvac_power: hvac,
            sweeps,
            converged,
        })
    }

    pub fn commit(&mut self, sol: &NetworkSolution, dt: f64, bnd: &BoundaryTemperatures) -> ThermalStepReport {
        let mut zones = Vec::with_capacity(self.zones.len());
        for (z, sys) in self.zones.iter_mut().enumerate() {
            let new = &sol.temperatures[z];
            let energy = sys.energy_balance(&sys.temperatures, new, sol.hvac_power[z], dt, bnd, &sol.temperatures);
            let radiant_residual = sys.radiant_residual(new);
            let zs = super::ZoneSolution {
                temperatures: new.clone(),
                hvac_power: sol.hvac_power[z],
            };
            sys.commit(&zs, bnd, &sol.temperatures);
            zones.push(ZoneStepReport {
                hvac_power: sol.hvac_power[z],
                energy,
                radiant_residual,
            });
        }
        self.last_boundary = *bnd;
        ThermalStepReport {
            sweeps: sol.sweeps,
            converged: sol.converged,
            zones,
        }
    }

    pub fn advance(&mut self, dt: f64, bnd: &BoundaryTemperatures) -> Result<ThermalStepReport, ThermalError> {
        let sol = self.solve(dt, bnd)?;
        Ok(self.commit(&sol, dt, bnd))
    }

    pub fn find_surface(&self, component: &str, side: Side) -> Option<&Surface> {
        self.surfaces
            .iter()
            .find(|s| s.component == component && s.side == side)
    }

    pub fn surface_temperature(&self, s: &Surface) -> f64 {
        self.zones[s.zone].temperatures[s.node]
    }

    /// Conductive heat flux leaving the face into the wall, W/m².
    pub fn surface_flux(&self, s: &Surface) -> f64 {
        let inner = match s.inward {
            LinkEnd::Node(n) => self.zones[s.inward_zone].temperatures[n],
            LinkEnd::Boundary(b) => {
                let remote = self.committed();
                ZoneThermalSystem::boundary_temperature(b, &self.last_boundary, &remote)
            }
        };
        s.inward_conductance * (self.surface_temperature(s) - inner) / s.area
    }

    /// (T_air + T_mrt)/2.
    pub fn operative_temperature(&self, zone: usize) -> f64 {
        let sys = &self.zones[zone];
        let t = &sys.temperatures;
        0.5 * (t[sys.air_node] + sys.mean_radiant_temperature(t))
    }
}

/// Spreads `power` over `targets` in proportion to area, or onto the air
/// node when there are none.
fn distribute(out: &mut Vec<SourceTerm>, targets: &[(usize, f64)], air: usize, power: f64, origin: SourceOrigin) {
    let total: f64 = targets.iter().map(|t| t.1).sum();
    if total <= 0.0 {
        out.push(SourceTerm {
            node: air,
            flux: power,
            origin,
        });
        return;
    }
    for &(node, area) in targets {
        out.push(SourceTerm {
            node,
            flux: power * area / total,
            origin,
        });
    }
}
