use super::laws::{
    crack_flow, large_opening_balance_point, large_opening_flow, pressure_coefficient,
    wind_pressure, TwoWayFlow,
};
use super::AirflowError;
use crate::model::{BuildingDescription, CpSector, Schedule, SeparationComponent, ZoneComponent};
use crate::psychro::{air_density, GRAVITY};
use crate::thermal::{FlowSource, Inflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Zone(usize),
    Exterior,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowLinkKind {
    /// Power law, also used for vents.
    Crack { coefficient: f64, exponent: f64 },
    /// Extract from `from` to the exterior, kg/s.
    VmcExtract { schedule: Schedule },
    /// Imposed flow from `from` to `to`, kg/s.
    KnownFlow { schedule: Schedule },
    LargeOpeningInterior { width: f64, height: f64, discharge: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLink {
    pub id: String,
    pub kind: FlowLinkKind,
    pub from: Endpoint,
    pub to: Endpoint,
    /// Link height above ground (sill height for large openings), m.
    pub elevation: f64,
    /// Facade azimuth for wind exposure of exterior links.
    pub azimuth: Option<f64>,
}

impl FlowLink {
    pub fn pressure_dependent(&self) -> bool {
        matches!(
            self.kind,
            FlowLinkKind::Crack { .. } | FlowLinkKind::LargeOpeningInterior { .. }
        )
    }
}

/// Outdoor state driving the exterior pressures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorConditions {
    /// °C
    pub temperature: f64,
    /// m/s
    pub wind_speed: f64,
    /// Degrees from North, the direction the wind blows from.
    pub wind_direction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirflowNetwork {
    pub zone_ids: Vec<String>,
    pub reference_heights: Vec<f64>,
    pub links: Vec<FlowLink>,
    /// kg/m³
    pub densities: Vec<f64>,
    pub exterior_density: f64,
    /// Wind pressure on the exterior side of each link, Pa.
    pub wind_pressures: Vec<f64>,
    /// Current value of imposed flows (VMC and known flows), kg/s.
    pub imposed: Vec<f64>,
}

impl AirflowNetwork {
    pub fn new(zone_ids: Vec<String>, reference_heights: Vec<f64>, links: Vec<FlowLink>) -> Self {
        let n = zone_ids.len();
        let l = links.len();
        let rho = air_density(20.0);
        AirflowNetwork {
            zone_ids,
            reference_heights,
            links,
            densities: vec![rho; n],
            exterior_density: rho,
            wind_pressures: vec![0.0; l],
            imposed: vec![0.0; l],
        }
    }

    /// Links in document order: zone components first, then inter-ambiances.
    pub fn from_description(desc: &BuildingDescription) -> Self {
        let mut links = Vec::new();
        for (zi, zone) in desc.zones.iter().enumerate() {
            for comp in &zone.components {
                if let ZoneComponent::VmcVent(v) = comp {
                    links.push(FlowLink {
                        id: v.id.clone(),
                        kind: FlowLinkKind::VmcExtract {
                            schedule: v.extract.clone(),
                        },
                        from: Endpoint::Zone(zi),
                        to: Endpoint::Exterior,
                        elevation: zone.reference_height,
                        azimuth: None,
                    });
                }
            }
        }
        for ia in &desc.inter_ambiances {
            let Some(za) = desc.zone_index(&ia.zone_a) else {
                continue;
            };
            let to = desc
                .zone_index(&ia.zone_b)
                .map_or(Endpoint::Exterior, Endpoint::Zone);
            for comp in &ia.components {
                let link = match comp {
                    SeparationComponent::SmallOpening(c) => FlowLink {
                        id: c.id.clone(),
                        kind: FlowLinkKind::Crack {
                            coefficient: c.coefficient,
                            exponent: c.exponent,
                        },
                        from: Endpoint::Zone(za),
                        to,
                        elevation: c.elevation,
                        azimuth: if to == Endpoint::Exterior { c.azimuth } else { None },
                    },
                    SeparationComponent::LargeOpening(o) => FlowLink {
                        id: o.id.clone(),
                        kind: FlowLinkKind::LargeOpeningInterior {
                            width: o.width,
                            height: o.height,
                            discharge: o.discharge_coefficient,
                        },
                        from: Endpoint::Zone(za),
                        to,
                        elevation: o.bottom_elevation,
                        azimuth: None,
                    },
                    SeparationComponent::KnownFlow(k) => FlowLink {
                        id: k.id.clone(),
                        kind: FlowLinkKind::KnownFlow {
                            schedule: k.flow.clone(),
                        },
                        from: Endpoint::Zone(za),
                        to,
                        elevation: 0.0,
                        azimuth: None,
                    },
                    _ => continue,
                };
                links.push(link);
            }
        }
        AirflowNetwork::new(
            desc.zones.iter().map(|z| z.id.clone()).collect(),
            desc.zones.iter().map(|z| z.reference_height).collect(),
            links,
        )
    }

    pub fn zone_count(&self) -> usize {
        self.zone_ids.len()
    }

    /// Refreshes densities from air temperatures, the wind pressures and the
    /// scheduled flows for `hour`.
    pub fn update_boundary(
        &mut self,
        zone_temperatures: &[f64],
        exterior: &ExteriorConditions,
        cp_table: &[CpSector],
        hour: i64,
    ) -> Result<(), AirflowError> {
        let finite = zone_temperatures.iter().all(|t| t.is_finite())
            && exterior.temperature.is_finite()
            && exterior.wind_speed.is_finite()
            && exterior.wind_direction.is_finite();
        if !finite {
            return Err(AirflowError::NonFinite {
                what: "temperatures or wind".into(),
            });
        }
        self.set_densities(zone_temperatures, exterior.temperature);
        for (i, l) in self.links.iter().enumerate() {
            self.wind_pressures[i] = match (l.azimuth, l.from, l.to) {
                (Some(az), _, Endpoint::Exterior) | (Some(az), Endpoint::Exterior, _) if exterior.wind_speed != 0.0 => {
                    let cp = pressure_coefficient(cp_table, exterior.wind_direction, az)?;
                    wind_pressure(self.exterior_density, cp, exterior.wind_speed)
                }
                _ => 0.0,
            };
            self.imposed[i] = match &l.kind {
                FlowLinkKind::VmcExtract { schedule } | FlowLinkKind::KnownFlow { schedule } => schedule.at_hour(hour),
                _ => 0.0,
            };
        }
        Ok(())
    }

    pub fn set_densities(&mut self, zone_temperatures: &[f64], outdoor: f64) {
        for (rho, &t) in self.densities.iter_mut().zip(zone_temperatures) {
            *rho = air_density(t);
        }
        self.exterior_density = air_density(outdoor);
    }

    /// Pressure at height `z` on one side of link `l`, with zone reference
    /// pressures `p` and the outdoor static pressure at ground level as datum.
    fn side_pressure(&self, l: usize, end: Endpoint, z: f64, p: &[f64]) -> f64 {
        match end {
            Endpoint::Zone(i) => p[i] - self.densities[i] * GRAVITY * (z - self.reference_heights[i]),
            Endpoint::Exterior => self.wind_pressures[l] - self.exterior_density * GRAVITY * z,
        }
    }

    fn density(&self, end: Endpoint) -> f64 {
        match end {
            Endpoint::Zone(i) => self.densities[i],
            Endpoint::Exterior => self.exterior_density,
        }
    }

    /// Pressure difference from → to at the link height (sill for openings).
    pub fn link_pressure_difference(&self, l: usize, p: &[f64]) -> f64 {
        let link = &self.links[l];
        self.side_pressure(l, link.from, link.elevation, p) - self.side_pressure(l, link.to, link.elevation, p)
    }

    /// Reference-pressure difference `p_from − p_to` at which the link's net flow vanishes.
    pub(crate) fn zero_point(&self, l: usize) -> f64 {
        let link = &self.links[l];
        let zero = vec![0.0; self.zone_count()];
        let offset = self.link_pressure_difference(l, &zero);
        match link.kind {
            FlowLinkKind::LargeOpeningInterior { height, .. } => {
                large_opening_balance_point(height, self.opening_slope(link)) - offset
            }
            _ => -offset,
        }
    }

    fn opening_slope(&self, link: &FlowLink) -> f64 {
        -(self.density(link.from) - self.density(link.to)) * GRAVITY
    }

    pub fn link_flow(&self, l: usize, p: &[f64]) -> TwoWayFlow {
        let link = &self.links[l];
        let split = |net: f64| TwoWayFlow {
            forward: net.max(0.0),
            backward: (-net).max(0.0),
        };
        match link.kind {
            FlowLinkKind::Crack { coefficient, exponent } => {
                split(crack_flow(coefficient, exponent, self.link_pressure_difference(l, p)))
            }
            FlowLinkKind::VmcExtract { .. } | FlowLinkKind::KnownFlow { .. } => split(self.imposed[l]),
            FlowLinkKind::LargeOpeningInterior {
                width,
                height,
                discharge,
            } => {
                let rho = 0.5 * (self.density(link.from) + self.density(link.to));
                let dp = self.link_pressure_difference(l, p);
                large_opening_flow(width, height, discharge, rho, dp, self.opening_slope(link))
            }
        }
    }

    pub fn flows(&self, p: &[f64]) -> Vec<TwoWayFlow> {
        (0..self.links.len()).map(|l| self.link_flow(l, p)).collect()
    }

    /// Net mass flow into each zone, kg/s.
    pub fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.zone_count()];
        for (l, link) in self.links.iter().enumerate() {
            let net = self.link_flow(l, p).net();
            if let Endpoint::Zone(j) = link.to {
                r[j] += net;
            }
            if let Endpoint::Zone(i) = link.from {
                r[i] -= net;
            }
        }
        r
    }

    /// Streams entering each zone, in link order.
    pub fn zone_inflows(&self, flows: &[TwoWayFlow]) -> Vec<Vec<Inflow>> {
        let mut out = vec![Vec::new(); self.zone_count()];
        let source = |e: Endpoint| match e {
            Endpoint::Zone(i) => FlowSource::Zone(i),
            Endpoint::Exterior => FlowSource::Exterior,
        };
        for (link, f) in self.links.iter().zip(flows) {
            if let Endpoint::Zone(j) = link.to {
                if f.forward > 0.0 {
                    out[j].push(Inflow {
                        source: source(link.from),
                        mass_flow: f.forward,
                    });
                }
            }
            if let Endpoint::Zone(i) = link.from {
                if f.backward > 0.0 {
                    out[i].push(Inflow {
                        source: source(link.to),
                        mass_flow: f.backward,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crack(from: Endpoint, to: Endpoint, k: f64) -> FlowLink {
        FlowLink {
            id: "c".into(),
            kind: FlowLinkKind::Crack {
                coefficient: k,
                exponent: 0.65,
            },
            from,
            to,
            elevation: 0.0,
            azimuth: None,
        }
    }

    #[test]
    fn sealed_zone_has_zero_residual() {
        let net = AirflowNetwork::new(vec!["z".into()], vec![0.0], vec![]);
        assert_eq!(net.residuals(&[123.0]), vec![0.0]);
    }

    #[test]
    fn crack_balances_vmc_at_inverted_pressure() {
        let mut net = AirflowNetwork::new(
            vec!["z".into()],
            vec![0.0],
            vec![
                crack(Endpoint::Exterior, Endpoint::Zone(0), 1e-3),
                FlowLink {
                    id: "vmc".into(),
                    kind: FlowLinkKind::VmcExtract {
                        schedule: Schedule::constant(0.01),
                    },
                    from: Endpoint::Zone(0),
                    to: Endpoint::Exterior,
                    elevation: 0.0,
                    azimuth: None,
                },
            ],
        );
        net.imposed[1] = 0.01;
        let p = -(0.01f64 / 1e-3).powf(1.0 / 0.65);
        assert!(net.residuals(&[p])[0].abs() < 1e-17);
    }

    #[test]
    fn interzone_flow_is_antisymmetric() {
        let net = AirflowNetwork::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![crack(Endpoint::Zone(0), Endpoint::Zone(1), 2e-3)],
        );
        let r = net.residuals(&[4.0, -1.0]);
        assert_eq!(r[0], -r[1]);
        assert!(r[0] < 0.0);
    }

    #[test]
    fn equal_temperatures_cancel_elevation() {
        let mut net = AirflowNetwork::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![crack(Endpoint::Zone(0), Endpoint::Zone(1), 2e-3)],
        );
        net.set_densities(&[23.0, 23.0], 0.0);
        let at = |net: &AirflowNetwork| net.link_pressure_difference(0, &[1.5, 0.5]);
        let base = at(&net);
        net.links[0].elevation = 7.3;
        assert!((at(&net) - base).abs() < 1e-12);
    }
}
