use std::collections::BTreeSet;

use super::network::{GlazingAperture, ThermalNetwork, ZoneLoad};
use super::{Boundary, LinkEnd, LinkKind, NodeKind, ThermalError, ZoneThermalSystem};
use crate::model::{
    BuildingDescription, ConductionModel, FilmCoefficients, Layer, LongwaveModel,
    SeparationComponent, Side, Wall, ZoneComponent,
};
use crate::psychro::{AIR_SPECIFIC_HEAT, REFERENCE_DENSITY};

/// What the outer side of a surface node sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Facing {
    Zone(usize),
    Exterior,
}

/// Solar exposure of an exterior face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposure {
    pub azimuth: f64,
    pub tilt: f64,
    pub absorptance: f64,
}

/// A wall or glazing face, for shortwave gains and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub component: String,
    pub side: Side,
    pub zone: usize,
    pub node: usize,
    pub area: f64,
    pub facing: Facing,
    pub exposure: Option<Exposure>,
    /// Neighbour of this face inside the wall and the conductance to it.
    pub inward: LinkEnd,
    pub inward_zone: usize,
    pub inward_conductance: f64,
    pub opaque: bool,
}

/// Capacitances of the chain of wall nodes (face A first) and the
/// conductances between consecutive nodes.
fn discretize(layers: &[Layer], model: ConductionModel, area: f64) -> (Vec<f64>, Vec<f64>) {
    match model {
        ConductionModel::R2C => {
            let c: f64 = layers.iter().map(|l| l.areal_capacity()).sum::<f64>() * area;
            let r: f64 = layers.iter().map(|l| l.thickness / l.conductivity).sum();
            (vec![c / 2.0, c / 2.0], vec![area / r])
        }
        ConductionModel::FD1D { nodes_per_layer } => {
            let mut caps = vec![0.0];
            let mut conds = Vec::new();
            for l in layers {
                let dx = l.thickness / (nodes_per_layer + 1) as f64;
                let segment_c = l.density * l.specific_heat * dx * area;
                let g = l.conductivity * area / dx;
                for _ in 0..=nodes_per_layer {
                    *caps.last_mut().unwrap() += segment_c / 2.0;
                    caps.push(segment_c / 2.0);
                    conds.push(g);
                }
            }
            (caps, conds)
        }
    }
}

/// Where the far end of a chain goes.
enum FarEnd {
    Exterior(Exposure),
    Zone(usize),
    Ground(Boundary),
}

struct InteriorFace {
    node: usize,
    area: f64,
    h_ri: f64,
    opaque: bool,
}

struct Builder<'a> {
    desc: &'a BuildingDescription,
    zones: Vec<ZoneThermalSystem>,
    surfaces: Vec<Surface>,
    interior: Vec<Vec<InteriorFace>>,
    remote_refs: Vec<BTreeSet<usize>>,
}

impl Builder<'_> {
    fn connect(&mut self, (za, na): (usize, usize), (zb, nb): (usize, usize), c: f64) {
        if za == zb {
            self.zones[za].add_link(na, LinkEnd::Node(nb), c, LinkKind::Conduction);
        } else {
            self.zones[za].add_link(
                na,
                LinkEnd::Boundary(Boundary::Remote { zone: zb, node: nb }),
                c,
                LinkKind::Conduction,
            );
            self.zones[zb].add_link(
                nb,
                LinkEnd::Boundary(Boundary::Remote { zone: za, node: na }),
                c,
                LinkKind::Conduction,
            );
            self.remote_refs[za].insert(na);
            self.remote_refs[zb].insert(nb);
        }
    }

    fn interior_face(&mut self, zone: usize, node: usize, area: f64, films: &FilmCoefficients, emissivity: f64, opaque: bool) {
        let air = self.zones[zone].air_node;
        self.zones[zone].add_link(node, LinkEnd::Node(air), films.h_ci * area, LinkKind::ConvectionInterior);
        self.interior[zone].push(InteriorFace {
            node,
            area,
            h_ri: films.h_ri * emissivity * area,
            opaque,
        });
    }

    /// Places a chain of nodes from face A (in `zone_a`) to the far end and
    /// adds the surface films.
    #[allow(clippy::too_many_arguments)]
    fn chain(
        &mut self,
        id: &str,
        zone_a: usize,
        caps: Vec<f64>,
        conds: Vec<f64>,
        area: f64,
        films: FilmCoefficients,
        emissivity: f64,
        far: FarEnd,
        opaque: bool,
    ) {
        let n = caps.len();
        let mut placed: Vec<(usize, usize)> = Vec::with_capacity(n);
        for (i, &c) in caps.iter().enumerate() {
            let last = i + 1 == n && !matches!(far, FarEnd::Ground(_));
            let (zone, kind, label) = if i == 0 {
                (zone_a, NodeKind::SurfaceInterior, format!("{id}:si"))
            } else if last {
                match far {
                    FarEnd::Exterior(_) => (zone_a, NodeKind::SurfaceExterior, format!("{id}:se")),
                    FarEnd::Zone(zb) => (zb, NodeKind::SurfaceInterior, format!("{id}:se")),
                    FarEnd::Ground(_) => unreachable!(),
                }
            } else {
                (zone_a, NodeKind::WallInterior, format!("{id}:n{i}"))
            };
            let node = self.zones[zone].add_node(kind, c, label);
            placed.push((zone, node));
        }
        for (i, &g) in conds.iter().enumerate() {
            if i + 1 < placed.len() {
                self.connect(placed[i], placed[i + 1], g);
            }
        }

        let face_a = placed[0];
        let (inward_a, inward_zone_a) = match placed.get(1) {
            Some(&(z, nd)) if z == face_a.0 => (LinkEnd::Node(nd), z),
            Some(&(z, nd)) => (LinkEnd::Boundary(Boundary::Remote { zone: z, node: nd }), z),
            None => match far {
                FarEnd::Ground(b) => (LinkEnd::Boundary(b), face_a.0),
                _ => unreachable!(),
            },
        };
        self.interior_face(face_a.0, face_a.1, area, &films, emissivity, opaque);
        self.surfaces.push(Surface {
            component: id.to_string(),
            side: Side::Interior,
            zone: face_a.0,
            node: face_a.1,
            area,
            facing: Facing::Zone(face_a.0),
            exposure: None,
            inward: inward_a,
            inward_zone: inward_zone_a,
            inward_conductance: conds[0],
            opaque,
        });

        match far {
            FarEnd::Ground(b) => {
                let &(z, nd) = placed.last().unwrap();
                let g = *conds.last().unwrap();
                self.zones[z].add_link(nd, LinkEnd::Boundary(b), g, LinkKind::Conduction);
            }
            FarEnd::Exterior(exposure) => {
                let &(z, nd) = placed.last().unwrap();
                let sys = &mut self.zones[z];
                sys.add_link(nd, LinkEnd::Boundary(Boundary::OutdoorAir), films.h_ce * area, LinkKind::ConvectionExterior);
                sys.add_link(nd, LinkEnd::Boundary(Boundary::Sky), films.h_re * emissivity * area, LinkKind::RadiationExterior);
                let &(pz, pn) = &placed[n - 2];
                self.surfaces.push(Surface {
                    component: id.to_string(),
                    side: Side::Exterior,
                    zone: z,
                    node: nd,
                    area,
                    facing: Facing::Exterior,
                    exposure: Some(exposure),
                    inward: LinkEnd::Node(pn),
                    inward_zone: pz,
                    inward_conductance: *conds.last().unwrap(),
                    opaque,
                });
            }
            FarEnd::Zone(zb) => {
                let &(z, nd) = placed.last().unwrap();
                self.interior_face(z, nd, area, &films, emissivity, opaque);
                let &(pz, pn) = &placed[n - 2];
                let inward = if pz == z {
                    LinkEnd::Node(pn)
                } else {
                    LinkEnd::Boundary(Boundary::Remote { zone: pz, node: pn })
                };
                self.surfaces.push(Surface {
                    component: id.to_string(),
                    side: Side::Exterior,
                    zone: z,
                    node: nd,
                    area,
                    facing: Facing::Zone(zb),
                    exposure: None,
                    inward,
                    inward_zone: pz,
                    inward_conductance: *conds.last().unwrap(),
                    opaque,
                });
            }
        }
    }

    fn wall(&mut self, w: &Wall, zone_a: usize, far: FarEnd) {
        let model = w.conduction.unwrap_or(self.desc.zones[zone_a].model.conduction);
        let (mut caps, conds) = discretize(&w.layers, model, w.area);
        if matches!(far, FarEnd::Ground(_)) {
            caps.pop();
        }
        let films = w.films.resolve(&self.desc.films);
        self.chain(&w.id, zone_a, caps, conds, w.area, films, w.emissivity, far, true);
    }
}

/// Builds the thermal systems of every zone. Ground-contact walls link to
/// [`Boundary::Ground`] unless they carry their own far-side temperature.
pub fn generate_network(desc: &BuildingDescription) -> Result<ThermalNetwork, ThermalError> {
    let n = desc.zones.len();
    let mut b = Builder {
        desc,
        zones: Vec::with_capacity(n),
        surfaces: Vec::new(),
        interior: (0..n).map(|_| Vec::new()).collect(),
        remote_refs: vec![BTreeSet::new(); n],
    };
    for zone in &desc.zones {
        let mut sys = ZoneThermalSystem::empty(&zone.id, desc.time_scheme);
        let c_air = REFERENCE_DENSITY * zone.air_volume * AIR_SPECIFIC_HEAT;
        sys.air_node = sys.add_node(NodeKind::ZoneAir, c_air, format!("{}:air", zone.id));
        b.zones.push(sys);
    }
    for (zi, _) in desc.zones.iter().enumerate() {
        // Air nodes are read by neighbours through interzone air streams.
        let air = b.zones[zi].air_node;
        b.remote_refs[zi].insert(air);
    }

    let mut loads = Vec::new();
    let mut glazings = Vec::new();
    let mut used = vec![false; n];

    for (zi, zone) in desc.zones.iter().enumerate() {
        for comp in &zone.components {
            used[zi] = true;
            match comp {
                ZoneComponent::InternalWall(w) => b.wall(w, zi, FarEnd::Zone(zi)),
                ZoneComponent::IdealAirHandler(h) => b.zones[zi].hvac = Some(h.clone()),
                ZoneComponent::InternalLoad(l) => loads.push(ZoneLoad {
                    zone: zi,
                    load: l.clone(),
                }),
                ZoneComponent::VmcVent(_) => {}
            }
        }
    }

    for ia in &desc.inter_ambiances {
        let Some(za) = desc.zone_index(&ia.zone_a) else {
            continue;
        };
        let zb = desc.zone_index(&ia.zone_b);
        for comp in &ia.components {
            used[za] = true;
            if let Some(zb) = zb {
                used[zb] = true;
            }
            match comp {
                SeparationComponent::SeparationWall(w) => {
                    let far = match (w.ground, zb) {
                        (Some(_), _) => FarEnd::Ground(match w.far_side_temperature {
                            Some(t) => Boundary::Fixed(t),
                            None => Boundary::Ground,
                        }),
                        (None, Some(zb)) => FarEnd::Zone(zb),
                        (None, None) => FarEnd::Exterior(Exposure {
                            azimuth: w.azimuth,
                            tilt: w.tilt,
                            absorptance: w.absorptance,
                        }),
                    };
                    b.wall(w, za, far);
                }
                SeparationComponent::Glazing(g) => {
                    let films = g.films.resolve(&desc.films);
                    let far = match zb {
                        Some(zb) => FarEnd::Zone(zb),
                        None => {
                            glazings.push(GlazingAperture {
                                zone: za,
                                area: g.area,
                                azimuth: g.azimuth,
                                tilt: g.tilt,
                                transmittance: g.transmittance,
                            });
                            FarEnd::Exterior(Exposure {
                                azimuth: g.azimuth,
                                tilt: g.tilt,
                                absorptance: g.absorptance,
                            })
                        }
                    };
                    b.chain(
                        &g.id,
                        za,
                        vec![0.0, 0.0],
                        vec![g.conductance * g.area],
                        g.area,
                        films,
                        g.emissivity,
                        far,
                        false,
                    );
                }
                SeparationComponent::LargeOpening(_)
                | SeparationComponent::SmallOpening(_)
                | SeparationComponent::KnownFlow(_) => {}
            }
        }
    }

    if let Some(zi) = used.iter().position(|u| !u) {
        return Err(ThermalError::EmptyZone {
            zone: desc.zones[zi].id.clone(),
        });
    }

    let mut shortwave_targets = Vec::with_capacity(n);
    for (zi, zone) in desc.zones.iter().enumerate() {
        let faces = std::mem::take(&mut b.interior[zi]);
        let sys = &mut b.zones[zi];
        sys.wall_count = faces.len();
        if zone.model.longwave == LongwaveModel::RadiantMeanNode && !faces.is_empty() {
            let rm = sys.add_node(NodeKind::RadiantMean, 0.0, format!("{}:rm", zone.id));
            sys.radiant_node = Some(rm);
            for f in &faces {
                sys.add_link(f.node, LinkEnd::Node(rm), f.h_ri, LinkKind::RadiationInterior);
            }
        }
        shortwave_targets.push(
            faces
                .iter()
                .filter(|f| f.opaque)
                .map(|f| (f.node, f.area))
                .collect(),
        );
    }

    Ok(ThermalNetwork::from_parts(
        b.zones,
        b.surfaces,
        glazings,
        loads,
        shortwave_targets,
        b.remote_refs.into_iter().map(|s| s.into_iter().collect()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{InterAmbiance, EXTERIOR};
    use crate::thermal::LinkKind;

    fn one_wall(model: ConductionModel) -> BuildingDescription {
        let mut d = BuildingDescription::new("w");
        d.zones.push(zone("z", 30.0));
        let mut w = wall("w", 10.0, vec![layer(0.1, 800.0, 1000.0, 0.05)]);
        w.conduction = Some(model);
        d.inter_ambiances.push(InterAmbiance {
            id: "ia".into(),
            zone_a: "z".into(),
            zone_b: EXTERIOR.into(),
            components: vec![SeparationComponent::SeparationWall(w)],
        });
        d
    }

    #[test]
    fn r2c_wall_pattern() {
        let net = generate_network(&one_wall(ConductionModel::R2C)).unwrap();
        let sys = &net.zones[0];
        assert_eq!(sys.nodes.len(), 4);
        assert_eq!(sys.links.len(), 5);
        let mut kinds: Vec<_> = sys.links.iter().map(|l| l.kind).collect();
        kinds.sort_by_key(|k| format!("{k:?}"));
        assert_eq!(
            kinds,
            vec![
                LinkKind::Conduction,
                LinkKind::ConvectionExterior,
                LinkKind::ConvectionInterior,
                LinkKind::RadiationExterior,
                LinkKind::RadiationInterior
            ]
        );
        let total_c = 800.0 * 1000.0 * 0.05 * 10.0;
        let surf: Vec<_> = sys
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::SurfaceInterior | NodeKind::SurfaceExterior))
            .collect();
        assert_eq!(surf.len(), 2);
        assert!(surf.iter().all(|n| (n.capacitance - total_c / 2.0).abs() < 1e-9));
        assert_eq!(sys.nodes[sys.radiant_node.unwrap()].capacitance, 0.0);
    }

    #[test]
    fn fd1d_node_count() {
        let net = generate_network(&one_wall(ConductionModel::FD1D { nodes_per_layer: 3 })).unwrap();
        let wall_nodes = net.zones[0]
            .nodes
            .iter()
            .filter(|n| !matches!(n.kind, NodeKind::ZoneAir | NodeKind::RadiantMean))
            .count();
        assert_eq!(wall_nodes, 5);
        let total: f64 = net.zones[0]
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::ZoneAir)
            .map(|n| n.capacitance)
            .sum();
        assert!((total - 800.0 * 1000.0 * 0.05 * 10.0).abs() < 1e-6);
    }

    #[test]
    fn radiant_links_for_equal_walls() {
        let mut d = one_wall(ConductionModel::R2C);
        let mut w2 = wall("w2", 10.0, vec![layer(0.1, 800.0, 1000.0, 0.05)]);
        w2.azimuth = 0.0;
        d.inter_ambiances[0]
            .components
            .push(SeparationComponent::SeparationWall(w2));
        let net = generate_network(&d).unwrap();
        let sys = &net.zones[0];
        let rad: Vec<_> = sys
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::RadiationInterior)
            .map(|l| l.conductance)
            .collect();
        assert_eq!(rad.len(), 2);
        assert_eq!(rad[0], rad[1]);
        assert_eq!(sys.wall_count, 2);
    }

    #[test]
    fn selector_change_is_local() {
        let mut d = one_wall(ConductionModel::R2C);
        let w2 = wall("w2", 5.0, vec![layer(0.1, 800.0, 1000.0, 0.05), layer(1.0, 2000.0, 900.0, 0.1)]);
        d.inter_ambiances[0]
            .components
            .push(SeparationComponent::SeparationWall(w2));
        let count_of = |d: &BuildingDescription, id: &str| {
            generate_network(d).unwrap().zones[0]
                .nodes
                .iter()
                .filter(|n| n.label.starts_with(&format!("{id}:")))
                .count()
        };
        let before = count_of(&d, "w2");
        if let SeparationComponent::SeparationWall(w) = &mut d.inter_ambiances[0].components[0] {
            w.conduction = Some(ConductionModel::FD1D { nodes_per_layer: 7 });
        }
        assert_eq!(count_of(&d, "w2"), before);
        assert_eq!(count_of(&d, "w"), 9);
    }

    #[test]
    fn partition_splits_across_zones() {
        let mut d = BuildingDescription::new("p");
        d.zones.push(zone("a", 30.0));
        d.zones.push(zone("b", 30.0));
        let mut w = wall("p", 10.0, vec![layer(0.5, 1000.0, 1000.0, 0.1)]);
        w.conduction = Some(ConductionModel::FD1D { nodes_per_layer: 2 });
        d.inter_ambiances.push(InterAmbiance {
            id: "ab".into(),
            zone_a: "a".into(),
            zone_b: "b".into(),
            components: vec![SeparationComponent::SeparationWall(w)],
        });
        let net = generate_network(&d).unwrap();
        // a: air, si, 2 interior, rm; b: air, se, rm
        assert_eq!(net.zones[0].nodes.len(), 5);
        assert_eq!(net.zones[1].nodes.len(), 3);
        let cross = |z: usize| {
            net.zones[z]
                .links
                .iter()
                .filter(|l| matches!(l.b, LinkEnd::Boundary(Boundary::Remote { .. })))
                .count()
        };
        assert_eq!(cross(0), 1);
        assert_eq!(cross(1), 1);
    }

    #[test]
    fn ground_wall_drops_far_node() {
        let mut d = one_wall(ConductionModel::R2C);
        if let SeparationComponent::SeparationWall(w) = &mut d.inter_ambiances[0].components[0] {
            w.ground = Some(crate::model::GroundContact::SlabOnGrade);
        }
        let net = generate_network(&d).unwrap();
        let sys = &net.zones[0];
        assert_eq!(sys.nodes.len(), 3);
        assert!(sys
            .links
            .iter()
            .any(|l| l.b == LinkEnd::Boundary(Boundary::Ground) && l.kind == LinkKind::Conduction));
    }

    #[test]
    fn empty_zone_rejected() {
        let mut d = one_wall(ConductionModel::R2C);
        d.zones.push(zone("lonely", 10.0));
        assert_eq!(
            generate_network(&d).unwrap_err(),
            ThermalError::EmptyZone {
                zone: "lonely".into()
            }
        );
    }
}
