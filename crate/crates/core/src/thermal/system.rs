use nalgebra::{DMatrix, DVector};

use super::{
    Boundary, BoundaryTemperatures, LinkEnd, LinkKind, NodeKind, SourceOrigin, ThermalError,
    ThermalNode, ZoneThermalSystem,
};
use crate::model::{HvacMode, IdealAirHandler, TimeScheme};

/// The time-discretized system `M·T_new = b` of one zone.
#[derive(Debug, Clone)]
pub struct LinearStep {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Weight of a unit source on the air node (θ of that row).
    pub air_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSolution {
    pub temperatures: Vec<f64>,
    /// W, positive when heating.
    pub hvac_power: f64,
}

/// Discrete energy budget of one zone over one step, W.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBalance {
    /// Σ C·(T_new − T_old)/dt
    pub stored: f64,
    /// Shortwave, internal loads and HVAC.
    pub sources: f64,
    /// Heat entering through boundary links (exterior, ground, other zones, air streams).
    pub boundary: f64,
    /// Σ of the magnitudes of every term above, for normalization.
    pub magnitude: f64,
}

impl EnergyBalance {
    /// stored − sources − boundary; zero up to round-off for backward Euler.
    pub fn residual(&self) -> f64 {
        self.stored - self.sources - self.boundary
    }

    pub fn accumulate(&mut self, other: &EnergyBalance, weight: f64) {
        self.stored += other.stored * weight;
        self.sources += other.sources * weight;
        self.boundary += other.boundary * weight;
        self.magnitude += other.magnitude * weight;
    }
}

impl ZoneThermalSystem {
    pub(crate) fn empty(zone_id: &str, scheme: TimeScheme) -> Self {
        ZoneThermalSystem {
            zone_id: zone_id.to_string(),
            nodes: Vec::new(),
            links: Vec::new(),
            sources: Vec::new(),
            temperatures: Vec::new(),
            wall_count: 0,
            air_node: 0,
            radiant_node: None,
            hvac: None,
            scheme,
            previous_injection: None,
        }
    }

    pub(crate) fn add_node(&mut self, kind: NodeKind, capacitance: f64, label: String) -> usize {
        self.nodes.push(ThermalNode {
            kind,
            capacitance,
            label,
        });
        self.temperatures.push(20.0);
        self.nodes.len() - 1
    }

    pub(crate) fn add_link(&mut self, a: usize, b: LinkEnd, conductance: f64, kind: LinkKind) {
        self.links.push(super::ThermalLink {
            a,
            b,
            conductance,
            kind,
        });
    }

    pub fn set_uniform_temperature(&mut self, t: f64) {
        self.temperatures.iter_mut().for_each(|x| *x = t);
        self.previous_injection = None;
    }

    fn theta(&self, i: usize) -> f64 {
        if self.nodes[i].capacitance == 0.0 {
            return 1.0;
        }
        match self.scheme {
            TimeScheme::BackwardEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }

    pub(crate) fn boundary_temperature(
        b: Boundary,
        bnd: &BoundaryTemperatures,
        remote: &[Vec<f64>],
    ) -> f64 {
        match b {
            Boundary::OutdoorAir => bnd.outdoor,
            Boundary::Sky => bnd.sky,
            Boundary::Ground => bnd.ground,
            Boundary::Fixed(t) => t,
            Boundary::Remote { zone, node } => remote[zone][node],
        }
    }

    /// Node-to-node conductance matrix G; boundary links add to the diagonal.
    pub fn conductance_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut g = DMatrix::zeros(n, n);
        for l in &self.links {
            let c = l.conductance;
            g[(l.a, l.a)] += c;
            if let LinkEnd::Node(b) = l.b {
                g[(l.a, b)] -= c;
                if l.kind != LinkKind::AirTransport {
                    g[(b, b)] += c;
                    g[(b, l.a)] -= c;
                }
            }
        }
        g
    }

    /// Sources plus boundary injections `Σ G·T_boundary`, per node.
    pub fn injection(&self, bnd: &BoundaryTemperatures, remote: &[Vec<f64>]) -> DVector<f64> {
        let mut g = DVector::zeros(self.nodes.len());
        for s in &self.sources {
            g[s.node] += s.flux;
        }
        for l in &self.links {
            if let LinkEnd::Boundary(b) = l.b {
                g[l.a] += l.conductance * Self::boundary_temperature(b, bnd, remote);
            }
        }
        g
    }

    /// θ-scheme step from the committed temperatures: backward Euler by
    /// default, Crank–Nicolson on capacitive rows when selected. Zero-capacity
    /// rows are always the instantaneous balance.
    pub fn assemble_step(
        &self,
        dt: f64,
        bnd: &BoundaryTemperatures,
        remote: &[Vec<f64>],
    ) -> Result<LinearStep, ThermalError> {
        let n = self.nodes.len();
        let g = self.conductance_matrix();
        let inj_new = self.injection(bnd, remote);
        let t_old = DVector::from_column_slice(&self.temperatures);
        let explicit_part = match (&self.scheme, &self.previous_injection) {
            (TimeScheme::CrankNicolson, Some(prev)) => DVector::from_column_slice(prev) - &g * &t_old,
            (TimeScheme::CrankNicolson, None) => &inj_new - &g * &t_old,
            (TimeScheme::BackwardEuler, _) => DVector::zeros(n),
        };
        let mut matrix = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let theta = self.theta(i);
            let c_dt = self.nodes[i].capacitance / dt;
            for j in 0..n {
                matrix[(i, j)] = theta * g[(i, j)];
            }
            matrix[(i, i)] += c_dt;
            rhs[i] = c_dt * t_old[i] + theta * inj_new[i] + (1.0 - theta) * explicit_part[i];
            if matrix.row(i).iter().all(|&x| x == 0.0) {
                return Err(ThermalError::SingularRow {
                    zone: self.zone_id.clone(),
                    node: self.nodes[i].label.clone(),
                });
            }
        }
        Ok(LinearStep {
            matrix,
            rhs,
            air_weight: self.theta(self.air_node),
        })
    }

    /// Solves one step without committing it. The ideal air handler, when
    /// present, injects the power that holds its setpoint on the air node,
    /// clamped to its capacity.
    pub fn solve_step(
        &self,
        dt: f64,
        bnd: &BoundaryTemperatures,
        remote: &[Vec<f64>],
    ) -> Result<ZoneSolution, ThermalError> {
        let step = self.assemble_step(dt, bnd, remote)?;
        let lu = step.matrix.lu();
        let fail = || ThermalError::SolveFailed {
            zone: self.zone_id.clone(),
        };
        let mut t = lu.solve(&step.rhs).ok_or_else(fail)?;
        let mut hvac_power = 0.0;
        if let Some(h) = &self.hvac {
            let mut unit = DVector::zeros(self.nodes.len());
            unit[self.air_node] = step.air_weight;
            let response = lu.solve(&unit).ok_or_else(fail)?;
            hvac_power = ideal_power(h, t[self.air_node], response[self.air_node]);
            if hvac_power != 0.0 {
                t += response * hvac_power;
            }
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(ThermalError::NonFinite {
                zone: self.zone_id.clone(),
            });
        }
        Ok(ZoneSolution {
            temperatures: t.iter().copied().collect(),
            hvac_power,
        })
    }

    /// Makes `solution` the committed state.
    pub fn commit(&mut self, solution: &ZoneSolution, bnd: &BoundaryTemperatures, remote: &[Vec<f64>]) {
        self.temperatures.clone_from(&solution.temperatures);
        if self.scheme == TimeScheme::CrankNicolson {
            let mut inj = self.injection(bnd, remote);
            inj[self.air_node] += solution.hvac_power;
            self.previous_injection = Some(inj.iter().copied().collect());
        }
    }

    /// Solve and commit a single isolated zone.
    pub fn advance(&mut self, dt: f64, bnd: &BoundaryTemperatures) -> Result<ZoneSolution, ThermalError> {
        let remote = [];
        let sol = self.solve_step(dt, bnd, &remote)?;
        self.commit(&sol, bnd, &remote);
        Ok(sol)
    }

    /// Energy budget of going from `old` to `new` over `dt`.
    pub fn energy_balance(
        &self,
        old: &[f64],
        new: &[f64],
        hvac_power: f64,
        dt: f64,
        bnd: &BoundaryTemperatures,
        remote: &[Vec<f64>],
    ) -> EnergyBalance {
        let mut e = EnergyBalance::default();
        for (i, node) in self.nodes.iter().enumerate() {
            let q = node.capacitance * (new[i] - old[i]) / dt;
            e.stored += q;
            e.magnitude += q.abs();
        }
        for s in &self.sources {
            if s.origin != SourceOrigin::HvacIdeal {
                e.sources += s.flux;
                e.magnitude += s.flux.abs();
            }
        }
        e.sources += hvac_power;
        e.magnitude += hvac_power.abs();
        for l in &self.links {
            let far = match l.b {
                LinkEnd::Boundary(b) => Self::boundary_temperature(b, bnd, remote),
                LinkEnd::Node(b) if l.kind == LinkKind::AirTransport => new[b],
                LinkEnd::Node(_) => continue,
            };
            let q = l.conductance * (far - new[l.a]);
            e.boundary += q;
            e.magnitude += q.abs();
        }
        e
    }

    /// `(Σ h_ri·A_j·(T_j − T_rm), Σ h_ri·A_j)` for the radiant-mean node.
    pub fn radiant_residual(&self, t: &[f64]) -> Option<(f64, f64)> {
        let rm = self.radiant_node?;
        let mut residual = 0.0;
        let mut scale = 0.0;
        for l in &self.links {
            if l.kind != LinkKind::RadiationInterior {
                continue;
            }
            let (surface, other) = match l.b {
                LinkEnd::Node(b) if b == rm => (l.a, rm),
                LinkEnd::Node(b) if l.a == rm => (b, rm),
                _ => continue,
            };
            residual += l.conductance * (t[surface] - t[other]);
            scale += l.conductance;
        }
        Some((residual, scale))
    }

    /// Mean radiant temperature: the radiant node, else the area-weighted
    /// interior surface temperature, else the air.
    pub fn mean_radiant_temperature(&self, t: &[f64]) -> f64 {
        if let Some(rm) = self.radiant_node {
            return t[rm];
        }
        let mut sum = 0.0;
        let mut weight = 0.0;
        for l in &self.links {
            if l.kind == LinkKind::ConvectionInterior && l.b == LinkEnd::Node(self.air_node) {
                sum += l.conductance * t[l.a];
                weight += l.conductance;
            }
        }
        if weight > 0.0 {
            sum / weight
        } else {
            t[self.air_node]
        }
    }
}

/// Power holding `setpoint` given the free-floating air temperature and the
/// air temperature response to one watt.
fn ideal_power(h: &IdealAirHandler, free_air: f64, response: f64) -> f64 {
    if response <= 0.0 {
        return 0.0;
    }
    let needed = (h.setpoint - free_air) / response;
    let needed = match h.mode {
        HvacMode::Heating => needed.max(0.0),
        HvacMode::Cooling => needed.min(0.0),
        HvacMode::Both => needed,
    };
    needed.clamp(-h.max_power, h.max_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::SourceTerm;

    fn single_node(c: f64) -> ZoneThermalSystem {
        let mut s = ZoneThermalSystem::empty("z", TimeScheme::BackwardEuler);
        s.air_node = s.add_node(NodeKind::ZoneAir, c, "air".into());
        s
    }

    #[test]
    fn isolated_node_is_adiabatic() {
        let mut s = single_node(1000.0);
        s.temperatures[0] = 17.5;
        let sol = s.advance(10.0, &BoundaryTemperatures::uniform(0.0)).unwrap();
        assert_eq!(sol.temperatures, vec![17.5]);
    }

    #[test]
    fn constant_source_backward_euler_step() {
        let mut s = single_node(1e5);
        s.temperatures[0] = 0.0;
        s.sources.push(SourceTerm {
            node: 0,
            flux: 100.0,
            origin: SourceOrigin::InternalLoad,
        });
        let sol = s.advance(100.0, &BoundaryTemperatures::uniform(0.0)).unwrap();
        assert!((sol.temperatures[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn implicit_step_never_overshoots() {
        // C dT/dt = G (T_b − T); backward Euler gives a convex combination for any dt.
        for dt in [1.0, 1e2, 1e4, 1e6, 1e9] {
            let mut s = single_node(1000.0);
            s.add_link(0, LinkEnd::Boundary(Boundary::OutdoorAir), 10.0, LinkKind::ConvectionExterior);
            s.temperatures[0] = 30.0;
            let bnd = BoundaryTemperatures::uniform(20.0);
            for _ in 0..5 {
                let t = s.advance(dt, &bnd).unwrap().temperatures[0];
                assert!((20.0..=30.0).contains(&t), "dt={dt} t={t}");
            }
            let expected = 20.0 + 10.0 * (1.0f64 / (1.0 + dt * 10.0 / 1000.0)).powi(5);
            assert!((s.temperatures[0] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_zero_capacity_node_is_reported() {
        let mut s = single_node(1000.0);
        s.add_node(NodeKind::RadiantMean, 0.0, "rm".into());
        match s.advance(60.0, &BoundaryTemperatures::uniform(20.0)) {
            Err(ThermalError::SingularRow { node, .. }) => assert_eq!(node, "rm"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hvac_clamps_to_capacity() {
        let mut s = single_node(1e5);
        s.add_link(0, LinkEnd::Boundary(Boundary::OutdoorAir), 100.0, LinkKind::ConvectionExterior);
        s.temperatures[0] = 0.0;
        s.hvac = Some(IdealAirHandler {
            id: "h".into(),
            setpoint: 20.0,
            max_power: 1e6,
            mode: HvacMode::Both,
        });
        let bnd = BoundaryTemperatures::uniform(0.0);
        let sol = s.advance(3600.0, &bnd).unwrap();
        assert!((sol.temperatures[0] - 20.0).abs() < 1e-9);
        // Power = storage + loss: C·20/dt + 100·20.
        let expected = 1e5 * 20.0 / 3600.0 + 2000.0;
        assert!((sol.hvac_power - expected).abs() < 1e-6);

        s.hvac.as_mut().unwrap().max_power = 500.0;
        s.temperatures[0] = 0.0;
        let sol = s.advance(3600.0, &bnd).unwrap();
        assert_eq!(sol.hvac_power, 500.0);
        assert!(sol.temperatures[0] < 20.0);

        s.hvac.as_mut().unwrap().mode = HvacMode::Cooling;
        s.temperatures[0] = 0.0;
        assert_eq!(s.advance(3600.0, &bnd).unwrap().hvac_power, 0.0);
    }

    #[test]
    fn energy_balance_closes_for_backward_euler() {
        let mut s = single_node(5e4);
        let w = s.add_node(NodeKind::SurfaceInterior, 2e4, "w".into());
        s.add_link(w, LinkEnd::Node(0), 30.0, LinkKind::ConvectionInterior);
        s.add_link(w, LinkEnd::Boundary(Boundary::OutdoorAir), 20.0, LinkKind::Conduction);
        s.add_link(0, LinkEnd::Boundary(Boundary::OutdoorAir), 5.0, LinkKind::AirTransport);
        s.sources.push(SourceTerm {
            node: w,
            flux: 250.0,
            origin: SourceOrigin::ShortwaveInterior,
        });
        let bnd = BoundaryTemperatures::uniform(5.0);
        let old = s.temperatures.clone();
        let sol = s.advance(900.0, &bnd).unwrap();
        let e = s.energy_balance(&old, &sol.temperatures, 0.0, 900.0, &bnd, &[]);
        assert!(e.residual().abs() < 1e-9 * e.magnitude, "{e:?}");
    }
}
