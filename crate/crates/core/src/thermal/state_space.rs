use nalgebra::{DMatrix, DVector};

use super::{Boundary, LinkEnd, ThermalError, ZoneThermalSystem};

/// One column of the input matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateInput {
    Boundary(Boundary),
    /// Heat injected at a node, W.
    Source { node: usize },
}

/// `dx/dt = A·x + B·u` over the capacitive nodes of a zone, with the
/// zero-capacity nodes eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Node index of each state.
    pub states: Vec<usize>,
    pub inputs: Vec<StateInput>,
}

impl StateSpace {
    pub fn from_zone(sys: &ZoneThermalSystem) -> Result<Self, ThermalError> {
        let n = sys.nodes.len();
        let g = sys.conductance_matrix();

        let mut inputs: Vec<StateInput> = Vec::new();
        for l in &sys.links {
            if let LinkEnd::Boundary(b) = l.b {
                if !inputs.contains(&StateInput::Boundary(b)) {
                    inputs.push(StateInput::Boundary(b));
                }
            }
        }
        let boundary_count = inputs.len();
        inputs.extend((0..n).map(|node| StateInput::Source { node }));
        let mut e = DMatrix::zeros(n, inputs.len());
        for l in &sys.links {
            if let LinkEnd::Boundary(b) = l.b {
                let k = inputs.iter().position(|i| *i == StateInput::Boundary(b)).unwrap();
                e[(l.a, k)] += l.conductance;
            }
        }
        for i in 0..n {
            e[(i, boundary_count + i)] = 1.0;
        }

        let cap: Vec<usize> = (0..n).filter(|&i| sys.nodes[i].capacitance > 0.0).collect();
        let alg: Vec<usize> = (0..n).filter(|&i| sys.nodes[i].capacitance <= 0.0).collect();
        let pick = |m: &DMatrix<f64>, rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
        };
        let all_inputs: Vec<usize> = (0..inputs.len()).collect();
        let g_cc = pick(&g, &cap, &cap);
        let e_c = pick(&e, &cap, &all_inputs);
        let (reduced_g, reduced_e) = if alg.is_empty() {
            (g_cc, e_c)
        } else {
            let g_ca = pick(&g, &cap, &alg);
            let g_ac = pick(&g, &alg, &cap);
            let g_aa = pick(&g, &alg, &alg);
            let e_a = pick(&e, &alg, &all_inputs);
            let lu = g_aa.lu();
            let singular = || {
                // Report the first algebraic node whose row carries nothing.
                let node = alg
                    .iter()
                    .find(|&&i| g.row(i).iter().all(|&x| x == 0.0))
                    .unwrap_or(&alg[0]);
                ThermalError::SingularAlgebraicBlock {
                    zone: sys.zone_id.clone(),
                    node: sys.nodes[*node].label.clone(),
                }
            };
            let x_ac = lu.solve(&g_ac).ok_or_else(singular)?;
            let x_ae = lu.solve(&e_a).ok_or_else(singular)?;
            (&g_cc - &g_ca * x_ac, &e_c - &g_ca * x_ae)
        };
        let inv_c = DVector::from_iterator(cap.len(), cap.iter().map(|&i| 1.0 / sys.nodes[i].capacitance));
        let a = DMatrix::from_fn(cap.len(), cap.len(), |r, c| -inv_c[r] * reduced_g[(r, c)]);
        let b = DMatrix::from_fn(cap.len(), inputs.len(), |r, c| inv_c[r] * reduced_e[(r, c)]);
        Ok(StateSpace {
            a,
            b,
            states: cap,
            inputs,
        })
    }

    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::box_building;
    use crate::thermal::{generate_network, BoundaryTemperatures, NodeKind};

    fn inputs_for(ss: &StateSpace, bnd: &BoundaryTemperatures) -> DVector<f64> {
        DVector::from_iterator(
            ss.inputs.len(),
            ss.inputs.iter().map(|i| match i {
                StateInput::Boundary(b) => ZoneThermalSystem::boundary_temperature(*b, bnd, &[]),
                StateInput::Source { .. } => 0.0,
            }),
        )
    }

    #[test]
    fn steady_state_matches_time_marching() {
        let mut net = generate_network(&box_building()).unwrap();
        let bnd = BoundaryTemperatures {
            outdoor: 5.0,
            sky: -3.0,
            ground: 10.0,
        };
        let ss = StateSpace::from_zone(&net.zones[0]).unwrap();
        assert!(ss.states.iter().all(|&i| net.zones[0].nodes[i].kind != NodeKind::RadiantMean));
        let u = inputs_for(&ss, &bnd);
        let x = ss.a.clone().lu().solve(&(-(&ss.b * &u))).unwrap();
        for _ in 0..2000 {
            net.advance(3600.0, &bnd).unwrap();
        }
        for (k, &node) in ss.states.iter().enumerate() {
            assert!((x[k] - net.zones[0].temperatures[node]).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_state_at_uniform_boundary_is_stationary() {
        let net = generate_network(&box_building()).unwrap();
        let ss = StateSpace::from_zone(&net.zones[0]).unwrap();
        let x = DVector::from_element(ss.states.len(), 12.0);
        let u = inputs_for(&ss, &BoundaryTemperatures::uniform(12.0));
        assert!(ss.derivative(&x, &u).amax() < 1e-9);
    }
}
