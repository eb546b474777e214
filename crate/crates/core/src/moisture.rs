//! Zone humidity balance with one lumped hygroscopic buffer per zone.
//!
//! ```text
//! ρV·ṙ_k      = Σ_j ṁ(j,k)·(r_j − r_k) + g_k + β_k·(r_buf,k − r_k)
//! m_buf·ṙ_buf = β_k·(r_k − r_buf,k)
//! ```
//!
//! written as `C_h·ṙ = A_h·r + B_h` and advanced by backward Euler.

use nalgebra::{DMatrix, DVector};

use crate::model::{BufferParams, BuildingDescription};
use crate::psychro::{saturation_humidity_ratio, REFERENCE_DENSITY};
use crate::thermal::{FlowSource, Inflow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MoistureError {
    #[error("non-finite moisture input: {what}")]
    NonFinite { what: &'static str },
    #[error("moisture system is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoistureSystem {
    /// Zone humidity ratios, kg/kg.
    pub humidity: Vec<f64>,
    /// Buffer humidity ratios, present when buffers are enabled.
    pub buffer: Option<Vec<f64>>,
    /// ρ·V per zone, kg.
    pub dry_air_mass: Vec<f64>,
    pub buffer_params: Vec<BufferParams>,
}

/// `C_h·ṙ = A_h·r + B_h`, with `C_h` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MoistureMatrices {
    pub capacity: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl MoistureSystem {
    pub fn from_description(desc: &BuildingDescription, initial: f64) -> Self {
        let n = desc.zones.len();
        MoistureSystem {
            humidity: vec![initial; n],
            buffer: desc.moisture.buffers.then(|| vec![initial; n]),
            dry_air_mass: desc.zones.iter().map(|z| REFERENCE_DENSITY * z.air_volume).collect(),
            buffer_params: desc.zones.iter().map(|z| z.buffer_params()).collect(),
        }
    }

    pub fn zone_count(&self) -> usize {
        self.humidity.len()
    }

    pub fn dimension(&self) -> usize {
        if self.buffer.is_some() {
            2 * self.zone_count()
        } else {
            self.zone_count()
        }
    }

    pub fn state(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.humidity.clone();
        if let Some(b) = &self.buffer {
            v.extend_from_slice(b);
        }
        DVector::from_vec(v)
    }

    /// Water held in zone air and buffers, kg.
    pub fn total_water(&self) -> f64 {
        let air: f64 = self.humidity.iter().zip(&self.dry_air_mass).map(|(r, m)| r * m).sum();
        let buf: f64 = match &self.buffer {
            Some(b) => b.iter().zip(&self.buffer_params).map(|(r, p)| r * p.mass).sum(),
            None => 0.0,
        };
        air + buf
    }

    /// Builds the system for the streams `inflows[k]` entering each zone,
    /// exterior humidity `exterior` and moisture gains `gains`, kg/s.
    pub fn assemble(&self, inflows: &[Vec<Inflow>], exterior: f64, gains: &[f64]) -> Result<MoistureMatrices, MoistureError> {
        if !exterior.is_finite() {
            return Err(MoistureError::NonFinite { what: "exterior humidity" });
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(MoistureError::NonFinite { what: "moisture gains" });
        }
        if inflows.iter().flatten().any(|f| !f.mass_flow.is_finite()) {
            return Err(MoistureError::NonFinite { what: "mass flows" });
        }
        let n = self.zone_count();
        let dim = self.dimension();
        let mut capacity = DVector::zeros(dim);
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for k in 0..n {
            capacity[k] = self.dry_air_mass[k];
            b[k] += gains[k];
            for f in &inflows[k] {
                if f.mass_flow <= 0.0 {
                    continue;
                }
                match f.source {
                    FlowSource::Exterior => b[k] += f.mass_flow * exterior,
                    FlowSource::Zone(j) if j == k => continue,
                    FlowSource::Zone(j) => a[(k, j)] += f.mass_flow,
                }
                a[(k, k)] -= f.mass_flow;
            }
            if self.buffer.is_some() {
                let p = &self.buffer_params[k];
                let kb = n + k;
                capacity[kb] = p.mass;
                a[(k, k)] -= p.exchange;
                a[(k, kb)] += p.exchange;
                a[(kb, kb)] -= p.exchange;
                a[(kb, k)] += p.exchange;
            }
        }
        Ok(MoistureMatrices { capacity, a, b })
    }

    /// One implicit step `(C/dt − A)·r_new = C/dt·r_old + B`.
    pub fn advance(&mut self, dt: f64, inflows: &[Vec<Inflow>], exterior: f64, gains: &[f64]) -> Result<(), MoistureError> {
        let m = self.assemble(inflows, exterior, gains)?;
        let c_dt = &m.capacity / dt;
        let lhs = DMatrix::from_diagonal(&c_dt) - &m.a;
        let rhs = c_dt.component_mul(&self.state()) + &m.b;
        let x = lhs.lu().solve(&rhs).ok_or(MoistureError::Singular)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MoistureError::NonFinite { what: "solution" });
        }
        let n = self.zone_count();
        self.humidity.copy_from_slice(&x.as_slice()[..n]);
        if let Some(b) = &mut self.buffer {
            b.copy_from_slice(&x.as_slice()[n..]);
        }
        Ok(())
    }

    /// Zones whose humidity exceeds saturation at their air temperature.
    pub fn supersaturated(&self, air_temperatures: &[f64], pressure: f64) -> Vec<usize> {
        (0..self.zone_count())
            .filter(|&k| self.humidity[k] > saturation_humidity_ratio(air_temperatures[k], pressure))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(n: usize, buffers: bool) -> MoistureSystem {
        MoistureSystem {
            humidity: vec![0.008; n],
            buffer: buffers.then(|| vec![0.008; n]),
            dry_air_mass: vec![REFERENCE_DENSITY * 50.0; n],
            buffer_params: vec![
                BufferParams {
                    mass: 10.0,
                    exchange: 1e-4
                };
                n
            ],
        }
    }

    fn outdoor(m: f64) -> Vec<Inflow> {
        vec![Inflow {
            source: FlowSource::Exterior,
            mass_flow: m,
        }]
    }

    #[test]
    fn nothing_moves_without_drivers() {
        let mut s = system(2, false);
        s.humidity = vec![0.004, 0.011];
        let m = s.assemble(&[vec![], vec![]], 0.002, &[0.0, 0.0]).unwrap();
        assert!(m.a.iter().all(|&x| x == 0.0));
        s.advance(600.0, &[vec![], vec![]], 0.002, &[0.0, 0.0]).unwrap();
        assert_eq!(s.humidity, vec![0.004, 0.011]);
    }

    #[test]
    fn dimension_is_2n_with_buffers() {
        assert_eq!(system(3, true).dimension(), 6);
        assert_eq!(system(3, false).dimension(), 3);
    }

    #[test]
    fn uniform_state_is_stationary() {
        let mut s = system(1, true);
        s.advance(3600.0, &[outdoor(0.02)], 0.008, &[0.0]).unwrap();
        assert!((s.humidity[0] - 0.008).abs() < 1e-18);
        assert!((s.buffer.as_ref().unwrap()[0] - 0.008).abs() < 1e-18);
    }

    #[test]
    fn ventilated_zone_reaches_closed_form() {
        let mut s = system(1, true);
        let (m, g, re) = (0.02, 5e-5, 0.006);
        for _ in 0..2000 {
            s.advance(3600.0, &[outdoor(m)], re, &[g]).unwrap();
        }
        let expected = re + g / m;
        assert!((s.humidity[0] - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn closed_buffer_conserves_water_and_equalizes() {
        let mut s = system(1, true);
        s.humidity[0] = 0.012;
        s.buffer.as_mut().unwrap()[0] = 0.004;
        let total = s.total_water();
        for _ in 0..5000 {
            s.advance(600.0, &[vec![]], 0.0, &[0.0]).unwrap();
            assert!((s.total_water() - total).abs() / total < 1e-12);
        }
        let mean = total / (s.dry_air_mass[0] + 10.0);
        assert!((s.humidity[0] - mean).abs() < 1e-12);
        assert!((s.buffer.as_ref().unwrap()[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn interzone_stream_carries_upwind_humidity() {
        let mut s = system(2, false);
        s.humidity = vec![0.010, 0.005];
        // zone 0 → zone 1, made up from outdoors into zone 0
        let inflows = vec![outdoor(0.05), vec![Inflow { source: FlowSource::Zone(0), mass_flow: 0.05 }]];
        for _ in 0..500 {
            s.advance(3600.0, &inflows, 0.007, &[1e-4, 0.0]).unwrap();
        }
        let r0 = 0.007 + 1e-4 / 0.05;
        assert!((s.humidity[0] - r0).abs() < 1e-12);
        assert!((s.humidity[1] - r0).abs() < 1e-12);
    }

    #[test]
    fn nan_inputs_rejected() {
        let mut s = system(1, false);
        assert!(s.advance(60.0, &[vec![]], f64::NAN, &[0.0]).is_err());
        assert!(s.advance(60.0, &[vec![]], 0.0, &[f64::NAN]).is_err());
        assert!(s.advance(60.0, &[outdoor(f64::INFINITY)], 0.0, &[0.0]).is_err());
    }

    #[test]
    fn saturation_is_flagged() {
        let mut s = system(2, false);
        s.humidity = vec![0.005, 0.03];
        assert_eq!(s.supersaturated(&[20.0, 20.0], 101_325.0), vec![1]);
    }
}
