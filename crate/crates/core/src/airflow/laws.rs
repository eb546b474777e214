//! Component flow laws and boundary pressures.

use crate::model::CpSector;
use crate::psychro::GRAVITY;

use super::AirflowError;

/// Power-law crack flow `sign(ΔP)·K·|ΔP|ⁿ`, kg/s, positive along ΔP.
pub fn crack_flow(coefficient: f64, exponent: f64, dp: f64) -> f64 {
    if dp == 0.0 {
        return 0.0;
    }
    let m = coefficient * dp.abs().powf(exponent);
    if dp > 0.0 {
        m
    } else {
        -m
    }
}

/// `½·ρ·Cp·V²`, Pa.
pub fn wind_pressure(density: f64, cp: f64, speed: f64) -> f64 {
    0.5 * density * cp * speed * speed
}

/// Static pressure at `elevation` in a column of density `density` whose
/// pressure at height 0 is `reference`.
pub fn stack_pressure(reference: f64, density: f64, elevation: f64) -> f64 {
    reference - density * GRAVITY * elevation
}

/// Cp for the wind blowing from `wind_direction` onto a facade whose outward
/// normal points to `facade_azimuth` (both degrees from North).
pub fn pressure_coefficient(table: &[CpSector], wind_direction: f64, facade_azimuth: f64) -> Result<f64, AirflowError> {
    let incidence = (wind_direction - facade_azimuth).rem_euclid(360.0);
    table
        .iter()
        .find(|s| s.from <= incidence && incidence < s.to)
        .map(|s| s.cp)
        .ok_or(AirflowError::MissingPressureCoefficient { incidence })
}

/// Flows through a vertical opening in both directions, kg/s, both ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoWayFlow {
    pub forward: f64,
    pub backward: f64,
}

impl TwoWayFlow {
    pub fn net(&self) -> f64 {
        self.forward - self.backward
    }
}

/// `∫ √|a + b·s| ds` over `[s0, s1]` when `a + b·s` keeps one sign there.
fn root_integral(a: f64, b: f64, s0: f64, s1: f64) -> f64 {
    if b == 0.0 {
        return a.abs().sqrt() * (s1 - s0);
    }
    let u0 = (a + b * s0).abs();
    let u1 = (a + b * s1).abs();
    (2.0 / (3.0 * b.abs())) * (u1 * u1.sqrt() - u0 * u0.sqrt()).abs()
}

/// Two-way flow through a vertical opening of height `height` whose
/// pressure difference varies linearly as `dp_bottom + slope·s` with the
/// height `s` above the sill. Each strip passes `Cd·W·√(2ρ̄|Δp|)·ds` in the
/// direction of its own pressure difference.
pub fn large_opening_flow(
    width: f64,
    height: f64,
    discharge: f64,
    mean_density: f64,
    dp_bottom: f64,
    slope: f64,
) -> TwoWayFlow {
    let scale = discharge * width * (2.0 * mean_density).sqrt();
    let (a, b) = (dp_bottom, slope);
    let mut forward = 0.0;
    let mut backward = 0.0;
    let mut add = |s0: f64, s1: f64| {
        let mid = a + b * 0.5 * (s0 + s1);
        let q = scale * root_integral(a, b, s0, s1);
        if mid > 0.0 {
            forward += q;
        } else if mid < 0.0 {
            backward += q;
        }
    };
    let neutral = if b != 0.0 { -a / b } else { f64::NAN };
    if neutral > 0.0 && neutral < height {
        add(0.0, neutral);
        add(neutral, height);
    } else {
        add(0.0, height);
    }
    TwoWayFlow { forward, backward }
}

/// Pressure difference at the sill that puts the neutral plane at mid-height,
/// where the two flows cancel.
pub fn large_opening_balance_point(height: f64, slope: f64) -> f64 {
    -slope * height / 2.0
}
