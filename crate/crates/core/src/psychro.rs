//! Moist-air properties.

pub const STANDARD_PRESSURE: f64 = 101_325.0;
/// Specific heat of air used by the airflow heat transport, J/(kg·K).
pub const AIR_SPECIFIC_HEAT: f64 = 1006.0;
pub const GRAVITY: f64 = 9.80665;
/// Reference state of the ideal-gas density law.
pub const REFERENCE_DENSITY: f64 = 1.204;
pub const REFERENCE_TEMPERATURE: f64 = 293.15;

/// Ratio of molar masses of water vapour and dry air.
const EPSILON: f64 = 0.621945;

/// Saturation vapour pressure, Pa, Hyland–Wexler correlation (ASHRAE
/// Fundamentals), over ice below 0 °C and over liquid water above.
pub fn saturation_pressure(t_celsius: f64) -> f64 {
    let t = t_celsius + 273.15;
    let ln_p = if t_celsius < 0.0 {
        -5.674_535_9e3 / t + 6.392_524_7 - 9.677_843e-3 * t + 6.221_570_1e-7 * t * t
            + 2.074_782_5e-9 * t.powi(3)
            - 9.484_024e-13 * t.powi(4)
            + 4.163_501_9 * t.ln()
    } else {
        -5.800_220_6e3 / t + 1.391_499_3 - 4.864_023_9e-2 * t + 4.176_476_8e-5 * t * t
            - 1.445_209_3e-8 * t.powi(3)
            + 6.545_967_3 * t.ln()
    };
    ln_p.exp()
}

/// Humidity ratio (kg water / kg dry air) from relative humidity in %.
pub fn humidity_ratio_from_rh(t_celsius: f64, rh_percent: f64, pressure: f64) -> f64 {
    let pw = rh_percent / 100.0 * saturation_pressure(t_celsius);
    EPSILON * pw / (pressure - pw)
}

/// Humidity ratio at saturation.
pub fn saturation_humidity_ratio(t_celsius: f64, pressure: f64) -> f64 {
    humidity_ratio_from_rh(t_celsius, 100.0, pressure)
}

/// Ideal-gas air density at fixed pressure: ρ = ρ₀·T₀/T.
pub fn air_density(t_celsius: f64) -> f64 {
    REFERENCE_DENSITY * REFERENCE_TEMPERATURE / (t_celsius + 273.15)
}
