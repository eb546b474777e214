//! Physical quantities as they appear in building files: `"<number> <unit>"`.
//!
//! Every quantity is converted to SI on load, except temperatures which are
//! held in degrees Celsius throughout the engine.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Area,
    Volume,
    Angle,
    /// Absolute temperature, stored in °C.
    Temperature,
    /// Temperature difference, stored in K.
    TemperatureDifference,
    Conductivity,
    Density,
    SpecificHeat,
    FilmCoefficient,
    Power,
    MassFlow,
    /// Power-law leakage coefficient, kg/(s·Pa^n).
    FlowCoefficient,
    Mass,
    Pressure,
}

impl Dimension {
    /// Unit written by the serializer.
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Area => "m2",
            Dimension::Volume => "m3",
            Dimension::Angle => "deg",
            Dimension::Temperature => "degC",
            Dimension::TemperatureDifference => "K",
            Dimension::Conductivity => "W/(m.K)",
            Dimension::Density => "kg/m3",
            Dimension::SpecificHeat => "J/(kg.K)",
            Dimension::FilmCoefficient => "W/(m2.K)",
            Dimension::Power => "W",
            Dimension::MassFlow => "kg/s",
            Dimension::FlowCoefficient => "kg/(s.Pa^n)",
            Dimension::Mass => "kg",
            Dimension::Pressure => "Pa",
        }
    }

    /// Conversion of `value` given in `unit` to the engine's internal unit.
    fn convert(self, value: f64, unit: &str) -> Option<f64> {
        let unit = unit.trim();
        let v = match (self, unit) {
            (Dimension::Length, "m") => value,
            (Dimension::Length, "cm") => value * 1e-2,
            (Dimension::Length, "mm") => value * 1e-3,
            (Dimension::Area, "m2" | "m²" | "m^2") => value,
            (Dimension::Volume, "m3" | "m³" | "m^3") => value,
            (Dimension::Angle, "deg" | "°") => value,
            (Dimension::Angle, "rad") => value.to_degrees(),
            (Dimension::Temperature, "degC" | "°C" | "C") => value,
            (Dimension::Temperature, "K") => value - 273.15,
            (Dimension::TemperatureDifference, "K" | "degC" | "°C") => value,
            (Dimension::Conductivity, "W/(m.K)" | "W/(m·K)" | "W/mK") => value,
            (Dimension::Density, "kg/m3" | "kg/m³" | "kg/m^3") => value,
            (Dimension::SpecificHeat, "J/(kg.K)" | "J/(kg·K)" | "J/kgK") => value,
            (Dimension::SpecificHeat, "kJ/(kg.K)" | "kJ/(kg·K)") => value * 1e3,
            (Dimension::FilmCoefficient, "W/(m2.K)" | "W/(m²·K)" | "W/m2K") => value,
            (Dimension::Power, "W") => value,
            (Dimension::Power, "kW") => value * 1e3,
            (Dimension::MassFlow, "kg/s") => value,
            (Dimension::MassFlow, "kg/h") => value / 3600.0,
            (Dimension::MassFlow, "g/s") => value * 1e-3,
            (Dimension::FlowCoefficient, "kg/(s.Pa^n)" | "kg/(s·Pa^n)") => value,
            (Dimension::Mass, "kg") => value,
            (Dimension::Mass, "g") => value * 1e-3,
            (Dimension::Pressure, "Pa") => value,
            (Dimension::Pressure, "kPa") => value * 1e3,
            _ => return None,
        };
        Some(v)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Length => "length",
            Dimension::Area => "area",
            Dimension::Volume => "volume",
            Dimension::Angle => "angle",
            Dimension::Temperature => "temperature",
            Dimension::TemperatureDifference => "temperature difference",
            Dimension::Conductivity => "thermal conductivity",
            Dimension::Density => "density",
            Dimension::SpecificHeat => "specific heat",
            Dimension::FilmCoefficient => "film coefficient",
            Dimension::Power => "power",
            Dimension::MassFlow => "mass flow",
            Dimension::FlowCoefficient => "flow coefficient",
            Dimension::Mass => "mass",
            Dimension::Pressure => "pressure",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantityError {
    #[error("expected \"<number> <unit>\" for a {0}")]
    Malformed(Dimension),
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("unit {unit:?} is not a {dimension} unit (expected e.g. {expected:?})")]
    UnitMismatch {
        unit: String,
        dimension: Dimension,
        expected: &'static str,
    },
    #[error("value is not finite")]
    NotFinite,
}

/// Parses `"<number> <unit>"` into the internal unit of `dimension`.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, QuantityError> {
    let text = text.trim();
    let (number, unit) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => return Err(QuantityError::Malformed(dimension)),
    };
    if unit.is_empty() {
        return Err(QuantityError::Malformed(dimension));
    }
    let value: f64 = number
        .parse()
        .map_err(|_| QuantityError::BadNumber(number.to_string()))?;
    if !value.is_finite() {
        return Err(QuantityError::NotFinite);
    }
    let converted = dimension
        .convert(value, unit)
        .ok_or_else(|| QuantityError::UnitMismatch {
            unit: unit.to_string(),
            dimension,
            expected: dimension.canonical_unit(),
        })?;
    if converted.is_finite() {
        Ok(converted)
    } else {
        Err(QuantityError::NotFinite)
    }
}

/// Formats an internal value so that [`parse_quantity`] restores it bit for bit.
pub fn format_quantity(value: f64, dimension: Dimension) -> String {
    format!("{:?} {}", value, dimension.canonical_unit())
}
