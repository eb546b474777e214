//! Sun position and irradiance on tilted surfaces.

use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::model::Site;

/// Unit vector towards the sun in (east, north, up) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunVector {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl SunVector {
    pub fn is_up(&self) -> bool {
        self.up > 0.0
    }
}

/// Sun direction at local standard time `time`.
pub fn sun_vector(site: &Site, time: NaiveDateTime) -> SunVector {
    let day = time.ordinal() as f64;
    let clock_hours = time.hour() as f64 + time.minute() as f64 / 60.0 + time.second() as f64 / 3600.0;
    let b = (day - 1.0) * 2.0 * std::f64::consts::PI / 365.0;
    // Equation of time, minutes.
    let eot = 229.2
        * (0.000075 + 0.001868 * b.cos() - 0.032077 * b.sin() - 0.014615 * (2.0 * b).cos()
            - 0.04089 * (2.0 * b).sin());
    let declination = (23.45f64).to_radians() * ((284.0 + day) * 2.0 * std::f64::consts::PI / 365.0).sin();
    let solar_time = clock_hours + (4.0 * (site.longitude - 15.0 * site.time_zone) + eot) / 60.0;
    let hour_angle = (15.0 * (solar_time - 12.0)).to_radians();
    let lat = site.latitude.to_radians();
    SunVector {
        east: -declination.cos() * hour_angle.sin(),
        north: declination.sin() * lat.cos() - declination.cos() * hour_angle.cos() * lat.sin(),
        up: declination.sin() * lat.sin() + declination.cos() * hour_angle.cos() * lat.cos(),
    }
}

/// Outward unit normal of a surface, azimuth clockwise from North, tilt from horizontal-up.
pub fn surface_normal(azimuth_deg: f64, tilt_deg: f64) -> SunVector {
    let (a, t) = (azimuth_deg.to_radians(), tilt_deg.to_radians());
    SunVector {
        east: t.sin() * a.sin(),
        north: t.sin() * a.cos(),
        up: t.cos(),
    }
}

/// Total irradiance on a surface, W/m²: beam + isotropic sky diffuse + ground reflected.
pub fn incident_irradiance(
    sun: SunVector,
    azimuth_deg: f64,
    tilt_deg: f64,
    direct_normal: f64,
    diffuse_horizontal: f64,
    albedo: f64,
) -> f64 {
    let n = surface_normal(azimuth_deg, tilt_deg);
    let (beam, beam_horizontal) = if sun.is_up() {
        let cos_incidence = sun.east * n.east + sun.north * n.north + sun.up * n.up;
        (direct_normal * cos_incidence.max(0.0), direct_normal * sun.up)
    } else {
        (0.0, 0.0)
    };
    let global_horizontal = beam_horizontal + diffuse_horizontal;
    beam + diffuse_horizontal * (1.0 + n.up) / 2.0 + albedo * global_horizontal * (1.0 - n.up) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(month: u32, day: u32, hour: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2001, month, day)
            .unwrap()
            .and_hms_opt(hour, 0, 0)
            .unwrap()
    }

    #[test]
    fn equinox_noon_altitude_is_colatitude() {
        let site = Site {
            latitude: 40.0,
            ..Site::default()
        };
        // Around 21 March declination is ~0; solar noon is near 12:00 + EoT.
        let sun = sun_vector(&site, at(3, 21, 12));
        let altitude = sun.up.asin().to_degrees();
        assert!((altitude - 50.0).abs() < 2.0, "{altitude}");
        assert!(sun.north < 0.0, "sun should be to the south");
    }

    #[test]
    fn night_without_diffuse_is_dark() {
        let site = Site::default();
        let sun = sun_vector(&site, at(6, 21, 0));
        assert!(!sun.is_up());
        let i = incident_irradiance(sun, 180.0, 90.0, 800.0, 0.0, 0.2);
        assert_eq!(i, 0.0);
    }

    #[test]
    fn horizontal_surface_sees_global() {
        let site = Site::default();
        let sun = sun_vector(&site, at(6, 21, 12));
        let i = incident_irradiance(sun, 0.0, 0.0, 700.0, 100.0, 0.2);
        assert!((i - (700.0 * sun.up + 100.0)).abs() < 1e-9);
    }

    #[test]
    fn vector_is_unit() {
        let site = Site::default();
        for h in 0..24 {
            let s = sun_vector(&site, at(8, 3, h));
            let norm = (s.east * s.east + s.north * s.north + s.up * s.up).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
