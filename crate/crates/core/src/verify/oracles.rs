//! Reference solutions the bundled cases are compared against. None of
//! them calls the engine's solvers.

use crate::model::{BuildingDescription, CpSector, Layer, SeparationComponent, ZoneComponent, EXTERIOR};
use crate::psychro::GRAVITY;

/// Steady heat flux through films and layers in series, W/m².
pub fn series_flux(h_inside: f64, layers: &[Layer], h_outside: f64, delta_t: f64) -> f64 {
    let r: f64 = 1.0 / h_inside + layers.iter().map(|l| l.thickness / l.conductivity).sum::<f64>() + 1.0 / h_outside;
    delta_t / r
}

/// Root of a decreasing function on `[lo, hi]` by plain bisection.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `residual_k(p) = 0` for every zone by nesting one bisection per
/// zone: the outer one on `p_0`, each inner one on the next pressure with
/// all outer pressures fixed. Needs each residual to decrease with its own
/// pressure once the inner zones have been balanced.
pub fn nested_bisection(n: usize, bound: f64, residual: &dyn Fn(&[f64], usize) -> f64) -> Vec<f64> {
    fn level(k: usize, p: &mut Vec<f64>, bound: f64, residual: &dyn Fn(&[f64], usize) -> f64) {
        if k == p.len() {
            return;
        }
        let root = bisect(
            |x| {
                p[k] = x;
                level(k + 1, p, bound, residual);
                residual(p, k)
            },
            -bound,
            bound,
        );
        p[k] = root;
        level(k + 1, p, bound, residual);
    }
    let mut p = vec![0.0; n];
    level(0, &mut p, bound, residual);
    p
}

fn cp_lookup(table: &[CpSector], incidence: f64) -> f64 {
    table
        .iter()
        .find(|s| s.from <= incidence && incidence < s.to)
        .map_or(f64::NAN, |s| s.cp)
}

/// Mass balance of a network of power-law cracks and extract vents at
/// uniform air density `rho` (all zones at outdoor temperature).
pub struct CrackNetwork {
    /// (from zone, to zone or `None` for outdoors, K, n, elevation, exterior pressure)
    links: Vec<(usize, Option<usize>, f64, f64, f64, f64)>,
    extracts: Vec<(usize, f64)>,
    reference_heights: Vec<f64>,
    rho: f64,
}

impl CrackNetwork {
    pub fn new(desc: &BuildingDescription, rho: f64, wind_speed: f64, wind_direction: f64) -> Self {
        let zone = |id: &str| desc.zones.iter().position(|z| z.id == id);
        let mut links = Vec::new();
        for ia in &desc.inter_ambiances {
            let a = zone(&ia.zone_a).expect("zone_a resolves");
            let b = if ia.zone_b == EXTERIOR { None } else { zone(&ia.zone_b) };
            for c in &ia.components {
                if let SeparationComponent::SmallOpening(o) = c {
                    let wind = match (b, o.azimuth) {
                        (None, Some(az)) => {
                            let cp = cp_lookup(&desc.site.cp_table, (wind_direction - az).rem_euclid(360.0));
                            0.5 * rho * cp * wind_speed * wind_speed
                        }
                        _ => 0.0,
                    };
                    links.push((a, b, o.coefficient, o.exponent, o.elevation, wind));
                }
            }
        }
        let mut extracts = Vec::new();
        for (z, zone) in desc.zones.iter().enumerate() {
            for c in &zone.components {
                if let ZoneComponent::VmcVent(v) = c {
                    extracts.push((z, v.extract.values[0]));
                }
            }
        }
        CrackNetwork {
            links,
            extracts,
            reference_heights: desc.zones.iter().map(|z| z.reference_height).collect(),
            rho,
        }
    }

    /// Net inflow into zone `k`, kg/s.
    pub fn residual(&self, p: &[f64], k: usize) -> f64 {
        let side = |zone: Option<usize>, z: f64, wind: f64| match zone {
            Some(i) => p[i] - self.rho * GRAVITY * (z - self.reference_heights[i]),
            None => wind - self.rho * GRAVITY * z,
        };
        let mut inflow = 0.0;
        for &(a, b, coefficient, exponent, z, wind) in &self.links {
            let dp = side(Some(a), z, 0.0) - side(b, z, wind);
            let flow = dp.signum() * coefficient * dp.abs().powf(exponent);
            if a == k {
                inflow -= flow;
            }
            if b == Some(k) {
                inflow += flow;
            }
        }
        for &(z, extract) in &self.extracts {
            if z == k {
                inflow -= extract;
            }
        }
        inflow
    }
}

/// One-way flows through a vertical opening split into `strips` horizontal
/// strips, with the pressure difference `dp0 + slope·s` at height `s`.
pub fn strip_flows(
    width: f64,
    height: f64,
    discharge: f64,
    rho_mean: f64,
    dp0: f64,
    slope: f64,
    strips: usize,
) -> (f64, f64) {
    let ds = height / strips as f64;
    let (mut forward, mut backward) = (0.0, 0.0);
    for i in 0..strips {
        let dp = dp0 + slope * (i as f64 + 0.5) * ds;
        let q = discharge * width * ds * (2.0 * rho_mean * dp.abs()).sqrt();
        if dp > 0.0 {
            forward += q;
        } else {
            backward += q;
        }
    }
    (forward, backward)
}

/// Stack-driven exchange through an opening joining two otherwise sealed
/// rooms: the reference pressure difference is found by bisection so
/// that the strip sums balance. Returns (forward, backward).
pub fn balanced_opening(width: f64, height: f64, discharge: f64, rho_from: f64, rho_to: f64, strips: usize) -> (f64, f64) {
    let slope = (rho_to - rho_from) * GRAVITY;
    let rho_mean = 0.5 * (rho_from + rho_to);
    let bound = slope.abs() * height + 1.0;
    let dp0 = bisect(
        |dp0| {
            let (f, b) = strip_flows(width, height, discharge, rho_mean, dp0, slope, strips);
            b - f
        },
        -bound,
        bound,
    );
    strip_flows(width, height, discharge, rho_mean, dp0, slope, strips)
}

/// Time constant of the closed two-node (room air, buffer) vapour system,
/// s: the non-zero eigenvalue of `[[-β/Ma, β/Ma], [β/Mb, -β/Mb]]` is
/// `-β·(1/Ma + 1/Mb)`.
pub fn buffer_time_constant(air_mass: f64, buffer_mass: f64, exchange: f64) -> f64 {
    1.0 / (exchange * (1.0 / air_mass + 1.0 / buffer_mass))
}
