//! Hourly weather series, `.wx.csv`.
//!
//! ```text
//! #codasim-weather 1
//! timestamp,dry_bulb,humidity_ratio,wind_speed,wind_direction,direct_normal,diffuse_horizontal,pressure
//! 2001-01-01T01:00:00,-1.5,0.0031,3.2,270,0,0,101325
//! ```
//!
//! `relative_humidity` (%) may replace `humidity_ratio` (kg/kg); `pressure`
//! (Pa) is optional and defaults to the standard atmosphere. Units are °C,
//! m/s, degrees from North, W/m². A record stamped `t` describes the hour
//! ending at `t`.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDateTime};

use crate::model::{Diagnostic, Location};
use crate::psychro::{humidity_ratio_from_rh, STANDARD_PRESSURE};

pub const WEATHER_MAGIC: &str = "#codasim-weather 1";
pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const MAX_DIAGNOSTICS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    pub timestamp: NaiveDateTime,
    /// °C
    pub dry_bulb: f64,
    /// kg/kg
    pub humidity_ratio: f64,
    /// m/s
    pub wind_speed: f64,
    /// Degrees from North.
    pub wind_direction: f64,
    /// W/m²
    pub direct_normal: f64,
    /// W/m²
    pub diffuse_horizontal: f64,
    /// Pa
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("weather record {missing} is not available")]
pub struct WeatherGap {
    pub missing: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub records: Vec<WeatherRecord>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<NaiveDateTime> {
        self.records.first().map(|r| r.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<NaiveDateTime> {
        self.records.last().map(|r| r.timestamp)
    }

    fn record(&self, t: NaiveDateTime) -> Result<&WeatherRecord, WeatherGap> {
        let gap = WeatherGap { missing: t };
        let first = self.first_timestamp().ok_or(gap.clone())?;
        let offset = t - first;
        if offset < Duration::zero() || offset.num_seconds() % 3600 != 0 || offset.subsec_nanos() != 0 {
            return Err(gap);
        }
        self.records
            .get((offset.num_seconds() / 3600) as usize)
            .filter(|r| r.timestamp == t)
            .ok_or(gap)
    }

    /// Weather at `t`, linearly interpolated between the surrounding hourly
    /// records. Inside the hour covered by the first record, that record holds.
    pub fn at(&self, t: NaiveDateTime) -> Result<WeatherRecord, WeatherGap> {
        let first = self.first_timestamp().ok_or(WeatherGap { missing: t })?;
        if t < first && first - t < Duration::hours(1) {
            return Ok(WeatherRecord {
                timestamp: t,
                ..self.records[0]
            });
        }
        let offset = (t - first).num_milliseconds();
        let hour_ms = 3_600_000;
        let below = first + Duration::milliseconds(offset.div_euclid(hour_ms) * hour_ms);
        let lo = self.record(below)?;
        let rem = offset.rem_euclid(hour_ms);
        if rem == 0 {
            return Ok(*lo);
        }
        let hi = self.record(below + Duration::hours(1))?;
        let w = rem as f64 / hour_ms as f64;
        let mix = |a: f64, b: f64| a + (b - a) * w;
        let dir = {
            // shortest way round the compass
            let d = (hi.wind_direction - lo.wind_direction + 540.0).rem_euclid(360.0) - 180.0;
            (lo.wind_direction + d * w).rem_euclid(360.0)
        };
        Ok(WeatherRecord {
            timestamp: t,
            dry_bulb: mix(lo.dry_bulb, hi.dry_bulb),
            humidity_ratio: mix(lo.humidity_ratio, hi.humidity_ratio),
            wind_speed: mix(lo.wind_speed, hi.wind_speed),
            wind_direction: dir,
            direct_normal: mix(lo.direct_normal, hi.direct_normal),
            diffuse_horizontal: mix(lo.diffuse_horizontal, hi.diffuse_horizontal),
            pressure: mix(lo.pressure, hi.pressure),
        })
    }

    pub fn mean_dry_bulb(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.dry_bulb).sum::<f64>() / self.records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Timestamp,
    DryBulb,
    HumidityRatio,
    RelativeHumidity,
    WindSpeed,
    WindDirection,
    DirectNormal,
    DiffuseHorizontal,
    Pressure,
}

impl Column {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "timestamp" => Column::Timestamp,
            "dry_bulb" => Column::DryBulb,
            "humidity_ratio" => Column::HumidityRatio,
            "relative_humidity" => Column::RelativeHumidity,
            "wind_speed" => Column::WindSpeed,
            "wind_direction" => Column::WindDirection,
            "direct_normal" => Column::DirectNormal,
            "diffuse_horizontal" => Column::DiffuseHorizontal,
            "pressure" => Column::Pressure,
            _ => return None,
        })
    }

    /// Accepted closed range.
    fn range(self) -> (f64, f64) {
        match self {
            Column::DryBulb => (-90.0, 70.0),
            Column::HumidityRatio => (0.0, 0.05),
            Column::RelativeHumidity => (0.0, 100.0),
            Column::WindSpeed => (0.0, 100.0),
            Column::WindDirection => (0.0, 360.0),
            Column::DirectNormal | Column::DiffuseHorizontal => (0.0, 2000.0),
            Column::Pressure => (30_000.0, 120_000.0),
            Column::Timestamp => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

const REQUIRED: [Column; 6] = [
    Column::Timestamp,
    Column::DryBulb,
    Column::WindSpeed,
    Column::WindDirection,
    Column::DirectNormal,
    Column::DiffuseHorizontal,
];

fn diag(line: usize, column: usize, rule: impl Into<String>) -> Diagnostic {
    Diagnostic {
        entity: "weather".into(),
        rule: rule.into(),
        location: Some(Location { line, column }),
    }
}

/// Parses a weather file. Never panics; every diagnostic has a location.
pub fn parse_weather(bytes: &[u8]) -> Result<WeatherSeries, Vec<Diagnostic>> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
            let col = prefix.len() - prefix.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
            return Err(vec![diag(line, col, "invalid UTF-8")]);
        }
    };
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let mut diags = Vec::new();

    match lines.next() {
        Some((_, l)) if l.trim_end() == WEATHER_MAGIC => {}
        _ => return Err(vec![diag(1, 1, format!("expected header line \"{WEATHER_MAGIC}\""))]),
    }
    let Some((hline, header)) = lines.next() else {
        return Err(vec![diag(2, 1, "missing column header")]);
    };
    let mut columns = Vec::new();
    let mut col = 1;
    for name in header.split(',') {
        match Column::from_name(name.trim()) {
            Some(c) if columns.contains(&c) => diags.push(diag(hline, col, format!("duplicate column \"{}\"", name.trim()))),
            Some(c) => columns.push(c),
            None => diags.push(diag(hline, col, format!("unknown column \"{}\"", name.trim()))),
        }
        col += name.len() + 1;
    }
    for req in REQUIRED {
        if !columns.contains(&req) {
            diags.push(diag(hline, 1, format!("missing column {req:?}")));
        }
    }
    let has_ratio = columns.contains(&Column::HumidityRatio);
    let has_rh = columns.contains(&Column::RelativeHumidity);
    if has_ratio == has_rh {
        diags.push(diag(hline, 1, "exactly one of humidity_ratio and relative_humidity is required"));
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let mut records: Vec<WeatherRecord> = Vec::new();
    let mut rows = 0usize;
    let mut ended_at = None;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            ended_at.get_or_insert(lineno);
            continue;
        }
        if let Some(blank) = ended_at {
            diags.push(diag(blank, 1, "blank line inside data"));
            ended_at = None;
        }
        if diags.len() >= MAX_DIAGNOSTICS {
            break;
        }
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            diags.push(diag(lineno, 1, format!("expected {} fields, found {}", columns.len(), fields.len())));
            continue;
        }
        let mut rec = WeatherRecord {
            timestamp: NaiveDateTime::default(),
            dry_bulb: 0.0,
            humidity_ratio: 0.0,
            wind_speed: 0.0,
            wind_direction: 0.0,
            direct_normal: 0.0,
            diffuse_horizontal: 0.0,
            pressure: STANDARD_PRESSURE,
        };
        let mut rh = None;
        let mut ok = true;
        let mut ts_col = 1;
        let mut col = 1;
        for (field, &c) in fields.iter().zip(&columns) {
            let f = field.trim();
            if c == Column::Timestamp {
                ts_col = col;
                match NaiveDateTime::parse_from_str(f, TIME_FORMAT) {
                    Ok(t) => rec.timestamp = t,
                    Err(_) => {
                        diags.push(diag(lineno, col, format!("bad timestamp \"{f}\" (expected YYYY-MM-DDTHH:MM:SS)")));
                        ok = false;
                    }
                }
            } else {
                let (lo, hi) = c.range();
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() && (lo..=hi).contains(&v) => match c {
                        Column::DryBulb => rec.dry_bulb = v,
                        Column::HumidityRatio => rec.humidity_ratio = v,
                        Column::RelativeHumidity => rh = Some(v),
                        Column::WindSpeed => rec.wind_speed = v,
                        Column::WindDirection => rec.wind_direction = v,
                        Column::DirectNormal => rec.direct_normal = v,
                        Column::DiffuseHorizontal => rec.diffuse_horizontal = v,
                        Column::Pressure => rec.pressure = v,
                        Column::Timestamp => {}
                    },
                    Ok(v) => {
                        diags.push(diag(lineno, col, format!("{c:?} {v} out of range [{lo}, {hi}]")));
                        ok = false;
                    }
                    Err(_) => {
                        diags.push(diag(lineno, col, format!("{c:?}: \"{f}\" is not a number")));
                        ok = false;
                    }
                }
            }
            col += field.len() + 1;
        }
        if !ok {
            continue;
        }
        if let Some(rh) = rh {
            rec.humidity_ratio = humidity_ratio_from_rh(rec.dry_bulb, rh, rec.pressure);
            if !(0.0..=0.05).contains(&rec.humidity_ratio) {
                diags.push(diag(lineno, 1, "humidity out of range [0, 0.05] after conversion"));
                continue;
            }
        }
        if let Some(prev) = records.last() {
            let step = rec.timestamp - prev.timestamp;
            if step == Duration::zero() {
                diags.push(diag(lineno, ts_col, format!("duplicated timestamp {}", rec.timestamp.format(TIME_FORMAT))));
                continue;
            } else if step < Duration::zero() {
                diags.push(diag(lineno, ts_col, "non-monotone timestamp"));
                continue;
            } else if step != Duration::hours(1) {
                diags.push(diag(
                    lineno,
                    ts_col,
                    format!("gap: expected {}", (prev.timestamp + Duration::hours(1)).format(TIME_FORMAT)),
                ));
                continue;
            }
        }
        records.push(rec);
    }
    if rows == 0 && diags.is_empty() {
        diags.push(diag(3, 1, "no records"));
    }
    if diags.is_empty() {
        Ok(WeatherSeries { records })
    } else {
        Err(diags)
    }
}

/// Writes `series` with a humidity-ratio column; values round-trip exactly.
pub fn write_weather(series: &WeatherSeries) -> String {
    let mut s = String::new();
    s.push_str(WEATHER_MAGIC);
    s.push('\n');
    s.push_str("timestamp,dry_bulb,humidity_ratio,wind_speed,wind_direction,direct_normal,diffuse_horizontal,pressure\n");
    for r in &series.records {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.timestamp.format(TIME_FORMAT),
            r.dry_bulb,
            r.humidity_ratio,
            r.wind_speed,
            r.wind_direction,
            r.direct_normal,
            r.diffuse_horizontal,
            r.pressure
        );
    }
    s
}

/// Constant weather, one record per hour from `start` inclusive.
pub fn constant_weather(start: NaiveDateTime, hours: usize, template: &WeatherRecord) -> WeatherSeries {
    WeatherSeries {
        records: (0..hours)
            .map(|h| WeatherRecord {
                timestamp: start + Duration::hours(h as i64),
                ..*template
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2001, 1, 1).unwrap().and_hms_opt(1, 0, 0).unwrap()
    }

    fn template() -> WeatherRecord {
        WeatherRecord {
            timestamp: t0(),
            dry_bulb: 10.0,
            humidity_ratio: 0.006,
            wind_speed: 2.0,
            wind_direction: 180.0,
            direct_normal: 0.0,
            diffuse_horizontal: 0.0,
            pressure: STANDARD_PRESSURE,
        }
    }

    #[test]
    fn full_year_round_trip() {
        let mut series = constant_weather(t0(), 8760, &template());
        for (i, r) in series.records.iter_mut().enumerate() {
            r.dry_bulb = 10.0 + (i as f64 * 0.1).sin() * 7.3;
        }
        let text = write_weather(&series);
        let back = parse_weather(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 8760);
        assert_eq!(back, series);
    }

    #[test]
    fn relative_humidity_is_converted() {
        let text = format!(
            "{WEATHER_MAGIC}\ntimestamp,dry_bulb,relative_humidity,wind_speed,wind_direction,direct_normal,diffuse_horizontal\n2001-01-01T01:00:00,20,50,0,0,0,0\n"
        );
        let s = parse_weather(text.as_bytes()).unwrap();
        assert!((s.records[0].humidity_ratio - 7.26e-3).abs() < 5e-6);
    }

    #[test]
    fn duplicated_timestamp_is_located() {
        let text = format!(
            "{WEATHER_MAGIC}\ntimestamp,dry_bulb,humidity_ratio,wind_speed,wind_direction,direct_normal,diffuse_horizontal\n\
             2001-01-01T01:00:00,5,0.004,0,0,0,0\n2001-01-01T01:00:00,5,0.004,0,0,0,0\n"
        );
        let d = parse_weather(text.as_bytes()).unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(d[0].rule.contains("duplicated"));
        assert_eq!(d[0].location, Some(Location { line: 4, column: 1 }));
    }

    #[test]
    fn gaps_and_ranges_are_reported() {
        let text = format!(
            "{WEATHER_MAGIC}\ntimestamp,dry_bulb,humidity_ratio,wind_speed,wind_direction,direct_normal,diffuse_horizontal\n\
             2001-01-01T01:00:00,5,0.004,0,0,0,0\n2001-01-01T03:00:00,5,0.004,0,0,0,0\n2001-01-01T04:00:00,5,0.9,0,0,-1,0\n"
        );
        let d = parse_weather(text.as_bytes()).unwrap_err();
        assert!(d[0].rule.starts_with("gap"));
        assert_eq!(d[1].location.unwrap().line, 5);
        assert_eq!(d[1].location.unwrap().column, 23);
        assert!(d.iter().all(|x| x.location.is_some()));
    }

    #[test]
    fn interpolates_between_hours() {
        let mut series = constant_weather(t0(), 2, &template());
        series.records[1].dry_bulb = 20.0;
        series.records[1].wind_direction = 20.0;
        series.records[0].wind_direction = 340.0;
        let mid = series.at(t0() + Duration::minutes(30)).unwrap();
        assert!((mid.dry_bulb - 15.0).abs() < 1e-12);
        assert!((mid.wind_direction - 0.0).abs() < 1e-9 || (mid.wind_direction - 360.0).abs() < 1e-9);
        assert_eq!(
            series.at(t0() + Duration::hours(2)).unwrap_err().missing,
            t0() + Duration::hours(2)
        );
        assert_eq!(series.at(t0() - Duration::minutes(10)).unwrap().dry_bulb, 10.0);
        assert!(series.at(t0() - Duration::hours(1)).is_err());
    }

    #[test]
    fn garbage_never_panics() {
        for s in ["", "\u{0}", "#codasim-weather 1", "#codasim-weather 1\n,,,\n", "#codasim-weather 1\n\n\n"] {
            let d = parse_weather(s.as_bytes()).unwrap_err();
            assert!(d.iter().all(|x| x.location.is_some()));
        }
        assert!(parse_weather(&[0xff, 0xfe]).is_err());
    }
}
