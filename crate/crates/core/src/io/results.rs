//! Result files: `.out.csv` tables and gnuplot-ready long-format series.

use std::io::Write;

use crate::engine::ResultSet;

use super::weather::TIME_FORMAT;

/// `value` with nine significant digits; scientific notation outside 1e-5..1e9.
pub fn format_value(value: f64) -> String {
    if !value.is_finite() {
        return if value.is_nan() { "NaN".into() } else if value > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if value == 0.0 {
        return "0.00000000".into();
    }
    let sci = format!("{value:.8e}");
    let exponent: i32 = sci[sci.find('e').unwrap_or(sci.len() - 1) + 1..].parse().unwrap_or(0);
    if (-5..9).contains(&exponent) {
        format!("{value:.prec$}", prec = (8 - exponent) as usize)
    } else {
        sci
    }
}

/// Writes `timestamp,<entity:variable [unit]>...` and one row per step.
/// Returns the number of bytes written.
pub fn write_results(results: &ResultSet, sink: &mut impl Write) -> std::io::Result<usize> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let header = std::iter::once("timestamp".to_string()).chain(results.columns.iter().map(|c| c.header()));
    csv.write_record(header)?;
    for (t, row) in results.timestamps.iter().zip(&results.rows) {
        let record = std::iter::once(t.format(TIME_FORMAT).to_string()).chain(row.iter().map(|&v| format_value(v)));
        csv.write_record(record)?;
    }
    let bytes = csv.into_inner().map_err(|e| e.into_error())?;
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

/// One gnuplot data block per column, separated by two blank lines so that
/// `plot "file" index k using 1:2` selects series `k`.
pub fn write_plot_data(results: &ResultSet, sink: &mut impl Write) -> std::io::Result<usize> {
    let mut out = String::new();
    for (k, column) in results.columns.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {}\n", column.header()));
        for (t, row) in results.timestamps.iter().zip(&results.rows) {
            out.push_str(&format!("{} {}\n", t.format(TIME_FORMAT), format_value(row[k])));
        }
    }
    sink.write_all(out.as_bytes())?;
    Ok(out.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Column, RunSummary};
    use crate::model::OutputVariable;
    use chrono::NaiveDate;

    fn results(columns: Vec<Column>, steps: usize) -> ResultSet {
        let t0 = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap().and_hms_opt(1, 0, 0).unwrap();
        ResultSet {
            rows: (0..steps).map(|i| columns.iter().map(|_| i as f64 * 0.1).collect()).collect(),
            timestamps: (0..steps).map(|i| t0 + chrono::Duration::hours(i as i64)).collect(),
            columns,
            summary: RunSummary::default(),
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_value(20.0), "20.0000000");
        assert_eq!(format_value(-0.123456789123), "-0.123456789");
        assert_eq!(format_value(1.5e-7), "1.50000000e-7");
        assert_eq!(format_value(123456789.0), "123456789");
        assert_eq!(format_value(2.5e9), "2.50000000e9");
        assert_eq!(format_value(f64::NAN), "NaN");
        // Rounding up across a decade keeps nine digits.
        assert_eq!(format_value(9.9999999999), "10.0000000");
    }

    #[test]
    fn header_matches_requests() {
        let cols = vec![
            Column { entity: "z1".into(), variable: OutputVariable::AirTemperature },
            Column { entity: "c,1".into(), variable: OutputVariable::LinkFlow },
        ];
        let mut buf = Vec::new();
        let n = write_results(&results(cols, 3), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(n, text.len());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "timestamp,z1:air-temperature [degC],\"c,1:link-flow [kg/s]\"");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "2001-01-01T02:00:00,0.100000000,0.100000000");
    }

    #[test]
    fn empty_request_list_gives_header_only() {
        let mut buf = Vec::new();
        write_results(&results(Vec::new(), 0), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "timestamp\n");
    }

    #[test]
    fn plot_blocks_are_indexed() {
        let cols = vec![
            Column { entity: "a".into(), variable: OutputVariable::Pressure },
            Column { entity: "b".into(), variable: OutputVariable::Pressure },
        ];
        let mut buf = Vec::new();
        write_plot_data(&results(cols, 2), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.split("\n\n\n").count(), 2);
        assert!(text.starts_with("# a:pressure [Pa]\n2001-01-01T01:00:00 0.00000000\n"));
    }
}
