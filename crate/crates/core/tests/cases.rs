use codasim::engine::{run, RunConfig};
use codasim::io::{parse_building, parse_weather, serialize_building, write_results, write_weather};
use codasim::model::SimulationType;
use codasim::verify::{cases, run_case};

#[test]
fn every_bundled_case_passes() {
    for case in cases() {
        let report = run_case(case.id).unwrap_or_else(|e| panic!("{}: {e}", case.id));
        assert!(report.passed(), "{report}");
    }
}

#[test]
fn bundled_files_survive_serialization() {
    for case in cases() {
        let desc = case.description().unwrap();
        let again = parse_building(serialize_building(&desc).as_bytes()).unwrap();
        assert_eq!(desc, again, "{}", case.id);
        let weather = case.weather().unwrap();
        let back = parse_weather(write_weather(&weather).as_bytes()).unwrap();
        assert_eq!(weather.records.len(), back.records.len());
        for (a, b) in weather.records.iter().zip(&back.records) {
            assert_eq!(a.timestamp, b.timestamp);
            assert!((a.dry_bulb - b.dry_bulb).abs() < 1e-6, "{}", case.id);
        }
    }
}

#[test]
fn disabled_modules_report_nan() {
    let case = cases().iter().find(|c| c.id == "airflow-3zone").unwrap();
    let mut desc = case.description().unwrap();
    desc.simulation_type = SimulationType::ThermalOnly;
    let results = run(&desc, &case.weather().unwrap(), &RunConfig::default()).unwrap();
    let pressure = results.columns.iter().position(|c| c.header().contains(":pressure")).unwrap();
    assert!(results.series(pressure).iter().all(|p| p.is_nan()));

    let mut csv = Vec::new();
    write_results(&results, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("NaN"));
}
