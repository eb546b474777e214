use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use codasim::engine::{run, RunConfig};
use codasim::io::{parse_building, parse_weather, write_plot_data, write_results, write_weather, WeatherSeries};
use codasim::model::{BuildingDescription, CouplingMode, Diagnostic, SimulationType};
use codasim::verify::{cases, find_case, CaseReport, VerificationCase};

/// Multizone building simulation: thermal network, airflow network and moisture.
#[derive(Parser)]
#[command(name = "codasim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a building file; prints nothing when it is valid.
    Validate { building: PathBuf },
    /// Simulate and write the requested outputs as CSV.
    Run(RunArgs),
    /// Simulate and write gnuplot-ready series, one data block per output.
    PlotData(RunArgs),
    /// Bundled verification cases.
    Cases {
        #[command(subcommand)]
        action: CasesAction,
    },
}

#[derive(Args)]
struct RunArgs {
    building: PathBuf,
    weather: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Timestep in seconds.
    #[arg(long)]
    timestep: Option<f64>,
    /// Overrides the file's simulation type (e.g. thermal, ThermalOnly, thermal-airflow).
    #[arg(long, value_parser = parse_simulation_type)]
    sim_type: Option<SimulationType>,
    #[arg(long, value_enum)]
    coupling: Option<Coupling>,
    #[arg(long)]
    warmup_days: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Coupling {
    #[value(alias = "one-way")]
    Oneway,
    Iterative,
}

#[derive(Subcommand)]
enum CasesAction {
    /// List case ids with a one-line summary.
    List,
    /// Run one case or `all`; exits 1 if any check fails.
    Run {
        id: String,
        /// Run the cases concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Write the building and weather files of one case or `all` into a directory.
    Export { id: String, directory: PathBuf },
}

fn parse_simulation_type(s: &str) -> Result<SimulationType, String> {
    SimulationType::from_keyword(s).ok_or_else(|| {
        "expected one of thermal, thermal-airflow, airflow, thermal-airflow-moisture \
         (or ThermalOnly, ThermalAirflow, AirflowOnly, ThermalAirflowMoisture)"
            .to_string()
    })
}

/// Input was read but rejected; reported with exit code 1.
#[derive(Debug)]
struct Rejected(Vec<String>);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join("\n"))
    }
}

impl std::error::Error for Rejected {}

fn rejected(path: &Path, diagnostics: &[Diagnostic]) -> anyhow::Error {
    Rejected(diagnostics.iter().map(|d| format!("{}:{d}", path.display())).collect()).into()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_building(path: &Path) -> Result<BuildingDescription> {
    parse_building(&read(path)?).map_err(|d| rejected(path, &d))
}

fn load_weather(path: &Path) -> Result<WeatherSeries> {
    parse_weather(&read(path)?).map_err(|d| rejected(path, &d))
}

fn simulate(args: &RunArgs, plot: bool) -> Result<()> {
    let mut desc = load_building(&args.building)?;
    let weather = load_weather(&args.weather)?;
    if let Some(t) = args.sim_type {
        desc.simulation_type = t;
    }
    if let Some(c) = args.coupling {
        desc.coupling.mode = match c {
            Coupling::Oneway => CouplingMode::OneWay,
            Coupling::Iterative => CouplingMode::Iterative,
        };
    }
    let diagnostics = desc.validate();
    if !diagnostics.is_empty() {
        return Err(rejected(&args.building, &diagnostics));
    }
    let mut config = RunConfig::default();
    if let Some(dt) = args.timestep {
        config.timestep = dt;
    }
    if let Some(days) = args.warmup_days {
        config.warmup_days = days;
    }
    log::info!("running {} on {} weather records", desc.name, weather.len());
    let results = run(&desc, &weather, &config)?;
    let write = |sink: &mut dyn Write| -> std::io::Result<usize> {
        let mut sink = sink;
        if plot {
            write_plot_data(&results, &mut sink)
        } else {
            write_results(&results, &mut sink)
        }
    };
    match &args.output {
        Some(path) => {
            let mut file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            write(&mut file).with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            write(&mut stdout.lock()).context("cannot write to standard output")?;
        }
    }
    Ok(())
}

fn selected(id: &str) -> Result<Vec<&'static VerificationCase>> {
    if id == "all" {
        return Ok(cases().iter().collect());
    }
    match find_case(id) {
        Some(c) => Ok(vec![c]),
        None => {
            let ids: Vec<&str> = cases().iter().map(|c| c.id).collect();
            bail!("unknown case \"{id}\" (known: {})", ids.join(", "))
        }
    }
}

fn run_cases(id: &str, parallel: bool) -> Result<()> {
    let chosen = selected(id)?;
    let reports: Vec<Result<CaseReport>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = chosen.iter().map(|c| s.spawn(move || c.run())).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("case thread panicked").map_err(Into::into))
                .collect()
        })
    } else {
        chosen.iter().map(|c| c.run().map_err(Into::into)).collect()
    };
    let mut failed = Vec::new();
    for (case, report) in chosen.iter().zip(reports) {
        let report = report.with_context(|| format!("case {} could not run", case.id))?;
        print!("{report}");
        if !report.passed() {
            failed.push(case.id.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Rejected(vec![format!("failed cases: {}", failed.join(", "))]).into())
    }
}

fn export_cases(id: &str, directory: &Path) -> Result<()> {
    fs::create_dir_all(directory).with_context(|| format!("cannot create {}", directory.display()))?;
    for case in selected(id)? {
        let building = directory.join(format!("{}.bdn", case.id));
        fs::write(&building, case.building).with_context(|| format!("cannot write {}", building.display()))?;
        let weather = directory.join(format!("{}.wx.csv", case.id));
        fs::write(&weather, write_weather(&case.weather()?)).with_context(|| format!("cannot write {}", weather.display()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { building } => load_building(&building).map(|_| ()),
        Command::Run(args) => simulate(&args, false),
        Command::PlotData(args) => simulate(&args, true),
        Command::Cases { action } => match action {
            CasesAction::List => {
                for c in cases() {
                    println!("{:<22} {}", c.id, c.summary);
                }
                Ok(())
            }
            CasesAction::Run { id, parallel } => run_cases(&id, parallel),
            CasesAction::Export { id, directory } => export_cases(&id, &directory),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CODASIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Rejected>() {
            Some(r) => {
                eprintln!("{r}");
                ExitCode::from(1)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
