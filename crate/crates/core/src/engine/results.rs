use chrono::NaiveDateTime;

use crate::model::OutputVariable;
use crate::thermal::EnergyBalance;

/// One requested series.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub entity: String,
    pub variable: OutputVariable,
}

impl Column {
    /// `entity:variable [unit]`
    pub fn header(&self) -> String {
        format!("{}:{} [{}]", self.entity, self.variable.keyword(), self.variable.unit())
    }
}

/// How often each module was solved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModuleCounters {
    pub airflow_solves: u64,
    pub thermal_solves: u64,
    pub moisture_solves: u64,
}

/// Diagnostics over the reported horizon (warm-up excluded).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub counters: ModuleCounters,
    /// Largest `|Σ h_ri·A_j·(T_j − T_rm)| / Σ h_ri·A_j` seen after a solve.
    pub max_radiant_residual: f64,
    /// Per-zone energy budget integrated over the horizon, J.
    pub energy: Vec<EnergyBalance>,
    /// Largest zone mass-balance residual of an accepted airflow solution, kg/s.
    pub max_airflow_residual: f64,
    /// Steps whose iterative coupling hit the iteration limit.
    pub unconverged_coupling_steps: usize,
    /// Steps whose zone sweeps hit the sweep limit.
    pub unconverged_sweep_steps: usize,
    pub max_coupling_iterations: usize,
    /// Steps in which some zone exceeded saturation humidity.
    pub supersaturated_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub columns: Vec<Column>,
    pub timestamps: Vec<NaiveDateTime>,
    /// One row per step, one value per column.
    pub rows: Vec<Vec<f64>>,
    pub summary: RunSummary,
}

impl ResultSet {
    pub fn column_index(&self, entity: &str, variable: OutputVariable) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.entity == entity && c.variable == variable)
    }

    pub fn series(&self, column: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[column]).collect()
    }
}
