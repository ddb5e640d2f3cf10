//! Batch front end: bound tables, Riccati solutions, single-trial records
//! and seeded parameter sweeps written as CSV.

mod commands;
mod config;
mod sweep;

pub use commands::{
    cmd_bounds, cmd_riccati, cmd_simulate, write_record_csv, BoundLine, BoundsReport,
    RiccatiReport, SimulateArgs, SpectrumSource, SIMULATE_HEADER,
};
pub use config::{AbcSection, Estimator, SweepSection, SweepSpec, TimingSection, VariantName};
pub use sweep::{
    flux_from_grid, homodyne_config, ratios_path, run_sweep, sweep_model, RowStatus, SweepResult,
    SweepRow, RATIO_HEADER, SWEEP_HEADER,
};

/// Alias matching the subcommand name.
pub fn cmd_sweep(spec: &SweepSpec, output: &std::path::Path) -> crate::Result<SweepResult> {
    run_sweep(spec, output)
}
