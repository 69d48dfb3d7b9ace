//! Sweeps over the takedown delay, robustness batteries and the statistics
//! used to summarise them.

pub mod robustness;
pub mod stats;
pub mod sweep;

pub use robustness::{
    audit_p_values, battery_variants, read_distributions, read_pairwise, robustness_battery,
    run_variants, write_distributions, write_pair_rows, write_pairwise, write_variant_cells,
    BatteryKind, PairRow, RobustnessReport, Variant, VariantCell, ROBUSTNESS_TAUS,
};
pub use stats::{
    bootstrap_ci, geometric_gof, isotonic_nonincreasing, loglog_slope, mann_whitney,
    mann_whitney_bonferroni, mann_whitney_exact, mann_whitney_normal, spearman, GoodnessOfFit,
    MannWhitney, PairwiseTest, SlopeFit,
};
pub use sweep::{
    log_grid, preset_tau_grid, read_sweep, run_seed, run_sweep, run_sweep_on, sweep_network,
    sweep_run, write_rows, write_sweep, BootstrapMode, Cell, Horizon, Metadata, Metric, RunSummary,
    SeedSchedule, SweepResult, SweepRow, SweepSpec, PLATFORM_MARKERS,
};
