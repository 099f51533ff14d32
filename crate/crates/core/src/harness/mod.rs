//! Scenario definitions, the closed-loop runner, metrics, comparisons, and
//! file formats used by the command-line front end.

pub mod envelope;
pub mod log;
pub mod metrics;
pub mod path;
pub mod scenario;

pub use envelope::{fit_envelope, EnvelopeFit};
pub use log::{csv_string, load_csv, read_csv, save_csv, write_csv, SimLog, StepRecord};
pub use metrics::{
    compare, compare_runs, compute_metrics, delta_rms_pct, first_crossing_station,
    peak_abs_yaw_rate, settle_station, ComparisonRow, Metrics,
};
pub use path::{PathReference, SpeedProfile};
pub use scenario::{
    run_scenario, sweep, ControllerKind, InitialState, ScenarioConfig, SpeedPiConfig, SweepParam,
};
