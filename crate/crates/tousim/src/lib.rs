//! File formats, scenario runner and certification suite for the
//! storage-sharing simulator. The models themselves live in `tousim-core`.

pub mod config;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod output;
pub mod synthetic;
pub mod validate;

pub use config::{parse_schedule, serialize_schedule, ConfigFile};
pub use error::HarnessError;
pub use harness::{run_scenario, ComparisonReport, DemandSource, Mechanism, Scenario};
pub use ingest::{ingest_load_csv, ProfileCache};
pub use output::emit_plot_data;
pub use synthetic::SyntheticSpec;
pub use validate::{run_validation, ValidationReport};
