//! Scenario runner: JSON scenarios in, `report.json` / `report.csv` out.

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;
pub mod schedule;

pub use error::CliError;
pub use run::{run_bytes, Outcome, RunOptions};
pub use schedule::schedule_bytes;
