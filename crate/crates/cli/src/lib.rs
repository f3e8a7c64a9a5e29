//! Experiment driver for the photon-pinn simulator.
//!
//! Artifacts of `train`:
//! - `metrics.csv`: one row per epoch with columns
//!   `epoch,train_loss,val_mse,cum_inferences,cum_energy_J,cum_modeled_time_s`.
//!   `val_mse` is filled on validation epochs and empty otherwise; energy is
//!   empty for architectures without an energy figure. Contents depend only
//!   on the config, never on timing or thread count.
//! - `wall_clock.csv`: `epoch,wall_clock_s`, measured time per epoch.
//! - `summary.json`: status, final metrics, modeled totals, wall clock and
//!   the full config echo.
//! - `checkpoint.json`: latest chip checkpoint.

pub mod commands;
pub mod config;

pub use commands::{cmd_cost, cmd_eval, cmd_mesh_demo, cmd_train, CliError};
pub use config::{Arch, ProblemSel, RunConfig};
