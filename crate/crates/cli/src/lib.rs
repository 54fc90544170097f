//! Config parsing, experiment dispatch and table output for the `wgqed` binary.

pub mod config;
pub mod run;
pub mod table;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{execute, write_outputs, Output};
pub use table::ResultTable;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Exit code for a failed run: bad inputs are config errors, everything
/// else is numerical.
pub fn exit_code(e: &wgqed_core::Error) -> i32 {
    use wgqed_core::Error::*;
    match e {
        InvalidInput(_) | Geometry(_) => exit::CONFIG,
        _ => exit::NUMERICAL,
    }
}
