//! Command-line front end for `redsim-core`: scenario files, single runs,
//! variant × delay sweeps, the drop-law oracle and the goodput model.

pub mod cli;
pub mod execute;
pub mod oracle;
pub mod scenario_file;
pub mod sweep;

pub const VERSION_STRING: &str = concat!("redsim ", env!("CARGO_PKG_VERSION"));
