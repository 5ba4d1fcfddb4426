//! Command-line and HTTP front end: model fitting, scenario runs, the
//! financing simulation and the `/v1/` API.

pub mod cli;
pub mod server;
pub mod session;
