//! File formats, parallel campaigns, report rendering and the command-line
//! front end for `fairscreen-core`.

pub mod cli;
pub mod config;
pub mod documents;
pub mod figure;
pub mod io;
pub mod report;
pub mod runner;
