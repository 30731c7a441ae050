//! Command-line front end: batch experiments, log analysis, field export, headless replay and
//! the live session server.

pub mod batch;
pub mod server;
pub mod tools;
