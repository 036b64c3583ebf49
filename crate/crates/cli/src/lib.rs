//! Command-line driver and local HTTP service for `texdeform`.

pub mod commands;
pub mod service;
