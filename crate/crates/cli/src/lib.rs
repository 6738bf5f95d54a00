//! Model files, command-line verbs and the local session service.

pub mod commands;
pub mod error;
pub mod report;
pub mod service;
pub mod session;
pub mod spec;
