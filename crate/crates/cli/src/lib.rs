//! Scenario runner for the headland turning planner.

pub mod commands;
pub mod render;
pub mod sweep;
pub mod trajectory_io;
