//! Batch command-line frontend.
pub fn run() -> i32 { 0 }
