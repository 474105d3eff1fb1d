pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod sentiment;
pub mod sweep;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::Context;

use crate::{CmdResult, OrFail};

/// Writes `text` to `path`; failures are runtime failures.
pub fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .or_runtime()
}

pub fn create_dir(path: &Path) -> CmdResult {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .or_runtime()
}
