//! Output-file plumbing: atomic writes and float formatting.

use crate::{CliError, CliResult};
use std::path::{Path, PathBuf};

pub use ppls::persistence::fmt_float;

/// Writes a file atomically: the contents go to a temporary file in the
/// destination directory which is then renamed over the target, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let finish = |r: std::io::Result<()>, what: &Path| {
        r.map_err(|e| CliError::Data(format!("cannot write {}: {e}", what.display())))
    };
    finish(std::fs::write(&tmp, contents), &tmp)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::Data(format!(
            "cannot move output into place at {}: {e}",
            path.display()
        )));
    }
    Ok(())
}

/// `model.json` + `report` → `model.report.json`: the default location of a
/// secondary output next to a primary one.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let mut name = String::with_capacity(stem.len() + suffix.len() + 1);
    name.push_str(&stem);
    name.push('.');
    name.push_str(suffix);
    path.with_file_name(name)
}

/// One CSV line from preformatted fields (no quoting: every field the CLI
/// writes is a number, a bare identifier, or an empty cell).
pub fn csv_line<I: IntoIterator<Item = String>>(fields: I) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}
