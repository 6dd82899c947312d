//! Small filesystem helpers shared by the harness.

use std::fs;
use std::path::Path;

use crate::error::Result;

/// Write `bytes` to `path` atomically: write a sibling temporary file and
/// rename it into place, so a crash or concurrent reader never sees a
/// partially written file.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
