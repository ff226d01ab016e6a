use std::io::Write;
use std::path::Path;

use crate::error::{CorfError, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CorfError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CorfError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CorfError::io(path, e))?;
    tmp.persist(path).map_err(|e| CorfError::io(path, e.error))?;
    Ok(())
}
