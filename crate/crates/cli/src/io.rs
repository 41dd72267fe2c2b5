use std::fs;
use std::io::Write;
use std::path::Path;

use odefit_core::series::{load_series, SeriesFormat};
use odefit_core::TimeSeries;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Writes via a sibling temp file and a rename, so readers never observe a
/// partially written output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    file.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Renders with a CSV writer callback into memory, then writes atomically.
pub fn write_with<F>(path: &Path, render: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> odefit_core::Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_series(path: &Path) -> CliResult<TimeSeries> {
    if !path.exists() {
        return Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    load_series(path, SeriesFormat::from_path(path)).map_err(|e| match e {
        odefit_core::Error::Io(source) => CliError::io(path, source),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

/// `# key: value` header lines shared by every CSV output.
pub fn provenance(config_hash: &str, seed: u64) -> Vec<String> {
    vec![format!("config_hash: {config_hash}"), format!("seed: {seed}")]
}
