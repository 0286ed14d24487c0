//! Atomic output placement and the provenance stamp carried by every file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Attribution written into every artifact.
#[derive(Clone, Debug, Serialize)]
pub struct Stamp {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub seed: u64,
    pub config_digest: String,
}

/// Version of the CLI's own file layouts (CSV headers, provenance.json).
pub const OUTPUT_FORMAT_VERSION: u32 = 1;

impl Stamp {
    pub fn new(seed: u64, config_digest: String) -> Self {
        Stamp {
            tool: "voxtriage",
            version: env!("CARGO_PKG_VERSION"),
            format_version: OUTPUT_FORMAT_VERSION,
            seed,
            config_digest,
        }
    }

    /// Body of the `#` comment line that opens every CSV output.
    pub fn comment(&self) -> String {
        format!(
            "{} {} format={} seed={} config_digest={}",
            self.tool, self.version, self.format_version, self.seed, self.config_digest
        )
    }
}

/// An output directory built under a temporary sibling name and renamed into
/// place only when every file has been written.
pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
}

impl StagedDir {
    pub fn create(target: &Path) -> Result<Self, CliError> {
        if target.exists() && fs::read_dir(target).map(|mut d| d.next().is_some()).unwrap_or(true) {
            return Err(CliError::usage(format!("output directory {} exists and is not empty", target.display())));
        }
        let name = target
            .file_name()
            .ok_or_else(|| CliError::usage(format!("bad output path {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(StagedDir { staging, target: target.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn commit(self) -> Result<PathBuf, CliError> {
        if self.target.exists() {
            fs::remove_dir(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if self.staging.exists() {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_file_name(format!(
        ".{}.partial-{}",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV text with the provenance comment line in front.
pub fn stamped_csv(stamp: &Stamp, body: &[u8]) -> Vec<u8> {
    let mut out = format!("# {}\n", stamp.comment()).into_bytes();
    out.extend_from_slice(body);
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
