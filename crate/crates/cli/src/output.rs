//! Run directories, reports and tabular output.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use lan_diffusion::Trajectory;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex digits of the config hash kept in the directory name.
const RUN_ID_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Bin => "bin",
        }
    }
}

/// `sha256(config || seed_le)`, truncated.
pub fn run_id(config_text: &str, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    hasher.update(seed.to_le_bytes());
    hex::encode(hasher.finalize())[..RUN_ID_LEN].to_string()
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(out_dir: &Path, config_text: &str, seed: u64) -> Result<Self> {
        let path = out_dir.join(run_id(config_text, seed));
        fs::create_dir_all(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.file(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Write `traj` as `<stem>.<ext>`.
    pub fn write_trajectory(
        &self,
        stem: &str,
        traj: &Trajectory,
        format: Format,
    ) -> Result<PathBuf> {
        let path = self.file(&format!("{stem}.{}", format.extension()));
        let file = BufWriter::new(
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
        );
        match format {
            Format::Csv => traj.write_csv(file)?,
            Format::Bin => traj.write_bin(file)?,
            Format::Json => serde_json::to_writer(file, traj)?,
        }
        Ok(path)
    }

    /// A tidy table: one header row, then one row per record.
    pub fn write_table(
        &self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<PathBuf> {
        let path = self.file(name);
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Read a trajectory, choosing the decoder by file extension.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let reader = std::io::BufReader::new(file);
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => Trajectory::read_bin(reader)?,
        Some("json") => serde_json::from_reader(reader)?,
        _ => Trajectory::read_csv(reader, None)?,
    })
}

pub fn cells<I: IntoIterator<Item = f64>>(values: I) -> impl Iterator<Item = String> {
    values.into_iter().map(|v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_config_and_seed() {
        let a = run_id("x = 1", 0);
        assert_eq!(a.len(), RUN_ID_LEN);
        assert_eq!(a, run_id("x = 1", 0));
        assert_ne!(a, run_id("x = 1", 1));
        assert_ne!(a, run_id("x = 2", 0));
    }
}
