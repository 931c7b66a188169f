//! CSV artifacts, the run manifest and all-or-nothing writes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Formats a float with 12 significant digits, fixed notation for moderate
/// magnitudes and scientific otherwise, trailing zeros removed.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A CSV file assembled in memory.
pub struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Table { name: name.into(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer.into_inner().context("flushing CSV buffer")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub subcommand: String,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_seconds: f64,
}

pub const MANIFEST: &str = "manifest.json";

/// Output files of one run, written together or not at all.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, table: Table) -> Result<()> {
        let name = table.name().to_string();
        self.files.push((name, table.into_bytes()?));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Writes every file and the manifest to temporaries in `dir`, then
    /// renames them into place. On failure the temporaries are removed.
    pub fn commit(self, dir: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files = self.files;
        files.push((MANIFEST.to_string(), serde_json::to_vec_pretty(manifest)?));
        let staged: Vec<(PathBuf, PathBuf)> = files
            .iter()
            .map(|(name, _)| (dir.join(format!(".{name}.tmp")), dir.join(name)))
            .collect();
        let result = (|| -> Result<()> {
            for ((tmp, _), (_, bytes)) in staged.iter().zip(&files) {
                fs::write(tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            }
            for (tmp, dst) in &staged {
                fs::rename(tmp, dst).with_context(|| format!("moving {} into place", dst.display()))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        Ok(staged.into_iter().map(|(_, dst)| dst).collect())
    }
}
