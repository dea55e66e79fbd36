//! Atomic output files and the manifests written beside them.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clirkit::train::{MLM_STAGE, RETRIEVAL_STAGE};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn temp_path(path: &Path) -> PathBuf {
    sibling(path, &format!(".tmp-{}", std::process::id()))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, ".manifest.json")
}

/// Writes a file through a temporary sibling that is renamed into place
/// only after `fill` succeeds.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Directory variant of [`write_atomic`]; an existing directory at `path`
/// is replaced.
pub fn write_dir_atomic(path: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let tmp = temp_path(path);
    let _ = fs::remove_dir_all(&tmp);
    let result = (|| {
        fill(&tmp)?;
        if path.exists() {
            fs::remove_dir_all(path)?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

/// SHA-256 of a file, or of a directory's files in name order.
pub fn digest_path(path: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            h.update(e.file_name().unwrap_or_default().as_encoded_bytes());
            h.update(digest_path(&e)?.as_bytes());
        }
    } else {
        let mut f = fs::File::open(path)?;
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    created_unix: u64,
    seed: u64,
    config_sha256: String,
    config: &'a Config,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    training_schedule: [clirkit::train::StageSchedule; 2],
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    summary: serde_json::Value,
}

fn records(paths: &[&Path]) -> anyhow::Result<Vec<FileRecord>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileRecord {
                path: p.display().to_string(),
                sha256: digest_path(p).map_err(|e| anyhow::anyhow!("hashing {}: {e}", p.display()))?,
            })
        })
        .collect()
}

/// Writes `<primary>.manifest.json` describing one command run.
pub fn write_manifest(
    command: &str,
    config: &Config,
    inputs: &[&Path],
    outputs: &[&Path],
    summary: serde_json::Value,
) -> anyhow::Result<()> {
    let primary = outputs.first().expect("at least one output");
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        seed: config.seed,
        config_sha256: config.hash(),
        config,
        inputs: records(inputs)?,
        outputs: records(outputs)?,
        training_schedule: [MLM_STAGE, RETRIEVAL_STAGE],
        summary,
    };
    write_atomic(&manifest_path(primary), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.txt");
        let r = write_atomic(&out, |w| {
            w.write_all(b"partial")?;
            anyhow::bail!("boom")
        });
        assert!(r.is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn directory_digest_is_order_independent_of_creation() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        fs::write(a.path().join("x"), "1").unwrap();
        fs::write(a.path().join("y"), "2").unwrap();
        fs::write(b.path().join("y"), "2").unwrap();
        fs::write(b.path().join("x"), "1").unwrap();
        assert_eq!(digest_path(a.path()).unwrap(), digest_path(b.path()).unwrap());
    }

    #[test]
    fn manifest_records_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.txt");
        fs::write(&out, "x").unwrap();
        let cfg = Config::default();
        write_manifest("test", &cfg, &[], &[&out], serde_json::Value::Null).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
        assert_eq!(m["config_sha256"], cfg.hash());
        assert_eq!(m["outputs"][0]["sha256"], digest_path(&out).unwrap());
    }
}
