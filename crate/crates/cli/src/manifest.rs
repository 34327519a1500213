//! Checkpoint manifest parsing and embedding-file ingestion.
//!
//! A manifest is a JSON document listing the per-checkpoint embedding files
//! in monitoring order, together with the corpus size each checkpoint was
//! drawn from and optional monitoring-parameter overrides:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "config": { "delta": 1e-3, "rho": 1.0, "n_observed": 2000 },
//!   "checkpoints": [
//!     { "checkpoint": 0, "path": "gen0000.csv", "n_total": 10000 },
//!     { "checkpoint": 1, "path": "gen0001.csv", "n_total": 10000 }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.  Checkpoint
//! indices must be strictly increasing.  Embedding files are sniffed by
//! magic bytes, so CSV and binary blocks can be mixed freely.  Config
//! precedence is command-line flag over manifest entry over built-in
//! default.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;
use sigma_core::gram::io::{self as gram_io, BINARY_MAGIC};
use sigma_core::gram::{self, EmbeddingBlock};
use sigma_core::MonitorConfig;

/// One checkpoint to ingest: index, resolved file path, corpus size.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub checkpoint: u64,
    pub path: PathBuf,
    pub n_total: u64,
}

/// Monitoring parameters a manifest may pin; unset fields defer to flags
/// and defaults.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub n_observed: Option<u64>,
    pub baseline: Option<u64>,
}

impl ConfigOverrides {
    /// Flag-level overrides win over `self`, which wins over defaults.
    pub fn resolve(&self, flags: &ConfigOverrides) -> MonitorConfig {
        let defaults = MonitorConfig::default();
        MonitorConfig {
            delta: flags.delta.or(self.delta).unwrap_or(defaults.delta),
            energy_cap: flags.rho.or(self.rho).unwrap_or(defaults.energy_cap),
            alpha: flags.alpha.or(self.alpha).unwrap_or(defaults.alpha),
            n_observed_target: flags
                .n_observed
                .or(self.n_observed)
                .unwrap_or(defaults.n_observed_target),
            baseline_checkpoint: flags
                .baseline
                .or(self.baseline)
                .unwrap_or(defaults.baseline_checkpoint),
        }
    }

    /// Whether any source pinned the observed-column count.
    pub fn pins_n_observed(&self, flags: &ConfigOverrides) -> bool {
        flags.n_observed.or(self.n_observed).is_some()
    }
}

/// Ordered checkpoint listing plus the manifest's own config overrides.
#[derive(Debug, Clone)]
pub struct CheckpointManifest {
    pub entries: Vec<ManifestEntry>,
    pub overrides: ConfigOverrides,
    pub path: PathBuf,
}

fn field_f64(map: &serde_json::Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| anyhow!("field {key:?} is not a number: {v}")),
    }
}

fn field_u64(map: &serde_json::Map<String, Value>, key: &str) -> Result<Option<u64>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| anyhow!("field {key:?} is not a nonnegative integer: {v}")),
    }
}

/// Parses and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<CheckpointManifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let root: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    let root = root
        .as_object()
        .ok_or_else(|| anyhow!("manifest root must be a JSON object"))?;
    match root.get("schema").and_then(Value::as_u64) {
        Some(1) => {}
        other => bail!("unsupported manifest schema {other:?}, expected 1"),
    }
    let overrides = match root.get("config") {
        None | Some(Value::Null) => ConfigOverrides::default(),
        Some(Value::Object(map)) => ConfigOverrides {
            delta: field_f64(map, "delta")?,
            rho: field_f64(map, "rho")?,
            alpha: field_f64(map, "alpha")?,
            n_observed: field_u64(map, "n_observed")?,
            baseline: field_u64(map, "baseline")?,
        },
        Some(other) => bail!("manifest config must be an object, got {other}"),
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let raw_entries = root
        .get("checkpoints")
        .and_then(Value::as_array)
        .ok_or_else(|| anyhow!("manifest needs a \"checkpoints\" array"))?;
    if raw_entries.is_empty() {
        bail!("manifest lists no checkpoints");
    }
    let mut entries = Vec::with_capacity(raw_entries.len());
    for (i, raw) in raw_entries.iter().enumerate() {
        let map = raw
            .as_object()
            .ok_or_else(|| anyhow!("checkpoint entry {i} is not an object"))?;
        let checkpoint = field_u64(map, "checkpoint")?
            .ok_or_else(|| anyhow!("checkpoint entry {i} is missing \"checkpoint\""))?;
        let rel = map
            .get("path")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("checkpoint entry {i} is missing \"path\""))?;
        let n_total = field_u64(map, "n_total")?
            .ok_or_else(|| anyhow!("checkpoint entry {i} is missing \"n_total\""))?;
        entries.push(ManifestEntry { checkpoint, path: base.join(rel), n_total });
    }
    for pair in entries.windows(2) {
        if pair[1].checkpoint <= pair[0].checkpoint {
            bail!(
                "checkpoint indices must be strictly increasing: {} then {}",
                pair[0].checkpoint,
                pair[1].checkpoint
            );
        }
    }
    Ok(CheckpointManifest { entries, overrides, path: path.to_path_buf() })
}

/// Loads one embedding file, sniffing the binary magic to pick a format.
pub fn load_block(path: &Path) -> Result<EmbeddingBlock> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let head = reader
        .fill_buf()
        .with_context(|| format!("reading {}", path.display()))?;
    let block = if head.starts_with(&BINARY_MAGIC) {
        gram_io::read_binary(&mut reader)
    } else {
        gram_io::read_csv(reader)
    };
    block.with_context(|| format!("parsing embedding file {}", path.display()))
}

/// Deterministically subsamples a block down to `n_observed` columns; the
/// kept set depends only on the seed and checkpoint index.
pub fn subsample(
    block: EmbeddingBlock,
    n_observed: u64,
    seed: u64,
    checkpoint: u64,
) -> Result<EmbeddingBlock> {
    let have = block.count() as u64;
    if have < n_observed {
        bail!("{have} columns available but {n_observed} observed columns requested");
    }
    if have == n_observed {
        return Ok(block);
    }
    let stream = seed ^ checkpoint.wrapping_mul(0x9E3779B97F4A7C15);
    let (observed, _) = gram::split_observed(&block, n_observed as usize, stream)?;
    Ok(observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("sigma-manifest-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn manifest_parses_and_resolves_relative_paths() {
        let dir = temp_dir("parse");
        write_file(&dir, "gen0.csv", "m,2\n1.0,0.0\n0.0,1.0\n");
        let manifest_path = write_file(
            &dir,
            "manifest.json",
            r#"{
                "schema": 1,
                "config": { "delta": 0.01, "n_observed": 2 },
                "checkpoints": [
                    { "checkpoint": 0, "path": "gen0.csv", "n_total": 10 }
                ]
            }"#,
        );
        let manifest = load_manifest(&manifest_path).unwrap();
        assert_eq!(manifest.entries.len(), 1);
        assert_eq!(manifest.entries[0].n_total, 10);
        assert!(manifest.entries[0].path.ends_with("gen0.csv"));
        let config = manifest.overrides.resolve(&ConfigOverrides::default());
        assert_eq!(config.delta, 0.01);
        assert_eq!(config.n_observed_target, 2);
        assert_eq!(config.alpha, MonitorConfig::default().alpha);
        let block = load_block(&manifest.entries[0].path).unwrap();
        assert_eq!((block.dim(), block.count()), (2, 2));
    }

    #[test]
    fn flags_outrank_manifest_overrides() {
        let manifest = ConfigOverrides { delta: Some(0.01), alpha: Some(0.1), ..Default::default() };
        let flags = ConfigOverrides { delta: Some(0.5), ..Default::default() };
        let config = manifest.resolve(&flags);
        assert_eq!(config.delta, 0.5);
        assert_eq!(config.alpha, 0.1);
    }

    #[test]
    fn non_increasing_checkpoints_are_rejected() {
        let dir = temp_dir("order");
        let manifest_path = write_file(
            &dir,
            "bad.json",
            r#"{
                "schema": 1,
                "checkpoints": [
                    { "checkpoint": 3, "path": "a.csv", "n_total": 5 },
                    { "checkpoint": 3, "path": "b.csv", "n_total": 5 }
                ]
            }"#,
        );
        let err = load_manifest(&manifest_path).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn missing_schema_is_rejected() {
        let dir = temp_dir("schema");
        let manifest_path =
            write_file(&dir, "noschema.json", r#"{ "checkpoints": [] }"#);
        let err = load_manifest(&manifest_path).unwrap_err();
        assert!(err.to_string().contains("schema"), "{err}");
    }

    #[test]
    fn subsample_is_deterministic_and_bounded() {
        let block =
            EmbeddingBlock::from_columns(1, (0..10).map(f64::from).collect()).unwrap();
        let a = subsample(block.clone(), 4, 7, 2).unwrap();
        let b = subsample(block.clone(), 4, 7, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(), 4);
        assert!(subsample(block, 11, 0, 0).is_err());
    }
}
