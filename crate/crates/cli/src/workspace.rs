//! On-disk workspace.
//!
//! ```text
//! <root>/schema.json              conformance schema
//! <root>/store.json               current store version (canonical JSON)
//! <root>/reconstruction.json      optional key fields and source trust ranks
//! <root>/sources/<id>.json        registered source configs
//! <root>/snapshots/<id>.jsonl     last accepted snapshot per source
//! <root>/networks/<version>.json  published networks
//! <root>/networks/LATEST          version id of the newest publication
//! <root>/watch-ledger.json        files seen by `watch`, by name and digest
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use netinfer_core::canonical::{sha256_hex, to_canonical_pretty};
use netinfer_core::conformance::{compile, CompiledChecker, ConformanceReport, SchemaSpec};
use netinfer_core::ingestion::{commit, parse_snapshot, SourceConfig};
use netinfer_core::model::Store;
use netinfer_core::network::{emit, export_json, from_json, Network};
use netinfer_core::reconstruction::{reconstruct, ReconstructionConfig};
use netinfer_datalog::{parse_program, Program};
use serde::{Deserialize, Serialize};

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Writes through a temporary sibling and a rename, so readers never see
/// a partial file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::io(format!("{}: {e}", path.display()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Outcome of committing one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Accepted { store: Store, records: usize },
    Rejected(ConformanceReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub version: String,
    pub store_version: u64,
    pub participants: usize,
    pub flows: usize,
    pub participant_links: usize,
    pub flow_links: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileOutcome {
    Committed,
    Rejected,
    Failed,
}

/// File name -> content digest -> outcome.
pub type Ledger = BTreeMap<String, BTreeMap<String, FileOutcome>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PollReport {
    pub committed: Vec<String>,
    pub rejected: Vec<String>,
    pub failed: Vec<String>,
    pub published: Option<Publication>,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Creates the layout, keeping any existing schema and store.
    pub fn init(root: &Path, schema: Option<&Path>) -> Result<Workspace> {
        let ws = Workspace { root: root.to_path_buf() };
        for dir in [ws.root.clone(), ws.sources_dir(), ws.snapshots_dir(), ws.networks_dir()] {
            fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        }
        match schema {
            Some(path) => {
                let text = read(path)?;
                SchemaSpec::from_json(&text)
                    .and_then(|s| compile(&s).map(|_| ()))
                    .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
                write_atomic(&ws.schema_path(), text.as_bytes())?;
            }
            None if !ws.schema_path().exists() => {
                write_atomic(&ws.schema_path(), SchemaSpec::default_json().as_bytes())?;
            }
            None => {}
        }
        if !ws.store_path().exists() {
            ws.save_store(&Store::default())?;
        }
        Ok(ws)
    }

    pub fn open(root: &Path) -> Result<Workspace> {
        let ws = Workspace { root: root.to_path_buf() };
        if !ws.schema_path().is_file() || !ws.store_path().is_file() {
            return Err(CliError::io(format!(
                "{} is not an initialized workspace (run `netinfer init`)",
                root.display()
            )));
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn schema_path(&self) -> PathBuf {
        self.root.join("schema.json")
    }

    pub fn store_path(&self) -> PathBuf {
        self.root.join("store.json")
    }

    pub fn sources_dir(&self) -> PathBuf {
        self.root.join("sources")
    }

    pub fn snapshots_dir(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn networks_dir(&self) -> PathBuf {
        self.root.join("networks")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join("watch-ledger.json")
    }

    pub fn checker(&self) -> Result<CompiledChecker> {
        let path = self.schema_path();
        SchemaSpec::from_json(&read(&path)?)
            .and_then(|s| compile(&s))
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn load_store(&self) -> Result<Store> {
        let path = self.store_path();
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }

    pub fn save_store(&self, store: &Store) -> Result<()> {
        write_atomic(&self.store_path(), to_canonical_pretty(store).as_bytes())
    }

    pub fn reconstruction_config(&self) -> Result<ReconstructionConfig> {
        let path = self.root.join("reconstruction.json");
        if !path.exists() {
            return Ok(ReconstructionConfig::default());
        }
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn load_source_config(path: &Path) -> Result<SourceConfig> {
        SourceConfig::from_json(&read(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    /// Config registered for `source_id` by an earlier ingest.
    pub fn source_config(&self, source_id: &str) -> Result<SourceConfig> {
        let path = self.sources_dir().join(format!("{source_id}.json"));
        if !path.is_file() {
            return Err(CliError::io(format!("no source config registered for `{source_id}`")));
        }
        Self::load_source_config(&path)
    }

    pub fn register_source(&self, config: &SourceConfig) -> Result<()> {
        let path = self.sources_dir().join(format!("{}.json", config.source_id));
        write_atomic(&path, to_canonical_pretty(config).as_bytes())
    }

    /// Validates and commits snapshot text. With `dry_run` the workspace is
    /// left untouched.
    pub fn ingest_text(&self, text: &str, captured_at: i64, config: &SourceConfig, dry_run: bool) -> Result<Ingested> {
        let snapshot = parse_snapshot(text, config, captured_at).map_err(|e| CliError::invalid(e.to_string()))?;
        let checker = self.checker()?;
        let store = self.load_store()?;
        match commit(&snapshot, &store, &checker) {
            Err(report) => Ok(Ingested::Rejected(report)),
            Ok(next) => {
                if !dry_run {
                    self.register_source(config)?;
                    let path = self.snapshots_dir().join(format!("{}.jsonl", config.source_id));
                    write_atomic(&path, text.as_bytes())?;
                    self.save_store(&next)?;
                }
                Ok(Ingested::Accepted {
                    records: snapshot.records.len(),
                    store: next,
                })
            }
        }
    }

    pub fn ingest_file(&self, path: &Path, config: &SourceConfig, dry_run: bool) -> Result<Ingested> {
        let text = read(path)?;
        self.ingest_text(&text, modified(path), config, dry_run)
    }

    pub fn load_rules(path: &Path) -> Result<Program> {
        parse_program(&read(path)?).map_err(|e| CliError::invalid(format!("{}:{e}", path.display())))
    }

    /// Reconstructs the network from the current store and publishes it.
    pub fn infer(&self, rules: Option<&Program>) -> Result<Publication> {
        let store = self.load_store()?;
        let config = self.reconstruction_config()?;
        let recon = reconstruct(&store.content, rules, &config).map_err(|e| CliError::invalid(e.to_string()))?;
        let network = emit(&recon).map_err(|e| CliError::invalid(e.to_string()))?;
        let path = self.networks_dir().join(format!("{}.json", network.version));
        write_atomic(&path, export_json(&network).as_bytes())?;
        write_atomic(&self.networks_dir().join("LATEST"), format!("{}\n", network.version).as_bytes())?;
        Ok(Publication {
            version: network.version.clone(),
            store_version: store.version,
            participants: network.participant_count(),
            flows: network.flow_count(),
            participant_links: network.participant_links.len(),
            flow_links: network.flow_links.len(),
            warnings: recon.warnings,
        })
    }

    pub fn latest_network(&self) -> Result<Network> {
        let latest = self.networks_dir().join("LATEST");
        if !latest.is_file() {
            return Err(CliError::io("no network published yet (run `netinfer infer`)"));
        }
        let version = read(&latest)?;
        let path = self.networks_dir().join(format!("{}.json", version.trim()));
        from_json(&read(&path)?).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }

    pub fn ledger(&self) -> Result<Ledger> {
        let path = self.ledger_path();
        if !path.exists() {
            return Ok(Ledger::new());
        }
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }

    /// One pass over `dir`: every `*.jsonl` file whose name and digest are
    /// not in the ledger is committed once, in name order. Without a fixed
    /// config the source id is the file name up to its first dot. The
    /// network is republished when anything was committed.
    pub fn poll(&self, dir: &Path, config: Option<&SourceConfig>, rules: Option<&Program>) -> Result<PollReport> {
        let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        let mut files: Vec<(String, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .filter_map(|e| Some((e.file_name().into_string().ok()?, e.path())))
            .filter(|(name, _)| !name.starts_with('.') && name.ends_with(".jsonl"))
            .collect();
        files.sort();

        let mut ledger = self.ledger()?;
        let mut report = PollReport::default();
        for (name, path) in files {
            let Ok(bytes) = fs::read(&path) else {
                log::warn!("{}: unreadable, will retry", path.display());
                continue;
            };
            let digest = sha256_hex(&bytes);
            if ledger.get(&name).is_some_and(|seen| seen.contains_key(&digest)) {
                continue;
            }
            let outcome = match self.ingest_bytes(&name, &bytes, modified(&path), config) {
                Ok(Ingested::Accepted { store, .. }) => {
                    log::info!("{name}: committed, store version {}", store.version);
                    report.committed.push(name.clone());
                    FileOutcome::Committed
                }
                Ok(Ingested::Rejected(findings)) => {
                    log::warn!("{name}: rejected\n{findings}");
                    report.rejected.push(name.clone());
                    FileOutcome::Rejected
                }
                Err(e) => {
                    log::warn!("{name}: {e}");
                    report.failed.push(name.clone());
                    FileOutcome::Failed
                }
            };
            ledger.entry(name).or_default().insert(digest, outcome);
            write_atomic(&self.ledger_path(), to_canonical_pretty(&ledger).as_bytes())?;
        }
        if !report.committed.is_empty() {
            report.published = Some(self.infer(rules)?);
        }
        Ok(report)
    }

    fn ingest_bytes(&self, name: &str, bytes: &[u8], captured_at: i64, config: Option<&SourceConfig>) -> Result<Ingested> {
        let text = std::str::from_utf8(bytes).map_err(|e| CliError::invalid(format!("{name}: {e}")))?;
        let config = match config {
            Some(c) => c.clone(),
            None => self.source_config(name.split('.').next().unwrap_or(name))?,
        };
        self.ingest_text(text, captured_at, &config, false)
    }
}

fn modified(path: &Path) -> i64 {
    fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_idempotent_and_keeps_the_store() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let config = SourceConfig::new("pi", "middleware");
        ws.ingest_text("{\"kind\":\"host\",\"object_id\":\"h\",\"hostname\":\"a\"}\n", 5, &config, false)
            .unwrap();
        Workspace::init(dir.path(), None).unwrap();
        assert_eq!(ws.load_store().unwrap().version, 1);
        assert!(!dir.path().join(".store.json.tmp").exists());
    }

    #[test]
    fn open_requires_init() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Workspace::open(dir.path()).unwrap_err().code, EXIT_IO);
    }

    #[test]
    fn dry_run_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let config = SourceConfig::new("pi", "middleware");
        let out = ws
            .ingest_text("{\"kind\":\"host\",\"object_id\":\"h\",\"hostname\":\"a\"}\n", 5, &config, true)
            .unwrap();
        assert!(matches!(out, Ingested::Accepted { .. }));
        assert_eq!(ws.load_store().unwrap().version, 0);
        assert!(!ws.sources_dir().join("pi.json").exists());
    }

    #[test]
    fn poll_skips_hidden_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(&dir.path().join("ws"), None).unwrap();
        let incoming = dir.path().join("in");
        fs::create_dir_all(&incoming).unwrap();
        fs::write(incoming.join(".partial.jsonl"), "{").unwrap();
        fs::write(incoming.join("notes.txt"), "x").unwrap();
        let report = ws.poll(&incoming, None, None).unwrap();
        assert_eq!(report, PollReport::default());
        assert!(ws.ledger().unwrap().is_empty());
    }

    #[test]
    fn bad_rules_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.dl");
        fs::write(&path, "p(X :- q(X).\n").unwrap();
        assert_eq!(Workspace::load_rules(&path).unwrap_err().code, EXIT_INVALID);
    }
}
