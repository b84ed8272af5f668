//! `netinfer` command-line pipeline.
//!
//! Machine output goes to stdout as JSON or the requested graph format;
//! diagnostics go to stderr. Exit codes: 0 success, 1 environment or I/O
//! failure, 2 validation or rule errors.

pub mod workspace;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use netinfer_core::canonical::to_canonical_string;
use netinfer_core::ingestion::SourceConfig;
use netinfer_core::network::{export_graph, export_json};
use netinfer_core::query::build_index;
use serde_json::json;

pub use workspace::{CliError, Ingested, Publication, Workspace, EXIT_INVALID, EXIT_IO};

#[derive(Debug, Parser)]
#[command(name = "netinfer", version, about = "Infer a business network from discovery snapshots")]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    pub workspace: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the workspace layout.
    Init {
        /// Custom conformance schema; the bundled one is used otherwise.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Validate a snapshot and commit it, replacing the source's previous content.
    Ingest {
        /// Source config; defaults to the one registered for the file name's prefix.
        #[arg(long)]
        source_config: Option<PathBuf>,
        snapshot: PathBuf,
    },
    /// Validate a snapshot without committing it.
    Check {
        #[arg(long)]
        source_config: Option<PathBuf>,
        snapshot: PathBuf,
    },
    /// Reconstruct the network from the store and publish it.
    Infer {
        /// Extra rules in Datalog text form.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Print the latest network.
    Export {
        /// json, graphml or dot.
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        space: Option<String>,
    },
    /// Search or traverse the latest network.
    Query {
        #[command(subcommand)]
        query: Query,
    },
    /// Poll a directory and commit new snapshot files, re-inferring after each batch.
    Watch {
        #[arg(long)]
        dir: PathBuf,
        /// Seconds between polls.
        #[arg(long, default_value_t = 5.0)]
        interval: f64,
        /// Use one config for every file instead of the file-name prefix lookup.
        #[arg(long)]
        source_config: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Poll once and exit.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum Query {
    /// Participants whose label or properties contain every query token.
    Search { text: String },
    /// Neighbourhood of a participant.
    Traverse {
        start: String,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long)]
        follow_links: bool,
        #[arg(long)]
        space: Option<String>,
    },
}

fn emit(out: &mut dyn Write, bytes: &str) -> Result<(), CliError> {
    out.write_all(bytes.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(format!("stdout: {e}")))
}

fn line(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), CliError> {
    emit(out, &format!("{}\n", to_canonical_string(value)))
}

fn snapshot_config(ws: &Workspace, explicit: Option<&Path>, snapshot: &Path) -> Result<SourceConfig, CliError> {
    if let Some(path) = explicit {
        return Workspace::load_source_config(path);
    }
    let name = snapshot.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    ws.source_config(name.split('.').next().unwrap_or_default())
        .map_err(|e| CliError::io(format!("{e}; pass --source-config")))
}

fn ingest(ws: &Workspace, config: Option<&Path>, snapshot: &Path, dry_run: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = snapshot_config(ws, config, snapshot)?;
    match ws.ingest_file(snapshot, &config, dry_run)? {
        Ingested::Accepted { store, records } => line(
            out,
            &json!({
                "accepted": true,
                "source": config.source_id,
                "records": records,
                "store_version": store.version,
                "committed": !dry_run,
            }),
        ),
        Ingested::Rejected(report) => {
            line(out, &json!({ "accepted": false, "source": config.source_id, "findings": report.findings }))?;
            let _ = write!(err, "{report}");
            Err(CliError::invalid(format!(
                "{}: rejected with {} finding(s)",
                snapshot.display(),
                report.findings.len()
            )))
        }
    }
}

/// Runs one command against `out` (stdout) and `err` (stderr).
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let root = cli.workspace.as_path();
    match cli.command {
        Command::Init { schema } => {
            let ws = Workspace::init(root, schema.as_deref())?;
            line(out, &json!({ "workspace": ws.root().display().to_string() }))
        }
        Command::Ingest { source_config, snapshot } => {
            ingest(&Workspace::open(root)?, source_config.as_deref(), &snapshot, false, out, err)
        }
        Command::Check { source_config, snapshot } => {
            ingest(&Workspace::open(root)?, source_config.as_deref(), &snapshot, true, out, err)
        }
        Command::Infer { rules } => {
            let ws = Workspace::open(root)?;
            let rules = rules.as_deref().map(Workspace::load_rules).transpose()?;
            let publication = ws.infer(rules.as_ref())?;
            for w in &publication.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            line(out, &serde_json::to_value(&publication).expect("publication serializes"))
        }
        Command::Export { format, space } => {
            let network = Workspace::open(root)?.latest_network()?;
            let text = export_graph(&network, &format, space.as_deref()).map_err(|e| CliError::invalid(e.to_string()))?;
            emit(out, &text)
        }
        Command::Query { query } => {
            let network = Workspace::open(root)?.latest_network()?;
            let index = build_index(&network);
            match query {
                Query::Search { text } => line(out, &json!(index.search(&text))),
                Query::Traverse {
                    start,
                    depth,
                    follow_links,
                    space,
                } => {
                    let fragment = index
                        .traverse(&start, depth, follow_links, space.as_deref())
                        .map_err(|e| CliError::invalid(e.to_string()))?;
                    emit(out, &export_json(&fragment))
                }
            }
        }
        Command::Watch {
            dir,
            interval,
            source_config,
            rules,
            once,
        } => {
            let ws = Workspace::open(root)?;
            if !dir.is_dir() {
                return Err(CliError::io(format!("{}: not a directory", dir.display())));
            }
            let config = source_config.as_deref().map(Workspace::load_source_config).transpose()?;
            let rules = rules.as_deref().map(Workspace::load_rules).transpose()?;
            let pause = Duration::from_secs_f64(interval.max(0.05));
            loop {
                let report = ws.poll(&dir, config.as_ref(), rules.as_ref())?;
                if report.published.is_some() || !report.rejected.is_empty() || !report.failed.is_empty() {
                    line(out, &serde_json::to_value(&report).expect("report serializes"))?;
                }
                if once {
                    return Ok(());
                }
                std::thread::sleep(pause);
            }
        }
    }
}
