//! Snapshot loading, field mapping, address normalization and
//! replace-on-reload commits into the versioned raw store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::conformance::{check_batch, CompiledChecker, ConformanceReport, Finding, FindingCode, RawRecord};
use crate::model::{
    entity_id, ComplexProperty, CorrelationHint, EntityRef, HostEntity, IncomingConfiguration, InterfaceRef, Origin,
    OutgoingConfiguration, Payload, RunsOn, Store, StoreContent, SystemEntity, CORRELATION, HOST, IN_CONF, OUT_CONF,
    RUNS_ON, SPACE_PROP, SYSTEM,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapping {
    /// Dotted path into the source line, e.g. `meta.sysId`.
    pub from: String,
    /// Target field of the mapped record.
    pub to: String,
    /// Restricts the mapping to records of one kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub source_id: String,
    #[serde(default = "default_source_type")]
    pub source_type: String,
    #[serde(default)]
    pub mapping: Vec<FieldMapping>,
    /// Seconds between pushes at the source; informational only.
    #[serde(default)]
    pub schedule_hint: u64,
    /// Kind assumed for lines without a `kind` field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_kind: Option<String>,
}

fn default_source_type() -> String {
    "generic".into()
}

impl SourceConfig {
    pub fn new(source_id: impl Into<String>, source_type: impl Into<String>) -> Self {
        SourceConfig {
            source_id: source_id.into(),
            source_type: source_type.into(),
            mapping: Vec::new(),
            schedule_hint: 0,
            default_kind: None,
        }
    }

    pub fn from_json(text: &str) -> Result<SourceConfig, IngestError> {
        let config: SourceConfig = serde_json::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        if config.source_id.is_empty() || config.source_id.contains('/') {
            return Err(IngestError::Config(format!(
                "source_id `{}` must be non-empty and free of `/`",
                config.source_id
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<SourceConfig, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        SourceConfig::from_json(&text)
    }

    fn mappings_for<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a FieldMapping> + 'a {
        self.mapping
            .iter()
            .filter(move |m| m.kind.as_deref().is_none_or(|k| k == kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub source_id: String,
    pub captured_at: i64,
    pub records: Vec<RawRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("source config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, part| v.get(part))
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Maps one parsed line into a record body, returning `(kind, object_id, body)`.
fn map_line(line: Value, config: &SourceConfig) -> Result<(String, String, Map<String, Value>), String> {
    let Value::Object(source) = &line else {
        return Err("line is not a JSON object".into());
    };
    let kind = match source.get("kind") {
        Some(Value::String(k)) => k.clone(),
        Some(_) => return Err("`kind` must be a string".into()),
        None => config
            .default_kind
            .clone()
            .ok_or("line has no `kind` and the source config sets no default_kind")?,
    };

    let mut body = Map::new();
    let mut consumed = Vec::new();
    for m in config.mappings_for(&kind) {
        consumed.push(m.from.split('.').next().unwrap_or_default().to_string());
        if let Some(v) = lookup(&line, &m.from) {
            body.insert(m.to.clone(), v.clone());
        }
    }
    for (k, v) in source {
        if k != "kind" && !consumed.contains(k) && !body.contains_key(k) {
            body.insert(k.clone(), v.clone());
        }
    }

    let id = match body.get("object_id").and_then(id_string) {
        Some(id) => id,
        None => synthesize_id(&kind, &body).ok_or_else(|| match config.mappings_for(&kind).find(|m| m.to == "object_id") {
            Some(m) => format!("id path `{}` is missing", m.from),
            None => "id path `object_id` is missing".to_string(),
        })?,
    };
    body.insert("object_id".into(), Value::String(id.clone()));
    body.insert("kind".into(), Value::String(kind.clone()));
    Ok((kind, id, body))
}

/// Relationship records are often exported without ids of their own.
fn synthesize_id(kind: &str, body: &Map<String, Value>) -> Option<String> {
    let field = |f: &str| body.get(f).and_then(id_string);
    match kind {
        RUNS_ON => Some(format!("{}@{}", field("system_id")?, field("host_id")?)),
        CORRELATION => Some(format!(
            "{}~{}~{}",
            field("left_id")?,
            field("right_id")?,
            field("link_kind").unwrap_or_else(|| "implemented-by".into())
        )),
        _ => None,
    }
}

/// Parses JSON Lines text into a snapshot of `config.source_id`.
pub fn parse_snapshot(text: &str, config: &SourceConfig, captured_at: i64) -> Result<Snapshot, IngestError> {
    let mut records = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| IngestError::Line { line: n + 1, message };
        let value: Value = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let (_, id, body) = map_line(value, config).map_err(err)?;
        records.push(RawRecord::new(
            Origin::new(&config.source_id, id, &config.source_type, captured_at),
            Value::Object(body),
        ));
    }
    Ok(Snapshot {
        source_id: config.source_id.clone(),
        captured_at,
        records,
    })
}

/// Reads a JSON Lines snapshot file; `captured_at` is its modification time.
pub fn load_snapshot(path: &Path, config: &SourceConfig) -> Result<Snapshot, IngestError> {
    let io = |e: std::io::Error| IngestError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let captured_at = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs() as i64);
    parse_snapshot(&text, config, captured_at)
}

/// Canonical form of an endpoint address.
///
/// ```
/// use netinfer_core::ingestion::normalize_address;
/// assert_eq!(normalize_address("HTTP://B:80/order/"), "http://b/order");
/// assert_eq!(normalize_address("QueueName.A "), "queuename.a");
/// ```
pub fn normalize_address(addr: &str) -> String {
    let t = addr.trim();
    let Some((scheme, rest)) = t.split_once("://") else {
        return t.to_lowercase();
    };
    let valid_scheme = scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c));
    if !valid_scheme {
        return t.to_lowercase();
    }
    let scheme = scheme.to_ascii_lowercase();
    let auth_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let mut authority = rest[..auth_end].to_lowercase();
    let default_port = match scheme.as_str() {
        "http" => Some(":80"),
        "https" => Some(":443"),
        _ => None,
    };
    if let Some(port) = default_port {
        if authority.ends_with(port) {
            authority.truncate(authority.len() - port.len());
        }
    }
    if authority.ends_with(':') {
        authority.pop();
    }
    let tail = &rest[auth_end..];
    let path_end = tail.find(['?', '#']).unwrap_or(tail.len());
    let path = tail[..path_end].trim_end_matches('/');
    format!("{scheme}://{authority}{path}{}", &tail[path_end..])
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(to_canonical_string(other)),
    }
}

fn text(body: &Map<String, Value>, field: &str) -> Option<String> {
    body.get(field).and_then(|v| match v {
        Value::Array(_) | Value::Object(_) => None,
        v => scalar_text(v),
    })
}

fn required(body: &Map<String, Value>, field: &str) -> Result<String, String> {
    text(body, field)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("`{field}` is missing or empty"))
}

const RESERVED: [&str; 2] = ["kind", "object_id"];

/// Converts accepted records into entities. Relationship fields name object
/// ids of the record's own source and become engine ids here.
pub fn records_to_content(records: &[RawRecord]) -> Result<StoreContent, (usize, String)> {
    let mut out = StoreContent::default();
    for (i, r) in records.iter().enumerate() {
        let fail = |m: String| (i, m);
        let body = r.fields().ok_or_else(|| fail("record is not an object".into()))?;
        let kind = r.kind().ok_or_else(|| fail("record has no kind".into()))?;
        let origin = r.origin.clone();
        let id = origin.entity_id();
        let src = origin.source_id.as_str();
        let local = |field: &str| required(body, field).map(|v| entity_id(src, &v)).map_err(fail);
        match kind {
            SYSTEM => {
                let mut simple_props = BTreeMap::new();
                let mut complex_props = Vec::new();
                for (k, v) in body {
                    if RESERVED.contains(&k.as_str()) || k == "name" || k == "system_kind" || v.is_null() {
                        continue;
                    }
                    match v {
                        Value::Array(_) | Value::Object(_) => complex_props.push(ComplexProperty {
                            kind: k.clone(),
                            payload: Payload::from_json(v),
                            origin: origin.clone(),
                        }),
                        v => {
                            simple_props.insert(k.clone(), scalar_text(v).unwrap_or_default());
                        }
                    }
                }
                if let Some(space) = simple_props.get(SPACE_PROP) {
                    if space.is_empty() {
                        return Err(fail("`space` is empty".into()));
                    }
                }
                complex_props.sort_by(|a, b| (&a.kind, a.digest()).cmp(&(&b.kind, b.digest())));
                let entity = SystemEntity {
                    id: id.clone(),
                    name: required(body, "name").map_err(fail)?,
                    kind: text(body, "system_kind").filter(|k| !k.is_empty()).unwrap_or_else(|| "application".into()),
                    simple_props,
                    complex_props,
                    origin,
                };
                out.systems.insert(id, entity);
            }
            HOST => {
                let hostname = required(body, "hostname").map_err(fail)?.trim().to_lowercase();
                if hostname.is_empty() {
                    return Err(fail("`hostname` is blank".into()));
                }
                let simple_props = body
                    .iter()
                    .filter(|(k, v)| !RESERVED.contains(&k.as_str()) && *k != "hostname" && !v.is_null())
                    .map(|(k, v)| (k.clone(), scalar_text(v).unwrap_or_default()))
                    .collect();
                out.hosts.insert(
                    id.clone(),
                    HostEntity {
                        id,
                        hostname,
                        simple_props,
                        origin,
                    },
                );
            }
            RUNS_ON => {
                let entity = RunsOn {
                    id: id.clone(),
                    system_id: local("system_id")?,
                    host_id: local("host_id")?,
                    origin,
                };
                out.runs_on.insert(id, entity);
            }
            OUT_CONF | IN_CONF => {
                let interface = InterfaceRef::new(
                    required(body, "interface").map_err(fail)?,
                    text(body, "namespace").unwrap_or_default(),
                    text(body, "operation").unwrap_or_default(),
                );
                let owner = local("system_id")?;
                let address = normalize_address(&required(body, "address").map_err(fail)?);
                let adapter = text(body, "adapter").unwrap_or_default();
                if kind == OUT_CONF {
                    out.out_confs.insert(
                        id.clone(),
                        OutgoingConfiguration {
                            id,
                            owner_system_id: owner,
                            interface,
                            receiver_address: address,
                            adapter,
                            origin,
                        },
                    );
                } else {
                    out.in_confs.insert(
                        id.clone(),
                        IncomingConfiguration {
                            id,
                            owner_system_id: owner,
                            interface,
                            endpoint_address: address,
                            adapter,
                            origin,
                        },
                    );
                }
            }
            CORRELATION => {
                let left = EntityRef {
                    space: required(body, "left_space").map_err(fail)?,
                    entity_id: local("left_id")?,
                };
                let right = EntityRef {
                    space: required(body, "right_space").map_err(fail)?,
                    entity_id: local("right_id")?,
                };
                if left.space == right.space {
                    return Err(fail("correlation sides must be in different spaces".into()));
                }
                out.correlations.insert(
                    id.clone(),
                    CorrelationHint {
                        id,
                        left,
                        right,
                        kind: text(body, "link_kind").unwrap_or_else(|| "implemented-by".into()),
                        origin,
                    },
                );
            }
            other => return Err(fail(format!("no entity mapping for kind `{other}`"))),
        }
    }
    Ok(out)
}

fn malformed(index: usize, r: &RawRecord, message: String) -> Finding {
    Finding {
        code: FindingCode::MalformedRecord,
        record: index,
        kind: r.kind().unwrap_or_default().to_string(),
        origin: r.origin.clone(),
        field: String::new(),
        message,
    }
}

/// Checks the snapshot against `store` without the snapshot's own source and,
/// if clean, returns the next version in which that source's entities are
/// exactly the snapshot's.
pub fn commit(snapshot: &Snapshot, store: &Store, checker: &CompiledChecker) -> Result<Store, ConformanceReport> {
    let existing = store.content.without_source(&snapshot.source_id);
    let foreign: Vec<Finding> = snapshot
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.origin.source_id != snapshot.source_id)
        .map(|(i, r)| malformed(i, r, format!("record belongs to source `{}`", r.origin.source_id)))
        .collect();
    if !foreign.is_empty() {
        return Err(ConformanceReport { findings: foreign });
    }
    let report = check_batch(checker, &snapshot.records, &existing);
    if !report.is_empty() {
        return Err(report);
    }
    let added = records_to_content(&snapshot.records).map_err(|(i, message)| ConformanceReport {
        findings: vec![malformed(i, &snapshot.records[i], message)],
    })?;
    let mut content = existing;
    content.extend(added);
    Ok(Store::new(store.version + 1, content))
}

/// Single-writer, many-reader holder of the current store version.
#[derive(Debug, Default)]
pub struct StoreCell {
    current: RwLock<Arc<Store>>,
    writer: Mutex<()>,
}

impl StoreCell {
    pub fn new(store: Store) -> Self {
        StoreCell {
            current: RwLock::new(Arc::new(store)),
            writer: Mutex::new(()),
        }
    }

    /// The latest published version.
    pub fn current(&self) -> Arc<Store> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Commits against the latest version and publishes the result.
    pub fn commit(&self, snapshot: &Snapshot, checker: &CompiledChecker) -> Result<Arc<Store>, ConformanceReport> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let next = Arc::new(commit(snapshot, &self.current(), checker)?);
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
        Ok(next)
    }
}
