//! Schema-compiled conformance checks for raw records.
//!
//! A [`SchemaSpec`] is compiled once into a [`CompiledChecker`]: for every
//! entity kind, a small state machine whose states are the declared fields in
//! sorted order. A record's own fields, also sorted, are fed through it; each
//! transition either accepts a field, skips an undeclared one, or lands in the
//! sink for one finding code and moves on. Cross-record checks (duplicate
//! keys, references) run after the per-record pass.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{entity_id, Origin, StoreContent};

/// Declarative schema, as read from `schema.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    pub kinds: BTreeMap<String, KindSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSpec {
    #[serde(default)]
    pub fields: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub refs: Vec<RefSpec>,
    #[serde(default)]
    pub unique: Vec<Vec<String>>,
    /// Field groups whose values must differ pairwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distinct: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    String,
    Integer,
    Enum,
    Mapping,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(rename = "type")]
    pub field_type: FieldType,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub key: bool,
    /// Allowed values when `type` is `enum`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefSpec {
    pub field: String,
    /// Target entity kind(s).
    pub kind: OneOrMany,
}

const DEFAULT_SCHEMA: &str = include_str!("../schema/inference_model.json");

impl SchemaSpec {
    /// The schema shipped for the built-in inference model.
    pub fn inference_model() -> SchemaSpec {
        SchemaSpec::from_json(DEFAULT_SCHEMA).expect("bundled schema parses")
    }

    pub fn default_json() -> &'static str {
        DEFAULT_SCHEMA
    }

    pub fn from_json(text: &str) -> Result<SchemaSpec, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema is not valid JSON: {0}")]
    Parse(String),
    #[error("{kind}.{field}: reference to undeclared kind `{target}`")]
    UndeclaredRefTarget { kind: String, field: String, target: String },
    #[error("{kind}.{field}: key fields must be required")]
    KeyNotRequired { kind: String, field: String },
    #[error("{kind}: `{field}` is used in refs/unique/distinct but not declared")]
    UndeclaredField { kind: String, field: String },
    #[error("{kind}.{field}: enum without values")]
    EmptyEnum { kind: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCode {
    MissingField,
    TypeMismatch,
    EnumViolation,
    DanglingRef,
    DuplicateKey,
    UnknownKind,
    MalformedRecord,
}

impl FindingCode {
    pub const ALL: [FindingCode; 7] = [
        FindingCode::MissingField,
        FindingCode::TypeMismatch,
        FindingCode::EnumViolation,
        FindingCode::DanglingRef,
        FindingCode::DuplicateKey,
        FindingCode::UnknownKind,
        FindingCode::MalformedRecord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FindingCode::MissingField => "MISSING_FIELD",
            FindingCode::TypeMismatch => "TYPE_MISMATCH",
            FindingCode::EnumViolation => "ENUM_VIOLATION",
            FindingCode::DanglingRef => "DANGLING_REF",
            FindingCode::DuplicateKey => "DUPLICATE_KEY",
            FindingCode::UnknownKind => "UNKNOWN_KIND",
            FindingCode::MalformedRecord => "MALFORMED_RECORD",
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    /// Position of the record in the checked batch.
    pub record: usize,
    pub kind: String,
    pub origin: Origin,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub findings: Vec<Finding>,
}

impl ConformanceReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn accepted(&self) -> bool {
        self.is_empty()
    }

    pub fn codes(&self) -> BTreeSet<FindingCode> {
        self.findings.iter().map(|f| f.code).collect()
    }

    pub fn count(&self, code: FindingCode) -> usize {
        self.findings.iter().filter(|f| f.code == code).count()
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(
                f,
                "{} record #{} {} {}/{} field `{}`: {}",
                finding.code,
                finding.record,
                finding.kind,
                finding.origin.source_id,
                finding.origin.object_id,
                finding.field,
                finding.message
            )?;
        }
        Ok(())
    }
}

/// A record as produced by ingestion: its origin plus the mapped JSON body,
/// which carries the entity kind under `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub origin: Origin,
    pub body: Value,
}

impl RawRecord {
    pub fn new(origin: Origin, body: Value) -> Self {
        RawRecord { origin, body }
    }

    pub fn kind(&self) -> Option<&str> {
        self.body.get("kind").and_then(Value::as_str)
    }

    pub fn fields(&self) -> Option<&Map<String, Value>> {
        self.body.as_object()
    }

    pub fn str_field(&self, name: &str) -> Option<&str> {
        self.body.get(name).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ValueCheck {
    String,
    Integer,
    Enum(BTreeSet<String>),
    Mapping,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FieldState {
    name: String,
    check: ValueCheck,
    required: bool,
}

/// Outcome of feeding one input symbol to a kind machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transition {
    /// Declared field present with a valid value; advance.
    Accept,
    /// Field the schema does not declare; stay.
    Extra,
    /// Declared field absent; emit when required, advance, re-feed the input.
    Absent,
    /// Sink for a finding code; advance.
    Sink(FindingCode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct KindMachine {
    states: Vec<FieldState>,
    keys: Vec<String>,
    refs: Vec<(String, Vec<String>)>,
    unique: Vec<Vec<String>>,
    distinct: Vec<Vec<String>>,
}

impl KindMachine {
    fn transition(&self, state: usize, field: &str, value: &Value) -> Transition {
        let Some(expected) = self.states.get(state) else {
            return Transition::Extra;
        };
        match field.cmp(expected.name.as_str()) {
            std::cmp::Ordering::Less => Transition::Extra,
            std::cmp::Ordering::Greater => Transition::Absent,
            std::cmp::Ordering::Equal => match (&expected.check, value) {
                (ValueCheck::String, Value::String(_))
                | (ValueCheck::Integer, Value::Number(_))
                | (ValueCheck::Mapping, Value::Object(_))
                | (ValueCheck::List, Value::Array(_)) => {
                    if matches!(expected.check, ValueCheck::Integer) && value.as_i64().is_none() {
                        Transition::Sink(FindingCode::TypeMismatch)
                    } else {
                        Transition::Accept
                    }
                }
                (ValueCheck::Enum(values), Value::String(s)) => {
                    if values.contains(s) {
                        Transition::Accept
                    } else {
                        Transition::Sink(FindingCode::EnumViolation)
                    }
                }
                _ => Transition::Sink(FindingCode::TypeMismatch),
            },
        }
    }

    /// Runs the machine over the record's fields in sorted order.
    fn run(&self, fields: &Map<String, Value>) -> Vec<(FindingCode, String, String)> {
        let mut input: Vec<(&String, &Value)> = fields
            .iter()
            .filter(|(k, v)| k.as_str() != "kind" && !v.is_null())
            .collect();
        input.sort_by(|a, b| a.0.cmp(b.0));

        let mut out = Vec::new();
        let mut state = 0;
        let missing = |s: &FieldState, out: &mut Vec<(FindingCode, String, String)>| {
            if s.required {
                out.push((FindingCode::MissingField, s.name.clone(), "required field is absent".into()));
            }
        };
        for (field, value) in input {
            loop {
                match self.transition(state, field, value) {
                    Transition::Absent => {
                        missing(&self.states[state], &mut out);
                        state += 1;
                    }
                    Transition::Extra => break,
                    Transition::Accept => {
                        state += 1;
                        break;
                    }
                    Transition::Sink(code) => {
                        let message = match (&self.states[state].check, code) {
                            (ValueCheck::Enum(values), FindingCode::EnumViolation) => format!(
                                "{value} is not one of {}",
                                values.iter().cloned().collect::<Vec<_>>().join(", ")
                            ),
                            (check, _) => format!("expected {}, found {}", check_name(check), json_type(value)),
                        };
                        out.push((code, field.clone(), message));
                        state += 1;
                        break;
                    }
                }
            }
        }
        for s in &self.states[state.min(self.states.len())..] {
            missing(s, &mut out);
        }
        out
    }
}

fn check_name(c: &ValueCheck) -> &'static str {
    match c {
        ValueCheck::String | ValueCheck::Enum(_) => "string",
        ValueCheck::Integer => "integer",
        ValueCheck::Mapping => "mapping",
        ValueCheck::List => "list",
    }
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "mapping",
    }
}

/// Immutable, reusable checker produced by [`compile`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledChecker {
    kinds: BTreeMap<String, KindMachine>,
}

impl CompiledChecker {
    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(String::as_str)
    }

    pub fn declares(&self, kind: &str, field: &str) -> bool {
        self.kinds
            .get(kind)
            .is_some_and(|m| m.states.iter().any(|s| s.name == field))
    }
}

pub fn compile(schema: &SchemaSpec) -> Result<CompiledChecker, SchemaError> {
    let mut kinds = BTreeMap::new();
    for (kind, spec) in &schema.kinds {
        let mut states = Vec::new();
        let mut keys = Vec::new();
        for (name, f) in &spec.fields {
            if f.key && !f.required {
                return Err(SchemaError::KeyNotRequired {
                    kind: kind.clone(),
                    field: name.clone(),
                });
            }
            if f.key {
                keys.push(name.clone());
            }
            let check = match f.field_type {
                FieldType::String => ValueCheck::String,
                FieldType::Integer => ValueCheck::Integer,
                FieldType::Mapping => ValueCheck::Mapping,
                FieldType::List => ValueCheck::List,
                FieldType::Enum if f.values.is_empty() => {
                    return Err(SchemaError::EmptyEnum {
                        kind: kind.clone(),
                        field: name.clone(),
                    })
                }
                FieldType::Enum => ValueCheck::Enum(f.values.iter().cloned().collect()),
            };
            states.push(FieldState {
                name: name.clone(),
                check,
                required: f.required,
            });
        }
        let declared = |field: &String| -> Result<(), SchemaError> {
            if spec.fields.contains_key(field) {
                Ok(())
            } else {
                Err(SchemaError::UndeclaredField {
                    kind: kind.clone(),
                    field: field.clone(),
                })
            }
        };
        let mut refs = Vec::new();
        for r in &spec.refs {
            declared(&r.field)?;
            let targets = r.kind.to_vec();
            for t in &targets {
                if !schema.kinds.contains_key(t) {
                    return Err(SchemaError::UndeclaredRefTarget {
                        kind: kind.clone(),
                        field: r.field.clone(),
                        target: t.clone(),
                    });
                }
            }
            refs.push((r.field.clone(), targets));
        }
        for group in spec.unique.iter().chain(&spec.distinct) {
            for f in group {
                declared(f)?;
            }
        }
        kinds.insert(
            kind.clone(),
            KindMachine {
                states,
                keys,
                refs,
                unique: spec.unique.clone(),
                distinct: spec.distinct.clone(),
            },
        );
    }
    Ok(CompiledChecker { kinds })
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Checks a batch against the schema and against `existing` for references
/// and key collisions. Never mutates anything; an empty report means the
/// whole batch may be loaded.
///
/// Reference values are object ids in the record's own source; they resolve
/// against records of this batch and entities of `existing`.
pub fn check_batch(checker: &CompiledChecker, records: &[RawRecord], existing: &StoreContent) -> ConformanceReport {
    let mut findings = Vec::new();
    let mut push = |record: usize, r: &RawRecord, code: FindingCode, field: &str, message: String| {
        findings.push(Finding {
            code,
            record,
            kind: r.kind().unwrap_or_default().to_string(),
            origin: r.origin.clone(),
            field: field.to_string(),
            message,
        });
    };

    // (kind, entity id) of every record that names a known kind.
    let mut present: HashMap<(String, String), usize> = HashMap::new();
    let mut keys_seen: HashMap<(String, Vec<String>), usize> = HashMap::new();
    let mut unique_seen: HashMap<(String, String, usize, Vec<String>), usize> = HashMap::new();
    let mut checkable = Vec::new();

    for (i, r) in records.iter().enumerate() {
        let Some(fields) = r.fields() else {
            push(i, r, FindingCode::MalformedRecord, "", "record is not a JSON object".into());
            continue;
        };
        let kind = match fields.get("kind") {
            Some(Value::String(k)) if !k.is_empty() => k.as_str(),
            _ => {
                push(i, r, FindingCode::MalformedRecord, "kind", "record has no string `kind`".into());
                continue;
            }
        };
        if r.origin.source_id.is_empty() || r.origin.object_id.is_empty() || r.origin.captured_at < 0 {
            push(i, r, FindingCode::MalformedRecord, "object_id", "record origin is incomplete".into());
            continue;
        }
        let Some(machine) = checker.kinds.get(kind) else {
            push(i, r, FindingCode::UnknownKind, "kind", format!("kind `{kind}` is not declared"));
            continue;
        };

        for (code, field, message) in machine.run(fields) {
            push(i, r, code, &field, message);
        }

        for group in &machine.distinct {
            let values: Vec<Option<String>> = group.iter().map(|f| fields.get(f).and_then(scalar)).collect();
            let given: Vec<&String> = values.iter().flatten().collect();
            let unique: BTreeSet<&&String> = given.iter().collect();
            if given.len() == group.len() && unique.len() < given.len() {
                push(i, r, FindingCode::MalformedRecord, &group.join(","), "values must differ".into());
            }
        }

        let id = r.origin.entity_id();
        if !machine.keys.is_empty() {
            let key: Option<Vec<String>> = machine.keys.iter().map(|k| fields.get(k).and_then(scalar)).collect();
            if let Some(key) = key {
                let slot = (r.origin.source_id.clone(), key);
                if let Some(first) = keys_seen.get(&slot) {
                    push(i, r, FindingCode::DuplicateKey, &machine.keys.join(","), format!("key already used by record #{first}"));
                } else if existing.contains(&id) {
                    push(i, r, FindingCode::DuplicateKey, &machine.keys.join(","), format!("`{id}` already exists"));
                } else {
                    keys_seen.insert(slot, i);
                }
            }
        }
        for (u, group) in machine.unique.iter().enumerate() {
            let values: Option<Vec<String>> = group.iter().map(|f| fields.get(f).and_then(scalar)).collect();
            if let Some(values) = values {
                let slot = (r.origin.source_id.clone(), kind.to_string(), u, values);
                if let Some(first) = unique_seen.get(&slot) {
                    push(i, r, FindingCode::DuplicateKey, &group.join(","), format!("duplicates record #{first}"));
                } else {
                    unique_seen.insert(slot, i);
                }
            }
        }
        present.entry((kind.to_string(), id)).or_insert(i);
        checkable.push((i, r, machine));
    }

    for (i, r, machine) in checkable {
        for (field, targets) in &machine.refs {
            // Missing or mistyped ref fields were already reported by the machine.
            let Some(Value::String(target)) = r.body.get(field) else { continue };
            let id = entity_id(&r.origin.source_id, target);
            let found = targets.iter().any(|t| {
                present.contains_key(&(t.clone(), id.clone())) || existing.kind_of(&id) == Some(t.as_str())
            });
            if !found {
                push(
                    i,
                    r,
                    FindingCode::DanglingRef,
                    field,
                    format!("`{target}` does not name a {} in source `{}`", targets.join("/"), r.origin.source_id),
                );
            }
        }
    }

    findings.sort_by(|a, b| (a.record, a.code, &a.field).cmp(&(b.record, b.code, &b.field)));
    ConformanceReport { findings }
}
