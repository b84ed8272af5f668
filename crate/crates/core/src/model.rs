//! The inference model: typed entities discovered from sources, and their
//! projection to Datalog facts.
//!
//! Entity ids are `source_id/object_id`, so two sources never collide.
//! Relations between entities (`runs_on`, configuration owners, correlation
//! refs) always hold engine ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use netinfer_datalog::{Fact, FactSet, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_string};

pub const SYSTEM: &str = "system";
pub const HOST: &str = "host";
pub const RUNS_ON: &str = "runs_on";
pub const OUT_CONF: &str = "out_conf";
pub const IN_CONF: &str = "in_conf";
pub const CORRELATION: &str = "correlation";

/// Entity kinds of the inference model, in canonical order.
pub const ENTITY_KINDS: [&str; 6] = [SYSTEM, HOST, RUNS_ON, OUT_CONF, IN_CONF, CORRELATION];

pub const INTEGRATION_SPACE: &str = "integration";
pub const BUSINESS_SPACE: &str = "business-process";
/// Simple property naming the network space of a system.
pub const SPACE_PROP: &str = "space";

/// Where an entity came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub source_id: String,
    pub object_id: String,
    pub source_type: String,
    pub captured_at: i64,
}

impl Origin {
    pub fn new(
        source_id: impl Into<String>,
        object_id: impl Into<String>,
        source_type: impl Into<String>,
        captured_at: i64,
    ) -> Self {
        Origin {
            source_id: source_id.into(),
            object_id: object_id.into(),
            source_type: source_type.into(),
            captured_at,
        }
    }

    pub fn entity_id(&self) -> String {
        entity_id(&self.source_id, &self.object_id)
    }
}

pub fn entity_id(source_id: &str, object_id: &str) -> String {
    format!("{source_id}/{object_id}")
}

/// Nested property payload in canonical form: maps are key-sorted and only
/// strings, integers, lists and maps occur.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Int(i64),
    Str(String),
    List(Vec<Payload>),
    Map(BTreeMap<String, Payload>),
}

impl Payload {
    /// Canonicalizes arbitrary JSON: booleans and non-integral numbers become
    /// strings, nulls inside objects are dropped and render as `"null"` in lists.
    pub fn from_json(value: &serde_json::Value) -> Payload {
        use serde_json::Value as J;
        match value {
            J::Null => Payload::Str("null".into()),
            J::Bool(b) => Payload::Str(b.to_string()),
            J::Number(n) => match n.as_i64() {
                Some(i) => Payload::Int(i),
                None => Payload::Str(n.to_string()),
            },
            J::String(s) => Payload::Str(s.clone()),
            J::Array(items) => Payload::List(items.iter().map(Payload::from_json).collect()),
            J::Object(map) => Payload::Map(
                map.iter()
                    .filter(|(_, v)| !v.is_null())
                    .map(|(k, v)| (k.clone(), Payload::from_json(v)))
                    .collect(),
            ),
        }
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> String {
        sha256_hex(to_canonical_string(self).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComplexProperty {
    pub kind: String,
    pub payload: Payload,
    pub origin: Origin,
}

impl ComplexProperty {
    pub fn digest(&self) -> String {
        self.payload.digest()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemEntity {
    pub id: String,
    pub name: String,
    pub kind: String,
    pub simple_props: BTreeMap<String, String>,
    pub complex_props: Vec<ComplexProperty>,
    pub origin: Origin,
}

impl SystemEntity {
    /// Network space of the system; `integration` unless a `space` property says otherwise.
    pub fn space(&self) -> &str {
        self.simple_props
            .get(SPACE_PROP)
            .map(String::as_str)
            .unwrap_or(INTEGRATION_SPACE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostEntity {
    pub id: String,
    pub hostname: String,
    pub simple_props: BTreeMap<String, String>,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunsOn {
    pub id: String,
    pub system_id: String,
    pub host_id: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterfaceRef {
    pub name: String,
    pub namespace: String,
    pub operation: String,
}

impl InterfaceRef {
    pub fn new(name: impl Into<String>, namespace: impl Into<String>, operation: impl Into<String>) -> Self {
        InterfaceRef {
            name: name.into(),
            namespace: namespace.into(),
            operation: operation.into(),
        }
    }
}

impl fmt::Display for InterfaceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.namespace.is_empty() {
            write!(f, "{}:", self.namespace)?;
        }
        f.write_str(&self.name)?;
        if !self.operation.is_empty() {
            write!(f, ".{}", self.operation)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutgoingConfiguration {
    pub id: String,
    pub owner_system_id: String,
    pub interface: InterfaceRef,
    pub receiver_address: String,
    pub adapter: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomingConfiguration {
    pub id: String,
    pub owner_system_id: String,
    pub interface: InterfaceRef,
    pub endpoint_address: String,
    pub adapter: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub space: String,
    pub entity_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationHint {
    pub id: String,
    pub left: EntityRef,
    pub right: EntityRef,
    pub kind: String,
    pub origin: Origin,
}

/// Contents of one raw-store version, keyed by entity id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreContent {
    pub systems: BTreeMap<String, SystemEntity>,
    pub hosts: BTreeMap<String, HostEntity>,
    pub runs_on: BTreeMap<String, RunsOn>,
    pub out_confs: BTreeMap<String, OutgoingConfiguration>,
    pub in_confs: BTreeMap<String, IncomingConfiguration>,
    pub correlations: BTreeMap<String, CorrelationHint>,
}

impl StoreContent {
    pub fn is_empty(&self) -> bool {
        self.entity_count() == 0
    }

    pub fn entity_count(&self) -> usize {
        self.systems.len()
            + self.hosts.len()
            + self.runs_on.len()
            + self.out_confs.len()
            + self.in_confs.len()
            + self.correlations.len()
    }

    /// Kind of the entity with this engine id, if any.
    pub fn kind_of(&self, id: &str) -> Option<&'static str> {
        if self.systems.contains_key(id) {
            Some(SYSTEM)
        } else if self.hosts.contains_key(id) {
            Some(HOST)
        } else if self.runs_on.contains_key(id) {
            Some(RUNS_ON)
        } else if self.out_confs.contains_key(id) {
            Some(OUT_CONF)
        } else if self.in_confs.contains_key(id) {
            Some(IN_CONF)
        } else if self.correlations.contains_key(id) {
            Some(CORRELATION)
        } else {
            None
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.kind_of(id).is_some()
    }

    pub fn origin_of(&self, id: &str) -> Option<&Origin> {
        self.systems
            .get(id)
            .map(|e| &e.origin)
            .or_else(|| self.hosts.get(id).map(|e| &e.origin))
            .or_else(|| self.runs_on.get(id).map(|e| &e.origin))
            .or_else(|| self.out_confs.get(id).map(|e| &e.origin))
            .or_else(|| self.in_confs.get(id).map(|e| &e.origin))
            .or_else(|| self.correlations.get(id).map(|e| &e.origin))
    }

    pub fn sources(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        out.extend(self.systems.values().map(|e| e.origin.source_id.as_str()));
        out.extend(self.hosts.values().map(|e| e.origin.source_id.as_str()));
        out.extend(self.runs_on.values().map(|e| e.origin.source_id.as_str()));
        out.extend(self.out_confs.values().map(|e| e.origin.source_id.as_str()));
        out.extend(self.in_confs.values().map(|e| e.origin.source_id.as_str()));
        out.extend(self.correlations.values().map(|e| e.origin.source_id.as_str()));
        out
    }

    /// Copy with every entity of `source_id` removed.
    pub fn without_source(&self, source_id: &str) -> StoreContent {
        self.filter_source(|s| s != source_id)
    }

    /// Only the entities of `source_id`.
    pub fn only_source(&self, source_id: &str) -> StoreContent {
        self.filter_source(|s| s == source_id)
    }

    fn filter_source(&self, keep: impl Fn(&str) -> bool) -> StoreContent {
        fn f<T: Clone>(m: &BTreeMap<String, T>, origin: impl Fn(&T) -> &Origin, keep: &dyn Fn(&str) -> bool) -> BTreeMap<String, T> {
            m.iter()
                .filter(|(_, e)| keep(&origin(e).source_id))
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect()
        }
        StoreContent {
            systems: f(&self.systems, |e| &e.origin, &keep),
            hosts: f(&self.hosts, |e| &e.origin, &keep),
            runs_on: f(&self.runs_on, |e| &e.origin, &keep),
            out_confs: f(&self.out_confs, |e| &e.origin, &keep),
            in_confs: f(&self.in_confs, |e| &e.origin, &keep),
            correlations: f(&self.correlations, |e| &e.origin, &keep),
        }
    }

    /// Adds every entity of `other`, replacing entries with the same id.
    pub fn extend(&mut self, other: StoreContent) {
        self.systems.extend(other.systems);
        self.hosts.extend(other.hosts);
        self.runs_on.extend(other.runs_on);
        self.out_confs.extend(other.out_confs);
        self.in_confs.extend(other.in_confs);
        self.correlations.extend(other.correlations);
    }

    /// Canonical JSON dump; equal contents give equal bytes.
    pub fn canonical_json(&self) -> String {
        to_canonical_string(self)
    }
}

/// One immutable version of the raw store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub version: u64,
    pub content: Arc<StoreContent>,
}

impl Store {
    pub fn new(version: u64, content: StoreContent) -> Self {
        Store {
            version,
            content: Arc::new(content),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("fact `{fact}` references `{id}`, which is not in the raw store")]
    DanglingDerivation { fact: String, id: String },
}

fn s(v: &str) -> Value {
    Value::str(v)
}

fn fact(pred: &str, args: Vec<Value>) -> Fact {
    Fact::new(pred, args)
}

/// Projects a store into EDB facts.
///
/// ```text
/// system(id, name, kind)            host(id, hostname)         runs_on(sid, hid)
/// out_conf(id, sid, if, ns, op, address, adapter)   in_conf(<same shape>)
/// prop(owner, key, value)           complex_prop(owner, kind, digest)
/// correlation(lspace, lid, rspace, rid, kind)        origin(id, source, object)
/// ```
pub fn to_facts(store: &StoreContent) -> FactSet {
    let mut out = FactSet::new();
    let origin = |out: &mut FactSet, id: &str, o: &Origin| {
        out.insert(fact("origin", vec![s(id), s(&o.source_id), s(&o.object_id)]));
    };
    for e in store.systems.values() {
        out.insert(fact(SYSTEM, vec![s(&e.id), s(&e.name), s(&e.kind)]));
        for (k, v) in &e.simple_props {
            out.insert(fact("prop", vec![s(&e.id), s(k), s(v)]));
        }
        for c in &e.complex_props {
            out.insert(fact("complex_prop", vec![s(&e.id), s(&c.kind), s(&c.digest())]));
        }
        origin(&mut out, &e.id, &e.origin);
    }
    for e in store.hosts.values() {
        out.insert(fact(HOST, vec![s(&e.id), s(&e.hostname)]));
        for (k, v) in &e.simple_props {
            out.insert(fact("prop", vec![s(&e.id), s(k), s(v)]));
        }
        origin(&mut out, &e.id, &e.origin);
    }
    for e in store.runs_on.values() {
        out.insert(fact(RUNS_ON, vec![s(&e.system_id), s(&e.host_id)]));
        origin(&mut out, &e.id, &e.origin);
    }
    for e in store.out_confs.values() {
        out.insert(fact(
            OUT_CONF,
            vec![
                s(&e.id),
                s(&e.owner_system_id),
                s(&e.interface.name),
                s(&e.interface.namespace),
                s(&e.interface.operation),
                s(&e.receiver_address),
                s(&e.adapter),
            ],
        ));
        origin(&mut out, &e.id, &e.origin);
    }
    for e in store.in_confs.values() {
        out.insert(fact(
            IN_CONF,
            vec![
                s(&e.id),
                s(&e.owner_system_id),
                s(&e.interface.name),
                s(&e.interface.namespace),
                s(&e.interface.operation),
                s(&e.endpoint_address),
                s(&e.adapter),
            ],
        ));
        origin(&mut out, &e.id, &e.origin);
    }
    for e in store.correlations.values() {
        out.insert(fact(
            CORRELATION,
            vec![
                s(&e.left.space),
                s(&e.left.entity_id),
                s(&e.right.space),
                s(&e.right.entity_id),
                s(&e.kind),
            ],
        ));
        origin(&mut out, &e.id, &e.origin);
    }
    out
}

/// Argument positions holding engine ids, per known predicate.
fn id_positions(predicate: &str) -> &'static [usize] {
    match predicate {
        SYSTEM | HOST | "prop" | "complex_prop" | "origin" => &[0],
        RUNS_ON => &[0, 1],
        OUT_CONF | IN_CONF => &[0, 1],
        CORRELATION => &[1, 3],
        "equiv_sys" | "equiv_host" | "conf_match" | "owner" | "participant_link" | "flow_link" => &[0, 1],
        "flow" => &[0, 1],
        _ => &[],
    }
}

/// Fails on the first fact whose id arguments are missing from `raw`.
pub fn check_references<'a>(facts: impl IntoIterator<Item = &'a Fact>, raw: &StoreContent) -> Result<(), ModelError> {
    for f in facts {
        for &i in id_positions(&f.predicate) {
            let Some(id) = f.args.get(i) else { continue };
            let found = id.as_str().is_some_and(|id| raw.contains(id));
            if !found {
                return Err(ModelError::DanglingDerivation {
                    fact: f.to_string(),
                    id: id.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn arg(f: &Fact, i: usize) -> String {
    match &f.args[i] {
        Value::Str(s) => s.to_string(),
        Value::Int(n) => n.to_string(),
    }
}

/// Rebuilds entity views from facts, taking from `raw` only what facts do
/// not carry: origins and complex-property payloads.
///
/// Derived predicates are checked for dangling ids and otherwise ignored.
pub fn from_facts(facts: &FactSet, raw: &StoreContent) -> Result<StoreContent, ModelError> {
    check_references(facts, raw)?;
    let dangling = |f: &Fact, id: String| ModelError::DanglingDerivation {
        fact: f.to_string(),
        id,
    };
    let origin = |f: &Fact, id: &str| raw.origin_of(id).cloned().ok_or_else(|| dangling(f, id.to_string()));

    let mut out = StoreContent::default();
    let mut props: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut complex: BTreeMap<String, Vec<(String, String, &Fact)>> = BTreeMap::new();

    for f in facts {
        match f.predicate.as_str() {
            "prop" if f.args.len() == 3 => {
                props.entry(arg(f, 0)).or_default().insert(arg(f, 1), arg(f, 2));
            }
            "complex_prop" if f.args.len() == 3 => {
                complex.entry(arg(f, 0)).or_default().push((arg(f, 1), arg(f, 2), f));
            }
            _ => {}
        }
    }

    for f in facts {
        match (f.predicate.as_str(), f.args.len()) {
            (SYSTEM, 3) => {
                let id = arg(f, 0);
                let raw_props = raw.systems.get(&id).map(|e| &e.complex_props);
                let mut complex_props = Vec::new();
                for (kind, digest, cf) in complex.remove(&id).unwrap_or_default() {
                    let c = raw_props
                        .into_iter()
                        .flatten()
                        .find(|c| c.kind == kind && c.digest() == digest)
                        .ok_or_else(|| dangling(cf, format!("{id}#{kind}:{digest}")))?;
                    complex_props.push(c.clone());
                }
                complex_props.sort_by(|a, b| (&a.kind, a.digest()).cmp(&(&b.kind, b.digest())));
                out.systems.insert(
                    id.clone(),
                    SystemEntity {
                        origin: origin(f, &id)?,
                        name: arg(f, 1),
                        kind: arg(f, 2),
                        simple_props: props.remove(&id).unwrap_or_default(),
                        complex_props,
                        id,
                    },
                );
            }
            (HOST, 2) => {
                let id = arg(f, 0);
                out.hosts.insert(
                    id.clone(),
                    HostEntity {
                        origin: origin(f, &id)?,
                        hostname: arg(f, 1),
                        simple_props: props.remove(&id).unwrap_or_default(),
                        id,
                    },
                );
            }
            (RUNS_ON, 2) => {
                let (sid, hid) = (arg(f, 0), arg(f, 1));
                let r = raw
                    .runs_on
                    .values()
                    .find(|r| r.system_id == sid && r.host_id == hid)
                    .ok_or_else(|| dangling(f, format!("{sid}@{hid}")))?;
                out.runs_on.insert(r.id.clone(), r.clone());
            }
            (OUT_CONF, 7) => {
                let id = arg(f, 0);
                out.out_confs.insert(
                    id.clone(),
                    OutgoingConfiguration {
                        origin: origin(f, &id)?,
                        owner_system_id: arg(f, 1),
                        interface: InterfaceRef::new(arg(f, 2), arg(f, 3), arg(f, 4)),
                        receiver_address: arg(f, 5),
                        adapter: arg(f, 6),
                        id,
                    },
                );
            }
            (IN_CONF, 7) => {
                let id = arg(f, 0);
                out.in_confs.insert(
                    id.clone(),
                    IncomingConfiguration {
                        origin: origin(f, &id)?,
                        owner_system_id: arg(f, 1),
                        interface: InterfaceRef::new(arg(f, 2), arg(f, 3), arg(f, 4)),
                        endpoint_address: arg(f, 5),
                        adapter: arg(f, 6),
                        id,
                    },
                );
            }
            (CORRELATION, 5) => {
                let (ls, lid, rs, rid, kind) = (arg(f, 0), arg(f, 1), arg(f, 2), arg(f, 3), arg(f, 4));
                let c = raw
                    .correlations
                    .values()
                    .find(|c| {
                        c.left.space == ls
                            && c.left.entity_id == lid
                            && c.right.space == rs
                            && c.right.entity_id == rid
                            && c.kind == kind
                    })
                    .ok_or_else(|| dangling(f, format!("{lid}~{rid}")))?;
                out.correlations.insert(c.id.clone(), c.clone());
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn origin(src: &str, obj: &str) -> Origin {
        Origin::new(src, obj, "middleware", 0)
    }

    pub(crate) fn system(src: &str, obj: &str, name: &str) -> SystemEntity {
        SystemEntity {
            id: entity_id(src, obj),
            name: name.into(),
            kind: "application".into(),
            simple_props: BTreeMap::new(),
            complex_props: vec![],
            origin: origin(src, obj),
        }
    }

    #[test]
    fn system_projects_to_system_fact() {
        let mut store = StoreContent::default();
        let e = system("src", "s1", "ERP");
        store.systems.insert(e.id.clone(), e);
        let facts = to_facts(&store);
        assert!(facts.contains(&Fact::new(SYSTEM, vec![s("src/s1"), s("ERP"), s("application")])));
        assert!(facts.contains(&Fact::new("origin", vec![s("src/s1"), s("src"), s("s1")])));
    }

    #[test]
    fn empty_store_has_no_facts() {
        assert!(to_facts(&StoreContent::default()).is_empty());
        assert!(from_facts(&FactSet::new(), &StoreContent::default()).unwrap().is_empty());
    }

    #[test]
    fn dangling_derivation() {
        let mut facts = FactSet::new();
        facts.insert(Fact::new("equiv_sys", vec![s("a/1"), s("b/2")]));
        assert!(matches!(
            from_facts(&facts, &StoreContent::default()),
            Err(ModelError::DanglingDerivation { .. })
        ));
    }

    #[test]
    fn payload_is_canonical() {
        let a = Payload::from_json(&serde_json::json!({"b": [1, true], "a": {"y": null, "x": 1.5}}));
        let b = Payload::from_json(&serde_json::json!({"a": {"x": 1.5}, "b": [1, "true"]}));
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), Payload::Str("x".into()).digest());
    }

    #[test]
    fn space_defaults_to_integration() {
        let mut e = system("s", "1", "ERP");
        assert_eq!(e.space(), INTEGRATION_SPACE);
        e.simple_props.insert(SPACE_PROP.into(), BUSINESS_SPACE.into());
        assert_eq!(e.space(), BUSINESS_SPACE);
    }

    #[test]
    fn interface_label() {
        assert_eq!(InterfaceRef::new("Order", "urn:sales", "create").to_string(), "urn:sales:Order.create");
        assert_eq!(InterfaceRef::new("Order", "", "").to_string(), "Order");
    }
}
