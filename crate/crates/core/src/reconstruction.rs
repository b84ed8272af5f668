//! Equivalence detection, flow reconstruction and property merge.
//!
//! The built-in Datalog program derives `equiv_sys`, `equiv_host`,
//! `conf_match`, `flow`, `participant_link` and `flow_link`. Everything after
//! evaluation (partitioning, lifting to representatives, merging) is a
//! deterministic post-pass over the derived facts.

use std::collections::{BTreeMap, BTreeSet};

use netinfer_datalog::{parse_program, DatalogError, Evaluator, Fact, FactSet, Program, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::normalize_address;
use crate::model::{
    check_references, to_facts, InterfaceRef, ModelError, Origin, Payload, StoreContent, SystemEntity,
    INTEGRATION_SPACE, SPACE_PROP,
};

const BUILTIN_RULES: &str = include_str!("../rules/builtin.dl");

/// Predicates supplied as input; user rules may read but not define them.
pub const EDB_PREDICATES: [&str; 12] = [
    "system",
    "host",
    "runs_on",
    "out_conf",
    "in_conf",
    "prop",
    "complex_prop",
    "correlation",
    "origin",
    "sys_key",
    "sys_name",
    "sys_space",
];

pub fn builtin_rules() -> &'static str {
    BUILTIN_RULES
}

pub fn builtin_program() -> Program {
    parse_program(BUILTIN_RULES).expect("built-in rules parse")
}

/// Source trust ranks; unlisted sources rank 0.
pub type TrustRanks = BTreeMap<String, i64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    /// Attributes compared for system equivalence: `name`, `kind`, `space`,
    /// or any simple property key. Values are normalized before comparison.
    pub key_fields: Vec<String>,
    pub trust: TrustRanks,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            key_fields: vec!["name".into(), "kind".into(), "space".into()],
            trust: TrustRanks::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructionError {
    #[error("rules: {0}")]
    Rules(#[from] DatalogError),
    #[error("rules may not define input predicate `{0}`")]
    RedefinesInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot merge an empty member list")]
    EmptyMembers,
}

fn key_value(e: &SystemEntity, field: &str) -> Option<String> {
    let raw = match field {
        "name" => Some(e.name.as_str()),
        "kind" => Some(e.kind.as_str()),
        "space" => Some(e.space()),
        other => e.simple_props.get(other).map(String::as_str),
    }?;
    Some(normalize_address(raw))
}

/// Match-key facts computed outside the rule program, so that candidate
/// pairs come from an equality join instead of comparing every pair.
pub fn key_facts(store: &StoreContent, config: &ReconstructionConfig) -> FactSet {
    let mut out = FactSet::new();
    for e in store.systems.values() {
        let id = Value::str(&e.id);
        let parts: Option<Vec<String>> = config.key_fields.iter().map(|f| key_value(e, f)).collect();
        if let Some(parts) = parts {
            out.insert(Fact::new("sys_key", vec![id.clone(), Value::str(parts.join("\u{1f}"))]));
        }
        out.insert(Fact::new("sys_name", vec![id.clone(), Value::str(normalize_address(&e.name))]));
        out.insert(Fact::new("sys_space", vec![id, Value::str(e.space())]));
    }
    out
}

/// The built-in program merged with optional user rules.
pub fn full_program(extra_rules: Option<&Program>) -> Result<Program, ReconstructionError> {
    let builtin = builtin_program();
    let Some(extra) = extra_rules else { return Ok(builtin) };
    if let Some(p) = extra.idb_predicates().into_iter().find(|p| EDB_PREDICATES.contains(p)) {
        return Err(ReconstructionError::RedefinesInput(p.to_string()));
    }
    Ok(builtin.merge(extra)?)
}

/// Evaluates the program over the store's facts plus `seed`.
pub fn infer_facts(
    store: &StoreContent,
    extra_rules: Option<&Program>,
    config: &ReconstructionConfig,
    seed: impl IntoIterator<Item = Fact>,
) -> Result<FactSet, ReconstructionError> {
    let program = full_program(extra_rules)?;
    let mut edb = to_facts(store);
    edb.extend(key_facts(store, config));
    edb.extend(seed);
    let evaluator = Evaluator::with_normalizer(normalize_address);
    Ok(evaluator.evaluate(&program, edb)?)
}

/// Partition of system and host ids; each class is keyed by its
/// representative, the smallest id in it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClassSet {
    pub systems: BTreeMap<String, BTreeSet<String>>,
    pub hosts: BTreeMap<String, BTreeSet<String>>,
    #[serde(skip)]
    system_rep: BTreeMap<String, String>,
    #[serde(skip)]
    host_rep: BTreeMap<String, String>,
}

impl EquivalenceClassSet {
    fn build(
        systems: impl IntoIterator<Item = String>,
        system_pairs: &[(String, String)],
        hosts: impl IntoIterator<Item = String>,
        host_pairs: &[(String, String)],
    ) -> Self {
        let (systems, system_rep) = partition(systems, system_pairs);
        let (hosts, host_rep) = partition(hosts, host_pairs);
        EquivalenceClassSet {
            systems,
            hosts,
            system_rep,
            host_rep,
        }
    }

    pub fn system_representative(&self, id: &str) -> Option<&str> {
        self.system_rep.get(id).map(String::as_str)
    }

    pub fn host_representative(&self, id: &str) -> Option<&str> {
        self.host_rep.get(id).map(String::as_str)
    }
}

type Classes = BTreeMap<String, BTreeSet<String>>;

fn partition(items: impl IntoIterator<Item = String>, pairs: &[(String, String)]) -> (Classes, BTreeMap<String, String>) {
    let items: Vec<String> = items.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..items.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in pairs {
        if let (Some(&a), Some(&b)) = (index.get(a.as_str()), index.get(b.as_str())) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            // Items are sorted, so the smaller index is the smaller id.
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut classes = Classes::new();
    let mut rep = BTreeMap::new();
    for i in 0..items.len() {
        let r = find(&mut parent, i);
        classes.entry(items[r].clone()).or_default().insert(items[i].clone());
        rep.insert(items[i].clone(), items[r].clone());
    }
    (classes, rep)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyConflict {
    pub key: String,
    pub kept: String,
    pub kept_source: String,
    pub lost: String,
    pub lost_source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedComplexProperty {
    pub kind: String,
    pub digest: String,
    pub payload: Payload,
    pub origins: Vec<Origin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedSystem {
    pub id: String,
    pub name: String,
    pub kind: String,
    pub space: String,
    pub members: Vec<String>,
    pub simple_props: BTreeMap<String, String>,
    pub conflicts: Vec<PropertyConflict>,
    pub complex_props: Vec<MergedComplexProperty>,
    /// Representative ids of the hosts any member runs on.
    pub hosts: Vec<String>,
    pub origins: Vec<Origin>,
}

/// Merges one equivalence class.
///
/// For each simple property key the winner is the value from the highest
/// trust source, then the smaller source id, then the smaller value. Every
/// other distinct value is logged as a conflict. Name and kind come from the
/// member with the smallest id. `hosts` is left empty.
pub fn merge_properties(members: &[SystemEntity], trust: &TrustRanks) -> Result<MergedSystem, ReconstructionError> {
    let canonical = members.iter().min_by(|a, b| a.id.cmp(&b.id)).ok_or(ReconstructionError::EmptyMembers)?;
    let rank = |source: &str| trust.get(source).copied().unwrap_or(0);

    let mut candidates: BTreeMap<&str, BTreeSet<(&str, &str)>> = BTreeMap::new();
    for m in members {
        for (k, v) in &m.simple_props {
            candidates.entry(k).or_default().insert((m.origin.source_id.as_str(), v.as_str()));
        }
    }
    let mut simple_props = BTreeMap::new();
    let mut conflicts = Vec::new();
    for (key, values) in candidates {
        let &(kept_source, kept) = values
            .iter()
            .min_by(|a, b| rank(b.0).cmp(&rank(a.0)).then(a.0.cmp(b.0)).then(a.1.cmp(b.1)))
            .expect("non-empty");
        for &(source, value) in &values {
            if value != kept {
                conflicts.push(PropertyConflict {
                    key: key.to_string(),
                    kept: kept.to_string(),
                    kept_source: kept_source.to_string(),
                    lost: value.to_string(),
                    lost_source: source.to_string(),
                });
            }
        }
        simple_props.insert(key.to_string(), kept.to_string());
    }
    conflicts.sort();

    let mut complex: BTreeMap<(String, String), MergedComplexProperty> = BTreeMap::new();
    for m in members {
        for c in &m.complex_props {
            let digest = c.digest();
            complex
                .entry((c.kind.clone(), digest.clone()))
                .or_insert_with(|| MergedComplexProperty {
                    kind: c.kind.clone(),
                    digest,
                    payload: c.payload.clone(),
                    origins: Vec::new(),
                })
                .origins
                .push(c.origin.clone());
        }
    }
    let complex_props = complex
        .into_values()
        .map(|mut c| {
            c.origins.sort();
            c.origins.dedup();
            c
        })
        .collect();

    let mut member_ids: Vec<String> = members.iter().map(|m| m.id.clone()).collect();
    member_ids.sort();
    member_ids.dedup();
    let mut origins: Vec<Origin> = members.iter().map(|m| m.origin.clone()).collect();
    origins.sort();
    origins.dedup();

    Ok(MergedSystem {
        id: canonical.id.clone(),
        name: canonical.name.clone(),
        kind: canonical.kind.clone(),
        space: simple_props
            .get(SPACE_PROP)
            .cloned()
            .unwrap_or_else(|| INTEGRATION_SPACE.to_string()),
        members: member_ids,
        simple_props,
        conflicts,
        complex_props,
        hosts: Vec::new(),
        origins,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub source_class: String,
    pub target_class: String,
    pub interface: InterfaceRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructedFlow {
    pub source_class: String,
    pub target_class: String,
    pub interface: InterfaceRef,
    /// `(out_conf id, in_conf id)` pairs.
    pub supporting: Vec<(String, String)>,
    pub origins: Vec<Origin>,
}

impl ReconstructedFlow {
    pub fn key(&self) -> FlowKey {
        FlowKey {
            source_class: self.source_class.clone(),
            target_class: self.target_class.clone(),
            interface: self.interface.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DerivedParticipantLink {
    pub left: String,
    pub right: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DerivedFlowLink {
    pub left: FlowKey,
    pub right: FlowKey,
    pub kind: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub classes: EquivalenceClassSet,
    /// Sorted by id.
    pub systems: Vec<MergedSystem>,
    /// Representative host id to hostname.
    pub hosts: BTreeMap<String, String>,
    /// Sorted by key.
    pub flows: Vec<ReconstructedFlow>,
    pub participant_links: Vec<DerivedParticipantLink>,
    pub flow_links: Vec<DerivedFlowLink>,
    pub warnings: Vec<String>,
}

fn str_arg(f: &Fact, i: usize) -> Option<&str> {
    f.args.get(i).and_then(Value::as_str)
}

fn pairs(facts: &FactSet, predicate: &str) -> Vec<(String, String)> {
    facts
        .iter()
        .filter(|f| f.predicate == predicate)
        .filter_map(|f| Some((str_arg(f, 0)?.to_string(), str_arg(f, 1)?.to_string())))
        .collect()
}

/// Evaluates the rules over `store` and assembles the result.
pub fn reconstruct(
    store: &StoreContent,
    extra_rules: Option<&Program>,
    config: &ReconstructionConfig,
) -> Result<Reconstruction, ReconstructionError> {
    let derived = infer_facts(store, extra_rules, config, [])?;
    assemble(store, &derived, config)
}

/// Post-pass over derived facts: partitions, merged systems, lifted flows
/// and links.
pub fn assemble(
    store: &StoreContent,
    derived: &FactSet,
    config: &ReconstructionConfig,
) -> Result<Reconstruction, ReconstructionError> {
    let derived_only = derived.iter().filter(|f| !EDB_PREDICATES.contains(&f.predicate.as_str()));
    check_references(derived_only, store)?;

    let sys_pairs: Vec<_> = pairs(derived, "equiv_sys")
        .into_iter()
        .filter(|(a, b)| store.systems.contains_key(a) && store.systems.contains_key(b))
        .collect();
    let host_pairs: Vec<_> = pairs(derived, "equiv_host")
        .into_iter()
        .filter(|(a, b)| store.hosts.contains_key(a) && store.hosts.contains_key(b))
        .collect();
    let classes = EquivalenceClassSet::build(
        store.systems.keys().cloned(),
        &sys_pairs,
        store.hosts.keys().cloned(),
        &host_pairs,
    );
    let sys_rep = |id: &str| classes.system_representative(id).map(str::to_string);
    let mut warnings = Vec::new();

    let mut host_targets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in store.runs_on.values() {
        if let (Some(s), Some(h)) = (sys_rep(&r.system_id), classes.host_representative(&r.host_id)) {
            host_targets.entry(s).or_default().insert(h.to_string());
        }
    }
    let mut systems = Vec::new();
    for (rep, members) in &classes.systems {
        let entities: Vec<SystemEntity> = members.iter().map(|m| store.systems[m].clone()).collect();
        let mut merged = merge_properties(&entities, &config.trust)?;
        merged.hosts = host_targets.remove(rep).unwrap_or_default().into_iter().collect();
        systems.push(merged);
    }
    let hosts = classes
        .hosts
        .keys()
        .map(|h| (h.clone(), store.hosts[h].hostname.clone()))
        .collect();

    // Support for each lifted flow comes from the matched configuration pairs.
    type Support = (BTreeSet<(String, String)>, BTreeSet<Origin>);
    let mut support: BTreeMap<FlowKey, Support> = BTreeMap::new();
    let mut conf_flows: BTreeMap<String, BTreeSet<FlowKey>> = BTreeMap::new();
    for (o, i) in pairs(derived, "conf_match") {
        let (Some(out), Some(inc)) = (store.out_confs.get(&o), store.in_confs.get(&i)) else {
            warnings.push(format!("conf_match({o}, {i}) does not pair an outgoing with an incoming configuration"));
            continue;
        };
        let (Some(src), Some(tgt)) = (sys_rep(&out.owner_system_id), sys_rep(&inc.owner_system_id)) else {
            continue;
        };
        let key = FlowKey {
            source_class: src,
            target_class: tgt,
            interface: out.interface.clone(),
        };
        let entry = support.entry(key.clone()).or_default();
        entry.0.insert((o.clone(), i.clone()));
        entry.1.insert(out.origin.clone());
        entry.1.insert(inc.origin.clone());
        conf_flows.entry(o).or_default().insert(key.clone());
        conf_flows.entry(i).or_default().insert(key);
    }

    let mut flow_keys = BTreeSet::new();
    for f in derived.iter().filter(|f| f.predicate == "flow") {
        let [Some(a), Some(b), Some(name), Some(ns), Some(op)] = [0, 1, 2, 3, 4].map(|i| str_arg(f, i)) else {
            warnings.push(format!("ignoring malformed {f}"));
            continue;
        };
        let (Some(src), Some(tgt)) = (sys_rep(a), sys_rep(b)) else { continue };
        flow_keys.insert(FlowKey {
            source_class: src,
            target_class: tgt,
            interface: InterfaceRef::new(name, ns, op),
        });
    }
    let mut flows = Vec::new();
    for key in flow_keys {
        match support.get(&key) {
            Some((supporting, origins)) => flows.push(ReconstructedFlow {
                source_class: key.source_class,
                target_class: key.target_class,
                interface: key.interface,
                supporting: supporting.iter().cloned().collect(),
                origins: origins.iter().cloned().collect(),
            }),
            None => warnings.push(format!(
                "flow {} -> {} ({}) has no supporting configuration pair; skipped",
                key.source_class, key.target_class, key.interface
            )),
        }
    }
    let known_flows: BTreeSet<FlowKey> = flows.iter().map(ReconstructedFlow::key).collect();

    let mut participant_links = BTreeSet::new();
    for f in derived.iter().filter(|f| f.predicate == "participant_link") {
        let [Some(p), Some(q), Some(kind)] = [0, 1, 2].map(|i| str_arg(f, i)) else { continue };
        let (Some(left), Some(right)) = (sys_rep(p), sys_rep(q)) else { continue };
        if left != right {
            participant_links.insert(DerivedParticipantLink {
                left,
                right,
                kind: kind.to_string(),
            });
        }
    }

    let mut flow_links = BTreeSet::new();
    for f in derived.iter().filter(|f| f.predicate == "flow_link") {
        let [Some(a), Some(b), Some(kind)] = [0, 1, 2].map(|i| str_arg(f, i)) else { continue };
        let empty = BTreeSet::new();
        for l in conf_flows.get(a).unwrap_or(&empty).intersection(&known_flows) {
            for r in conf_flows.get(b).unwrap_or(&empty).intersection(&known_flows) {
                if l != r {
                    flow_links.insert(DerivedFlowLink {
                        left: l.clone(),
                        right: r.clone(),
                        kind: kind.to_string(),
                    });
                }
            }
        }
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Reconstruction {
        classes,
        systems,
        hosts,
        flows,
        participant_links: participant_links.into_iter().collect(),
        flow_links: flow_links.into_iter().collect(),
        warnings,
    })
}
