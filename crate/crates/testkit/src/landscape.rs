//! Ground-truth landscapes scattered into overlapping discovery sources.
//!
//! A landscape is a set of integration systems with directed flows, each
//! flow on its own interface, plus optional business-process participants
//! correlated to one system each. Systems are copied into one or more
//! sources under source-specific object ids; every flow's sending and
//! receiving configurations may land in different sources. Names, hostnames
//! and addresses are written in varying but equivalent spellings.
//!
//! Engine ids are assumed to be `source_id/object_id`; the expected
//! canonical id of a system is the smallest id among its copies.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const SOURCE_IDS: [&str; 4] = ["pi", "sld", "po", "mq"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeParams {
    pub systems: usize,
    pub flows: usize,
    pub sources: usize,
    pub business: usize,
    /// Probability that a system is copied into each further source.
    pub duplication: f64,
}

impl LandscapeParams {
    /// Random sizes within the ranges 10..=50 systems, 20..=100 flows and
    /// 2..=4 sources.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        LandscapeParams {
            systems: rng.gen_range(10..=50),
            flows: rng.gen_range(20..=100),
            sources: rng.gen_range(2..=4),
            business: 0,
            duplication: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthFlow {
    pub source: usize,
    pub target: usize,
    pub interface: String,
    pub namespace: String,
    pub operation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusinessParticipant {
    pub name: String,
    pub source: usize,
    pub object_id: String,
    /// Integration system this participant is implemented by.
    pub system: usize,
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    pub source_id: String,
    /// Source configuration as JSON text.
    pub config: String,
    /// JSON Lines, one record each.
    pub lines: Vec<String>,
    /// Object id of each line, in line order.
    pub object_ids: Vec<String>,
}

impl SourceFile {
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Landscape {
    pub names: Vec<String>,
    /// Per system: source index to object id of its copy there.
    pub placements: Vec<BTreeMap<usize, String>>,
    pub flows: Vec<TruthFlow>,
    pub business: Vec<BusinessParticipant>,
    pub sources: Vec<SourceFile>,
}

fn spelling(rng: &mut ChaCha8Rng, s: &str) -> String {
    match rng.gen_range(0..4) {
        0 => s.to_string(),
        1 => s.to_uppercase(),
        2 => format!("  {s} "),
        _ => s.to_lowercase(),
    }
}

fn hostname(i: usize) -> String {
    format!("host-{i}.corp")
}

fn addresses(rng: &mut ChaCha8Rng, k: usize, target: usize) -> (String, String) {
    if k % 3 == 2 {
        let q = format!("queue.{k}");
        (format!("JMS://{}/", q.to_uppercase()), format!("jms://{q}"))
    } else {
        let host = hostname(target);
        let path = format!("/svc/If{k}");
        let out = if rng.gen_bool(0.5) {
            format!("HTTP://{}:80{path}/", host.to_uppercase())
        } else {
            format!("http://{host}{path}")
        };
        let inc = if rng.gen_bool(0.5) {
            format!("http://{host}{path}/")
        } else {
            format!("Http://{host}{path}")
        };
        (out, inc)
    }
}

/// Writes a record in the layout of source `s`. Source 1 nests ids under
/// `meta.id` and names systems `sysName`; source 2 omits `kind` on systems.
fn record(s: usize, kind: &str, id: &str, mut fields: serde_json::Map<String, Value>) -> Value {
    if s == 1 {
        fields.insert("meta".into(), json!({ "id": id }));
        if kind == "system" {
            if let Some(name) = fields.remove("name") {
                fields.insert("sysName".into(), name);
            }
        }
    } else {
        fields.insert("object_id".into(), json!(id));
    }
    if !(s == 2 && kind == "system") {
        fields.insert("kind".into(), json!(kind));
    }
    Value::Object(fields)
}

fn config(s: usize) -> String {
    let id = SOURCE_IDS[s];
    let v = match s {
        1 => json!({
            "source_id": id,
            "source_type": "landscape-directory",
            "schedule_hint": 3600,
            "mapping": [
                {"from": "meta.id", "to": "object_id"},
                {"from": "sysName", "to": "name", "kind": "system"}
            ]
        }),
        2 => json!({"source_id": id, "source_type": "middleware", "default_kind": "system"}),
        _ => json!({"source_id": id, "source_type": "middleware", "schedule_hint": 600}),
    };
    serde_json::to_string_pretty(&v).unwrap()
}

pub fn generate(seed: u64, params: LandscapeParams) -> Landscape {
    assert!((1..=SOURCE_IDS.len()).contains(&params.sources));
    assert!(params.systems >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.systems;

    let words = ["Billing", "Orders", "CRM", "Ledger", "Stock", "HR", "Portal", "Payments", "Gateway", "Reports"];
    let names: Vec<String> = (0..n).map(|i| format!("{} {i}", words[i % words.len()])).collect();

    let mut placements: Vec<BTreeMap<usize, String>> = vec![BTreeMap::new(); n];
    let mut counters = vec![0usize; params.sources];
    let mut place = |placements: &mut Vec<BTreeMap<usize, String>>, rng: &mut ChaCha8Rng, sys: usize, s: usize| {
        placements[sys].entry(s).or_insert_with(|| {
            counters[s] += 1;
            let id = match s {
                0 => format!("S{:06}", counters[s]),
                1 => format!("sys-{:x}", counters[s] * 7919 + 13),
                _ => format!("{}{}", ["a", "b", "c"][rng.gen_range(0..3)], counters[s]),
            };
            id
        });
    };
    for sys in 0..n {
        let home = rng.gen_range(0..params.sources);
        place(&mut placements, &mut rng, sys, home);
        for s in 0..params.sources {
            if rng.gen_bool(params.duplication) {
                place(&mut placements, &mut rng, sys, s);
            }
        }
    }

    let mut flows = Vec::new();
    let mut conf_sources = Vec::new();
    for k in 0..params.flows {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let s_out = rng.gen_range(0..params.sources);
        let s_in = rng.gen_range(0..params.sources);
        place(&mut placements, &mut rng, a, s_out);
        place(&mut placements, &mut rng, b, s_in);
        flows.push(TruthFlow {
            source: a,
            target: b,
            interface: format!("If{k}"),
            namespace: format!("urn:corp:{}", k % 4),
            operation: if k % 2 == 0 { String::new() } else { "post".into() },
        });
        conf_sources.push((s_out, s_in));
    }

    let mut business = Vec::new();
    for j in 0..params.business {
        let system = rng.gen_range(0..n);
        let s = rng.gen_range(0..params.sources);
        place(&mut placements, &mut rng, system, s);
        business.push(BusinessParticipant {
            name: format!("Process {j}"),
            source: s,
            object_id: format!("bp-{j}"),
            system,
        });
    }

    let mut per_source: Vec<Vec<(String, Value)>> = vec![Vec::new(); params.sources];
    let mut push = |s: usize, kind: &str, id: String, fields: Value| {
        let Value::Object(fields) = fields else { unreachable!() };
        per_source[s].push((id.clone(), record(s, kind, &id, fields)));
    };
    for (sys, copies) in placements.iter().enumerate() {
        for (&s, id) in copies {
            let mut fields = json!({
                "name": spelling(&mut rng, &names[sys]),
                "env": if s == 0 { "prod" } else { "test" },
                "owner": format!("team-{}", sys % 5),
            });
            if sys % 3 == 0 {
                fields["contract"] = json!({"sla": "gold", "hours": 24});
            }
            if s == 3 {
                fields["system_kind"] = json!("application");
            }
            push(s, "system", id.clone(), fields);
            let host_id = format!("h-{id}");
            push(s, "host", host_id.clone(), json!({"hostname": spelling(&mut rng, &hostname(sys))}));
            push(s, "runs_on", format!("r-{id}"), json!({"system_id": id, "host_id": host_id}));
        }
    }
    for (k, (f, &(s_out, s_in))) in flows.iter().zip(&conf_sources).enumerate() {
        let (out_addr, in_addr) = addresses(&mut rng, k, f.target);
        let mut out = json!({
            "system_id": placements[f.source][&s_out],
            "interface": f.interface,
            "namespace": f.namespace,
            "address": out_addr,
            "adapter": "soap",
        });
        let mut inc = json!({
            "system_id": placements[f.target][&s_in],
            "interface": f.interface,
            "namespace": f.namespace,
            "address": in_addr,
            "adapter": "soap",
        });
        if !f.operation.is_empty() {
            out["operation"] = json!(f.operation);
            inc["operation"] = json!(f.operation);
        }
        push(s_out, "out_conf", format!("oc-{k}"), out);
        push(s_in, "in_conf", format!("ic-{k}"), inc);
    }
    for b in &business {
        push(
            b.source,
            "system",
            b.object_id.clone(),
            json!({"name": b.name, "space": "business-process", "system_kind": "process"}),
        );
        push(
            b.source,
            "correlation",
            format!("corr-{}", b.object_id),
            json!({
                "left_space": "business-process",
                "left_id": b.object_id,
                "right_space": "integration",
                "right_id": placements[b.system][&b.source],
            }),
        );
    }

    let sources = per_source
        .into_iter()
        .enumerate()
        .map(|(s, mut records)| {
            records.shuffle(&mut rng);
            SourceFile {
                source_id: SOURCE_IDS[s].to_string(),
                config: config(s),
                object_ids: records.iter().map(|(id, _)| id.clone()).collect(),
                lines: records.iter().map(|(_, v)| v.to_string()).collect(),
            }
        })
        .collect();

    Landscape {
        names,
        placements,
        flows,
        business,
        sources,
    }
}

impl Landscape {
    /// Expected representative id of integration system `sys`.
    pub fn canonical_id(&self, sys: usize) -> String {
        self.placements[sys]
            .iter()
            .map(|(&s, id)| format!("{}/{id}", SOURCE_IDS[s]))
            .min()
            .expect("every system is placed")
    }

    pub fn business_id(&self, j: usize) -> String {
        let b = &self.business[j];
        format!("{}/{}", SOURCE_IDS[b.source], b.object_id)
    }

    /// `(source id, target id, interface name)` on canonical ids.
    pub fn expected_edges(&self) -> BTreeSet<(String, String, String)> {
        self.flows
            .iter()
            .map(|f| (self.canonical_id(f.source), self.canonical_id(f.target), f.interface.clone()))
            .collect()
    }

    pub fn expected_participants(&self) -> usize {
        self.names.len() + self.business.len()
    }

    /// `(business participant id, system id)` pairs.
    pub fn expected_links(&self) -> BTreeSet<(String, String)> {
        (0..self.business.len())
            .map(|j| (self.business_id(j), self.canonical_id(self.business[j].system)))
            .collect()
    }

    /// Total number of system copies across sources.
    pub fn copies(&self) -> usize {
        self.placements.iter().map(BTreeMap::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_flow_owner_is_placed_where_its_config_lives() {
        let l = generate(
            3,
            LandscapeParams {
                systems: 20,
                flows: 35,
                sources: 3,
                business: 2,
                duplication: 0.3,
            },
        );
        assert_eq!(l.expected_edges().len(), 35);
        assert!(l.copies() > 20);
        for s in &l.sources {
            let ids: BTreeSet<&String> = s.object_ids.iter().collect();
            assert_eq!(ids.len(), s.object_ids.len(), "ids unique within {}", s.source_id);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let p = LandscapeParams::random(9);
        let a = generate(9, p);
        let b = generate(9, p);
        assert_eq!(a.sources[0].lines, b.sources[0].lines);
    }
}
