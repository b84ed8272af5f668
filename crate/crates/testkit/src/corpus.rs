//! A valid record batch and single-defect mutations of it.
//!
//! Records use the bundled inference-model layout (`kind`, `object_id`,
//! source-local refs). Each mutation names the finding code it must trigger.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const CODES: [&str; 7] = [
    "MISSING_FIELD",
    "TYPE_MISMATCH",
    "ENUM_VIOLATION",
    "DANGLING_REF",
    "DUPLICATE_KEY",
    "UNKNOWN_KIND",
    "MALFORMED_RECORD",
];

/// 50 conformant records: 10 systems (2 of them business-process), 10
/// hosts, 10 runs_on, 9 outgoing and 9 incoming configurations, 2
/// correlations.
pub fn valid_batch(seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..10 {
        let mut s = json!({"kind": "system", "object_id": format!("s{i}"), "name": format!("System {i}")});
        if i >= 8 {
            s["space"] = json!("business-process");
        } else if rng.gen_bool(0.5) {
            s["space"] = json!("integration");
        }
        if rng.gen_bool(0.3) {
            s["tier"] = json!(rng.gen_range(1..4));
        }
        out.push(s);
        out.push(json!({"kind": "host", "object_id": format!("h{i}"), "hostname": format!("box{i}.corp")}));
        out.push(json!({"kind": "runs_on", "object_id": format!("r{i}"), "system_id": format!("s{i}"), "host_id": format!("h{i}")}));
    }
    for k in 0..9 {
        let a = rng.gen_range(0..8);
        let b = (a + 1 + rng.gen_range(0..7)) % 8;
        let addr = format!("http://box{b}.corp/if{k}");
        out.push(json!({"kind": "out_conf", "object_id": format!("o{k}"), "system_id": format!("s{a}"),
                        "interface": format!("If{k}"), "namespace": "urn:x", "address": addr, "adapter": "soap"}));
        out.push(json!({"kind": "in_conf", "object_id": format!("i{k}"), "system_id": format!("s{b}"),
                        "interface": format!("If{k}"), "namespace": "urn:x", "address": addr}));
    }
    for (j, sys) in [(8, 1), (9, 2)] {
        out.push(json!({"kind": "correlation", "object_id": format!("c{j}"), "left_space": "business-process",
                        "left_id": format!("s{j}"), "right_space": "integration", "right_id": format!("s{sys}")}));
    }
    out.shuffle(&mut rng);
    out
}

fn indices_of(batch: &[Value], kinds: &[&str]) -> Vec<usize> {
    batch
        .iter()
        .enumerate()
        .filter(|(_, v)| v["kind"].as_str().is_some_and(|k| kinds.contains(&k)))
        .map(|(i, _)| i)
        .collect()
}

/// Applies one defect for `code`; `variant` selects among several defect
/// shapes, and `seed` selects the victim record.
pub fn mutate(batch: &[Value], code: &str, variant: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = batch.to_vec();
    let pick = |rng: &mut ChaCha8Rng, kinds: &[&str]| *indices_of(batch, kinds).choose(rng).expect("victim");
    match (code, variant % 3) {
        ("MISSING_FIELD", 0) => {
            let i = pick(&mut rng, &["system"]);
            b[i].as_object_mut().unwrap().remove("name");
        }
        ("MISSING_FIELD", 1) => {
            let i = pick(&mut rng, &["out_conf", "in_conf"]);
            b[i].as_object_mut().unwrap().remove("address");
        }
        ("MISSING_FIELD", _) => {
            let i = pick(&mut rng, &["host"]);
            b[i]["hostname"] = Value::Null;
        }
        ("TYPE_MISMATCH", 0) => {
            let i = pick(&mut rng, &["system"]);
            b[i]["name"] = json!(42);
        }
        ("TYPE_MISMATCH", 1) => {
            let i = pick(&mut rng, &["out_conf", "in_conf"]);
            b[i]["interface"] = json!(["If", "x"]);
        }
        ("TYPE_MISMATCH", _) => {
            let i = pick(&mut rng, &["host"]);
            b[i]["hostname"] = json!({"fqdn": "x"});
        }
        ("ENUM_VIOLATION", v) => {
            let i = pick(&mut rng, &["system"]);
            b[i]["space"] = json!(["moon", "Integration", ""][v]);
        }
        ("DANGLING_REF", 0) => {
            let i = pick(&mut rng, &["runs_on"]);
            b[i]["host_id"] = json!("hX");
        }
        ("DANGLING_REF", 1) => {
            let i = pick(&mut rng, &["out_conf", "in_conf"]);
            b[i]["system_id"] = json!("ghost");
        }
        ("DANGLING_REF", _) => {
            let i = pick(&mut rng, &["correlation"]);
            b[i]["right_id"] = json!("h1");
        }
        ("DUPLICATE_KEY", 0) => {
            let i = pick(&mut rng, &["out_conf", "in_conf", "correlation"]);
            b.push(b[i].clone());
        }
        ("DUPLICATE_KEY", 1) => {
            let i = pick(&mut rng, &["out_conf"]);
            let j = pick(&mut rng, &["in_conf"]);
            b[j]["object_id"] = b[i]["object_id"].clone();
        }
        ("DUPLICATE_KEY", _) => {
            let i = pick(&mut rng, &["runs_on"]);
            let mut copy = b[i].clone();
            copy["object_id"] = json!("r-copy");
            b.push(copy);
        }
        ("UNKNOWN_KIND", v) => {
            let i = pick(&mut rng, &["host", "system", "out_conf"]);
            b[i]["kind"] = json!(["mainframe", "System", "queue"][v]);
        }
        ("MALFORMED_RECORD", 0) => {
            let i = rng.gen_range(0..b.len());
            b[i] = json!(["not", "an", "object"]);
        }
        ("MALFORMED_RECORD", 1) => {
            let i = pick(&mut rng, &["host", "out_conf"]);
            b[i].as_object_mut().unwrap().remove("kind");
        }
        ("MALFORMED_RECORD", _) => {
            let i = pick(&mut rng, &["correlation"]);
            b[i]["left_space"] = json!("integration");
        }
        (other, _) => panic!("no mutation for {other}"),
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_has_fifty_records() {
        assert_eq!(valid_batch(1).len(), 50);
    }

    #[test]
    fn mutations_change_the_batch() {
        let base = valid_batch(2);
        for code in CODES {
            for v in 0..3 {
                assert_ne!(mutate(&base, code, v, 7), base, "{code}/{v}");
            }
        }
    }
}
