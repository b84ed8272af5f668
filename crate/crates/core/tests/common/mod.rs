#![allow(dead_code)]

use std::collections::BTreeSet;

use netinfer_core::conformance::{compile, CompiledChecker, RawRecord, SchemaSpec};
use netinfer_core::ingestion::{commit, parse_snapshot, SourceConfig, Snapshot};
use netinfer_core::model::{Origin, Store};
use netinfer_core::reconstruction::{reconstruct, Reconstruction, ReconstructionConfig};
use netinfer_testkit::landscape::{Landscape, SourceFile};
use serde_json::Value;

pub fn checker() -> CompiledChecker {
    compile(&SchemaSpec::inference_model()).unwrap()
}

pub fn snapshot(file: &SourceFile) -> Snapshot {
    let config = SourceConfig::from_json(&file.config).unwrap();
    parse_snapshot(&file.text(), &config, 1_700_000_000).unwrap()
}

/// Commits the landscape's sources in `order`.
pub fn ingest(l: &Landscape, order: &[usize]) -> Store {
    let checker = checker();
    let mut store = Store::default();
    for &i in order {
        store = commit(&snapshot(&l.sources[i]), &store, &checker)
            .unwrap_or_else(|report| panic!("source {} rejected:\n{report}", l.sources[i].source_id));
    }
    store
}

pub fn ingest_all(l: &Landscape) -> Store {
    ingest(l, &(0..l.sources.len()).collect::<Vec<_>>())
}

pub fn recon(store: &Store) -> Reconstruction {
    reconstruct(&store.content, None, &ReconstructionConfig::default()).unwrap()
}

pub fn edges(r: &Reconstruction) -> BTreeSet<(String, String, String)> {
    r.flows
        .iter()
        .map(|f| (f.source_class.clone(), f.target_class.clone(), f.interface.name.clone()))
        .collect()
}

/// Wraps JSON values as records of source `src`, taking the origin's object
/// id from the body.
pub fn records(src: &str, values: &[Value]) -> Vec<RawRecord> {
    values
        .iter()
        .map(|v| {
            let obj = v.get("object_id").and_then(Value::as_str).unwrap_or_default();
            RawRecord::new(Origin::new(src, obj, "test", 0), v.clone())
        })
        .collect()
}
