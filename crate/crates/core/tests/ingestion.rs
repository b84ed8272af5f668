mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use netinfer_core::ingestion::{commit, load_snapshot, normalize_address, SourceConfig, StoreCell};
use netinfer_core::model::{entity_id, Store};
use netinfer_testkit::landscape::{generate, LandscapeParams};
use proptest::prelude::*;

#[test]
fn hundred_line_file_yields_manifest_ids() {
    let l = generate(
        21,
        LandscapeParams {
            systems: 12,
            flows: 40,
            sources: 1,
            business: 1,
            duplication: 0.0,
        },
    );
    let file = &l.sources[0];
    let lines: Vec<&String> = file.lines.iter().take(100).collect();
    assert_eq!(lines.len(), 100);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pi.jsonl");
    std::fs::write(&path, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let config = SourceConfig::from_json(&file.config).unwrap();
    let snap = load_snapshot(&path, &config).unwrap();
    assert_eq!(snap.records.len(), 100);
    let ids: Vec<&str> = snap.records.iter().map(|r| r.origin.object_id.as_str()).collect();
    assert_eq!(ids, file.object_ids[..100].iter().map(String::as_str).collect::<Vec<_>>());
    assert!(snap.captured_at > 0);
    assert!(snap.records.iter().all(|r| r.origin.source_id == "pi"));
}

#[test]
fn missing_file_and_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = SourceConfig::new("x", "middleware");
    assert!(load_snapshot(&dir.path().join("nope.jsonl"), &config).is_err());
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(load_snapshot(&empty, &config).unwrap().records.is_empty());
}

fn ids_of(store: &Store, source: &str) -> BTreeSet<String> {
    let c = store.content.only_source(source);
    c.systems
        .keys()
        .chain(c.hosts.keys())
        .chain(c.runs_on.keys())
        .chain(c.out_confs.keys())
        .chain(c.in_confs.keys())
        .chain(c.correlations.keys())
        .cloned()
        .collect()
}

#[test]
fn commit_set_algebra() {
    let l = generate(5, LandscapeParams { sources: 2, ..LandscapeParams::random(5) });
    let checker = common::checker();
    let (a, b) = (common::snapshot(&l.sources[0]), common::snapshot(&l.sources[1]));
    let manifest = |i: usize| -> BTreeSet<String> {
        l.sources[i].object_ids.iter().map(|o| entity_id(&l.sources[i].source_id, o)).collect()
    };

    let s1 = commit(&a, &Store::default(), &checker).unwrap();
    let s2 = commit(&b, &s1, &checker).unwrap();
    assert_eq!(ids_of(&s2, "pi"), manifest(0));
    assert_eq!(ids_of(&s2, "sld"), manifest(1));

    // Reload A with only its systems and hosts: every other A entity goes,
    // B is untouched.
    let mut smaller = a.clone();
    smaller
        .records
        .retain(|r| matches!(r.kind(), Some("system") | Some("host")));
    let kept: BTreeSet<String> = smaller.records.iter().map(|r| r.origin.entity_id()).collect();
    let s3 = commit(&smaller, &s2, &checker).unwrap();
    assert_eq!(ids_of(&s3, "pi"), kept);
    assert_eq!(s3.content.only_source("sld"), s2.content.only_source("sld"));

    // Replaying A restores the two-source content exactly.
    let s4 = commit(&a, &s3, &checker).unwrap();
    assert_eq!(s4.content.canonical_json(), s2.content.canonical_json());
    assert_eq!(s4.version, 4);
}

#[test]
fn reload_is_idempotent() {
    let l = generate(6, LandscapeParams::random(6));
    let checker = common::checker();
    let a = common::snapshot(&l.sources[0]);
    let once = commit(&a, &Store::default(), &checker).unwrap();
    let twice = commit(&a, &once, &checker).unwrap();
    assert_eq!(once.content, twice.content);
    assert_eq!(twice.version, once.version + 1);
}

#[test]
fn readers_see_whole_versions() {
    let l = generate(8, LandscapeParams { sources: 2, ..LandscapeParams::random(8) });
    let checker = Arc::new(common::checker());
    let cell = Arc::new(StoreCell::new(Store::default()));
    let snaps: Vec<_> = l.sources.iter().map(common::snapshot).collect();
    let sizes: BTreeSet<usize> = {
        let s1 = commit(&snaps[0], &Store::default(), &checker).unwrap();
        let s2 = commit(&snaps[1], &s1, &checker).unwrap();
        [0, s1.content.entity_count(), s2.content.entity_count()].into()
    };
    let reader = {
        let cell = cell.clone();
        std::thread::spawn(move || {
            let mut seen = BTreeSet::new();
            for _ in 0..2000 {
                let s = cell.current();
                seen.insert((s.version, s.content.entity_count()));
            }
            seen
        })
    };
    for s in &snaps {
        cell.commit(s, &checker).unwrap();
    }
    for (version, count) in reader.join().unwrap() {
        assert!(version <= 2);
        assert!(sizes.contains(&count), "torn read: {count} entities at version {version}");
    }
    assert_eq!(cell.current().version, 2);
}

proptest! {
    #[test]
    fn address_normalization_is_idempotent(s in "[ a-zA-Z0-9:/._?#-]{0,30}") {
        let once = normalize_address(&s);
        prop_assert_eq!(normalize_address(&once), once.clone());
    }

    #[test]
    fn url_spellings_collapse(
        host in "[a-z]{1,8}",
        path in "(/[A-Za-z0-9]{1,4}){0,3}",
        upper in any::<bool>(),
        port in any::<bool>(),
        slash in any::<bool>(),
    ) {
        let plain = format!("http://{host}{path}");
        let h = if upper { host.to_uppercase() } else { host.clone() };
        let variant = format!(
            "{}://{h}{}{path}{}",
            if upper { "HTTP" } else { "http" },
            if port { ":80" } else { "" },
            if slash { "/" } else { "" }
        );
        prop_assert_eq!(normalize_address(&variant), normalize_address(&plain));
    }
}
