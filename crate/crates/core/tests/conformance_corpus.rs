mod common;

use netinfer_core::conformance::{check_batch, compile, FindingCode, SchemaSpec};
use netinfer_core::ingestion::commit;
use netinfer_core::ingestion::Snapshot;
use netinfer_core::model::{Store, StoreContent};
use netinfer_testkit::corpus::{mutate, valid_batch, CODES};

fn code(name: &str) -> FindingCode {
    FindingCode::ALL.into_iter().find(|c| c.as_str() == name).unwrap()
}

#[test]
fn unmutated_batches_are_clean() {
    let checker = common::checker();
    for seed in 0..20 {
        let batch = common::records("src", &valid_batch(seed));
        let report = check_batch(&checker, &batch, &StoreContent::default());
        assert!(report.is_empty(), "seed {seed}:\n{report}");
    }
}

#[test]
fn every_mutation_is_detected_with_its_code() {
    let checker = common::checker();
    let mut total = 0;
    for seed in 0..4u64 {
        let base = valid_batch(seed);
        for name in CODES {
            for variant in 0..3 {
                let mutated = mutate(&base, name, variant, seed * 31 + variant as u64);
                let report = check_batch(&checker, &common::records("src", &mutated), &StoreContent::default());
                assert!(
                    report.count(code(name)) >= 1,
                    "{name} variant {variant} seed {seed} not detected:\n{report}"
                );
                total += 1;
            }
        }
    }
    assert!(total >= 50);
}

#[test]
fn single_field_defects_yield_exactly_one_finding() {
    let checker = common::checker();
    let base = valid_batch(11);
    for (name, variant) in [("MISSING_FIELD", 0), ("TYPE_MISMATCH", 0), ("ENUM_VIOLATION", 0), ("UNKNOWN_KIND", 0)] {
        let mutated = mutate(&base, name, variant, 5);
        let report = check_batch(&checker, &common::records("src", &mutated), &StoreContent::default());
        assert_eq!(report.findings.len(), 1, "{name}:\n{report}");
    }
}

#[test]
fn checking_is_pure_and_recompilation_is_stable() {
    let schema = SchemaSpec::inference_model();
    let a = compile(&schema).unwrap();
    let b = compile(&schema.clone()).unwrap();
    let mutated = common::records("src", &mutate(&valid_batch(3), "DANGLING_REF", 1, 9));
    let before = mutated.clone();
    let r1 = check_batch(&a, &mutated, &StoreContent::default());
    let r2 = check_batch(&b, &mutated, &StoreContent::default());
    assert_eq!(r1, r2);
    assert_eq!(mutated, before);
}

#[test]
fn rejected_batches_never_reach_the_store() {
    let checker = common::checker();
    let store = Store::default();
    for name in CODES {
        let records = common::records("src", &mutate(&valid_batch(1), name, 0, 2));
        let snapshot = Snapshot {
            source_id: "src".into(),
            captured_at: 0,
            records,
        };
        assert!(commit(&snapshot, &store, &checker).is_err(), "{name}");
    }
    let clean = Snapshot {
        source_id: "src".into(),
        captured_at: 0,
        records: common::records("src", &valid_batch(1)),
    };
    let loaded = commit(&clean, &store, &checker).unwrap();
    assert_eq!(loaded.content.entity_count(), 50);
}
