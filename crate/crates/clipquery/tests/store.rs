use std::fs;

use clipquery::generator::GenerateSpec;
use clipquery::load_highway;
use clipquery::store::{self, StoreError};
use clipquery_core::highway::{Driver, FaultySpec, HighwayAbstractor, PredicateParams};
use serde_json::Value;
use tempfile::tempdir;

fn spec() -> GenerateSpec {
    GenerateSpec::faulty(FaultySpec::plain_toplane(), 100, 60, 9)
}

#[test]
fn save_load_round_trip_is_byte_exact() {
    let ds = spec().run().unwrap();
    let a = tempdir().unwrap();
    let saved = store::save(&ds, a.path(), Some(&spec())).unwrap();
    let loaded = load_highway(a.path()).unwrap();
    assert_eq!(loaded.content_hash(), saved.content_hash());
    assert_eq!(loaded.dataset, ds);
    assert_eq!(loaded.manifest.generator, Some(spec()));

    let b = tempdir().unwrap();
    store::save(&loaded.dataset, b.path(), Some(&spec())).unwrap();
    for name in ["manifest.json", "episodes/000000.txt", "episodes/000099.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn generation_is_deterministic() {
    let h1 = store::content_hash(&spec().run().unwrap());
    let h2 = store::content_hash(&spec().run().unwrap());
    assert_eq!(h1, h2);
    let other = GenerateSpec { seed: 10, ..spec() };
    assert_ne!(h1, store::content_hash(&other.run().unwrap()));
    assert_eq!(spec().content_id(), spec().content_id());
    assert_ne!(spec().content_id(), other.content_id());
}

fn saved() -> tempfile::TempDir {
    let dir = tempdir().unwrap();
    let ds = GenerateSpec::single(Driver::Plain, 3, 20, 1).run().unwrap();
    store::save(&ds, dir.path(), None).unwrap();
    dir
}

fn edit_manifest(dir: &std::path::Path, f: impl FnOnce(&mut Value)) {
    let path = dir.join("manifest.json");
    let mut doc: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut doc);
    fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
}

#[test]
fn unknown_predicate_in_manifest_is_named() {
    let dir = saved();
    edit_manifest(dir.path(), |m| {
        m["vocabulary"]["predicates"][4]["name"] = "ahead-of".into()
    });
    match load_highway(dir.path()) {
        Err(StoreError::UnknownPredicate(p)) => assert_eq!(p, "ahead-of"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn tampered_episode_is_rejected() {
    let dir = saved();
    let path = dir.path().join("episodes/000001.txt");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = if bytes[0] == b'1' { b'2' } else { b'1' };
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_highway(dir.path()), Err(StoreError::HashMismatch { .. })));
}

#[test]
fn changed_predicate_parameters_invalidate_the_dataset() {
    let dir = saved();
    let wider = HighwayAbstractor::new(
        4,
        PredicateParams {
            follow_window: 12.0,
            ..Default::default()
        },
    );
    let r: Result<store::Stored<clipquery_core::highway::HighwayState>, _> = store::load(dir.path(), &wider);
    assert!(matches!(r, Err(StoreError::VocabularyMismatch { .. })));
}

#[test]
fn corrupt_and_missing_files() {
    let dir = saved();
    fs::write(dir.path().join("manifest.json"), b"{ not json").unwrap();
    assert!(matches!(load_highway(dir.path()), Err(StoreError::Corrupt { .. })));
    let empty = tempdir().unwrap();
    assert!(matches!(load_highway(empty.path()), Err(StoreError::Io { .. })));

    let dir = saved();
    edit_manifest(dir.path(), |m| m["format_version"] = 7.into());
    assert!(matches!(load_highway(dir.path()), Err(StoreError::Version(7))));
}

#[test]
fn hex_lines_put_the_first_predicate_lowest() {
    let dir = saved();
    let ds = load_highway(dir.path()).unwrap().dataset;
    let text = fs::read_to_string(dir.path().join("episodes/000000.txt")).unwrap();
    let first = text.lines().next().unwrap();
    let (hex, _) = first.split_once('\t').unwrap();
    let bits = u64::from_str_radix(hex, 16).unwrap();
    let lane = ds.episodes()[0].concrete()[0].agent.lane;
    assert_eq!(bits & 0xf, 1 << (lane - 1));
    assert_eq!(hex.len(), 3);
}
