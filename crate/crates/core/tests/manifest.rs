mod common;

use std::fs;

use aupose_core::data::{load_manifest, load_labels, write_labels, Partition};
use aupose_core::Error;

#[test]
fn emitted_manifest_has_nine_views_per_recording() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::tiny_config();
    common::emit(&config, dir.path());
    let manifest = load_manifest(dir.path().join("train.json")).unwrap();
    assert_eq!(manifest.partition, Partition::Train);
    assert_eq!(manifest.entries.len(), 3 * 9);
    for subject in ["S01", "S02", "S03"] {
        let mut views: Vec<u8> = manifest
            .entries
            .iter()
            .filter(|e| e.subject == subject)
            .map(|e| e.view.get())
            .collect();
        views.sort();
        assert_eq!(views, (1..=9).collect::<Vec<_>>());
    }
    let (seq, labels) = manifest.load_entry(&manifest.entries[0]).unwrap();
    assert_eq!(seq.len(), 240);
    assert_eq!(labels.len(), 240);
    assert_eq!(seq.view_id, Some(manifest.entries[0].view));
}

#[test]
fn view_ten_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    common::emit(&common::tiny_config(), dir.path());
    let path = dir.path().join("test.json");
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    json["entries"][0]["view"] = 10.into();
    fs::write(&path, json.to_string()).unwrap();
    let err = load_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
}

#[test]
fn views_with_different_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    common::emit(&common::tiny_config(), dir.path());
    let manifest = load_manifest(dir.path().join("development.json")).unwrap();
    let entry = &manifest.entries[4];
    let path = manifest.labels_path(entry);
    let mut labels = load_labels(&path, 240).unwrap();
    labels.occurrence[0][10] = 1 - labels.occurrence[0][10].min(1);
    write_labels(&path, &labels).unwrap();
    let err = load_manifest(dir.path().join("development.json")).unwrap_err();
    assert!(matches!(err, Error::ViewLabelsDisagree { .. }), "{err}");
}

#[test]
fn missing_sequence_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    common::emit(&common::tiny_config(), dir.path());
    let manifest = load_manifest(dir.path().join("test.json")).unwrap();
    fs::remove_file(manifest.sequence_path(&manifest.entries[2])).unwrap();
    let err = load_manifest(dir.path().join("test.json")).unwrap_err();
    assert!(err.to_string().contains("does not exist"), "{err}");
}
