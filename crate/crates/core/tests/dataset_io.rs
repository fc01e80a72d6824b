use std::io::Write;

use keymaze::dataset::{instance_from_line, instance_to_line, parse_instance_id, DatasetError};
use keymaze::{assemble_instance, read_jsonl, write_jsonl, GenParams};
use serde_json::Value;

fn sample(count: u64) -> Vec<keymaze::TaskInstance> {
    (0..count)
        .map(|s| {
            let params = GenParams::new(3 + (s % 6) as u32, 4 + (s % 5) as u32, (s % 5) as u32)
                .with_noise([0.0, 0.2, 0.4, 0.6, 0.8, 1.0][(s % 6) as usize])
                .with_shuffle(if s % 2 == 0 { 0.0 } else { 0.5 });
            assemble_instance(&params, s * 7919).unwrap()
        })
        .collect()
}

#[test]
fn hundred_instances_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tasks.jsonl");
    let tasks = sample(100);
    write_jsonl(&tasks, &path).unwrap();
    let back = read_jsonl(&path).unwrap();
    assert_eq!(back, tasks);
    let first = std::fs::read_to_string(&path).unwrap();
    write_jsonl(&back, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    for t in &tasks {
        assert_eq!(parse_instance_id(&t.id).unwrap(), (t.params, t.seed));
    }
}

#[test]
fn record_keys_in_schema_order() {
    let line = instance_to_line(&sample(1)[0]);
    let keys: Vec<String> = serde_json::from_str::<serde_json::Map<String, Value>>(&line)
        .unwrap()
        .keys()
        .cloned()
        .collect();
    let expected = [
        "schema", "id", "seed", "n", "m", "b_target", "b_effective", "noise_target", "noise_effective",
        "shuffle_ratio", "logical_depth", "facts", "ground_truth", "edges", "doors", "keys", "start", "goal",
    ];
    // serde_json without preserve_order sorts maps, so compare the raw text order instead
    let mut cursor = 0;
    for key in expected {
        let at = line[cursor..].find(&format!("\"{key}\":")).map(|i| i + cursor);
        assert!(at.is_some(), "{key} missing or out of order");
        cursor = at.unwrap();
    }
    assert_eq!(keys.len(), expected.len());
}

#[test]
fn empty_file_reads_as_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    write_jsonl(&[], &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap().len(), 0);
    assert!(read_jsonl(&path).unwrap().is_empty());
}

#[test]
fn truncated_line_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.jsonl");
    let tasks = sample(3);
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "{}", instance_to_line(&tasks[0])).unwrap();
    let second = instance_to_line(&tasks[1]);
    write!(f, "{}", &second[..second.len() / 2]).unwrap();
    drop(f);
    match read_jsonl(&path) {
        Err(DatasetError::Malformed { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corrupted_fields_are_named() {
    let line = instance_to_line(&sample(2)[1]);
    let mut v: Value = serde_json::from_str(&line).unwrap();
    v["facts"][0]["role"] = Value::from("irrelevant");
    match instance_from_line(&v.to_string(), 9) {
        Err(DatasetError::Malformed { line, field, .. }) => {
            assert_eq!(line, 9);
            assert!(field.starts_with("facts[0]"), "{field}");
        }
        other => panic!("{other:?}"),
    }

    let mut v: Value = serde_json::from_str(&line).unwrap();
    v["logical_depth"] = Value::from(3);
    match instance_from_line(&v.to_string(), 1) {
        Err(DatasetError::Malformed { field, .. }) => assert_eq!(field, "logical_depth"),
        other => panic!("{other:?}"),
    }

    let mut v: Value = serde_json::from_str(&line).unwrap();
    v.as_object_mut().unwrap().insert("extra".into(), Value::from(1));
    assert!(matches!(instance_from_line(&v.to_string(), 1), Err(DatasetError::Malformed { .. })));

    let mut v: Value = serde_json::from_str(&line).unwrap();
    v.as_object_mut().unwrap().remove("goal");
    assert!(matches!(instance_from_line(&v.to_string(), 1), Err(DatasetError::Malformed { .. })));
}
