use std::fs;
use std::path::Path;

use proptest::prelude::*;
use strandline::dataset::{
    class_histogram, load_labels, load_predictions_for, load_split, parse_label_text, serialize_labels,
};
use strandline::{BBox, ClassList, Error};

fn litter() -> ClassList {
    ClassList::parse_inline("Bottle,Clothes,Metal,Plastic,Rope,Styrofoam,Wood").unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn validation_split_histogram() {
    // Instance counts of the beach-litter validation split, spread over files.
    let counts = [("Bottle", 874), ("Metal", 458), ("Plastic", 603), ("Rope", 205), ("Styrofoam", 418)];
    let classes = litter();
    let tmp = tempfile::tempdir().unwrap();
    let labels = tmp.path().join("labels");
    let mut file = 0;
    for (name, n) in counts {
        let id = classes.index_of(name).unwrap();
        let mut remaining = n;
        while remaining > 0 {
            let k = remaining.min(37);
            let body: String = (0..k).map(|_| format!("{id} 0.5 0.5 0.2 0.1\n")).collect();
            write(&labels, &format!("img{file:04}.txt"), &body);
            file += 1;
            remaining -= k;
        }
    }
    write(&labels, "clean_beach.txt", "");
    let split = load_split(tmp.path(), &classes, None).unwrap();
    let h = class_histogram(&split, &classes);
    for (name, n) in counts {
        assert_eq!(h[name], n);
    }
    assert_eq!(h["Wood"], 0);
    assert_eq!(h["Clothes"], 0);
    let clean = split.images.iter().find(|i| i.image_id == "clean_beach").unwrap();
    assert!(clean.objects.is_empty());
}

#[test]
fn duplicated_content_doubles_counts() {
    let classes = litter();
    let body = "0 0.5 0.5 0.2 0.1\n4 0.3 0.3 0.1 0.1\n4 0.6 0.6 0.1 0.1\n";
    let once = tempfile::tempdir().unwrap();
    write(once.path(), "a.txt", body);
    let twice = tempfile::tempdir().unwrap();
    write(twice.path(), "a.txt", body);
    write(twice.path(), "b.txt", body);
    let h1 = class_histogram(&load_labels(once.path(), &classes).unwrap(), &classes);
    let h2 = class_histogram(&load_labels(twice.path(), &classes).unwrap(), &classes);
    for (k, v) in &h1 {
        assert_eq!(h2[k], 2 * v);
    }
}

#[test]
fn images_dir_and_manifest_pairing() {
    let classes = litter();
    let tmp = tempfile::tempdir().unwrap();
    write(&tmp.path().join("images"), "a.jpg", "");
    write(&tmp.path().join("images"), "b.PNG", "");
    write(&tmp.path().join("labels"), "a.txt", "2 0.5 0.5 0.2 0.2\n");
    let split = load_split(tmp.path(), &classes, None).unwrap();
    let ids: Vec<&str> = split.image_ids().collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(split.instance_count(), 1);

    let manifest = tmp.path().join("val.txt");
    fs::write(&manifest, "a\nc\n").unwrap();
    let split = load_split(tmp.path(), &classes, Some(&manifest)).unwrap();
    let ids: Vec<&str> = split.image_ids().collect();
    assert_eq!(ids, ["a", "c"]);

    write(&tmp.path().join("labels"), "orphan.txt", "");
    assert!(matches!(load_split(tmp.path(), &classes, None), Err(Error::Validation(_))));
}

#[test]
fn predictions_pair_with_split() {
    let classes = litter();
    let tmp = tempfile::tempdir().unwrap();
    write(&tmp.path().join("gt"), "a.txt", "2 0.5 0.5 0.2 0.2\n");
    write(&tmp.path().join("gt"), "b.txt", "");
    write(&tmp.path().join("pred"), "a.txt", "2 0.91 0.4 0.4 0.1 0.1\n");
    let split = load_labels(&tmp.path().join("gt"), &classes).unwrap();
    let dets = load_predictions_for(&tmp.path().join("pred"), &classes, &split).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].image_id, "a");
    assert_eq!(classes.name(dets[0].class_id), "Metal");

    write(&tmp.path().join("pred"), "zzz.txt", "");
    assert!(load_predictions_for(&tmp.path().join("pred"), &classes, &split).is_err());
}

#[test]
fn errors_name_file_line_and_token() {
    let classes = litter();
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.txt", "0 0.5 0.5 0.2 0.1\n0 0.5 0,5 0.2 0.1\n");
    let msg = load_labels(tmp.path(), &classes).unwrap_err().to_string();
    assert!(msg.contains("bad.txt:2"), "{msg}");
    assert!(msg.contains("0,5"), "{msg}");
}

#[test]
fn enumeration_order_is_irrelevant() {
    let classes = litter();
    let names = ["c.txt", "a.txt", "b.txt"];
    let bodies = ["0 0.5 0.5 0.2 0.1\n", "3 0.2 0.2 0.1 0.1\n", "4 0.7 0.7 0.1 0.1\n"];
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    for i in 0..3 {
        write(one.path(), names[i], bodies[i]);
    }
    for i in (0..3).rev() {
        write(two.path(), names[i], bodies[i]);
    }
    let a = load_labels(one.path(), &classes).unwrap();
    let b = load_labels(two.path(), &classes).unwrap();
    assert_eq!(a.images, b.images);
}

fn object() -> impl Strategy<Value = (usize, BBox)> {
    (0usize..7, 0.1f64..0.9, 0.1f64..0.9, 0.0f64..0.2, 0.0f64..0.2)
        .prop_map(|(c, cx, cy, w, h)| (c, BBox::new(cx, cy, w, h).unwrap()))
}

proptest! {
    #[test]
    fn serialize_round_trip(objects in prop::collection::vec(object(), 0..12)) {
        let classes = litter();
        let text = serialize_labels(&objects);
        let parsed = parse_label_text(&text, Path::new("x.txt"), &classes).unwrap();
        prop_assert_eq!(parsed.len(), objects.len());
        for ((c0, b0), (c1, b1)) in objects.iter().zip(&parsed) {
            prop_assert_eq!(c0, c1);
            for (u, v) in b0.to_array().iter().zip(b1.to_array()) {
                prop_assert!((u - v).abs() <= 5e-7 + 1e-12);
            }
        }
        prop_assert_eq!(serialize_labels(&parsed), text);
    }
}

#[test]
fn validate_collects_all_failures() {
    let classes = litter();
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "good.txt", "0 0.5 0.5 0.2 0.1\n");
    write(tmp.path(), "bad1.txt", "9 0.5 0.5 0.2 0.1\n");
    write(tmp.path(), "bad2.txt", "0 0.5 0.5 0.2 0.1\n0 0.5 x 0.2 0.1\n");
    let s = strandline::dataset::validate_split(tmp.path(), &classes, None).unwrap();
    assert!(!s.is_valid());
    assert_eq!(s.errors.len(), 2);
    assert!(s.errors.iter().any(|e| e.contains("bad2.txt:2")));
    assert_eq!(s.histogram["Bottle"], 1);
    assert!(s.zero_instance_classes.contains(&"Wood".to_string()));

    let clean = tempfile::tempdir().unwrap();
    write(clean.path(), "good.txt", "0 0.5 0.5 0.2 0.1\n");
    assert!(strandline::dataset::validate_split(clean.path(), &classes, None).unwrap().is_valid());
}
