use std::path::Path;
use std::process::{Command, Output};

use atomic_activity::augmentation::FrameClip;
use atomic_activity::ensemble::{fuse, FuseOp};
use atomic_activity::io;
use atomic_activity::{ClassList, ScoreMatrix, SourceTag};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomic-activity"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bin(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = bin(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn matrix(seed: u64, n: usize) -> ScoreMatrix {
    let rows = (0..n)
        .map(|i| {
            let row = (0..64).map(|c| ((seed * 31 + i as u64 * 7 + c) % 101) as f64 / 100.0).collect();
            (format!("clip_{i:06}"), row)
        })
        .collect();
    ScoreMatrix::new(rows, SourceTag::default()).unwrap()
}

#[test]
fn taxonomy_lists_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let listing = ok(dir.path(), &["taxonomy"]);
    assert_eq!(listing.lines().count(), 64);
    assert!(listing.contains("Z1-Z2:C"));

    let flips = ok(dir.path(), &["taxonomy", "--flip-table"]);
    assert!(flips.contains("Z1-Z2:C+ -> Z1-Z4:C+"));
    assert!(flips.contains("C1-C2:P -> C4-C3:P"));

    ok(dir.path(), &["taxonomy", "--validate", "Z1-Z3:K", "C2-C3:P+"]);
    let err = fails(dir.path(), &["taxonomy", "--validate", "Z1-C2:C"]);
    assert!(err.starts_with("error[validity]"), "{err}");
    let err = fails(dir.path(), &["taxonomy", "--validate", "Z9-Z1:C"]);
    assert!(err.starts_with("error[parse]"), "{err}");
}

#[test]
fn plan_marks_middle_and_rejects_short_clips() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["plan", "--frames", "64", "--len", "16"]);
    assert_eq!(text.lines().filter(|l| l.starts_with("offset")).count(), 4);
    assert!(text.contains("offset 2 (middle): 2 6 10"));

    let json = ok(dir.path(), &["plan", "--frames", "64", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["stride"], 4);

    let err = fails(dir.path(), &["plan", "--frames", "15", "--len", "16"]);
    assert!(err.starts_with("error[sampling]"), "{err}");
}

fn write_clip_fixtures(dir: &Path) -> FrameClip {
    let classes = ClassList::canonical();
    let data: Vec<u8> = (0..2 * 4 * 6 * 3).map(|i| (i * 13 % 251) as u8).collect();
    let png = FrameClip::new("alpha", 2, 4, 6, data.clone()).unwrap();
    io::write_clip(&png, &dir.join("alpha"), io::ClipFormat::PngDir).unwrap();
    let raw = FrameClip::new("beta", 2, 4, 6, data).unwrap();
    io::write_clip(&raw, &dir.join("beta.rgbclip"), io::ClipFormat::Raw).unwrap();

    let mut labels = vec![0u8; 64];
    labels[classes.index_of_name("Z1-Z2:C").unwrap().get()] = 1;
    labels[classes.index_of_name("C1-C2:P").unwrap().get()] = 1;
    for id in ["alpha", "beta"] {
        io::write_label_sidecar(&dir.join(format!("{id}.labels.json")), id, &labels, classes).unwrap();
    }
    png
}

#[test]
fn augment_flips_labels_and_upsamples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let original = write_clip_fixtures(&input);

    ok(dir.path(), &["augment", "--input", "in", "--output", "out", "--hflip", "--upsample", "2"]);
    let classes = ClassList::canonical();
    for (id, path) in [("alpha", "out/alpha"), ("beta", "out/beta.rgbclip")] {
        let (clip, _) = io::read_clip(id, &dir.path().join(path)).unwrap();
        assert_eq!((clip.frames(), clip.height(), clip.width()), (2, 8, 12));
        assert_eq!(clip.pixel(1, 0, 0), original.pixel(1, 0, 5));
        let (_, labels) = io::read_label_sidecar(&dir.path().join(format!("out/{id}.labels.json")), classes).unwrap();
        assert_eq!(labels[classes.index_of_name("Z1-Z4:C").unwrap().get()], 1);
        assert_eq!(labels[classes.index_of_name("C4-C3:P").unwrap().get()], 1);
        assert_eq!(labels.iter().map(|&l| l as usize).sum::<usize>(), 2);
    }
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    for line in manifest.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!((v["height"].as_u64(), v["width"].as_u64()), (Some(8), Some(12)));
        assert_eq!(v["applied"][0]["name"], "hflip");
        assert_eq!(v["applied"][1]["name"], "upsample");
    }
}

#[test]
fn augment_schedule_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    write_clip_fixtures(&input);
    for out in ["a", "b"] {
        ok(
            dir.path(),
            &["augment", "--input", "in", "--output", out, "--schedule", "--epoch", "3", "--seed", "9"],
        );
    }
    for f in ["manifest.jsonl", "beta.rgbclip", "alpha/frame_00001.png", "alpha.labels.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }

    let err = fails(dir.path(), &["augment", "--input", "missing", "--output", "x"]);
    assert!(err.starts_with("error[io]"), "{err}");
}

#[test]
fn fuse_spec_matches_library_and_names_missing_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let parts: Vec<ScoreMatrix> = (0..4).map(|k| matrix(k, 5)).collect();
    for (k, m) in parts.iter().enumerate() {
        io::write_score_matrix(&dir.path().join(format!("off{k}.jsonl")), m).unwrap();
    }
    let spec = r#"{"op":"mean","sources":[
        {"op":"mean","sources":[{"op":"leaf","path":"off0.jsonl"},{"op":"leaf","path":"off1.jsonl"}]},
        {"op":"mean","sources":[{"op":"leaf","path":"off2.jsonl"},{"op":"leaf","path":"off3.jsonl"}]}]}"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    ok(dir.path(), &["fuse", "--spec", "spec.json", "--output", "nested.jsonl"]);
    ok(
        dir.path(),
        &["fuse", "--inputs", "off0.jsonl", "off1.jsonl", "off2.jsonl", "off3.jsonl", "--output", "flat.jsonl"],
    );
    let nested = io::read_score_matrix(&dir.path().join("nested.jsonl"), SourceTag::default()).unwrap();
    let flat = io::read_score_matrix(&dir.path().join("flat.jsonl"), SourceTag::default()).unwrap();
    let direct = fuse(&parts, FuseOp::Mean).unwrap();
    for ((a, b), c) in nested.values().iter().zip(flat.values()).zip(direct.values()) {
        assert!((a - b).abs() <= 1e-12 && (b - c).abs() <= 1e-12);
    }

    let toml_spec = "op = \"max\"\nsources = [{ op = \"leaf\", path = \"off0.jsonl\" }, { op = \"leaf\", path = \"gone.jsonl\" }]\n";
    std::fs::write(dir.path().join("spec.toml"), toml_spec).unwrap();
    let err = fails(dir.path(), &["fuse", "--spec", "spec.toml", "--output", "x.jsonl"]);
    assert!(err.starts_with("error[io]"), "{err}");
    assert!(err.contains("gone.jsonl"), "{err}");
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn fuse_rejects_misaligned_clips() {
    let dir = tempfile::tempdir().unwrap();
    io::write_score_matrix(&dir.path().join("a.jsonl"), &matrix(1, 3)).unwrap();
    io::write_score_matrix(&dir.path().join("b.jsonl"), &matrix(2, 4)).unwrap();
    let err = fails(dir.path(), &["fuse", "--inputs", "a.jsonl", "b.jsonl", "--output", "o.jsonl"]);
    assert!(err.starts_with("error[alignment]"), "{err}");
    assert!(err.contains("clip_000003"), "{err}");
}

#[test]
fn fuse_pattern_expands_config_epochs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pipeline.toml"), "epochs = [10, 20]\nfusion_op = \"max\"\n").unwrap();
    let a = matrix(3, 4);
    let b = matrix(8, 4);
    io::write_score_matrix(&dir.path().join("ep10.jsonl"), &a).unwrap();
    io::write_score_matrix(&dir.path().join("ep20.jsonl"), &b).unwrap();
    ok(
        dir.path(),
        &["--config", "pipeline.toml", "fuse", "--pattern", "ep{epoch}.jsonl", "--output", "o.jsonl"],
    );
    let got = io::read_score_matrix(&dir.path().join("o.jsonl"), SourceTag::default()).unwrap();
    assert_eq!(got.values(), fuse(&[a, b], FuseOp::Max).unwrap().values());
}

#[test]
fn merge_branches_roundtrip_and_combine() {
    use atomic_activity::ensemble::{project, Branch};
    let dir = tempfile::tempdir().unwrap();
    let classes = ClassList::canonical();
    let full = matrix(5, 6);
    io::write_branch_scores(&dir.path().join("single.jsonl"), &project(&full, Branch::Single, classes)).unwrap();
    io::write_branch_scores(&dir.path().join("group.jsonl"), &project(&full, Branch::Group, classes)).unwrap();
    ok(
        dir.path(),
        &["merge-branches", "--single", "single.jsonl", "--group", "group.jsonl", "--output", "m.jsonl"],
    );
    let merged = io::read_score_matrix(&dir.path().join("m.jsonl"), SourceTag::default()).unwrap();
    assert_eq!(merged.values(), full.values());

    let std_scores = matrix(9, 6);
    io::write_score_matrix(&dir.path().join("std.jsonl"), &std_scores).unwrap();
    ok(
        dir.path(),
        &[
            "merge-branches",
            "--single",
            "single.jsonl",
            "--group",
            "group.jsonl",
            "--standard",
            "std.jsonl",
            "--weight",
            "0.25",
            "--output",
            "c.jsonl",
        ],
    );
    let combined = io::read_score_matrix(&dir.path().join("c.jsonl"), SourceTag::default()).unwrap();
    for ((c, m), s) in combined.values().iter().zip(full.values()).zip(std_scores.values()) {
        assert!((c - (0.25 * m + 0.75 * s)).abs() <= 1e-12);
    }

    let err = fails(
        dir.path(),
        &["merge-branches", "--single", "single.jsonl", "--group", "missing.jsonl", "--output", "z.jsonl"],
    );
    assert!(err.starts_with("error[io]") && err.contains("missing.jsonl"), "{err}");

    // Full 64-column files are projected onto each branch before merging.
    io::write_score_matrix(&dir.path().join("full.jsonl"), &full).unwrap();
    ok(
        dir.path(),
        &["merge-branches", "--single", "full.jsonl", "--group", "full.jsonl", "--output", "z.jsonl"],
    );
    let again = io::read_score_matrix(&dir.path().join("z.jsonl"), SourceTag::default()).unwrap();
    assert_eq!(again.values(), full.values());
}

#[test]
fn eval_renders_fixture_and_rejects_unknown_class() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference_reports.jsonl");
    let table = ok(dir.path(), &["eval", "--render", fixture.to_str().unwrap()]);
    assert!(table.lines().next().unwrap().starts_with("Method"));
    assert!(table.contains("0.54 0.48 0.41 0.49 0.70 0.62 0.53"), "{table}");
    assert!(table.contains("0.69 0.70 0.60 0.63 0.80 0.74 0.62"), "{table}");

    std::fs::write(dir.path().join("truth.jsonl"), "{\"clip_id\":\"clip_000000\",\"labels\":[\"Z1-Z5:C\"]}\n").unwrap();
    io::write_score_matrix(&dir.path().join("p.jsonl"), &matrix(1, 1)).unwrap();
    let err = fails(dir.path(), &["eval", "--predictions", "p.jsonl", "--truth", "truth.jsonl"]);
    assert!(err.starts_with("error[parse]"), "{err}");
}

#[test]
fn simulate_perfect_predictor_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--clips", "200", "--seed", "4", "--out", "sim"]);
    let text = ok(
        dir.path(),
        &["eval", "--predictions", "sim/scores_00.jsonl", "--truth", "sim/truth.jsonl", "--method", "perfect"],
    );
    let row = text.lines().find(|l| l.starts_with("perfect")).unwrap();
    assert!(row.ends_with("1.00 1.00 1.00 1.00 1.00 1.00 1.00"), "{row}");

    let err = fails(dir.path(), &["simulate", "--prevalence", "1.5", "--out", "bad"]);
    assert!(err.starts_with("error[config]"), "{err}");
}
