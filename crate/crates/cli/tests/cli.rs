// Copyright 2026 The Fasco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fasco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fasco"))
        .args(args)
        .env("FASCO_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fasco(args);
    assert!(
        out.status.success(),
        "fasco {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_synth(dir: &Path, seed: &str) {
    ok(&[
        "gen-synth",
        "--out",
        s(dir),
        "--seed",
        seed,
        "--tables",
        "4",
        "--min-rows",
        "300",
        "--max-rows",
        "2000",
        "--plans",
        "160",
    ]);
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let lookups = tmp.path().join("lookups");
    let model = tmp.path().join("model.fasco");
    small_synth(&data, "3");
    assert_eq!(line_count(&data.join("train.jsonl")), 80);
    assert_eq!(line_count(&data.join("test.jsonl")), 80);

    let catalog = data.join("catalog.fasc");
    let built = ok(&[
        "build-lookups",
        "--catalog",
        s(&catalog),
        "--tables",
        s(&data.join("tables.fasc")),
        "--out",
        s(&lookups),
        "--budget-bytes",
        "20000",
    ]);
    assert!(built.ends_with("version 1\n"), "{built}");
    let rebuilt = ok(&[
        "build-lookups",
        "--catalog",
        s(&catalog),
        "--tables",
        s(&data.join("tables.fasc")),
        "--out",
        s(&lookups),
        "--budget-bytes",
        "20000",
        "--seed",
        "1",
    ]);
    assert!(rebuilt.ends_with("version 2\n"), "{rebuilt}");
    for line in rebuilt.lines().filter(|l| l.contains(" bytes")) {
        let bytes: usize = line.rsplit(' ').nth(1).unwrap().parse().unwrap();
        assert!(bytes <= 20000, "{line}");
    }

    let trained = ok(&[
        "train",
        "--train",
        s(&data.join("train.jsonl")),
        "--catalog",
        s(&catalog),
        "--lookups",
        s(&lookups),
        "--out",
        s(&model),
        "--epochs",
        "3",
        "--lr",
        "0.003",
        "--lambda-nonindex",
        "2",
        "--lambda-last",
        "4",
        "--seed",
        "1",
        "--time",
    ]);
    assert_eq!(
        trained.lines().filter(|l| l.starts_with("epoch ")).count(),
        3
    );
    assert!(trained.contains("trained on 80 plans"));

    let plan = tmp.path().join("plan.json");
    let first = fs::read_to_string(data.join("test.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    fs::write(&plan, &first).unwrap();
    let args = [
        "estimate",
        "--model",
        s(&model),
        "--catalog",
        s(&catalog),
        "--plan",
        s(&plan),
        "--lookups",
        s(&lookups),
    ];
    let once = ok(&args);
    assert_eq!(once, ok(&args));
    assert!(
        once.starts_with("plan 0: ") && once.trim_end().ends_with(" ms"),
        "{once}"
    );
    let mut verbose_args = args.to_vec();
    verbose_args.extend(["--verbose", "--time"]);
    let verbose = ok(&verbose_args);
    assert!(
        verbose.contains("  node ") && verbose.contains("latency"),
        "{verbose}"
    );

    let report = tmp.path().join("report.jsonl");
    let summary = ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--test",
        s(&data.join("test.jsonl")),
        "--catalog",
        s(&catalog),
        "--lookups",
        s(&lookups),
        "--report",
        s(&report),
        "--compare-vanilla",
        "--train",
        s(&data.join("train.jsonl")),
    ]);
    assert!(summary.starts_with("model: n 80 mean "), "{summary}");
    assert!(summary.contains("\nvanilla: n 80 mean "), "{summary}");
    assert_eq!(line_count(&report), 80);
    let fields: Vec<f64> = summary
        .lines()
        .next()
        .unwrap()
        .split(' ')
        .skip(6)
        .step_by(2)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(fields.windows(2).all(|w| w[0] <= w[1]), "{fields:?}");

    // Without one of its lists the model still estimates, with a warning.
    let victim = fs::read_dir(&lookups)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    fs::remove_file(victim).unwrap();
    let test_plans = tmp.path().join("some.jsonl");
    let lines: Vec<String> = fs::read_to_string(data.join("test.jsonl"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    fs::write(&test_plans, lines.join("\n")).unwrap();
    let out = fasco(&[
        "estimate",
        "--model",
        s(&model),
        "--catalog",
        s(&catalog),
        "--plan",
        s(&test_plans),
        "--lookups",
        s(&lookups),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 80);
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration skipped"));
}

#[test]
fn generation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_synth(&a, "9");
    small_synth(&b, "9");
    for f in ["catalog.fasc", "tables.fasc", "train.jsonl", "test.jsonl"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn default_generation_splits_evenly() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["gen-synth", "--out", s(tmp.path())]);
    assert_eq!(line_count(&tmp.path().join("train.jsonl")), 2000);
    assert_eq!(line_count(&tmp.path().join("test.jsonl")), 2000);
}

#[test]
fn bad_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fasco(&["gen-synth", "--out", s(tmp.path()), "--correlation", "1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let junk = tmp.path().join("junk.json");
    fs::write(&junk, "not json").unwrap();
    assert!(!fasco(&["adapt-explain", "--input", s(&junk)])
        .status
        .success());
    assert!(!fasco(&[
        "evaluate",
        "--model",
        "m",
        "--test",
        "t",
        "--catalog",
        "c",
        "--compare-vanilla"
    ])
    .status
    .success());
}

#[test]
fn adapt_explain_writes_a_canonical_document() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/hash_join.json");
    let doc = ok(&["adapt-explain", "--input", fixture]);
    let tree = fasco_core::plan_model::parse_plan(doc.trim()).unwrap();
    assert_eq!(tree.node_count(), 3);

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("plan.json");
    ok(&["adapt-explain", "--input", fixture, "--out", s(&out)]);
    assert_eq!(fs::read_to_string(out).unwrap(), doc);
}
