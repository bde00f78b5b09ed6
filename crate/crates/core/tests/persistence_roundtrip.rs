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
use std::time::Instant;

use fasco_core::calibration::{LookupList, LookupStore, DEFAULT_BYTE_BUDGET};
use fasco_core::estimator::{estimate, train, ModelParams, TrainConfig};
use fasco_core::featurizer::{JoinPair, Normalizer, Vocabularies};
use fasco_core::metrics::ReportRow;
use fasco_core::persistence::{
    load_catalog, load_lookup_store, load_model, load_tables, model_from_bytes, model_to_bytes,
    read_plans, read_report, save_catalog, save_lookup_store, save_model, save_tables, write_plans,
    write_report,
};
use fasco_core::synthgen::{gen_catalog, gen_workload, CostOracleParams, SynthSpec};
use fasco_core::Error;

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_tables: 4,
        rows: (100, 800),
        seed: 17,
        ..SynthSpec::default()
    }
}

#[test]
fn trained_model_estimates_survive_save_and_load() {
    let (catalog, db) = gen_catalog(&small_spec()).unwrap();
    let plans = gen_workload(&catalog, &db, 60, &CostOracleParams::default(), 1).unwrap();
    let store = LookupStore::build(&db, &catalog.join_pairs, DEFAULT_BYTE_BUDGET, 0, 1).unwrap();
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let model = train::<f64>(&plans, &catalog, Some(&store), &config)
        .unwrap()
        .params;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.fasco");
    save_model(&model, &path).unwrap();
    let loaded: ModelParams<f64> = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    for p in &plans {
        let a = estimate(&model, p, &catalog, Some(&store)).unwrap();
        let b = estimate(&loaded, p, &catalog, Some(&store)).unwrap();
        assert_eq!(a.root_ms.to_bits(), b.root_ms.to_bits());
        assert_eq!(a.per_node, b.per_node);
    }
    // Same bytes on a second save.
    assert_eq!(fs::read(&path).unwrap(), model_to_bytes(&loaded).unwrap());
}

#[test]
fn single_precision_model_round_trips() {
    let (catalog, _) = gen_catalog(&small_spec()).unwrap();
    let params = ModelParams::<f32>::init(
        Vocabularies::from_plans(std::iter::empty()),
        Normalizer::from_catalog(&catalog),
        &TrainConfig::default(),
    )
    .unwrap();
    let back: ModelParams<f32> = model_from_bytes(&model_to_bytes(&params).unwrap()).unwrap();
    assert_eq!(back, params);
}

#[test]
fn lookup_store_round_trip_and_version_counter() {
    let (catalog, db) = gen_catalog(&small_spec()).unwrap();
    let store = LookupStore::build(&db, &catalog.join_pairs, 4096, 3, 1).unwrap();
    assert_eq!(store.version(), 1);
    let dir = tempfile::tempdir().unwrap();
    save_lookup_store(&store, dir.path()).unwrap();
    let loaded = load_lookup_store(dir.path()).unwrap();
    assert_eq!(loaded.len(), store.len());
    for (a, b) in store.lists().zip(loaded.lists()) {
        assert_eq!(a, b);
    }

    let rebuilt = store.rebuild(&db, 4096, 4).unwrap();
    assert_eq!(rebuilt.version(), 2);
    save_lookup_store(&rebuilt, dir.path()).unwrap();
    assert_eq!(load_lookup_store(dir.path()).unwrap().version(), 2);
}

#[test]
fn empty_store_and_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    save_lookup_store(&LookupStore::new(), dir.path()).unwrap();
    assert!(load_lookup_store(dir.path()).unwrap().is_empty());

    let mut store = LookupStore::new();
    store.insert(LookupList {
        pair: JoinPair::new("a.k", "b.k").unwrap(),
        columns: vec!["a.k".into(), "b.k".into()],
        rows: Vec::new(),
        inv_sample_rate: 1.0,
        join_size: 0,
        built_at: 7,
    });
    save_lookup_store(&store, dir.path()).unwrap();
    let loaded = load_lookup_store(dir.path()).unwrap();
    assert_eq!(loaded.len(), 1);
    assert!(loaded.lists().next().unwrap().is_empty());
    assert_eq!(loaded.version(), 7);
}

#[test]
fn truncated_and_empty_files_are_errors() {
    let (catalog, _) = gen_catalog(&small_spec()).unwrap();
    let params = ModelParams::<f64>::init(
        Vocabularies::from_plans(std::iter::empty()),
        Normalizer::from_catalog(&catalog),
        &TrainConfig::default(),
    )
    .unwrap();
    let bytes = model_to_bytes(&params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m");
    for cut in [0, 3, bytes.len() / 2, bytes.len() - 1] {
        fs::write(&path, &bytes[..cut]).unwrap();
        assert!(load_model::<f64>(&path).is_err(), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(model_from_bytes::<f64>(&flipped).is_err());
    assert!(matches!(
        load_model::<f64>(dir.path().join("missing")),
        Err(Error::Io(_))
    ));
}

#[test]
fn budget_sized_list_loads_quickly() {
    let columns: Vec<String> = ["a.id", "a.x", "b.fk", "b.y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let n_rows = DEFAULT_BYTE_BUDGET / (8 * columns.len());
    let rows: Vec<i64> = (0..n_rows * columns.len())
        .map(|i| (i as i64 * 2_654_435_761) % 1000)
        .collect();
    let mut store = LookupStore::new();
    store.insert(LookupList {
        pair: JoinPair::new("a.id", "b.fk").unwrap(),
        columns,
        rows,
        inv_sample_rate: 3.5,
        join_size: 3 * n_rows as u64,
        built_at: 1,
    });
    let dir = tempfile::tempdir().unwrap();
    save_lookup_store(&store, dir.path()).unwrap();
    let start = Instant::now();
    let loaded = load_lookup_store(dir.path()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1.0, "load took {secs}s");
    assert_eq!(
        loaded.lists().next().unwrap(),
        store.lists().next().unwrap()
    );
}

#[test]
fn catalog_tables_plans_and_reports_round_trip() {
    let (catalog, db) = gen_catalog(&small_spec()).unwrap();
    let plans = gen_workload(&catalog, &db, 25, &CostOracleParams::default(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();

    save_catalog(&catalog, dir.path().join("catalog")).unwrap();
    assert_eq!(load_catalog(dir.path().join("catalog")).unwrap(), catalog);
    save_tables(&db, dir.path().join("tables")).unwrap();
    assert_eq!(load_tables(dir.path().join("tables")).unwrap(), db);
    write_plans(&plans, dir.path().join("plans.jsonl")).unwrap();
    assert_eq!(read_plans(dir.path().join("plans.jsonl")).unwrap(), plans);

    let report = vec![ReportRow {
        plan_id: 0,
        estimated_ms: 1.0 / 3.0,
        actual_ms: 2.5,
        q_error: 7.5,
    }];
    write_report(&report, dir.path().join("report.jsonl")).unwrap();
    assert_eq!(
        read_report(dir.path().join("report.jsonl")).unwrap(),
        report
    );
}
