use std::path::Path;

use hnswlab::dimest;
use hnswlab::hnsw::{HnswIndex, HnswParams, NeighborSelect};
use hnswlab::io;
use hnswlab::knn::Baseline;
use hnswlab::lab::{self, DataSource, ExperimentConfig, OrderSpec, QuerySource, RunReport};
use hnswlab::orders::{self, Strategy};
use hnswlab::synth::SynthSpec;
use hnswlab::vecmath::Metric;
use hnswlab::{Dataset, Error};

fn data(n: usize, seed: u64) -> (Dataset, Dataset) {
    let spec = SynthSpec { d: 24, k: 6, n, seed };
    let (basis, x) = spec.generate().unwrap();
    let q = spec.queries(&basis, 40).unwrap();
    (x, q)
}

fn flip(path: &Path, at: usize) {
    let mut bytes = std::fs::read(path).unwrap();
    bytes[at] ^= 0x01;
    std::fs::write(path, bytes).unwrap();
}

fn set_version(path: &Path, v: u32) {
    let mut bytes = std::fs::read(path).unwrap();
    bytes[8..12].copy_from_slice(&v.to_le_bytes());
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn index_round_trip_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let (x, q) = data(900, 1);
    for metric in [Metric::L2, Metric::Cosine, Metric::InnerProduct] {
        for select in [NeighborSelect::Simple, NeighborSelect::Heuristic] {
            let params = HnswParams {
                metric,
                neighbor_select: select,
                m: 6,
                m0: 10,
                seed: 5,
                ..HnswParams::default()
            };
            let plan = orders::order_random(&(0..x.len()).collect::<Vec<_>>(), 2).unwrap();
            let index = HnswIndex::build(&x, &plan, params).unwrap();
            let path = dir.path().join(format!("{metric:?}-{select:?}.hlx"));
            io::save_index(&index, &x, &path).unwrap();
            let back = io::load_index(&path, &x).unwrap();
            assert_eq!(back.params(), index.params());
            assert_eq!(io::encode_index(&back, &x.content_hash()), std::fs::read(&path).unwrap());
            for i in 0..q.len() {
                assert_eq!(index.search(q.row(i), 10, 30).unwrap(), back.search(q.row(i), 10, 30).unwrap());
            }
        }
    }
}

#[test]
fn index_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = data(300, 2);
    let (other, _) = data(300, 3);
    let plan = orders::OrderPlan::identity(x.len());
    let index = HnswIndex::build(&x, &plan, HnswParams::default()).unwrap();
    let path = dir.path().join("i.hlx");

    io::save_index(&index, &x, &path).unwrap();
    assert!(matches!(io::load_index(&path, &other), Err(Error::HashMismatch { .. })));

    set_version(&path, 99);
    match io::load_index(&path, &x) {
        Err(Error::VersionMismatch { found: 99, expected: 1, .. }) => {}
        other => panic!("{other:?}"),
    }

    io::save_index(&index, &x, &path).unwrap();
    flip(&path, 0);
    assert!(matches!(io::load_index(&path, &x), Err(Error::Format { offset: 0, .. })));

    io::save_index(&index, &x, &path).unwrap();
    flip(&path, 40);
    let len = std::fs::metadata(&path).unwrap().len();
    match io::load_index(&path, &x) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, len - 32),
        other => panic!("{other:?}"),
    }

    std::fs::write(&path, b"HLHNSW").unwrap();
    assert!(matches!(io::load_index(&path, &x), Err(Error::Format { .. })));
}

#[test]
fn baseline_and_profile_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (x, q) = data(500, 4);
    let b = Baseline::compute(&x, &q, 7, Metric::Cosine).unwrap();
    let bp = dir.path().join("b.hlb");
    io::save_baseline(&b, &bp).unwrap();
    assert_eq!(io::load_baseline(&bp).unwrap(), b);
    set_version(&bp, 2);
    assert!(matches!(io::load_baseline(&bp), Err(Error::VersionMismatch { .. })));

    let p = dimest::lid_profile(&x, 15, Metric::L2).unwrap();
    let pp = dir.path().join("p.hlp");
    let summary = io::save_lid_profile(&p, &pp).unwrap();
    assert!(summary.exists());
    let back = io::load_lid_profile(&pp).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.dataset_hash, x.content_hash());
    flip(&pp, 20);
    assert!(io::load_lid_profile(&pp).is_err());

    // a baseline file is not a profile
    assert!(matches!(io::load_lid_profile(&bp), Err(Error::Format { offset: 0, .. })));
}

#[test]
fn order_plans_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.order");
    let lid = [3.0, 1.0, 2.0, 5.0, f64::INFINITY];
    let plan = orders::order_by_lid_values(&lid, orders::Direction::Desc).unwrap();
    io::save_order_plan(&plan, &path).unwrap();
    assert_eq!(io::load_order_plan(&path).unwrap(), plan);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.len() - 1;
    lines[last] = lines[1];
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(io::load_order_plan(&path).is_err());
}

#[test]
fn fvecs_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = data(50, 6);
    let path = dir.path().join("x.fvecs");
    io::write_fvecs(&x, &path).unwrap();
    let back = io::read_fvecs(&path).unwrap();
    assert_eq!(back.len(), 50);
    assert_eq!(io::file_hash(&path).unwrap().len(), 64);
    // values pass through f32
    for i in 0..50 {
        for (a, b) in x.row(i).iter().zip(back.row(i)) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}

#[test]
fn versioned_json_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        DataSource::Synth { d: 16, k: 4, n: 600 },
        QuerySource::Generated { n: 20 },
        vec![OrderSpec::new(Strategy::Random), OrderSpec::new(Strategy::LidAsc)],
    );
    cfg.lid_neighbours = 20;
    let exp = lab::run_experiment(&cfg).unwrap();
    let out = dir.path().join("run");
    exp.write(&out).unwrap();
    let report = lab::load_report(out.join("report.json")).unwrap();
    assert_eq!(report, exp.report);
    let manifest = lab::load_manifest(out.join("manifest.json")).unwrap();
    assert_eq!(manifest, exp.manifest);

    let mut raw: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    raw["version"] = 7.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_vec(&raw).unwrap()).unwrap();
    assert!(matches!(io::load_versioned::<RunReport>(&bad), Err(Error::VersionMismatch { found: 7, .. })));

    raw["version"] = 1.into();
    raw["format"] = "something.else".into();
    std::fs::write(&bad, serde_json::to_vec(&raw).unwrap()).unwrap();
    assert!(matches!(io::load_versioned::<RunReport>(&bad), Err(Error::Format { .. })));

    // manifest is not a report
    assert!(lab::load_report(out.join("manifest.json")).is_err());
}
