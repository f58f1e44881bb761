use std::fs;

use migrasim::error::SimError;
use migrasim::harness::{emit_report, run_experiment, stream_peak, to_csv, to_json, ExperimentSpec, KernelKind, ReportFormat, CSV_HEADER};
use migrasim::machine::MachineConfig;

#[test]
fn bfs_sweep_has_ten_records_with_teps() {
    let spec = ExperimentSpec::from_toml_str(
        r#"
        kernel = "bfs"
        seed = 5
        [bfs]
        graph_type = ["er", "rmat"]
        scale = [8, 9, 10, 11, 12]
        "#,
    )
    .unwrap();
    let recs = run_experiment(&spec).unwrap();
    assert_eq!(recs.len(), 10);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.index, i);
        let teps = r.metrics.teps.expect("bfs records carry teps");
        assert!(teps > 0.0);
        assert!((r.metrics.bandwidth_bytes_per_s - 16.0 * teps).abs() <= 1e-6 * r.metrics.bandwidth_bytes_per_s);
    }
}

#[test]
fn percent_of_peak_uses_the_same_machine() {
    let mut spec = ExperimentSpec::new(KernelKind::Gsana);
    spec.gsana.pair = vec!["128".into()];
    spec.gsana.nthreads = vec![4, 64];
    let recs = run_experiment(&spec).unwrap();
    assert_ne!(recs[0].config_hash, recs[1].config_hash);
    for r in &recs {
        let mut cfg = MachineConfig::single_node();
        cfg.seed = r.seed;
        if let migrasim::harness::Point::Gsana { nthreads, .. } = r.point {
            cfg.max_threadlets_per_nodelet = nthreads;
        }
        assert_eq!(cfg.config_hash(), r.config_hash);
        let peak = stream_peak(&cfg).unwrap();
        assert_eq!(r.metrics.stream_peak_bytes_per_s, peak);
        assert!((r.metrics.pct_of_stream_peak - 100.0 * r.metrics.bandwidth_bytes_per_s / peak).abs() < 1e-9);
    }
}

#[test]
fn spec_file_with_relative_matrix_and_machine_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("tiny.mtx"),
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 3 2.0\n",
    )
    .unwrap();
    fs::write(dir.path().join("machine.toml"), MachineConfig::with_nodelets(4).to_kv_string()).unwrap();
    let spec_path = dir.path().join("exp.toml");
    fs::write(
        &spec_path,
        r#"
        kernel = "spmv"
        [machine]
        config = "machine.toml"
        [spmv]
        matrix = ["tiny.mtx", "synth"]
        size = [4]
        layout = ["replicated", "striped"]
        "#,
    )
    .unwrap();
    let spec = ExperimentSpec::load(&spec_path).unwrap();
    let recs = run_experiment(&spec).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().all(|r| r.counters.nodelets.len() == 4));

    let out = dir.path().join("report.csv");
    emit_report(&recs, ReportFormat::Csv, &out).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 4);
    assert_eq!(text, to_csv(&recs).unwrap());
}

#[test]
fn kernel_errors_name_the_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.mtx"),
        "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
    )
    .unwrap();
    let spec_path = dir.path().join("exp.json");
    fs::write(&spec_path, r#"{"kernel": "spmv", "spmv": {"matrix": ["synth", "bad.mtx"]}}"#).unwrap();
    let spec = ExperimentSpec::load(&spec_path).unwrap();
    match run_experiment(&spec) {
        Err(SimError::Sweep { index, point, .. }) => {
            assert_eq!(index, 1);
            assert!(point.contains("bad.mtx"), "{point}");
        }
        other => panic!("expected a sweep error, got {other:?}"),
    }
}

#[test]
fn unknown_fields_and_empty_axes_are_rejected() {
    assert!(ExperimentSpec::from_toml_str("kernel = \"bfs\"\nbogus = 1\n").is_err());
    let spec = ExperimentSpec::from_toml_str("kernel = \"bfs\"\n[bfs]\nscale = []\n").unwrap();
    assert!(run_experiment(&spec).is_err());
}

#[test]
fn json_records_have_stable_keys() {
    let spec = ExperimentSpec::new(KernelKind::Stream);
    let recs = run_experiment(&spec).unwrap();
    let text = to_json(&recs).unwrap();
    let order = ["index", "point", "seed", "config_hash", "time", "metrics", "counters"];
    let at: Vec<usize> = order.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{at:?}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rec = &v.as_array().unwrap()[0];
    assert_eq!(rec.as_object().unwrap().len(), order.len());
    assert_eq!(rec["point"]["kernel"], "stream");
    assert_eq!(rec["counters"]["nodelets"].as_array().unwrap().len(), 8);
}
