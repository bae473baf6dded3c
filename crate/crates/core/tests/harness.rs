use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pullback_mia::attacks::AttackMethod;
use pullback_mia::harness::{
    distortion_stage, ingest_idx, latent_codes, parse_idx, prepare_dataset, render_report, run_pipeline,
    train_vae_stage, DistortionRow, ExperimentConfig, ResultStore, ScoreRow, ScoreVariant, CONFIG_FILE,
    CORRELATION_FILE, DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE, PLOT_DIR, QUARTILE_CURVES, REPORT_JSON,
    REPORT_TABLE, SCORES_FILE,
};
use pullback_mia::models::StandardizedDecoder;
use pullback_mia::Error;

fn minimal(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = pullback_mia::harness::DatasetSpec::Synthetic {
        generator: "two-scale-blobs".into(),
        samples: 16,
        side: 16,
    };
    cfg.vae.epochs = 2;
    cfg.ldm.epochs = 2;
    cfg.ldm.hidden_dim = 16;
    cfg.baseline_trials = 3;
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Pairwise-concordance AUC with members scoring low, in percent.
fn concordance_auc(members: &[f64], non_members: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &m in members {
        for &n in non_members {
            wins += if m < n { 1.0 } else if m == n { 0.5 } else { 0.0 };
        }
    }
    100.0 * wins / (members.len() * non_members.len()) as f64
}

#[test]
fn minimal_run_writes_schema_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal(tmp.path());
    let store = run_pipeline(&cfg).unwrap();
    let hash = cfg.hash();
    for name in [CONFIG_FILE, DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE, SCORES_FILE, REPORT_JSON, REPORT_TABLE, QUARTILE_CURVES, CORRELATION_FILE] {
        assert!(store.path(name).is_file(), "{name} missing");
    }
    assert!(store.path("checkpoints/vae.json").is_file());
    assert!(store.path("checkpoints/ldm.json").is_file());

    let expected_headers: [(&str, &[&str]); 4] = [
        (SCORES_FILE, &["config_hash", "sample_id", "member", "method", "t", "norm_order", "masked", "variant", "keep_fraction", "score"]),
        (REPORT_TABLE, &["config_hash", "method", "variant", "t", "auc", "asr", "tpr_at_1_fpr", "baseline_mean_auc", "baseline_std_auc"]),
        (QUARTILE_CURVES, &["config_hash", "method", "variant", "t", "quartile", "auc", "status"]),
        (CORRELATION_FILE, &["config_hash", "radius", "samples", "low_frequency_r", "high_frequency_r"]),
    ];
    for (name, header) in expected_headers {
        let (h, rows) = read_csv(&store.path(name));
        assert_eq!(h, header, "{name}");
        assert!(rows.iter().all(|r| r[0] == hash), "{name} carries a foreign hash");
    }
    for name in [DISTORTION_FILE, INFLUENCE_FILE] {
        let (h, rows) = read_csv(&store.path(name));
        assert_eq!(h[0], "config_hash");
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| r[0] == hash));
    }
    let (_, scores) = read_csv(&store.path(SCORES_FILE));
    // 16 samples x 4 t x (4 methods x 3 variants).
    assert_eq!(scores.len(), 16 * 4 * 12);
    assert!(scores.iter().all(|r| r[9].parse::<f64>().unwrap().is_finite()));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(store.path(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(report["config_hash"], hash.as_str());
    let ckpt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(store.path("checkpoints/ldm.json")).unwrap()).unwrap();
    assert_eq!(ckpt["config_hash"], hash.as_str());

    let plots: Vec<_> = fs::read_dir(store.path(PLOT_DIR)).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(plots.len(), 12);
    for p in plots {
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
        let text = format!("config_hash\0{hash}");
        assert!(bytes.windows(text.len()).any(|w| w == text.as_bytes()), "{} lacks the hash", p.display());
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&minimal(a.path())).unwrap();
    run_pipeline(&minimal(b.path())).unwrap();
    for name in [DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE, SCORES_FILE, REPORT_JSON, REPORT_TABLE, QUARTILE_CURVES] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn report_deltas_equal_differences_recomputed_from_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let store = run_pipeline(&minimal(tmp.path())).unwrap();
    let (_, scores) = read_csv(&store.path(SCORES_FILE));
    // (method, variant) -> t -> (members, non-members)
    let mut groups: BTreeMap<(String, String), BTreeMap<usize, (Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    for r in &scores {
        let entry = groups.entry((r[3].clone(), r[7].clone())).or_default().entry(r[4].parse().unwrap()).or_default();
        let score: f64 = r[9].parse().unwrap();
        if r[2] == "true" {
            entry.0.push(score);
        } else {
            entry.1.push(score);
        }
    }
    let best_auc = |method: &str, variant: &str| -> f64 {
        groups[&(method.to_string(), variant.to_string())]
            .values()
            .map(|(m, n)| concordance_auc(m, n))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let deltas: Vec<f64> = ["loss", "sima", "secmi", "pia"]
        .iter()
        .map(|m| best_auc(m, "influence") - best_auc(m, "unfiltered"))
        .collect();
    let mean = deltas.iter().sum::<f64>() / 4.0;
    let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);

    let (_, table) = read_csv(&store.path(REPORT_TABLE));
    let row = |label: &str| table.iter().find(|r| r[1] == label).unwrap_or_else(|| panic!("no {label} row"));
    let mean_row: f64 = row("Mean Δ")[4].parse().unwrap();
    let min_row: f64 = row("Min Δ")[4].parse().unwrap();
    assert!((mean_row - mean).abs() < 1e-9, "{mean_row} vs {mean}");
    assert!((min_row - min).abs() < 1e-9, "{min_row} vs {min}");
    for m in ["Loss", "SimA", "SecMI", "PIA"] {
        let variants: Vec<&str> = table.iter().filter(|r| r[1] == m).map(|r| r[2].as_str()).collect();
        assert_eq!(variants, ["unfiltered", "influence", "random_drop"], "{m}");
    }
}

#[test]
fn one_method_table_has_two_rows_plus_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = minimal(tmp.path());
    cfg.attacks.methods = vec![AttackMethod::Sima];
    cfg.attacks.random_drop_control = false;
    let store = run_pipeline(&cfg).unwrap();
    let (_, table) = read_csv(&store.path(REPORT_TABLE));
    let labels: Vec<(&str, &str)> = table.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(
        labels,
        [
            ("SimA", "unfiltered"),
            ("SimA", "influence"),
            ("Mean Δ", "influence-unfiltered"),
            ("Min Δ", "influence-unfiltered")
        ]
    );
    let auc = |i: usize| table[i][4].parse::<f64>().unwrap();
    assert_eq!(auc(2), auc(1) - auc(0));
    assert_eq!(auc(3), auc(2));
}

#[test]
fn empty_quartile_buckets_are_flagged_not_nan() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = minimal(tmp.path());
    cfg.attacks.methods = vec![AttackMethod::Sima];
    cfg.t_grid = vec![0, 10];
    let store = ResultStore::create(&cfg).unwrap();
    let split = prepare_dataset(&cfg).unwrap();
    store.write_dataset(&split).unwrap();
    let labeled: Vec<(u64, bool)> = split.labeled().map(|(s, m)| (s.id, m)).collect();
    let distortion: Vec<DistortionRow> = labeled
        .iter()
        .map(|&(id, member)| DistortionRow {
            sample_id: id,
            member,
            log_volume: -1.5,
            rank: 1,
            singular_values: vec![(-1.5f64).exp()],
        })
        .collect();
    store.write_distortion(&distortion).unwrap();
    let mut scores = Vec::new();
    for &(id, member) in &labeled {
        for t in [0, 10] {
            scores.push(ScoreRow {
                sample_id: id,
                member,
                method: AttackMethod::Sima,
                t,
                norm_order: 4.0,
                variant: ScoreVariant::Unfiltered,
                keep_fraction: 1.0,
                score: id as f64 * 0.1 + t as f64,
            });
        }
    }
    store.write_scores(&scores).unwrap();
    render_report(&store).unwrap();
    let text = fs::read_to_string(store.path(QUARTILE_CURVES)).unwrap();
    assert!(!text.to_lowercase().contains("nan"));
    let (_, rows) = read_csv(&store.path(QUARTILE_CURVES));
    assert_eq!(rows.len(), 2 * 4);
    for r in &rows {
        let q: usize = r[4].parse().unwrap();
        if q == 1 {
            assert_eq!(r[6], "ok");
            assert!(!r[5].is_empty());
        } else {
            assert_eq!((r[5].as_str(), r[6].as_str()), ("", "empty"));
        }
    }
    // Constant distortion has no correlation to report.
    assert_eq!(read_csv(&store.path(CORRELATION_FILE)).1.len(), 0);
}

#[test]
fn missing_artifacts_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal(tmp.path());
    let store = ResultStore::create(&cfg).unwrap();
    let err = render_report(&store).unwrap_err();
    match &err {
        Error::IncompleteRun { missing } => {
            for name in [DATASET_FILE, DISTORTION_FILE, SCORES_FILE] {
                assert!(missing.iter().any(|m| m.ends_with(name)), "{name} not listed in {missing:?}");
            }
        }
        other => panic!("expected an incomplete-run error, got {other}"),
    }
    assert_eq!(err.exit_code(), 5);
    assert!(matches!(ResultStore::open(&tmp.path().join("nowhere")), Err(Error::IncompleteRun { .. })));
}

#[test]
fn foreign_hash_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let store = run_pipeline(&minimal(tmp.path())).unwrap();
    let path = store.path(SCORES_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let tampered = text.replacen(store.config_hash(), &"0".repeat(64), 2);
    fs::write(&path, tampered).unwrap();
    let err = store.read_scores().unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);

    let mut other = minimal(tmp.path());
    other.seed = 99;
    assert_eq!(ResultStore::create(&other).unwrap_err().exit_code(), 2);
}

#[test]
fn idx_fixture_matches_hand_decoding() {
    // Three 2x3 images, bytes chosen so each pixel is easy to decode by hand.
    let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 3];
    bytes.extend([0, 255, 51, 102, 153, 204]);
    bytes.extend([255, 255, 255, 0, 0, 0]);
    bytes.extend([1, 2, 3, 4, 5, 6]);
    let hand = |v: u8| v as f64 / 255.0 * 2.0 - 1.0;
    let expected: Vec<Vec<f64>> = vec![
        vec![-1.0, 1.0, -0.6, -0.2, 0.2, 0.6],
        vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0],
        [1u8, 2, 3, 4, 5, 6].iter().map(|&v| hand(v)).collect(),
    ];
    let parsed = parse_idx(&bytes).unwrap();
    assert_eq!((parsed.rows, parsed.cols), (2, 3));
    assert_eq!(parsed.images.len(), 3);
    for (got, want) in parsed.images.iter().zip(&expected) {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("fixture.idx");
    fs::write(&path, &bytes).unwrap();
    assert_eq!(ingest_idx(&path).unwrap(), parsed);

    let err = parse_idx(&bytes[..bytes.len() - 1]).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    let mut bad_magic = bytes.clone();
    bad_magic[3] = 1;
    match parse_idx(&bad_magic).unwrap_err() {
        Error::Format { offset, .. } => assert_eq!(offset, 0),
        other => panic!("{other}"),
    }
}

#[test]
fn textured_subpopulation_has_higher_distortion() {
    let cfg = ExperimentConfig::default();
    let split = prepare_dataset(&cfg).unwrap();
    let vae = train_vae_stage(&cfg, &split).unwrap();
    let (codes, standardizer) = latent_codes(&cfg, &vae.encoder, &split).unwrap();
    let decoder = StandardizedDecoder {
        inner: &vae.decoder,
        standardizer: &standardizer,
    };
    let rows = distortion_stage(&cfg, &decoder, &codes).unwrap();
    let fine: BTreeMap<u64, bool> = split.labeled().map(|(s, _)| (s.id, s.fine_detail.unwrap())).collect();
    let mean = |flag: bool| {
        let v: Vec<f64> = rows.iter().filter(|r| fine[&r.sample_id] == flag).map(|r| r.log_volume).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) > mean(false), "fine {} vs coarse {}", mean(true), mean(false));
}
