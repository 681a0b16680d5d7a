use std::fmt::Write as _;

use hitl_stream::runner::{run_experiment, ExperimentConfig, RegimeName, SyntheticConfig};
use hitl_stream::SamplerKind;

fn easy(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        sampler: SamplerKind::Uncertainty,
        regime: RegimeName::None,
        ..ExperimentConfig::default()
    };
    c.dataset.synthetic = Some(SyntheticConfig {
        n: 1500,
        dim: 16,
        ..SyntheticConfig::default()
    });
    c
}

#[test]
fn learning_does_not_regress_on_easy_data() {
    let seeds = 0..7u64;
    let improved = seeds
        .clone()
        .filter(|&s| {
            let r = run_experiment(&easy(s)).unwrap();
            r.final_auc() >= r.warmup_auc
        })
        .count();
    assert!(improved * 2 > seeds.count(), "only {improved} seeds improved");
}

#[test]
fn interval_records_respect_counts() {
    for sampler in SamplerKind::ALL {
        let mut c = easy(3);
        c.sampler = sampler;
        c.regime = RegimeName::Fast;
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.metrics.len(), r.plan.num_intervals);
        let total: usize = r.metrics.iter().map(|m| m.batch_size).sum();
        assert_eq!(total, 1500 - r.test_size - r.warmup_size);
        for m in &r.metrics {
            assert!(m.annotated <= m.region_size && m.region_size <= m.batch_size);
            assert!(m.batch_size <= r.plan.per_interval);
        }
        assert_eq!(r.metrics.last().unwrap().cumulative_annotated, r.audit.len());
    }
}

fn tweet_csv() -> String {
    let words = [
        ["flood", "water", "rising", "river", "rain"],
        ["donate", "help", "volunteer", "relief", "support"],
        ["power", "outage", "electric", "grid", "lights"],
    ];
    let labels = ["flooding", "donations", "infrastructure"];
    let mut out = String::from("id,timestamp,text,label\n");
    for i in 0..600u64 {
        let c = (i * 7 % 3) as usize;
        let w = &words[c];
        let text = format!(
            "{} {} the {} near {}",
            w[i as usize % 5],
            w[(i as usize + 2) % 5],
            w[(i as usize + 1) % 5],
            i % 11
        );
        writeln!(out, "t{i},{},\"{text}\",{}", 1_700_000_000 + i * 1000, labels[c]).unwrap();
    }
    out
}

#[test]
fn text_dataset_with_hashed_features() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tweets.csv"), tweet_csv()).unwrap();
    let toml = "seed = 2\nsampler = \"uncertainty\"\nregime = \"none\"\n[dataset]\npath = \"tweets.csv\"\n[features]\nmode = \"hashed\"\ndim = 64\n[split]\nz = 10\n";
    std::fs::write(dir.path().join("run.toml"), toml).unwrap();
    let config = ExperimentConfig::from_file(dir.path().join("run.toml"), &[]).unwrap();
    let report = run_experiment(&config).unwrap();
    assert_eq!(
        report.classes.names(),
        ["donations", "flooding", "infrastructure"]
    );
    assert!(report.final_auc() > 0.9, "{}", report.final_auc());
}

#[test]
fn text_dataset_with_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tweets.csv"), tweet_csv()).unwrap();
    let mut emb = String::new();
    let vocab = [
        ("flood", [1.0, 0.0, 0.0]),
        ("water", [0.9, 0.1, 0.0]),
        ("rising", [0.8, 0.0, 0.1]),
        ("river", [1.0, 0.1, 0.1]),
        ("rain", [0.9, 0.0, 0.0]),
        ("donate", [0.0, 1.0, 0.0]),
        ("help", [0.1, 0.9, 0.0]),
        ("volunteer", [0.0, 0.8, 0.1]),
        ("relief", [0.1, 1.0, 0.0]),
        ("support", [0.0, 0.9, 0.1]),
        ("power", [0.0, 0.0, 1.0]),
        ("outage", [0.1, 0.0, 0.9]),
        ("electric", [0.0, 0.1, 0.8]),
        ("grid", [0.0, 0.0, 1.0]),
        ("lights", [0.1, 0.1, 0.9]),
    ];
    for (w, v) in vocab {
        writeln!(emb, "{w} {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    std::fs::write(dir.path().join("emb.txt"), emb).unwrap();
    let toml = "regime = \"slow\"\n[dataset]\npath = \"tweets.csv\"\n[features]\nmode = \"embeddings\"\npath = \"emb.txt\"\ndim = 3\n[split]\nz = 10\nholdout = \"chronological\"\n";
    std::fs::write(dir.path().join("run.toml"), toml).unwrap();
    let config = ExperimentConfig::from_file(dir.path().join("run.toml"), &[]).unwrap();
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.metrics.len(), report.plan.num_intervals);
    assert!(report.warmup_auc > 0.8, "{}", report.warmup_auc);

    let bad = toml.replace("dim = 3", "dim = 4");
    std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let config = ExperimentConfig::from_file(dir.path().join("bad.toml"), &[]).unwrap();
    assert!(run_experiment(&config).is_err());
}

#[test]
fn shipped_config_parses_to_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let config = ExperimentConfig::from_file(&path, &[]).unwrap();
    config.validate().unwrap();
    let mut expected = ExperimentConfig::default();
    expected.dataset.synthetic = Some(SyntheticConfig::default());
    assert_eq!(config, expected);
}
