mod common;

use common::median;
use fairprune::data::{gen_synthetic_biased, load_csv, save_csv, split, CsvSchema, SplitSpec, SynthConfig};
use fairprune::experiment::{DatasetSource, ExperimentConfig, SeedContext};
use fairprune::metrics::evaluate;

#[test]
fn csv_round_trip_is_lossless() {
    let data = gen_synthetic_biased(&SynthConfig {
        n_per_group: [5000, 5000],
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    save_csv(&data, &path).unwrap();
    let back = load_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!(back.len(), 10_000);
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.groups(), data.groups());
    for i in 0..data.len() {
        assert_eq!(back.features(i), data.features(i));
    }
}

#[test]
fn malformed_csv_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x,label,group\n1.0,0,0\nnope,1,1\n").unwrap();
    assert_eq!(load_csv(&path, &CsvSchema::default()).unwrap_err().exit_code(), 3);
    std::fs::write(&path, "x,label\n1.0,0\n").unwrap();
    assert_eq!(load_csv(&path, &CsvSchema::default()).unwrap_err().exit_code(), 3);
    std::fs::write(&path, "x,label,group\n1.0,0,2\n").unwrap();
    assert!(load_csv(&path, &CsvSchema::default()).is_err());
}

#[test]
fn generator_is_seeded() {
    let cfg = SynthConfig {
        n_per_group: [50, 70],
        ..SynthConfig::default()
    };
    let a = gen_synthetic_biased(&cfg).unwrap();
    assert_eq!(a, gen_synthetic_biased(&cfg).unwrap());
    assert_ne!(a, gen_synthetic_biased(&SynthConfig { seed: 1, ..cfg }).unwrap());
    assert_eq!(a.group_count(0), 50);
    assert_eq!(a.group_count(1), 70);
}

#[test]
fn splits_partition_the_data() {
    let data = gen_synthetic_biased(&SynthConfig {
        n_per_group: [100, 100],
        ..SynthConfig::default()
    })
    .unwrap();
    let spec = SplitSpec::default();
    let [tr, va, te] = spec.indices(data.len()).unwrap();
    let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
    let (a, b, c) = split(&data, &spec).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (tr.len(), va.len(), te.len()));
}

fn median_test_f1_gap(synth: SynthConfig) -> f64 {
    let gaps = (0..3)
        .map(|seed| {
            let mut cfg = ExperimentConfig::default();
            cfg.dataset = DatasetSource::Synthetic(synth.clone());
            let cfg = cfg.with_seed(seed);
            let ctx = SeedContext::prepare(&cfg).unwrap();
            let r = evaluate(&ctx.model, &ctx.test, &cfg.metrics).unwrap();
            (r.f1_g0 - r.f1_g1).abs()
        })
        .collect();
    median(gaps)
}

#[test]
fn default_generator_is_biased_and_null_generator_is_not() {
    let biased = median_test_f1_gap(SynthConfig::default());
    assert!(biased >= 0.05, "default gap {biased}");
    let null = median_test_f1_gap(SynthConfig {
        spurious_strength: [0.0, 0.0],
        spurious_noise: [1.0, 1.0],
        ..SynthConfig::default()
    });
    assert!(null <= 0.03, "null gap {null}");
}

#[test]
fn invalid_generator_configs_rejected() {
    let bad = [
        SynthConfig { dim: 5, ..SynthConfig::default() },
        SynthConfig { num_classes: 1, ..SynthConfig::default() },
        SynthConfig { label_noise: [0.6, 0.0], ..SynthConfig::default() },
        SynthConfig { spurious_noise: [-1.0, 0.0], ..SynthConfig::default() },
    ];
    for cfg in bad {
        assert_eq!(gen_synthetic_biased(&cfg).unwrap_err().exit_code(), 2);
    }
}
