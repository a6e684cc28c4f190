use hcdh::analysis::{
    ablate, ablation_csv, activation_histogram, bit_balance, confusion_matrix, lambda_sweep, lsh_baseline, min_diagonal,
    outer_mass, run_experiment, sweep_csv, ExperimentConfig, ExperimentData, RankWeighting,
};
use hcdh::dataset::{make_synthetic_blobs, split_protocol, FeatureSet, LabelSet, Split};
use hcdh::hadamard::{build_codebook, Codebook};
use hcdh::model::{LossMode, NetSpec};
use hcdh::retrieval::{BinarizationMode, EvalOptions};
use hcdh::trainer::{resume, train, Checkpoint, TrainConfig, Variant};

struct Small {
    features: FeatureSet,
    labels: LabelSet,
    split: Split,
    codebook: Codebook,
}

fn small() -> Small {
    let (features, labels) = make_synthetic_blobs(4, 60, 8, 0.5, 2).unwrap();
    let split = split_protocol(&labels, 10, 40, 2).unwrap();
    let codebook = build_codebook(8, 4, 0).unwrap();
    Small { features, labels, split, codebook }
}

fn config(epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        train: TrainConfig { epochs, base_lr: 1e-2, lr_halving_period: 10, batch_size: 32, seed: 2, ..TrainConfig::default() },
        spec: NetSpec { input_dim: 8, hidden: vec![32], code_length: 8, num_classes: 4 },
        eval: EvalOptions::default(),
        mode: BinarizationMode::Sign,
    }
}

fn data(s: &Small) -> ExperimentData<'_> {
    ExperimentData { features: &s.features, labels: &s.labels, split: &s.split, codebook: &s.codebook }
}

#[test]
fn loss_drops_by_an_order_of_magnitude() {
    let s = small();
    let r = run_experiment(&config(30), data(&s)).unwrap();
    let first = r.history.records.first().unwrap().loss.total;
    let last = r.history.records.last().unwrap().loss.total;
    assert!(r.history.records.iter().all(|e| e.loss.is_finite()));
    assert!(last / first < 0.1, "{first} -> {last}");
    for e in &r.history.records {
        assert!((e.loss.total - (e.loss.hadamard + e.loss.lambda * e.loss.classification)).abs() < 1e-12);
    }
}

#[test]
fn trained_codes_retrieve_and_saturate() {
    let s = small();
    let r = run_experiment(&config(30), data(&s)).unwrap();
    assert!(r.report.map > 0.95, "{}", r.report.map);
    let lsh = lsh_baseline(&s.features, &s.labels, &s.split, 8, 2, &EvalOptions::default()).unwrap();
    assert!(r.report.map > lsh.map);
    let hist = activation_histogram(&r.encoded.database_activations, 20).unwrap();
    assert!(outer_mass(&hist, 0.1) > 0.6);
    let qlabels = s.labels.matrix().select_rows(&s.split.query);
    let dblabels = s.labels.matrix().select_rows(&s.split.database);
    let conf = confusion_matrix(&r.rankings, &qlabels, &dblabels, 50, RankWeighting::LogDiscount).unwrap();
    assert!(min_diagonal(&conf) > 0.8);
    assert_eq!(bit_balance(&r.encoded.database).unwrap().len(), 8);
}

#[test]
fn experiments_are_reproducible() {
    let s = small();
    let a = run_experiment(&config(5), data(&s)).unwrap();
    let b = run_experiment(&config(5), data(&s)).unwrap();
    assert_eq!(a.network.to_bytes(), b.network.to_bytes());
    assert!(a.history.same_trajectory(&b.history));
    assert_eq!(a.encoded.database, b.encoded.database);
    assert_eq!(a.report.summary_json(), b.report.summary_json());
}

#[test]
fn resume_from_saved_checkpoint_matches_straight_run() {
    let s = small();
    let cfg = config(6);
    let spec = cfg.spec.clone();
    let (straight, _) = train::<f64>(&cfg.train, &s.features, &s.labels, &s.split, &s.codebook, &spec).unwrap();

    let mut first = cfg.train.clone();
    first.epochs = 3;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.hcmd");
    let mut trainer =
        hcdh::trainer::Trainer::<f64>::new(first, &s.features, &s.labels, &s.split, &s.codebook, &spec).unwrap();
    trainer.run(|_| Ok(())).unwrap();
    trainer.checkpoint().save(&path).unwrap();
    let saved = Checkpoint::<f64>::load(&path).unwrap();
    let (done, history) =
        resume(saved, &cfg.train, &s.features, &s.labels, &s.split, &s.codebook, &spec).unwrap();
    assert_eq!(done.epochs_completed, 6);
    assert_eq!(history.records.len(), 3);
    assert_eq!(history.records[0].epoch, 3);
    assert_eq!(done.network.to_bytes(), straight.to_bytes());
}

#[test]
fn f32_training_tracks_f64() {
    let s = small();
    let cfg = config(3);
    let (n64, h64) = train::<f64>(&cfg.train, &s.features, &s.labels, &s.split, &s.codebook, &cfg.spec).unwrap();
    let (n32, h32) = train::<f32>(&cfg.train, &s.features, &s.labels, &s.split, &s.codebook, &cfg.spec).unwrap();
    for (a, b) in h64.records.iter().zip(&h32.records) {
        assert!((a.loss.total - b.loss.total).abs() < 1e-3 * a.loss.total);
    }
    for (a, b) in n64.flat_params().iter().zip(n32.flat_params()) {
        assert!((a - b as f64).abs() < 1e-3);
    }
}

#[test]
fn multi_label_bce_run_is_finite() {
    let s = small();
    let rows: Vec<u8> = (0..s.labels.len())
        .flat_map(|i| {
            let c = s.labels.primary_class(i);
            (0..4).map(move |j| (j == c || j == (c + 1) % 4) as u8)
        })
        .collect();
    let labels = LabelSet::new(hcdh::linalg::Matrix::from_vec(s.labels.len(), 4, rows).unwrap()).unwrap();
    let mut cfg = config(5);
    cfg.train.loss_mode = LossMode::BinaryCrossEntropy;
    let r = run_experiment(&cfg, ExperimentData { labels: &labels, ..data(&s) }).unwrap();
    assert!(r.history.records.iter().all(|e| e.loss.is_finite()));
    assert!(r.report.map > 0.0 && r.report.map <= 1.0);
}

#[test]
fn sweep_lambda_zero_equals_hadamard_only_and_ablation_rows() {
    let s = small();
    let base = config(4);
    let sweep = lambda_sweep(&base, data(&s), &[0.0, 0.1]).unwrap();
    let rows = ablate(&base, data(&s)).unwrap();
    assert_eq!(rows.iter().map(|r| r.variant).collect::<Vec<_>>(), Variant::ALL.to_vec());
    let h_only = rows.iter().find(|r| r.variant == Variant::HadamardOnly).unwrap();
    assert_eq!(sweep[0].map, h_only.map);
    assert!(sweep_csv(&sweep).starts_with("lambda,map\n0,"));
    let csv = ablation_csv(&rows);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.contains("HCDH-H,") && csv.contains("HCDH-C,"));
}

#[test]
fn mean_centered_codes_are_balanced() {
    let s = small();
    let mut cfg = config(5);
    cfg.mode = BinarizationMode::MeanCenteredSign;
    let r = run_experiment(&cfg, data(&s)).unwrap();
    assert_eq!(r.encoded.database.mode, BinarizationMode::MeanCenteredSign);
    for f in bit_balance(&r.encoded.database).unwrap() {
        assert!((0.2..=0.8).contains(&f), "{f}");
    }
}
