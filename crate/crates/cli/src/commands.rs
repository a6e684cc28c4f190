use std::path::{Path, PathBuf};

use hcdh::analysis::{
    ablate, ablation_csv, activation_histogram, balance_csv, bit_balance, codebook_gram, confusion_matrix, encode_split,
    fraction_in_band, histogram_csv, lambda_sweep, lsh_baseline, matrix_csv, max_off_diagonal, min_diagonal,
    outer_mass, run_experiment, sweep_csv, AnalysisSummary, ExperimentConfig, ExperimentData, RankWeighting,
};
use hcdh::dataset::{make_synthetic_blobs_detailed, split_protocol, FeatureSet, LabelSet, Split};
use hcdh::hadamard::{build_codebook, Codebook};
use hcdh::model::{HashNetwork, NetSpec, SgdConfig};
use hcdh::retrieval::{evaluate, BinarizationMode, BinaryCodeSet, EvalOptions, EvalReport};
use hcdh::trainer::{Checkpoint, TrainConfig, Trainer, Variant};
use hcdh::{Error, Result};

use crate::args::*;

const BALANCE_BAND: (f64, f64) = (0.2, 0.8);

macro_rules! log {
    ($($t:tt)*) => { eprintln!("hcdh: {}", format!($($t)*)) };
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn mode(mean_centered: bool) -> BinarizationMode {
    if mean_centered {
        BinarizationMode::MeanCenteredSign
    } else {
        BinarizationMode::Sign
    }
}

fn eval_options(score: &ScoreArgs, threads: usize) -> Result<EvalOptions> {
    if score.map_at == Some(0) {
        return Err(invalid("--map-at must be at least 1"));
    }
    if threads == 0 {
        return Err(invalid("--threads must be at least 1"));
    }
    Ok(EvalOptions { cutoff: score.map_at, denominator: score.denominator.into(), threads, ..EvalOptions::default() })
}

fn cutoff_tag(score: &ScoreArgs) -> String {
    match score.map_at {
        Some(r) => format!("map{r}"),
        None => "mapall".into(),
    }
}

fn run_stem(variant: Variant, k: usize, lambda: f64, seed: u64) -> String {
    format!("{}_k{k}_lambda{lambda}_seed{seed}", variant.name().to_lowercase())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

struct Inputs {
    features: FeatureSet,
    labels: LabelSet,
    split: Split,
    codebook: Codebook,
}

impl Inputs {
    fn load(data: &DataArgs) -> Result<Self> {
        let features = FeatureSet::load(&data.features)?;
        let labels = LabelSet::load(&data.labels)?;
        let split = Split::load(&data.split)?;
        let codebook = Codebook::load(&data.codebook)?;
        check_pairing(&features, &labels, &split)?;
        if codebook.num_classes() != labels.num_classes() {
            return Err(invalid(format!(
                "codebook has {} classes but labels have {}",
                codebook.num_classes(),
                labels.num_classes()
            )));
        }
        Ok(Self { features, labels, split, codebook })
    }

    fn data(&self) -> ExperimentData<'_> {
        ExperimentData { features: &self.features, labels: &self.labels, split: &self.split, codebook: &self.codebook }
    }
}

fn check_pairing(features: &FeatureSet, labels: &LabelSet, split: &Split) -> Result<()> {
    if features.len() != labels.len() {
        return Err(invalid(format!("{} feature rows but {} label rows", features.len(), labels.len())));
    }
    split.validate(features.len())
}

fn train_config(h: &HyperArgs, variant: Variant, checkpoint_every: usize) -> Result<TrainConfig> {
    let config = TrainConfig {
        epochs: h.epochs,
        batch_size: h.batch_size,
        base_lr: h.lr,
        lr_halving_period: h.lr_halving_period,
        sgd: SgdConfig { momentum: h.momentum, weight_decay: h.weight_decay },
        lambda: h.lambda,
        loss_mode: h.loss.into(),
        variant,
        seed: h.seed,
        checkpoint_every,
    };
    config.validate()?;
    Ok(config)
}

fn net_spec(h: &HyperArgs, inputs: &Inputs) -> NetSpec {
    NetSpec {
        input_dim: inputs.features.dim(),
        hidden: h.hidden.clone(),
        code_length: inputs.codebook.code_length(),
        num_classes: inputs.codebook.num_classes(),
    }
}

fn experiment(h: &HyperArgs, inputs: &Inputs, variant: Variant, mean_centered: bool, score: &ScoreArgs, threads: usize) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        train: train_config(h, variant, 0)?,
        spec: net_spec(h, inputs),
        eval: eval_options(score, threads)?,
        mode: mode(mean_centered),
    })
}

fn log_report(what: &str, report: &EvalReport) {
    log!(
        "{what}: mAP {:.6} over {} queries ({} skipped), cutoff {}",
        report.map,
        report.per_query_ap.len() - report.skipped_queries,
        report.skipped_queries,
        report.cutoff
    );
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Codebook(a) => codebook(a),
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Eval(a) => eval(a, threads),
        Command::Analyze(a) => analyze(a, threads),
        Command::Sweep(a) => sweep(a, threads),
        Command::Ablate(a) => ablation(a, threads),
        Command::LshBaseline(a) => lsh(a, threads),
    }
}

fn codebook(a: CodebookArgs) -> Result<()> {
    let cb = build_codebook(a.bits, a.classes, a.seed)?;
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("codebook_k{}_c{}_seed{}.hccb", a.bits, a.classes, a.seed)));
    let k = cb.code_length() as f64;
    let max_imbalance = (0..cb.num_classes())
        .map(|c| cb.codeword(c).iter().map(|&v| v as i64).sum::<i64>().unsigned_abs() as f64 / k)
        .fold(0.0, f64::max);
    let max_corr = max_off_diagonal(&codebook_gram(&cb));
    cb.save(&out)?;
    log!(
        "codebook K={} C={} provenance={} K*={} max |<ci,cj>|/K={max_corr} max |sum ci|/K={max_imbalance}",
        cb.code_length(),
        cb.num_classes(),
        cb.provenance,
        cb.order()
    );
    log!("wrote {}", out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.features == a.labels {
        return Err(invalid("--features and --labels must be different files"));
    }
    let blobs = make_synthetic_blobs_detailed(a.classes, a.per_class, a.dim, a.spread, a.seed)?;
    blobs.features.save(&a.features)?;
    blobs.labels.save(&a.labels)?;
    log!(
        "{} items, D={}, C={}, nearest-centre accuracy {:.4}",
        blobs.features.len(),
        blobs.features.dim(),
        a.classes,
        blobs.nearest_center_accuracy
    );
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let labels = LabelSet::load(&a.labels)?;
    let s = split_protocol(&labels, a.query_per_class, a.train_per_class, a.seed)?;
    s.save(&a.out)?;
    log!(
        "query {} train {} database {}; wrote {}",
        s.query.len(),
        s.train.len(),
        s.database.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let inputs = Inputs::load(&a.data)?;
    let variant: Variant = a.variant.into();
    let config = train_config(&a.hyper, variant, a.checkpoint_every)?;
    let spec = net_spec(&a.hyper, &inputs);
    let stem = run_stem(variant, spec.code_length, a.hyper.lambda, a.hyper.seed);
    let model_path = a.out_dir.join(format!("{stem}.hcmd"));
    let history_path = a.out_dir.join(format!("{stem}_history.csv"));

    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::<f64>::load(path)?;
            Trainer::from_checkpoint(ckpt, config, &inputs.features, &inputs.labels, &inputs.split, &inputs.codebook, &spec)?
        }
        None => Trainer::new(config, &inputs.features, &inputs.labels, &inputs.split, &inputs.codebook, &spec)?,
    };
    ensure_dir(&a.out_dir)?;
    let start = trainer.epochs_completed();
    log!("training {stem} from epoch {start} to {}", a.hyper.epochs);
    let history = trainer.run(|ckpt| {
        log!("epoch {}: checkpoint", ckpt.epochs_completed);
        ckpt.save(&model_path)
    })?;
    trainer.checkpoint().save(&model_path)?;

    let csv = history.to_csv();
    let text = match (&a.resume, std::fs::read_to_string(&history_path)) {
        (Some(_), Ok(previous)) if start > 0 => {
            let mut kept: String = previous
                .lines()
                .enumerate()
                .filter(|(i, l)| *i == 0 || l.split(',').next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e < start))
                .map(|(_, l)| format!("{l}\n"))
                .collect();
            kept.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
            kept
        }
        _ => csv,
    };
    write_text(&history_path, &text)?;
    if let Some(last) = history.records.last() {
        log!(
            "epoch {}: hadamard {:.6} classification {:.6} total {:.6}",
            last.epoch,
            last.loss.hadamard,
            last.loss.classification,
            last.loss.total
        );
    }
    log!("wrote {} and {}", model_path.display(), history_path.display());
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let net = HashNetwork::<f64>::load(&a.model)?;
    let features = FeatureSet::load(&a.features)?;
    let s = Split::load(&a.split)?;
    s.validate(features.len())?;
    if net.input_dim() != features.dim() {
        return Err(invalid(format!(
            "model expects {}-dimensional features, got {}",
            net.input_dim(),
            features.dim()
        )));
    }
    let encoded = encode_split(&net, &features, &s, mode(a.mean_centered))?;
    ensure_dir(&a.out_dir)?;
    let stem = file_stem(&a.model);
    let (qp, dp) = (a.out_dir.join(format!("{stem}_query.hcbc")), a.out_dir.join(format!("{stem}_database.hcbc")));
    encoded.queries.save(&qp)?;
    encoded.database.save(&dp)?;
    log!(
        "{} query and {} database codes, K={}, mode {}; wrote {} and {}",
        encoded.queries.len(),
        encoded.database.len(),
        encoded.database.code_length(),
        encoded.database.mode,
        qp.display(),
        dp.display()
    );
    Ok(())
}

fn eval(a: EvalArgs, threads: usize) -> Result<()> {
    let options = eval_options(&a.score, threads)?;
    let queries = BinaryCodeSet::load(&a.queries)?;
    let database = BinaryCodeSet::load(&a.database)?;
    let labels = LabelSet::load(&a.labels)?;
    let s = Split::load(&a.split)?;
    s.validate(labels.len())?;
    if queries.len() != s.query.len() || database.len() != s.database.len() {
        return Err(invalid(format!(
            "codes ({} query, {} database) do not match the split ({} query, {} database)",
            queries.len(),
            database.len(),
            s.query.len(),
            s.database.len()
        )));
    }
    let report = evaluate(
        &queries,
        &database,
        &labels.matrix().select_rows(&s.query),
        &labels.matrix().select_rows(&s.database),
        &options,
    )?;
    ensure_dir(&a.out_dir)?;
    let base = file_stem(&a.queries);
    let base = base.strip_suffix("_query").unwrap_or(&base);
    let prefix = format!("{base}_{}", cutoff_tag(&a.score));
    report.write_files(&a.out_dir, &prefix)?;
    log_report("eval", &report);
    log!("wrote {}/{prefix}.json", a.out_dir.display());
    Ok(())
}

fn analyze(a: AnalyzeArgs, threads: usize) -> Result<()> {
    let inputs = Inputs::load(&a.data)?;
    let config = experiment(&a.hyper, &inputs, Variant::Full, a.mean_centered, &a.score, threads)?;
    if a.bins == 0 || a.top_r == 0 {
        return Err(invalid("--bins and --top-r must be at least 1"));
    }
    let r = run_experiment(&config, inputs.data())?;
    let qlabels = inputs.labels.matrix().select_rows(&inputs.split.query);
    let dblabels = inputs.labels.matrix().select_rows(&inputs.split.database);
    let balance = bit_balance(&r.encoded.database)?;
    let histogram = activation_histogram(&r.encoded.database_activations, a.bins)?;
    let confusion = confusion_matrix(&r.rankings, &qlabels, &dblabels, a.top_r, RankWeighting::LogDiscount)?;
    let uniform = confusion_matrix(&r.rankings, &qlabels, &dblabels, a.top_r, RankWeighting::Uniform)?;
    let gram = codebook_gram(&inputs.codebook);
    let summary = AnalysisSummary {
        code_length: inputs.codebook.code_length(),
        lambda: a.hyper.lambda,
        seed: a.hyper.seed,
        bits_in_balance_band: fraction_in_band(&balance, BALANCE_BAND.0, BALANCE_BAND.1),
        balance_band: BALANCE_BAND,
        histogram_outer_mass: outer_mass(&histogram, 0.1),
        confusion_min_diagonal: min_diagonal(&confusion),
        confusion_min_diagonal_unweighted: min_diagonal(&uniform),
        codebook_max_off_diagonal: max_off_diagonal(&gram),
    };

    ensure_dir(&a.out_dir)?;
    let stem = run_stem(Variant::Full, summary.code_length, a.hyper.lambda, a.hyper.seed);
    let out = |suffix: &str| a.out_dir.join(format!("{stem}_{suffix}"));
    write_text(&out("balance.csv"), &balance_csv(&balance))?;
    write_text(&out("histogram.csv"), &histogram_csv(&histogram))?;
    write_text(&out("confusion.csv"), &matrix_csv(&confusion))?;
    write_text(&out("gram.csv"), &matrix_csv(&gram))?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| invalid(e.to_string()))?;
    write_text(&out("analysis.json"), &(json + "\n"))?;
    r.report.write_files(&a.out_dir, &format!("{stem}_{}", cutoff_tag(&a.score)))?;
    log_report("analyze", &r.report);
    log!(
        "bits in [{}, {}]: {:.3}; outer histogram mass {:.3}; confusion min diagonal {:.3}",
        BALANCE_BAND.0,
        BALANCE_BAND.1,
        summary.bits_in_balance_band,
        summary.histogram_outer_mass,
        summary.confusion_min_diagonal
    );
    Ok(())
}

fn sweep(a: SweepArgs, threads: usize) -> Result<()> {
    let inputs = Inputs::load(&a.data)?;
    let config = experiment(&a.hyper, &inputs, Variant::Full, a.mean_centered, &a.score, threads)?;
    if let Some(bad) = a.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(invalid(format!("λ values must be finite and non-negative, got {bad}")));
    }
    let rows = lambda_sweep(&config, inputs.data(), &a.lambdas)?;
    ensure_dir(&a.out_dir)?;
    let path = a.out_dir.join(format!(
        "sweep_k{}_seed{}_{}.csv",
        inputs.codebook.code_length(),
        a.hyper.seed,
        cutoff_tag(&a.score)
    ));
    write_text(&path, &sweep_csv(&rows))?;
    for r in &rows {
        log!("lambda {}: mAP {:.6}", r.lambda, r.map);
    }
    log!("wrote {}", path.display());
    Ok(())
}

fn ablation(a: AblateArgs, threads: usize) -> Result<()> {
    let inputs = Inputs::load(&a.data)?;
    let config = experiment(&a.hyper, &inputs, Variant::Full, a.mean_centered, &a.score, threads)?;
    let rows = ablate(&config, inputs.data())?;
    ensure_dir(&a.out_dir)?;
    let path = a.out_dir.join(format!(
        "ablation_k{}_lambda{}_seed{}_{}.csv",
        inputs.codebook.code_length(),
        a.hyper.lambda,
        a.hyper.seed,
        cutoff_tag(&a.score)
    ));
    write_text(&path, &ablation_csv(&rows))?;
    for r in &rows {
        log!("{}: mAP {:.6}", r.variant.name(), r.map);
    }
    log!("wrote {}", path.display());
    Ok(())
}

fn lsh(a: LshArgs, threads: usize) -> Result<()> {
    let options = eval_options(&a.score, threads)?;
    let features = FeatureSet::load(&a.features)?;
    let labels = LabelSet::load(&a.labels)?;
    let s = Split::load(&a.split)?;
    check_pairing(&features, &labels, &s)?;
    let report = lsh_baseline(&features, &labels, &s, a.bits, a.seed, &options)?;
    ensure_dir(&a.out_dir)?;
    let prefix = format!("lsh_k{}_seed{}_{}", a.bits, a.seed, cutoff_tag(&a.score));
    report.write_files(&a.out_dir, &prefix)?;
    log_report("lsh-baseline", &report);
    log!("wrote {}/{prefix}.json", a.out_dir.display());
    Ok(())
}
