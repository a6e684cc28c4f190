//! Mini-batch training of the hash network.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dataset::{FeatureSet, LabelSet, Split};
use crate::error::{Error, Result};
use crate::hadamard::{make_target, Codebook, TargetCode};
use crate::io::{self, Reader, Writer};
use crate::linalg::Matrix;
use crate::model::{backward, ClassLabels, GradientSet, HashNetwork, LossBreakdown, LossMode, NetSpec, Objective, Sgd, SgdConfig};
use crate::rng;
use crate::scalar::Scalar;

/// Which loss terms are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Hadamard loss plus λ-weighted classification loss.
    #[serde(rename = "HCDH")]
    Full,
    /// Hadamard loss only (classification weight forced to 0).
    #[serde(rename = "HCDH-H")]
    HadamardOnly,
    /// Classification loss only (hadamard term dropped, weight 1).
    #[serde(rename = "HCDH-C")]
    ClassifierOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::HadamardOnly, Variant::ClassifierOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "HCDH",
            Variant::HadamardOnly => "HCDH-H",
            Variant::ClassifierOnly => "HCDH-C",
        }
    }

    pub fn objective(self, lambda: f64) -> Objective {
        match self {
            Variant::Full => Objective { lambda, hadamard: true },
            Variant::HadamardOnly => Objective { lambda: 0.0, hadamard: true },
            Variant::ClassifierOnly => Objective { lambda: 1.0, hadamard: false },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    /// Total number of epochs to reach (resuming continues up to this count).
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_halving_period: usize,
    pub sgd: SgdConfig,
    pub lambda: f64,
    pub loss_mode: LossMode,
    pub variant: Variant,
    pub seed: u64,
    /// Emit a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            base_lr: 1e-4,
            lr_halving_period: 50,
            sgd: SgdConfig::default(),
            lambda: 1.0,
            loss_mode: LossMode::CrossEntropy,
            variant: Variant::Full,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// `base_lr · 0.5^⌊epoch / period⌋` for zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * 0.5f64.powi((epoch / self.lr_halving_period) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.base_lr)));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::invalid("learning-rate halving period must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.sgd.momentum) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {}", self.sgd.momentum)));
        }
        if !(self.sgd.weight_decay >= 0.0 && self.sgd.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean over the epoch's batches.
    pub loss: LossBreakdown,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.epoch == b.epoch && a.lr.to_bits() == b.lr.to_bits() && a.loss == b.loss)
    }

    pub fn extend(&mut self, other: TrainHistory) {
        self.records.extend(other.records);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,hadamard_loss,classification_loss,total_loss,seconds\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6}",
                r.epoch, r.lr, r.loss.hadamard, r.loss.classification, r.loss.total, r.seconds
            );
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Network plus optimiser state, enough to resume training exactly.
///
/// Encoded as an HCMD network block followed by an `HCTS` trailer:
/// magic, u32 version 1, u32 epochs completed, then the momentum buffers as
/// little-endian f64 in parameter declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub network: HashNetwork<T>,
    pub velocity: GradientSet<T>,
    pub epochs_completed: usize,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.network.to_bytes();
        let mut w = Writer::new(b"HCTS", 1);
        w.u32(self.epochs_completed as u32);
        for v in self.velocity.flat() {
            w.f64(v.to_f64_lossy());
        }
        bytes.extend_from_slice(&w.finish());
        bytes
    }

    /// Accepts a bare HCMD file too, in which case the velocity is zero and
    /// no epochs are counted.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (network, rest) = HashNetwork::<T>::from_bytes_prefix(bytes)?;
        let mut velocity = GradientSet::zeros_like(&network);
        if rest.is_empty() {
            return Ok(Self {
                network,
                velocity,
                epochs_completed: 0,
            });
        }
        let mut r = Reader::open("HCTS", rest, b"HCTS", 1)?;
        let epochs_completed = r.u32()? as usize;
        let n = network.param_count();
        r.require(n * 8)?;
        let flat = (0..n)
            .map(|_| r.f64().map(T::from_f64_lossy))
            .collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        velocity.set_flat(&flat)?;
        Ok(Self {
            network,
            velocity,
            epochs_completed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

/// Converts selected feature rows to a scalar matrix.
pub fn feature_batch<T: Scalar>(features: &FeatureSet, rows: &[usize]) -> Matrix<T> {
    let d = features.dim();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        data.extend(features.row(i).iter().map(|&v| T::from_f32(v).unwrap()));
    }
    Matrix::from_vec(rows.len(), d, data).expect("row-major batch")
}

/// Hash layer activations for the given rows, evaluated in chunks.
pub fn hash_activations<T: Scalar>(net: &HashNetwork<T>, features: &FeatureSet, rows: &[usize]) -> Result<Matrix<T>> {
    let k = net.code_length();
    let mut out = Vec::with_capacity(rows.len() * k);
    for chunk in rows.chunks(1024) {
        let u = net.encode(&feature_batch(features, chunk))?;
        out.extend_from_slice(u.as_slice());
    }
    Matrix::from_vec(rows.len(), k, out)
}

struct TrainData<'a> {
    features: &'a FeatureSet,
    train: Vec<usize>,
    /// Indexed by dataset row; only training rows are populated.
    targets: Vec<Option<TargetCode>>,
    labels: &'a LabelSet,
}

fn prepare<'a>(
    config: &TrainConfig,
    features: &'a FeatureSet,
    labels: &'a LabelSet,
    split: &Split,
    codebook: &Codebook,
    spec: &NetSpec,
) -> Result<TrainData<'a>> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "features vs labels rows",
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if features.dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "feature dimension vs network input",
            expected: spec.input_dim,
            actual: features.dim(),
        });
    }
    if codebook.num_classes() != labels.num_classes() || spec.num_classes != labels.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "class count (labels / codebook / network)",
            expected: labels.num_classes(),
            actual: if codebook.num_classes() != labels.num_classes() {
                codebook.num_classes()
            } else {
                spec.num_classes
            },
        });
    }
    if codebook.code_length() != spec.code_length {
        return Err(Error::DimensionMismatch {
            context: "codebook bits vs hash layer width",
            expected: spec.code_length,
            actual: codebook.code_length(),
        });
    }
    split.validate(features.len())?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if config.loss_mode == LossMode::CrossEntropy && !split.train.iter().all(|&i| labels.row(i).iter().filter(|&&v| v != 0).count() == 1) {
        return Err(Error::invalid("cross-entropy mode needs single-label training data; use bce"));
    }
    let mut targets = vec![None; features.len()];
    for &i in &split.train {
        targets[i] = Some(make_target(codebook, labels.row(i))?);
    }
    Ok(TrainData {
        features,
        train: split.train.clone(),
        targets,
        labels,
    })
}

/// Mutable training state: network, optimiser and epoch counter.
pub struct Trainer<'a, T> {
    config: TrainConfig,
    data: TrainData<'a>,
    network: HashNetwork<T>,
    sgd: Sgd<T>,
    epochs_completed: usize,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    /// Fresh network initialised from `config.seed`. All shapes are checked
    /// before anything is allocated for training.
    pub fn new(
        config: TrainConfig,
        features: &'a FeatureSet,
        labels: &'a LabelSet,
        split: &Split,
        codebook: &Codebook,
        spec: &NetSpec,
    ) -> Result<Self> {
        let data = prepare(&config, features, labels, split, codebook, spec)?;
        let network = HashNetwork::new(spec, config.seed)?;
        let sgd = Sgd::new(&network, config.sgd);
        Ok(Self {
            config,
            data,
            network,
            sgd,
            epochs_completed: 0,
        })
    }

    pub fn from_checkpoint(
        checkpoint: Checkpoint<T>,
        config: TrainConfig,
        features: &'a FeatureSet,
        labels: &'a LabelSet,
        split: &Split,
        codebook: &Codebook,
        spec: &NetSpec,
    ) -> Result<Self> {
        let expected = HashNetwork::<T>::zeros(spec)?;
        if !checkpoint.network.same_architecture(&expected) {
            return Err(Error::invalid(format!(
                "checkpoint architecture {:?} does not match requested {:?}",
                checkpoint.network.spec(),
                spec
            )));
        }
        if !checkpoint.velocity.congruent_with(&checkpoint.network) {
            return Err(Error::invalid("checkpoint velocity does not match its network"));
        }
        let data = prepare(&config, features, labels, split, codebook, spec)?;
        let sgd = Sgd::with_velocity(config.sgd, checkpoint.velocity);
        Ok(Self {
            config,
            data,
            network: checkpoint.network,
            sgd,
            epochs_completed: checkpoint.epochs_completed,
        })
    }

    pub fn network(&self) -> &HashNetwork<T> {
        &self.network
    }

    pub fn into_network(self) -> HashNetwork<T> {
        self.network
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            network: self.network.clone(),
            velocity: self.sgd.velocity().clone(),
            epochs_completed: self.epochs_completed,
        }
    }

    fn batch_labels(&self, rows: &[usize]) -> ClassLabels {
        match self.config.loss_mode {
            LossMode::CrossEntropy => {
                ClassLabels::Classes(rows.iter().map(|&i| self.data.labels.primary_class(i)).collect())
            }
            LossMode::BinaryCrossEntropy => ClassLabels::MultiHot(self.data.labels.matrix().select_rows(rows)),
        }
    }

    /// One pass over the shuffled training set.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        let epoch = self.epochs_completed;
        let lr = self.config.lr_at(epoch);
        let objective = self.config.variant.objective(self.config.lambda);

        let mut order = self.data.train.clone();
        let shuffle_seed = rng::derive_seed(rng::derive_seed(self.config.seed, rng::stream::SHUFFLE), epoch as u64);
        order.shuffle(&mut rng::rng_from_seed(shuffle_seed));

        let (mut h, mut c) = (0.0, 0.0);
        for rows in order.chunks(self.config.batch_size) {
            let x = feature_batch::<T>(self.data.features, rows);
            let targets: Vec<TargetCode> = rows
                .iter()
                .map(|&i| self.data.targets[i].clone().expect("training rows have targets"))
                .collect();
            let labels = self.batch_labels(rows);
            let (loss, grads) = backward(&self.network, &x, &targets, &labels, objective)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite(format!("loss or gradient diverged in epoch {epoch}")));
            }
            self.sgd.step(&mut self.network, &grads, lr)?;
            let w = rows.len() as f64;
            h += loss.hadamard * w;
            c += loss.classification * w;
        }
        let n = order.len() as f64;
        let loss = LossBreakdown::new(h / n, c / n, objective.lambda);
        self.epochs_completed += 1;
        Ok(EpochRecord {
            epoch,
            lr,
            loss,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs until `config.epochs` epochs are completed, calling `on_checkpoint`
    /// every `checkpoint_every` epochs.
    pub fn run(&mut self, mut on_checkpoint: impl FnMut(&Checkpoint<T>) -> Result<()>) -> Result<TrainHistory> {
        let mut history = TrainHistory::default();
        while self.epochs_completed < self.config.epochs {
            let record = self.run_epoch()?;
            history.records.push(record);
            if self.config.checkpoint_every > 0 && self.epochs_completed % self.config.checkpoint_every == 0 {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(history)
    }
}

/// Trains a fresh network for `config.epochs` epochs.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    features: &FeatureSet,
    labels: &LabelSet,
    split: &Split,
    codebook: &Codebook,
    spec: &NetSpec,
) -> Result<(HashNetwork<T>, TrainHistory)> {
    let mut trainer = Trainer::<T>::new(config.clone(), features, labels, split, codebook, spec)?;
    let history = trainer.run(|_| Ok(()))?;
    Ok((trainer.into_network(), history))
}

/// Continues from `checkpoint` until `config.epochs` epochs are completed.
/// Returns the final checkpoint and the history of the new epochs only.
pub fn resume<T: Scalar>(
    checkpoint: Checkpoint<T>,
    config: &TrainConfig,
    features: &FeatureSet,
    labels: &LabelSet,
    split: &Split,
    codebook: &Codebook,
    spec: &NetSpec,
) -> Result<(Checkpoint<T>, TrainHistory)> {
    let mut trainer = Trainer::from_checkpoint(checkpoint, config.clone(), features, labels, split, codebook, spec)?;
    let history = trainer.run(|_| Ok(()))?;
    Ok((trainer.checkpoint(), history))
}
