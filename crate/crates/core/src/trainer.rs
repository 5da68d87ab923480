//! Training loop, evaluation and the low-resource protocol.
//!
//! The encoder is frozen: features are computed once per sample and only the
//! interaction layer and scoring head are updated. Every source of randomness
//! is one of the three seeds in [`Seeds`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{subsample, ReasoningSample};
use crate::encoder::{Encoder, FeatureSequence};
use crate::interaction::{self, init_params, BiLstmParams, Checkpoint, Provenance};
use crate::loss::{sample_loss, LossConfig};
use crate::metrics::{mean_report, EvalReport, ScoredSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub encoder: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossConfig,
    pub seeds: Seeds,
    pub optimizer: Optimizer,
    /// Defaults to the encoder width.
    pub hidden_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 1,
            epochs: 10,
            loss: LossConfig::default(),
            seeds: Seeds::default(),
            optimizer: Optimizer::default(),
            hidden_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero is accepted: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate",
                format!("{} must be finite and >= 0", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::invalid("hidden_dim", "must be at least 1"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: BiLstmParams,
    /// Optimizer steps taken.
    pub step: u64,
    pub epochs_done: u64,
    /// `(step, summed batch loss)`, one entry per optimizer step.
    pub loss_history: Vec<(u64, f64)>,
    pub optimizer: OptimizerState,
    pub provenance: Provenance,
}

impl TrainState {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params.clone(), self.provenance.clone())
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (step, loss) in &self.loss_history {
            writeln!(out, "{step},{loss:?}").unwrap();
        }
        out
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.log_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A sample with its frozen features.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub sample_id: String,
    pub labels: Vec<u8>,
    pub features: FeatureSequence,
}

pub fn encode_samples(samples: &[ReasoningSample], encoder: &dyn Encoder) -> Result<Vec<EncodedSample>> {
    samples
        .iter()
        .map(|s| {
            Ok(EncodedSample {
                sample_id: s.sample_id.clone(),
                labels: s.labels.clone(),
                features: encoder.encode_sample(s)?,
            })
        })
        .collect()
}

/// Loss and parameter gradient of one sample.
pub fn sample_gradient(
    params: &BiLstmParams,
    sample: &EncodedSample,
    loss: &LossConfig,
) -> Result<(f64, BiLstmParams)> {
    let (scores, trace) = interaction::forward(params, &sample.features)?;
    let result = sample_loss(&scores, &sample.labels, loss)?;
    let (grads, _) = interaction::backward(params, &sample.features, &trace, &result.grad)?;
    Ok((result.loss, grads))
}

/// Epoch-by-epoch driver behind [`train`].
pub struct Trainer {
    config: TrainConfig,
    data: Vec<EncodedSample>,
    state: TrainState,
}

impl Trainer {
    pub fn new(config: TrainConfig, samples: &[ReasoningSample], encoder: &dyn Encoder) -> Result<Self> {
        config.validate()?;
        if let Some(bad) = samples.iter().find(|s| !s.is_trainable()) {
            return Err(Error::invalid(
                "sample",
                format!("{} needs at least one correct and one wrong hypothesis", bad.sample_id),
            ));
        }
        let data = encode_samples(samples, encoder)?;
        let d = encoder.dim();
        let params = init_params(config.seeds.init, d, config.hidden_dim.unwrap_or(d))?;
        let optimizer = match config.optimizer {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam { .. } => OptimizerState::Adam {
                m: vec![0.0; params.num_values()],
                v: vec![0.0; params.num_values()],
                t: 0,
            },
        };
        let state = TrainState {
            params,
            step: 0,
            epochs_done: 0,
            loss_history: Vec::new(),
            optimizer,
            provenance: Provenance {
                init_seed: Some(config.seeds.init),
                shuffle_seed: Some(config.seeds.shuffle),
                encoder_seed: Some(config.seeds.encoder),
            },
        };
        Ok(Trainer { config, data, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn data(&self) -> &[EncodedSample] {
        &self.data
    }

    fn epoch_order(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seeds.shuffle);
        rng.set_stream(self.state.epochs_done);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One pass over the data; returns the summed loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let order = self.epoch_order();
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let mut grads = self.state.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = &self.data[i];
                let (loss, g) = sample_gradient(&self.state.params, sample, &self.config.loss)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        step: self.state.step + 1,
                        sample_id: sample.sample_id.clone(),
                    });
                }
                batch_loss += loss;
                grads.add_scaled(1.0, &g);
            }
            self.apply(&grads);
            self.state.step += 1;
            self.state.loss_history.push((self.state.step, batch_loss));
            total += batch_loss;
        }
        self.state.epochs_done += 1;
        Ok(total)
    }

    fn apply(&mut self, grads: &BiLstmParams) {
        let lr = self.config.learning_rate;
        match (&mut self.state.optimizer, self.config.optimizer) {
            (OptimizerState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, epsilon }) => {
                *t += 1;
                let bias1 = 1.0 - beta1.powi(*t as i32);
                let bias2 = 1.0 - beta2.powi(*t as i32);
                let params = self.state.params.values_mut();
                for (((p, g), m), v) in params.zip(grads.values()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bias1) / ((*v / bias2).sqrt() + epsilon);
                }
            }
            _ => self.state.params.add_scaled(-lr, grads),
        }
    }

    pub fn evaluate(&self, keep_scores: bool) -> Result<EvalReport> {
        evaluate_encoded(&self.state.params, &self.data, keep_scores)
    }
}

pub fn train(config: &TrainConfig, samples: &[ReasoningSample], encoder: &dyn Encoder) -> Result<TrainState> {
    let mut trainer = Trainer::new(*config, samples, encoder)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_state())
}

pub fn score_samples(params: &BiLstmParams, data: &[EncodedSample]) -> Result<Vec<ScoredSample>> {
    data.iter()
        .map(|s| {
            Ok(ScoredSample {
                sample_id: s.sample_id.clone(),
                labels: s.labels.clone(),
                scores: interaction::score(params, &s.features)?,
            })
        })
        .collect()
}

fn evaluate_encoded(params: &BiLstmParams, data: &[EncodedSample], keep_scores: bool) -> Result<EvalReport> {
    EvalReport::from_scored(score_samples(params, data)?, keep_scores)
}

/// Forward-only scoring of `samples`; `keep_scores` retains the per-sample
/// score table in the report.
pub fn evaluate(
    params: &BiLstmParams,
    samples: &[ReasoningSample],
    encoder: &dyn Encoder,
    keep_scores: bool,
) -> Result<EvalReport> {
    if params.input_dim != encoder.dim() {
        return Err(Error::Shape {
            what: "encoder width vs parameters",
            expected: params.input_dim,
            got: encoder.dim(),
        });
    }
    evaluate_encoded(params, &encode_samples(samples, encoder)?, keep_scores)
}

/// Trains once per init seed, evaluates each run on `eval`, and returns the
/// individual reports with their mean.
pub fn evaluate_seeds(
    config: &TrainConfig,
    train_set: &[ReasoningSample],
    eval_set: &[ReasoningSample],
    encoder: &dyn Encoder,
    init_seeds: &[u64],
) -> Result<(Vec<EvalReport>, EvalReport)> {
    let reports = init_seeds
        .iter()
        .map(|&seed| {
            let mut cfg = *config;
            cfg.seeds.init = seed;
            let state = train(&cfg, train_set, encoder)?;
            evaluate(&state.params, eval_set, encoder, false)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_report(&reports)?;
    Ok((reports, mean))
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.01, 0.02, 0.05, 0.10, 1.00];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowResourceRow {
    pub fraction: f64,
    pub n_train: usize,
    pub acc: f64,
    pub auc: f64,
}

/// Trains on a seeded subsample for each fraction and evaluates every run on
/// the full sample set.
pub fn low_resource_run(
    config: &TrainConfig,
    samples: &[ReasoningSample],
    encoder: &dyn Encoder,
    fractions: &[f64],
) -> Result<Vec<LowResourceRow>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid("fraction", format!("{f} not in (0, 1]")));
    }
    let data = encode_samples(samples, encoder)?;
    fractions
        .iter()
        .map(|&fraction| {
            let subset = subsample(samples, fraction, config.seeds.shuffle)?;
            let state = train(config, &subset, encoder)?;
            let report = evaluate_encoded(&state.params, &data, false)?;
            Ok(LowResourceRow {
                fraction,
                n_train: subset.len(),
                acc: report.acc,
                auc: report.auc,
            })
        })
        .collect()
}

pub fn low_resource_csv(rows: &[LowResourceRow]) -> String {
    let mut out = String::from("fraction,n_train,acc,auc\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.fraction, r.n_train, r.acc, r.auc).unwrap();
    }
    out
}
