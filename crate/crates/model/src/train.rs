//! Joint training: every step backpropagates the combined loss of one
//! mini-batch's three objectives.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use dualoie_core::dataset::{make_training_pairs_with, PromptElement, TrainingPair};
use dualoie_core::ExtractionInstance;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::net::{DualModel, LossBreakdown, PackedBatch};
use crate::params::{clip_grad_norm, seed_rng, Adam, AdamConfig};
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_steps: u64,
    /// Wall-clock budget; training stops at the first step past it.
    pub time_budget_secs: Option<f64>,
    pub warmup_steps: u64,
    pub clip_norm: Option<f64>,
    /// Evaluate every this many steps (0 disables evaluation).
    pub eval_every: u64,
    /// Evaluations without dev improvement before stopping.
    pub patience: usize,
    /// Stop once the 5-step moving average of the total loss drops below.
    pub target_loss: Option<f64>,
    /// Checkpoint every this many steps (0 writes only at the end).
    pub checkpoint_every: u64,
    pub prompt_element: PromptElement,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: 2000,
            time_budget_secs: None,
            warmup_steps: 0,
            clip_norm: Some(1.0),
            eval_every: 0,
            patience: 3,
            target_loss: None,
            checkpoint_every: 0,
            prompt_element: PromptElement::Predicate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_P")]
    pub l_p: f64,
    #[serde(rename = "L_T")]
    pub l_t: f64,
    #[serde(rename = "L_S")]
    pub l_s: f64,
}

impl LogEntry {
    fn new(step: u64, b: &LossBreakdown) -> Self {
        LogEntry { step, l: b.total, l_p: b.l_p, l_t: b.l_t, l_s: b.l_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxSteps,
    TimeBudget,
    TargetLoss,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub stop: StopReason,
    pub log: Vec<LogEntry>,
    pub evals: Vec<(u64, f64)>,
    /// Step whose parameters the model holds at the end (the best dev
    /// evaluation when evaluating).
    pub best_step: u64,
    pub best_dev: Option<f64>,
    pub elapsed_secs: f64,
}

/// Hooks into the loop. `evaluate` returns a dev score (higher is better).
pub trait Callbacks {
    fn on_step(&mut self, _step: u64, _loss: &LossBreakdown) {}

    fn evaluate(&mut self, _model: &DualModel) -> Option<f64> {
        None
    }
}

impl Callbacks for () {}

fn moving_average(log: &[LogEntry], n: usize) -> f64 {
    let tail = &log[log.len().saturating_sub(n)..];
    tail.iter().map(|e| e.l).sum::<f64>() / tail.len() as f64
}

/// Trains `model` in place. Batches hold `batch_size` instances with all
/// their pairs; the instance order is reshuffled each epoch from the model
/// seed. On a non-finite loss the parameters roll back to the last good
/// step (written to `checkpoint_dir` if given) and training aborts.
pub fn train(
    model: &mut DualModel,
    corpus: &[ExtractionInstance],
    tcfg: &TrainConfig,
    callbacks: &mut dyn Callbacks,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainReport, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let per_instance: Vec<Vec<TrainingPair>> =
        corpus.iter().map(|inst| make_training_pairs_with(inst, tcfg.prompt_element)).collect::<Result<_, _>>()?;
    let mut log_file = match checkpoint_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(
                dir.join("train_config.json"),
                serde_json::to_string_pretty(tcfg).map_err(std::io::Error::from)?,
            )?;
            Some(BufWriter::new(File::create(dir.join("train_log.jsonl"))?))
        }
        None => None,
    };
    let started = Instant::now();
    let mut rng = seed_rng(model.cfg.seed ^ 0x5eed);
    let mut adam = Adam::new(AdamConfig { lr: model.cfg.lr, ..AdamConfig::default() }, &model.store);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut log = Vec::new();
    let mut evals = Vec::new();
    let mut best: Option<(f64, u64, crate::ParamStore)> = None;
    let mut since_best = 0usize;
    let mut last_good = (0u64, model.store.clone());
    let mut stop = StopReason::MaxSteps;
    let mut step = 0u64;

    while step < tcfg.max_steps {
        if tcfg.time_budget_secs.is_some_and(|b| started.elapsed().as_secs_f64() >= b) {
            stop = StopReason::TimeBudget;
            break;
        }
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + model.cfg.batch_size).min(order.len());
        let pairs: Vec<&TrainingPair> = order[cursor..end].iter().flat_map(|&i| &per_instance[i]).collect();
        cursor = end;
        let batch = PackedBatch::new(model, &pairs)?;
        let (loss, mut grads) = model.loss_and_grads(&batch);
        step += 1;
        if !loss.total.is_finite() || grads.grads.iter().flatten().any(|g| !g.is_finite()) {
            model.store = last_good.1;
            if let Some(dir) = checkpoint_dir {
                model.save(dir)?;
            }
            return Err(ModelError::DivergenceDetected { step, restored_from: last_good.0 });
        }
        last_good = (step - 1, model.store.clone());
        if let Some(c) = tcfg.clip_norm {
            clip_grad_norm(&mut grads, c);
        }
        let lr = if tcfg.warmup_steps > 0 && step <= tcfg.warmup_steps {
            model.cfg.lr * step as f32 / tcfg.warmup_steps as f32
        } else {
            model.cfg.lr
        };
        adam.step(&mut model.store, &grads, lr);

        let entry = LogEntry::new(step, &loss);
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry).map_err(std::io::Error::from)?)?;
        }
        log.push(entry);
        callbacks.on_step(step, &loss);

        if tcfg.checkpoint_every > 0 && step.is_multiple_of(tcfg.checkpoint_every) {
            if let Some(dir) = checkpoint_dir {
                model.save(dir)?;
            }
        }
        if tcfg.target_loss.is_some_and(|t| log.len() >= 5 && moving_average(&log, 5) < t) {
            stop = StopReason::TargetLoss;
            break;
        }
        if tcfg.eval_every > 0 && step.is_multiple_of(tcfg.eval_every) {
            if let Some(score) = callbacks.evaluate(model) {
                log::info!("step {step}: dev {score:.4}, loss {:.4}", loss.total);
                evals.push((step, score));
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, step, model.store.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= tcfg.patience {
                        stop = StopReason::EarlyStopping;
                        break;
                    }
                }
            }
        }
    }

    let (best_step, best_dev) = match best {
        Some((score, s, params)) => {
            model.store = params;
            (s, Some(score))
        }
        None => (step, None),
    };
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    if let Some(dir) = checkpoint_dir {
        model.save(dir)?;
    }
    Ok(TrainReport {
        steps: step,
        stop,
        log,
        evals,
        best_step,
        best_dev,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
