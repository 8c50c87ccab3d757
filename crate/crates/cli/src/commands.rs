use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dualoie_core::annotate::{iterative_annotation, AnnotationPools, SimulatedOracle};
use dualoie_core::dataset::{
    classify_triplet_categories, generate_synthetic, load_corpus, load_corpus_with_report, make_training_pairs_with,
    write_corpus, CategoryFlags, Objective, PromptElement, TrainingPair,
};
use dualoie_core::inference::{
    extract_corpus, prediction_map, read_predictions, write_predictions, InferenceConfig, PromptMode, Seq2Seq,
};
use dualoie_core::metrics::{
    bleu, f1_multi_to_one, grouped_report, pearson, score_corpus, CorpusScores, GroupBy, SentencePrediction,
    BLEU_VARIANT,
};
use dualoie_core::{parse_sentence, serialize_triplets, ExtractionInstance, ParseMode, Sentence, Triplet};
use dualoie_llm::{run_baseline, HttpChatClient, PromptTemplate, ResponseCache};
use dualoie_model::{train, Callbacks, DualModel, LossBreakdown, TrainConfig, TrainReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::annotate::{annotation_pools, ModelAnnotationTrainer};
use crate::config::RunConfig;
use crate::sweep::loss_grid;
use crate::{Cli, Command};

pub(crate) struct Invocation<'a> {
    pub argv: Vec<String>,
    pub cli: &'a Cli,
}

pub(crate) fn dispatch(inv: &Invocation, cfg: &RunConfig) -> Result<()> {
    let out = inv.cli.command.out_dir();
    cfg.write_snapshot(out)?;
    write_json(
        &out.join("invocation.json"),
        &serde_json::json!({ "command": inv.cli.command.name(), "argv": inv.argv }),
    )?;
    log::info!("{} -> {}", inv.cli.command.name(), out.display());
    match &inv.cli.command {
        Command::Gen { out, size } => gen(cfg, out, *size),
        Command::Prep { input, format, out } => prep(cfg, input, format.unwrap_or(cfg.data.format), out),
        Command::Train { train, dev, test, out } => train_cmd(cfg, train, dev.as_deref(), test.as_deref(), out),
        Command::Extract { model, input, out } => extract_cmd(cfg, model, input, out),
        Command::Score { gold, pred, out } => score_cmd(cfg, gold, pred, out),
        Command::Sweep { train, eval, out } => sweep_cmd(cfg, train, eval, out),
        Command::GroupReport { gold, pred, out, by } => group_report_cmd(cfg, gold, pred, out, by),
        Command::DualCorr { model, gold, pred, out } => dual_corr_cmd(cfg, model, gold, pred.as_deref(), out),
        Command::GoldPrompt { model, gold, out } => gold_prompt_cmd(cfg, model, gold, out),
        Command::LlmBaseline { input, pool, mode, out } => llm_cmd(cfg, input, pool.as_deref(), *mode, out),
        Command::AnnotateSim { input, out } => annotate_cmd(cfg, input.as_deref(), out),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(cfg: &RunConfig, path: &Path) -> Result<Vec<ExtractionInstance>> {
    load_corpus(path, cfg.data.format).with_context(|| format!("loading {}", path.display()))
}

fn load_model(dir: &Path) -> Result<DualModel> {
    DualModel::load(dir).with_context(|| format!("loading model from {}", dir.display()))
}

fn category_counts(corpus: &[ExtractionInstance]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = CategoryFlags::NAMES.iter().map(|n| (n.to_string(), 0)).collect();
    for inst in corpus {
        for f in classify_triplet_categories(inst) {
            for n in CategoryFlags::NAMES {
                if f.get(n) == Some(true) {
                    *counts.get_mut(n).expect("name listed") += 1;
                }
            }
        }
    }
    counts
}

fn gen(cfg: &RunConfig, out: &Path, size: Option<usize>) -> Result<()> {
    let mut synth = cfg.synth.clone();
    if let Some(n) = size {
        synth.size = n;
    }
    let corpus = generate_synthetic(&synth)?;
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(synth.seed ^ 0x5911));
    let n = corpus.len();
    let n_test = ((n as f64) * cfg.data.test_fraction).round() as usize;
    let n_dev = ((n as f64) * cfg.data.dev_fraction).round() as usize;
    if n_test + n_dev >= n {
        bail!("dev and test fractions leave no training data");
    }
    let pick = |r: std::ops::Range<usize>| -> Vec<ExtractionInstance> {
        let mut ids: Vec<usize> = idx[r].to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| corpus[i].clone()).collect()
    };
    let test = pick(0..n_test);
    let dev = pick(n_test..n_test + n_dev);
    let train = pick(n_test + n_dev..n);
    write_corpus(&out.join("corpus.jsonl"), &corpus, None)?;
    write_corpus(&out.join("train.jsonl"), &train, Some("train"))?;
    write_corpus(&out.join("dev.jsonl"), &dev, Some("dev"))?;
    write_corpus(&out.join("test.jsonl"), &test, Some("test"))?;
    let report = serde_json::json!({
        "sentences": n,
        "triplets": corpus.iter().map(|i| i.triplets.len()).sum::<usize>(),
        "split": { "train": train.len(), "dev": dev.len(), "test": test.len() },
        "category_triplets": category_counts(&corpus),
        "seed": synth.seed,
    });
    write_json(&out.join("gen_report.json"), &report)?;
    log::info!("generated {n} sentences: {} train, {} dev, {} test", train.len(), dev.len(), test.len());
    Ok(())
}

fn all_pairs(corpus: &[ExtractionInstance], element: PromptElement) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for inst in corpus {
        pairs.extend(make_training_pairs_with(inst, element).with_context(|| format!("instance {}", inst.id()))?);
    }
    Ok(pairs)
}

fn prep(cfg: &RunConfig, input: &Path, format: dualoie_core::dataset::CorpusFormat, out: &Path) -> Result<()> {
    let (corpus, report) =
        load_corpus_with_report(input, format).with_context(|| format!("loading {}", input.display()))?;
    let pairs = all_pairs(&corpus, cfg.train.prompt_element)?;
    write_corpus(&out.join("corpus.jsonl"), &corpus, None)?;
    let mut text = String::new();
    for p in &pairs {
        let line = serde_json::json!({
            "objective": p.objective.to_string(),
            "source": p.source.text(),
            "target": p.target.text(),
        });
        writeln!(text, "{line}")?;
    }
    std::fs::write(out.join("pairs.jsonl"), text)?;
    write_json(
        &out.join("prep_report.json"),
        &serde_json::json!({ "load": report, "pairs": pairs.len(), "category_triplets": category_counts(&corpus) }),
    )?;
    Ok(())
}

fn mode_for(element: PromptElement) -> PromptMode {
    match element {
        PromptElement::Predicate => PromptMode::Predicate,
        PromptElement::Subject => PromptMode::Subject,
        PromptElement::Object => PromptMode::Object,
        PromptElement::None => PromptMode::None,
    }
}

/// Scores a dev subset during training.
struct DevEvaluator<'a> {
    dev: &'a [ExtractionInstance],
    inference: InferenceConfig,
    cfg: &'a RunConfig,
}

impl Callbacks for DevEvaluator<'_> {
    fn on_step(&mut self, step: u64, loss: &LossBreakdown) {
        if step.is_multiple_of(50) {
            log::info!("step {step}: L {:.4} (P {:.4}, T {:.4}, S {:.4})", loss.total, loss.l_p, loss.l_t, loss.l_s);
        }
    }

    fn evaluate(&mut self, model: &DualModel) -> Option<f64> {
        if self.dev.is_empty() {
            return None;
        }
        let records = extract_corpus(model, self.dev, &self.inference);
        Some(score_corpus(self.dev, &prediction_map(&records), self.cfg.metrics.slotting).f1.f1)
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    steps: u64,
    stop: dualoie_model::StopReason,
    best_step: u64,
    best_dev: Option<f64>,
    evals: &'a [(u64, f64)],
    final_loss: Option<&'a dualoie_model::LogEntry>,
    elapsed_secs: f64,
    coefficients: [f32; 3],
    prompt_element: PromptElement,
    train_instances: usize,
    vocab: usize,
}

/// Builds and trains a model; `checkpoint` receives the weights and logs.
fn fit(
    cfg: &RunConfig,
    train_set: &[ExtractionInstance],
    dev: &[ExtractionInstance],
    tcfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(DualModel, TrainReport)> {
    let pairs = all_pairs(train_set, tcfg.prompt_element)?;
    let mut model = DualModel::for_pairs(cfg.model.clone(), &pairs)?;
    let dev_limit = if cfg.eval.dev_limit == 0 { dev.len() } else { cfg.eval.dev_limit.min(dev.len()) };
    let inference = InferenceConfig {
        decoding: cfg.eval.decoding,
        prompt_mode: mode_for(tcfg.prompt_element),
        ..cfg.inference.clone()
    };
    let mut evaluator = DevEvaluator { dev: &dev[..dev_limit], inference, cfg };
    let report = train(&mut model, train_set, tcfg, &mut evaluator, checkpoint)?;
    Ok((model, report))
}

/// The configured prompt mode, adjusted to the element the model was
/// trained with.
fn prompt_mode_for_model(requested: PromptMode, model_dir: &Path) -> PromptMode {
    let trained = std::fs::read_to_string(model_dir.join("train_config.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<TrainConfig>(&t).ok())
        .map(|t| t.prompt_element);
    match trained {
        Some(el) if el != requested.element() => {
            let mode = mode_for(el);
            log::warn!("model was trained with {el:?} prompts; extracting with prompt mode {mode:?}");
            mode
        }
        _ => requested,
    }
}

fn scored(
    cfg: &RunConfig,
    gold: &[ExtractionInstance],
    preds: &BTreeMap<String, SentencePrediction>,
) -> serde_json::Value {
    let groups: BTreeMap<&str, BTreeMap<String, CorpusScores>> =
        [("m", GroupBy::M), ("category", GroupBy::Category), ("implicit", GroupBy::Implicit)]
            .into_iter()
            .map(|(name, by)| (name, grouped_report(gold, preds, by, cfg.metrics.slotting)))
            .collect();
    serde_json::json!({
        "slotting": cfg.metrics.slotting,
        "overall": score_corpus(gold, preds, cfg.metrics.slotting),
        "groups": groups,
    })
}

fn train_cmd(cfg: &RunConfig, train_path: &Path, dev: Option<&Path>, test: Option<&Path>, out: &Path) -> Result<()> {
    let train_set = load(cfg, train_path)?;
    let dev_set = match dev {
        Some(p) => load(cfg, p)?,
        None => Vec::new(),
    };
    let model_dir = out.join("model");
    let (model, report) = fit(cfg, &train_set, &dev_set, &cfg.train, Some(&model_dir))?;
    let summary = TrainSummary {
        steps: report.steps,
        stop: report.stop,
        best_step: report.best_step,
        best_dev: report.best_dev,
        evals: &report.evals,
        final_loss: report.log.last(),
        elapsed_secs: report.elapsed_secs,
        coefficients: model.cfg.coefficients(),
        prompt_element: cfg.train.prompt_element,
        train_instances: train_set.len(),
        vocab: model.vocab.len(),
    };
    write_json(&out.join("train_report.json"), &summary)?;
    log::info!("trained {} steps ({:?}) in {:.1}s", report.steps, report.stop, report.elapsed_secs);
    if let Some(t) = test {
        let test_set = load(cfg, t)?;
        let inference = InferenceConfig {
            prompt_mode: prompt_mode_for_model(cfg.inference.prompt_mode, &model_dir),
            ..cfg.inference.clone()
        };
        let records = extract_corpus(&model, &test_set, &inference);
        write_predictions(&out.join("predictions.jsonl"), &records)?;
        write_json(&out.join("score.json"), &scored(cfg, &test_set, &prediction_map(&records)))?;
    }
    Ok(())
}

fn extract_cmd(cfg: &RunConfig, model_dir: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_dir)?;
    let corpus = load(cfg, input)?;
    let inference = InferenceConfig {
        prompt_mode: prompt_mode_for_model(cfg.inference.prompt_mode, model_dir),
        ..cfg.inference.clone()
    };
    let records = extract_corpus(&model, &corpus, &inference);
    write_predictions(&out.join("predictions.jsonl"), &records)?;
    log::info!("extracted {} sentences", records.len());
    Ok(())
}

fn load_predictions(path: &Path) -> Result<BTreeMap<String, SentencePrediction>> {
    let records = read_predictions(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(prediction_map(&records))
}

const CSV_HEADER: &str = "grouping,group,sentences,gold_triplets,predicted_triplets,precision,recall,f1,precision_1to1,recall_1to1,f1_1to1,strict_f1,pred_f1";

fn csv_row(grouping: &str, group: &str, s: &CorpusScores) -> String {
    format!(
        "{grouping},{group},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        s.sentences,
        s.gold_triplets,
        s.predicted_triplets,
        s.f1.precision,
        s.f1.recall,
        s.f1.f1,
        s.f1_one_to_one.precision,
        s.f1_one_to_one.recall,
        s.f1_one_to_one.f1,
        s.strict.f1,
        s.pred_f1.f1
    )
}

fn grouping_name(by: GroupBy) -> &'static str {
    match by {
        GroupBy::M => "m",
        GroupBy::Category => "category",
        GroupBy::Implicit => "implicit",
    }
}

fn grouped_outputs(
    cfg: &RunConfig,
    gold: &[ExtractionInstance],
    preds: &BTreeMap<String, SentencePrediction>,
    by: &[GroupBy],
) -> (BTreeMap<&'static str, BTreeMap<String, CorpusScores>>, String) {
    let mut json = BTreeMap::new();
    let mut csv = format!("{CSV_HEADER}\n");
    for &b in by {
        let groups = grouped_report(gold, preds, b, cfg.metrics.slotting);
        for (g, s) in &groups {
            csv.push_str(&csv_row(grouping_name(b), g, s));
        }
        json.insert(grouping_name(b), groups);
    }
    (json, csv)
}

fn score_cmd(cfg: &RunConfig, gold: &Path, pred: &Path, out: &Path) -> Result<()> {
    let gold = load(cfg, gold)?;
    let preds = load_predictions(pred)?;
    let overall = score_corpus(&gold, &preds, cfg.metrics.slotting);
    let (groups, mut csv) = grouped_outputs(cfg, &gold, &preds, &[GroupBy::M, GroupBy::Category, GroupBy::Implicit]);
    csv.push_str(&csv_row("all", "all", &overall));
    write_json(
        &out.join("score.json"),
        &serde_json::json!({ "slotting": cfg.metrics.slotting, "overall": overall, "groups": groups }),
    )?;
    std::fs::write(out.join("groups.csv"), csv)?;
    log::info!(
        "F1 {:.4} (one-to-one {:.4}) over {} sentences",
        overall.f1.f1,
        overall.f1_one_to_one.f1,
        overall.sentences
    );
    Ok(())
}

fn group_report_cmd(cfg: &RunConfig, gold: &Path, pred: &Path, out: &Path, by: &[GroupBy]) -> Result<()> {
    let gold = load(cfg, gold)?;
    let preds = load_predictions(pred)?;
    let by: Vec<GroupBy> =
        if by.is_empty() { vec![GroupBy::M, GroupBy::Category, GroupBy::Implicit] } else { by.to_vec() };
    let (json, csv) = grouped_outputs(cfg, &gold, &preds, &by);
    write_json(&out.join("group_report.json"), &json)?;
    std::fs::write(out.join("group_report.csv"), csv)?;
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, train_path: &Path, eval_path: &Path, out: &Path) -> Result<()> {
    let train_set = load(cfg, train_path)?;
    let eval_set = load(cfg, eval_path)?;
    let mut csv = String::from("row,alpha,beta,gamma,relation,steps,final_loss,precision,recall,f1,f1_1to1\n");
    for (i, row) in loss_grid().iter().enumerate() {
        let mut run_cfg = cfg.clone();
        run_cfg.model.alpha = row.alpha as f32;
        run_cfg.model.beta = row.beta as f32;
        run_cfg.model.gamma = row.gamma as f32;
        let (model, report) = fit(&run_cfg, &train_set, &[], &cfg.train, None)?;
        let inference = InferenceConfig { prompt_mode: mode_for(cfg.train.prompt_element), ..cfg.inference.clone() };
        let scores = score_corpus(
            &eval_set,
            &prediction_map(&extract_corpus(&model, &eval_set, &inference)),
            cfg.metrics.slotting,
        );
        let final_loss = report.log.last().map_or(f64::NAN, |e| e.l);
        writeln!(
            csv,
            "{},{:.1},{:.1},{:.1},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            i + 1,
            row.alpha,
            row.beta,
            row.gamma,
            row.relation.symbol(),
            report.steps,
            final_loss,
            scores.f1.precision,
            scores.f1.recall,
            scores.f1.f1,
            scores.f1_one_to_one.f1
        )?;
        log::info!("row {}/27 ({:.1}, {:.1}, {:.1}): F1 {:.4}", i + 1, row.alpha, row.beta, row.gamma, scores.f1.f1);
        std::fs::write(out.join("sweep.csv"), &csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DualCorrRow {
    id: String,
    bleu: f64,
    f1: f64,
    restored: String,
}

fn dual_corr_cmd(cfg: &RunConfig, model_dir: &Path, gold: &Path, pred: Option<&Path>, out: &Path) -> Result<()> {
    let model = load_model(model_dir)?;
    let gold = load(cfg, gold)?;
    let preds = match pred {
        Some(p) => load_predictions(p)?,
        None => {
            let inference = InferenceConfig {
                prompt_mode: prompt_mode_for_model(cfg.inference.prompt_mode, model_dir),
                ..cfg.inference.clone()
            };
            prediction_map(&extract_corpus(&model, &gold, &inference))
        }
    };
    let mut rows = Vec::new();
    for inst in gold.iter().filter(|i| !i.triplets.is_empty()) {
        let source = serialize_triplets(&inst.triplets)?;
        let max_len = inst.sentence.len() * 2 + 16;
        let generated = model.generate(Objective::S, &source, cfg.inference.decoding, max_len);
        let (words, _) = parse_sentence(&generated.tokens, ParseMode::Lenient)?;
        let b = bleu(&words, &[inst.sentence.tokens.as_slice()]);
        let predicted: &[Triplet] = preds.get(inst.id()).map_or(&[], |p| &p.triplets);
        let f1 = f1_multi_to_one(&inst.triplets, predicted).f1;
        rows.push(DualCorrRow { id: inst.id().to_string(), bleu: b, f1, restored: words.join(" ") });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.bleu).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.f1).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mut csv = String::from("id,bleu,f1\n");
    for r in &rows {
        writeln!(csv, "{},{:.6},{:.6}", r.id, r.bleu, r.f1)?;
    }
    std::fs::write(out.join("dual_corr.csv"), csv)?;
    let mut jsonl = String::new();
    for r in &rows {
        writeln!(jsonl, "{}", serde_json::to_string(r)?)?;
    }
    std::fs::write(out.join("restored.jsonl"), jsonl)?;
    write_json(
        &out.join("dual_corr.json"),
        &serde_json::json!({
            "sentences": rows.len(),
            "pearson": pearson(&xs, &ys),
            "mean_bleu": mean(&xs),
            "mean_f1": mean(&ys),
            "bleu_variant": BLEU_VARIANT,
            "decoding": cfg.inference.decoding,
        }),
    )?;
    Ok(())
}

fn gold_prompt_cmd(cfg: &RunConfig, model_dir: &Path, gold: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_dir)?;
    let gold = load(cfg, gold)?;
    let run = |mode: PromptMode| {
        let inference = InferenceConfig { prompt_mode: mode, ..cfg.inference.clone() };
        let records = extract_corpus(&model, &gold, &inference);
        let scores = score_corpus(&gold, &prediction_map(&records), cfg.metrics.slotting);
        (records, scores)
    };
    let (pred_records, predicted) = run(PromptMode::Predicate);
    let (gold_records, with_gold) = run(PromptMode::Gold);
    write_predictions(&out.join("predictions_predicted_prompt.jsonl"), &pred_records)?;
    write_predictions(&out.join("predictions_gold_prompt.jsonl"), &gold_records)?;
    let delta = with_gold.f1.f1 - predicted.f1.f1;
    write_json(
        &out.join("gold_prompt.json"),
        &serde_json::json!({ "predicted_prompt": predicted, "gold_prompt": with_gold, "f1_delta": delta }),
    )?;
    log::info!("F1 predicted prompt {:.4}, gold prompt {:.4}", predicted.f1.f1, with_gold.f1.f1);
    Ok(())
}

fn llm_cmd(
    cfg: &RunConfig,
    input: &Path,
    pool: Option<&Path>,
    mode: Option<dualoie_llm::LlmMode>,
    out: &Path,
) -> Result<()> {
    let corpus = load(cfg, input)?;
    let pool = match pool {
        Some(p) => load(cfg, p)?,
        None => Vec::new(),
    };
    let mut template: PromptTemplate = cfg.llm.template.clone();
    if let Some(m) = mode {
        template.mode = m;
    }
    let client = HttpChatClient::new(cfg.llm.client.clone())?;
    let cache = match &cfg.llm.cache_dir {
        Some(d) => Some(ResponseCache::open(d).with_context(|| format!("opening cache {}", d.display()))?),
        None => None,
    };
    let sentences: Vec<Sentence> = corpus.iter().map(|i| i.sentence.clone()).collect();
    let output = run_baseline(&sentences, &pool, &client, &template, cfg.seed(), cache.as_ref())?;
    write_predictions(&out.join("predictions.jsonl"), &output.records)?;
    write_json(&out.join("llm_stats.json"), &output.stats)?;
    write_json(&out.join("score.json"), &scored(cfg, &corpus, &prediction_map(&output.records)))?;
    log::info!(
        "{} sentences: {} requests, {} cache hits, {} failures",
        output.stats.sentences,
        output.stats.requests,
        output.stats.cache_hits,
        output.stats.failures
    );
    Ok(())
}

fn annotate_cmd(cfg: &RunConfig, input: Option<&Path>, out: &Path) -> Result<()> {
    let corpus = match input {
        Some(p) => load(cfg, p)?,
        None => generate_synthetic(&cfg.synth)?,
    };
    let a = &cfg.annotate;
    let (d_ex, un_gold) = annotation_pools(&corpus, a.explicit_pool, a.unlabeled_pool)?;
    let d_un: Vec<Sentence> = un_gold.iter().map(|i| i.sentence.clone()).collect();
    let pools = AnnotationPools::new(d_ex, d_un.clone(), a.rounds, cfg.seed())?;
    let mut oracle = SimulatedOracle::new(&un_gold, a.noise_rate, cfg.seed());
    oracle.corrections = a.corrections;
    let mut trainer =
        ModelAnnotationTrainer::new(cfg.model.clone(), cfg.train.clone(), cfg.inference.clone()).with_vocabulary(&d_un);
    let outcome = iterative_annotation(pools, &mut trainer, &mut oracle)?;
    outcome.pools.write(&out.join("pools"))?;
    let mut text = String::new();
    for p in &outcome.proposals {
        writeln!(text, "{}", serde_json::to_string(p)?)?;
    }
    std::fs::write(out.join("proposals.jsonl"), text)?;
    write_json(&out.join("annotate_report.json"), &serde_json::json!({ "rounds": outcome.stats }))?;
    for s in &outcome.stats {
        log::info!(
            "round {}: {} proposals, {} accepted, d_im {}, d_un {}",
            s.round,
            s.proposals,
            s.accepted,
            s.d_im,
            s.d_un
        );
    }
    Ok(())
}
