//! The network: a shared transformer encoder and three decoders (prompt,
//! triplets, sentence reconstruction), with packed teacher-forced losses and
//! a cached incremental decoder for generation.

use std::path::Path;
use std::sync::Arc;

use dualoie_core::dataset::{Objective, TrainingPair};
use dualoie_core::grammar::SerializedSeq;
use dualoie_core::inference::{Decoding, Generation, Seq2Seq};
use serde::{Deserialize, Serialize};

use crate::decode::{beam_search, greedy, StepScorer};
use crate::params::{mean_row, seed_rng, Grads, Group, ParamStore};
use crate::tape::{Reduction, Tape, Var};
use crate::tensor::{attention, layer_norm, linear, log_softmax, Segment, Tensor};
use crate::vocab::{Vocab, BOS_ID, EOS_ID};
use crate::ModelError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    #[default]
    ScratchSmall,
    PretrainedAdapter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    /// Mean negative log-likelihood per target token, per objective.
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Filled in from the corpus vocabulary when the model is built.
    pub vocab_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub backbone: Backbone,
    pub loss_reduction: LossReduction,
    /// Decoders read the encoder's token embedding table.
    pub tie_embeddings: bool,
    pub init_std: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            encoder_layers: 2,
            decoder_layers: 2,
            width: 128,
            heads: 4,
            ffn_width: 256,
            max_source_len: 256,
            max_target_len: 256,
            alpha: 0.4,
            beta: 0.2,
            gamma: 0.6,
            lr: 2e-5,
            batch_size: 32,
            seed: 42,
            backbone: Backbone::ScratchSmall,
            loss_reduction: LossReduction::Mean,
            tie_embeddings: true,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn coefficients(&self) -> [f32; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        let dims = [
            self.vocab_size,
            self.encoder_layers,
            self.decoder_layers,
            self.width,
            self.heads,
            self.ffn_width,
            self.max_source_len,
            self.max_target_len,
            self.batch_size,
        ];
        if dims.contains(&0) {
            return bad("all dimensions, lengths and the batch size must be positive");
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad("width must be divisible by heads");
        }
        let c = self.coefficients();
        if c.iter().any(|x| !x.is_finite() || *x < 0.0) || c.iter().sum::<f32>() <= 0.0 {
            return bad("loss coefficients must be >= 0 with a positive sum");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad("lr and init_std must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_p: f64,
    pub l_t: f64,
    pub l_s: f64,
    /// alpha * L_P + beta * L_T
    pub l_s_to_t: f64,
    /// gamma * L_S
    pub l_t_to_s: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn term(&self, o: Objective) -> f64 {
        [self.l_p, self.l_t, self.l_s][o.index()]
    }
}

/// Hidden states of one source sequence (length x width).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    pub hidden: Tensor,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.hidden.rows
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows == 0
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct AttnIds {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct Ffn {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone)]
struct EncBlock {
    ln1: Norm,
    attn: AttnIds,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct DecBlock {
    ln1: Norm,
    self_attn: AttnIds,
    ln2: Norm,
    cross: AttnIds,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct EncoderIds {
    embed: usize,
    pos: usize,
    blocks: Vec<EncBlock>,
    ln_f: Norm,
}

#[derive(Debug, Clone)]
struct DecoderIds {
    embed: usize,
    pos: usize,
    blocks: Vec<DecBlock>,
    ln_f: Norm,
    out: Linear,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: rand_chacha::ChaCha8Rng,
    std: f32,
}

impl Builder<'_> {
    fn matrix(&mut self, name: &str, group: Group, rows: usize, cols: usize) -> usize {
        self.store.normal(name, group, rows, cols, self.std, &mut self.rng)
    }

    fn linear(&mut self, name: &str, group: Group, n_in: usize, n_out: usize) -> Linear {
        Linear {
            w: self.matrix(&format!("{name}.w"), group, n_in, n_out),
            b: self.store.filled(format!("{name}.b"), group, 1, n_out, 0.0),
        }
    }

    fn norm(&mut self, name: &str, group: Group, width: usize) -> Norm {
        Norm {
            g: self.store.filled(format!("{name}.g"), group, 1, width, 1.0),
            b: self.store.filled(format!("{name}.b"), group, 1, width, 0.0),
        }
    }

    fn attn(&mut self, name: &str, group: Group, d: usize) -> AttnIds {
        AttnIds {
            q: self.linear(&format!("{name}.q"), group, d, d),
            k: self.linear(&format!("{name}.k"), group, d, d),
            v: self.linear(&format!("{name}.v"), group, d, d),
            o: self.linear(&format!("{name}.o"), group, d, d),
        }
    }

    fn ffn(&mut self, name: &str, group: Group, d: usize, f: usize) -> Ffn {
        Ffn {
            up: self.linear(&format!("{name}.up"), group, d, f),
            down: self.linear(&format!("{name}.down"), group, f, d),
        }
    }
}

fn decoder_group(o: Objective) -> Group {
    match o {
        Objective::P => Group::DecoderP,
        Objective::T => Group::DecoderT,
        Objective::S => Group::DecoderS,
    }
}

/// Teacher-forced pairs packed without padding: every source goes through
/// one encoder pass (grouped by objective), every target through its
/// objective's decoder.
#[derive(Debug, Clone)]
pub struct PackedBatch {
    src_ids: Vec<u32>,
    src_pos: Vec<u32>,
    src_segs: Arc<Vec<Segment>>,
    parts: [Option<Part>; 3],
}

#[derive(Debug, Clone)]
struct Part {
    enc_start: usize,
    enc_len: usize,
    dec_in: Vec<u32>,
    dec_pos: Vec<u32>,
    targets: Vec<u32>,
    self_segs: Arc<Vec<Segment>>,
    cross_segs: Arc<Vec<Segment>>,
}

impl PackedBatch {
    pub fn new(model: &DualModel, pairs: &[&TrainingPair]) -> Result<Self, ModelError> {
        let cfg = &model.cfg;
        let mut src_ids = Vec::new();
        let mut src_pos = Vec::new();
        let mut src_segs = Vec::new();
        let mut parts: [Option<Part>; 3] = [None, None, None];
        for o in Objective::ALL {
            let enc_start = src_ids.len();
            let mut part = Part {
                enc_start,
                enc_len: 0,
                dec_in: Vec::new(),
                dec_pos: Vec::new(),
                targets: Vec::new(),
                self_segs: Arc::default(),
                cross_segs: Arc::default(),
            };
            let mut self_segs = Vec::new();
            let mut cross_segs = Vec::new();
            for p in pairs.iter().filter(|p| p.objective == o) {
                for (seq, expected) in [(&p.source, o.source_kind()), (&p.target, o.target_kind())] {
                    if seq.kind != expected {
                        return Err(ModelError::KindMismatch { objective: o, expected, found: seq.kind });
                    }
                }
                let (n, m) = (p.source.len(), p.target.len());
                if n == 0 || n > cfg.max_source_len {
                    return Err(ModelError::SourceTooLong { len: n, max: cfg.max_source_len });
                }
                if m > cfg.max_target_len {
                    return Err(ModelError::TargetTooLong { len: m, max: cfg.max_target_len });
                }
                let k_start = src_ids.len() - enc_start;
                src_segs.push(Segment { q_start: src_ids.len(), q_len: n, k_start: src_ids.len(), k_len: n });
                src_ids.extend(model.vocab.encode(&p.source.tokens));
                src_pos.extend(0..n as u32);
                let q_start = part.dec_in.len();
                let tgt = model.vocab.encode(&p.target.tokens);
                part.dec_in.push(BOS_ID);
                part.dec_in.extend(&tgt);
                part.targets.extend(&tgt);
                part.targets.push(EOS_ID);
                part.dec_pos.extend(0..=m as u32);
                self_segs.push(Segment { q_start, q_len: m + 1, k_start: q_start, k_len: m + 1 });
                cross_segs.push(Segment { q_start, q_len: m + 1, k_start, k_len: n });
            }
            part.enc_len = src_ids.len() - enc_start;
            if part.enc_len > 0 {
                part.self_segs = Arc::new(self_segs);
                part.cross_segs = Arc::new(cross_segs);
                parts[o.index()] = Some(part);
            }
        }
        Ok(PackedBatch { src_ids, src_pos, src_segs: Arc::new(src_segs), parts })
    }

    pub fn has(&self, o: Objective) -> bool {
        self.parts[o.index()].is_some()
    }

    pub fn target_tokens(&self, o: Objective) -> usize {
        self.parts[o.index()].as_ref().map_or(0, |p| p.targets.len())
    }
}

#[derive(Debug, Clone)]
pub struct DualModel {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    enc: EncoderIds,
    decs: Vec<DecoderIds>,
}

impl DualModel {
    /// Fresh model for `vocab`; `cfg.vocab_size` is set from it.
    pub fn new(mut cfg: ModelConfig, vocab: Vocab) -> Result<Self, ModelError> {
        cfg.vocab_size = vocab.len();
        cfg.validate()?;
        if cfg.backbone == Backbone::PretrainedAdapter {
            return Err(ModelError::PretrainedUnavailable);
        }
        Ok(Self::build(cfg, vocab))
    }

    /// Vocabulary and length limits taken from the corpus pairs.
    pub fn for_pairs(mut cfg: ModelConfig, pairs: &[TrainingPair]) -> Result<Self, ModelError> {
        let longest = |f: fn(&TrainingPair) -> usize| pairs.iter().map(f).max().unwrap_or(0);
        cfg.max_source_len = cfg.max_source_len.max(longest(|p| p.source.len()));
        cfg.max_target_len = cfg.max_target_len.max(longest(|p| p.target.len()));
        DualModel::new(cfg, Vocab::from_pairs(pairs))
    }

    fn build(cfg: ModelConfig, vocab: Vocab) -> Self {
        let (d, f, v) = (cfg.width, cfg.ffn_width, cfg.vocab_size);
        let mut store = ParamStore::default();
        let mut b = Builder { store: &mut store, rng: seed_rng(cfg.seed), std: cfg.init_std };
        let g = Group::Encoder;
        let embed = b.matrix("embed", g, v, d);
        let enc = EncoderIds {
            embed,
            pos: b.matrix("encoder.pos", g, cfg.max_source_len, d),
            blocks: (0..cfg.encoder_layers)
                .map(|l| {
                    let n = format!("encoder.{l}");
                    EncBlock {
                        ln1: b.norm(&format!("{n}.ln1"), g, d),
                        attn: b.attn(&format!("{n}.attn"), g, d),
                        ln2: b.norm(&format!("{n}.ln2"), g, d),
                        ffn: b.ffn(&format!("{n}.ffn"), g, d, f),
                    }
                })
                .collect(),
            ln_f: b.norm("encoder.ln_f", g, d),
        };
        let decs = Objective::ALL
            .iter()
            .map(|&o| {
                let g = decoder_group(o);
                let name = g.name();
                DecoderIds {
                    embed: if cfg.tie_embeddings { embed } else { b.matrix(&format!("{name}.embed"), g, v, d) },
                    pos: b.matrix(&format!("{name}.pos"), g, cfg.max_target_len + 1, d),
                    blocks: (0..cfg.decoder_layers)
                        .map(|l| {
                            let n = format!("{name}.{l}");
                            DecBlock {
                                ln1: b.norm(&format!("{n}.ln1"), g, d),
                                self_attn: b.attn(&format!("{n}.self"), g, d),
                                ln2: b.norm(&format!("{n}.ln2"), g, d),
                                cross: b.attn(&format!("{n}.cross"), g, d),
                                ln3: b.norm(&format!("{n}.ln3"), g, d),
                                ffn: b.ffn(&format!("{n}.ffn"), g, d, f),
                            }
                        })
                        .collect(),
                    ln_f: b.norm(&format!("{name}.ln_f"), g, d),
                    out: b.linear(&format!("{name}.out"), g, d, v),
                }
            })
            .collect();
        DualModel { cfg, vocab, store, enc, decs }
    }

    /// Ids of parameters feeding the output projection of each decoder.
    pub fn output_params(&self, o: Objective) -> (usize, usize) {
        let out = &self.decs[o.index()].out;
        (out.w, out.b)
    }

    pub fn embedding_param(&self) -> usize {
        self.enc.embed
    }

    /// Appends tokens to the vocabulary. New embedding rows start at the
    /// mean of the existing rows; new output columns at the mean column.
    pub fn append_tokens(&mut self, tokens: &[String]) {
        let fresh: Vec<String> = tokens.iter().filter(|t| self.vocab.get(t).is_none()).cloned().collect();
        if fresh.is_empty() {
            return;
        }
        let old = self.vocab.len();
        for t in &fresh {
            self.vocab.push(t.clone());
        }
        let new = self.vocab.len();
        let mut tables = vec![self.enc.embed];
        tables.extend(self.decs.iter().map(|d| d.embed).filter(|&e| e != self.enc.embed));
        for id in tables {
            let t = &mut self.store.params[id].value;
            let mean = mean_row(t, 0..old);
            for _ in old..new {
                t.data.extend_from_slice(&mean);
            }
            t.rows = new;
        }
        for d in &self.decs {
            for id in [d.out.w, d.out.b] {
                let t = &mut self.store.params[id].value;
                let mut grown = Tensor::zeros(t.rows, new);
                for r in 0..t.rows {
                    let row = t.row(r);
                    let mean = row.iter().sum::<f32>() / old as f32;
                    grown.row_mut(r)[..old].copy_from_slice(row);
                    grown.row_mut(r)[old..].iter_mut().for_each(|x| *x = mean);
                }
                *t = grown;
            }
        }
        self.cfg.vocab_size = new;
    }

    fn p(&self, tape: &mut Tape, id: usize) -> Var {
        tape.param(id, self.store.value(id))
    }

    fn lin(&self, tape: &mut Tape, x: Var, l: &Linear) -> Var {
        let (w, b) = (self.p(tape, l.w), self.p(tape, l.b));
        tape.linear(x, w, b)
    }

    fn norm(&self, tape: &mut Tape, x: Var, n: &Norm) -> Var {
        let (g, b) = (self.p(tape, n.g), self.p(tape, n.b));
        tape.layer_norm(x, g, b)
    }

    fn attn(&self, tape: &mut Tape, x: Var, kv: Var, a: &AttnIds, segs: &Arc<Vec<Segment>>, causal: bool) -> Var {
        let q = self.lin(tape, x, &a.q);
        let k = self.lin(tape, kv, &a.k);
        let v = self.lin(tape, kv, &a.v);
        let h = tape.attention(q, k, v, self.cfg.heads, segs.clone(), causal);
        self.lin(tape, h, &a.o)
    }

    fn ffn(&self, tape: &mut Tape, x: Var, f: &Ffn) -> Var {
        let h = self.lin(tape, x, &f.up);
        let h = tape.relu(h);
        self.lin(tape, h, &f.down)
    }

    fn embed(&self, tape: &mut Tape, table: usize, pos: usize, ids: &[u32], positions: &[u32]) -> Var {
        let (t, p) = (self.p(tape, table), self.p(tape, pos));
        let e = tape.gather(t, ids);
        let q = tape.gather(p, positions);
        tape.add(e, q)
    }

    fn encoder_forward(&self, tape: &mut Tape, ids: &[u32], pos: &[u32], segs: &Arc<Vec<Segment>>) -> Var {
        let mut x = self.embed(tape, self.enc.embed, self.enc.pos, ids, pos);
        for blk in &self.enc.blocks {
            let h = self.norm(tape, x, &blk.ln1);
            let a = self.attn(tape, h, h, &blk.attn, segs, false);
            x = tape.add(x, a);
            let h = self.norm(tape, x, &blk.ln2);
            let f = self.ffn(tape, h, &blk.ffn);
            x = tape.add(x, f);
        }
        self.norm(tape, x, &self.enc.ln_f)
    }

    fn decoder_forward(&self, tape: &mut Tape, o: Objective, part: &Part, enc: Var) -> Var {
        let dec = &self.decs[o.index()];
        let mut x = self.embed(tape, dec.embed, dec.pos, &part.dec_in, &part.dec_pos);
        for blk in &dec.blocks {
            let h = self.norm(tape, x, &blk.ln1);
            let a = self.attn(tape, h, h, &blk.self_attn, &part.self_segs, true);
            x = tape.add(x, a);
            let h = self.norm(tape, x, &blk.ln2);
            let a = self.attn(tape, h, enc, &blk.cross, &part.cross_segs, false);
            x = tape.add(x, a);
            let h = self.norm(tape, x, &blk.ln3);
            let f = self.ffn(tape, h, &blk.ffn);
            x = tape.add(x, f);
        }
        let x = self.norm(tape, x, &dec.ln_f);
        self.lin(tape, x, &dec.out)
    }

    /// Records the three losses and their weighted total. Terms with a zero
    /// coefficient are computed but left out of the total, so they send no
    /// gradient.
    fn forward(&self, tape: &mut Tape, batch: &PackedBatch) -> (Var, [Option<Var>; 3]) {
        let enc = self.encoder_forward(tape, &batch.src_ids, &batch.src_pos, &batch.src_segs);
        let reduction = match self.cfg.loss_reduction {
            LossReduction::Mean => Reduction::Mean,
            LossReduction::Sum => Reduction::Sum,
        };
        let mut terms = [None; 3];
        let mut weighted = Vec::new();
        for o in Objective::ALL {
            let Some(part) = &batch.parts[o.index()] else { continue };
            let enc_o = tape.rows(enc, part.enc_start, part.enc_len);
            let logits = self.decoder_forward(tape, o, part, enc_o);
            let l = tape.cross_entropy(logits, &part.targets, reduction);
            terms[o.index()] = Some(l);
            let c = self.cfg.coefficients()[o.index()];
            if c != 0.0 {
                weighted.push((l, c));
            }
        }
        (tape.weighted_sum(&weighted), terms)
    }

    fn breakdown(&self, tape: &Tape, total: Var, terms: &[Option<Var>; 3]) -> LossBreakdown {
        let t = |o: Objective| terms[o.index()].map_or(0.0, |v| f64::from(tape.scalar(v)));
        let [a, b, c] = self.cfg.coefficients().map(f64::from);
        let (l_p, l_t, l_s) = (t(Objective::P), t(Objective::T), t(Objective::S));
        LossBreakdown {
            l_p,
            l_t,
            l_s,
            l_s_to_t: a * l_p + b * l_t,
            l_t_to_s: c * l_s,
            total: f64::from(tape.scalar(total)),
        }
    }

    pub fn compute_losses(&self, batch: &PackedBatch) -> LossBreakdown {
        let mut tape = Tape::no_grad();
        let (total, terms) = self.forward(&mut tape, batch);
        self.breakdown(&tape, total, &terms)
    }

    /// Losses plus gradients of the combined loss for every parameter.
    pub fn loss_and_grads(&self, batch: &PackedBatch) -> (LossBreakdown, Grads) {
        let mut tape = Tape::new();
        let (total, terms) = self.forward(&mut tape, batch);
        let mut grads = Grads::new(self.store.len());
        for (id, g) in tape.backward(total) {
            grads.accumulate(id, g);
        }
        (self.breakdown(&tape, total, &terms), grads)
    }

    /// Teacher-forced logits of one objective's decoder for a single pair.
    pub fn teacher_forced_logits(&self, pair: &TrainingPair) -> Result<Tensor, ModelError> {
        let batch = PackedBatch::new(self, &[pair])?;
        let mut tape = Tape::no_grad();
        let enc = self.encoder_forward(&mut tape, &batch.src_ids, &batch.src_pos, &batch.src_segs);
        let part = batch.parts[pair.objective.index()].as_ref().expect("packed pair");
        let logits = self.decoder_forward(&mut tape, pair.objective, part, enc);
        Ok(tape.value(logits).clone())
    }

    pub fn encode(&self, src: &SerializedSeq) -> Result<EncoderStates, ModelError> {
        self.encode_ids(&self.vocab.encode(&src.tokens))
    }

    fn encode_ids(&self, ids: &[u32]) -> Result<EncoderStates, ModelError> {
        let n = ids.len();
        if n > self.cfg.max_source_len {
            return Err(ModelError::SourceTooLong { len: n, max: self.cfg.max_source_len });
        }
        let mut tape = Tape::no_grad();
        let segs = Arc::new(vec![Segment { q_start: 0, q_len: n, k_start: 0, k_len: n }]);
        let pos: Vec<u32> = (0..n as u32).collect();
        let h = self.encoder_forward(&mut tape, ids, &pos, &segs);
        Ok(EncoderStates { hidden: tape.value(h).clone() })
    }

    /// Incremental scorer for decoder `o` over fixed encoder states.
    pub fn step_scorer<'a>(&'a self, o: Objective, enc: &EncoderStates) -> DecoderStep<'a> {
        let dec = &self.decs[o.index()];
        let cross = dec
            .blocks
            .iter()
            .map(|b| {
                let v = |l: &Linear| linear(&enc.hidden, self.store.value(l.w), self.store.value(l.b));
                (v(&b.cross.k), v(&b.cross.v))
            })
            .collect();
        DecoderStep { model: self, dec, cross, src_len: enc.len() }
    }

    pub fn decode_sequence(&self, o: Objective, enc: &EncoderStates, decoding: Decoding, max_len: usize) -> Generation {
        let max_len = max_len.min(self.cfg.max_target_len);
        let scorer = self.step_scorer(o, enc);
        let hyp = match decoding {
            Decoding::Greedy => greedy(&scorer, max_len),
            Decoding::Beam(k) => beam_search(&scorer, k, max_len),
        };
        Generation { tokens: self.vocab.decode(&hyp.ids), truncated: hyp.truncated }
    }

    pub fn param_group_norms(&self, grads: &Grads) -> [(Group, f64); 4] {
        Group::ALL.map(|g| (g, grads.group_norm(&self.store, g)))
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(&self.cfg).map_err(std::io::Error::from)?,
        )?;
        self.store.save(&dir.join("params.bin"))?;
        self.vocab.save(&dir.join("vocab.json"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(dir.join("config.json"))
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", dir.display())))?;
        let cfg: ModelConfig = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let vocab = Vocab::load(&dir.join("vocab.json"))?;
        if vocab.len() != cfg.vocab_size {
            return Err(ModelError::Checkpoint("vocabulary size does not match config".into()));
        }
        cfg.validate()?;
        let mut model = Self::build(cfg, vocab);
        model.store.load_into(&dir.join("params.bin"))?;
        Ok(model)
    }
}

impl Seq2Seq for DualModel {
    fn generate(&self, objective: Objective, source: &SerializedSeq, decoding: Decoding, max_len: usize) -> Generation {
        let mut ids = self.vocab.encode(&source.tokens);
        if ids.len() > self.cfg.max_source_len {
            log::warn!("source of {} tokens cut to {}", ids.len(), self.cfg.max_source_len);
            ids.truncate(self.cfg.max_source_len);
        }
        if ids.is_empty() {
            return Generation::default();
        }
        let enc = self.encode_ids(&ids).expect("length checked");
        self.decode_sequence(objective, &enc, decoding, max_len)
    }
}

/// One decoder run over fixed encoder states, fed a token at a time.
pub struct DecoderStep<'a> {
    model: &'a DualModel,
    dec: &'a DecoderIds,
    cross: Vec<(Tensor, Tensor)>,
    src_len: usize,
}

/// Self-attention keys and values of the tokens fed so far.
#[derive(Debug, Clone, Default)]
pub struct StepCache {
    pos: usize,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

impl DecoderStep<'_> {
    fn v(&self, id: usize) -> &Tensor {
        self.model.store.value(id)
    }

    fn lin(&self, x: &Tensor, l: &Linear) -> Tensor {
        linear(x, self.v(l.w), self.v(l.b))
    }

    fn norm(&self, x: &Tensor, n: &Norm) -> Tensor {
        layer_norm(x, &self.v(n.g).data, &self.v(n.b).data).0
    }

    fn attend(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Tensor {
        let seg = Segment { q_start: 0, q_len: 1, k_start: 0, k_len: k.rows };
        attention(q, k, v, self.model.cfg.heads, &[seg], false).0
    }

    /// Logits for the next token after feeding `token`.
    pub fn logits(&self, cache: &mut StepCache, token: u32) -> Tensor {
        let d = self.model.cfg.width;
        if cache.keys.is_empty() {
            cache.keys = vec![Vec::new(); self.dec.blocks.len()];
            cache.values = vec![Vec::new(); self.dec.blocks.len()];
        }
        let pos = cache.pos.min(self.model.cfg.max_target_len);
        let mut x = Tensor::from_vec(1, d, self.v(self.dec.embed).row(token as usize).to_vec());
        for (a, p) in x.data.iter_mut().zip(self.v(self.dec.pos).row(pos)) {
            *a += p;
        }
        for (l, blk) in self.dec.blocks.iter().enumerate() {
            let h = self.norm(&x, &blk.ln1);
            let q = self.lin(&h, &blk.self_attn.q);
            cache.keys[l].extend(self.lin(&h, &blk.self_attn.k).data);
            cache.values[l].extend(self.lin(&h, &blk.self_attn.v).data);
            let n = cache.pos + 1;
            let k = Tensor::from_vec(n, d, cache.keys[l].clone());
            let v = Tensor::from_vec(n, d, cache.values[l].clone());
            x.add_assign(&self.lin(&self.attend(&q, &k, &v), &blk.self_attn.o));
            let h = self.norm(&x, &blk.ln2);
            let q = self.lin(&h, &blk.cross.q);
            let (ck, cv) = &self.cross[l];
            x.add_assign(&self.lin(&self.attend(&q, ck, cv), &blk.cross.o));
            let h = self.norm(&x, &blk.ln3);
            let mut up = self.lin(&h, &blk.ffn.up);
            up.data.iter_mut().for_each(|v| *v = v.max(0.0));
            x.add_assign(&self.lin(&up, &blk.ffn.down));
        }
        cache.pos += 1;
        let x = self.norm(&x, &self.dec.ln_f);
        self.lin(&x, &self.dec.out)
    }

    pub fn source_len(&self) -> usize {
        self.src_len
    }
}

impl StepScorer for DecoderStep<'_> {
    type State = StepCache;

    fn start(&self) -> StepCache {
        StepCache::default()
    }

    fn step(&self, state: &mut StepCache, token: u32) -> Vec<f32> {
        log_softmax(&self.logits(state, token).data)
    }

    fn bos(&self) -> u32 {
        BOS_ID
    }

    fn eos(&self) -> u32 {
        EOS_ID
    }
}
