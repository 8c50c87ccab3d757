//! Iterative annotation as a simulation, annotator agreement, and POI
//! triplet normalization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{classify_triplet_categories, mask_attributes, maskable_indices, write_corpus, DatasetError};
use crate::metrics::{cohens_kappa, token_dice};
use crate::tokenize::{display, tokenize};
use crate::types::{ExtractionInstance, Sentence, Triplet};

/// The annotation pools. `d_un` holds bare sentences; their gold stays with
/// the oracle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationPools {
    pub d_ex: Vec<ExtractionInstance>,
    pub d_un: Vec<Sentence>,
    pub d_ps: Vec<ExtractionInstance>,
    pub d_im: Vec<ExtractionInstance>,
    pub rounds: usize,
}

impl AnnotationPools {
    /// Builds `d_ps` by masking one contiguous predicate (seeded choice) in
    /// every explicit instance that has one.
    pub fn new(
        d_ex: Vec<ExtractionInstance>,
        d_un: Vec<Sentence>,
        rounds: usize,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d_ps = Vec::new();
        for inst in &d_ex {
            let idx = maskable_indices(inst);
            if idx.is_empty() {
                continue;
            }
            let pick = idx[rng.random_range(0..idx.len())];
            d_ps.push(mask_attributes(inst, &[pick])?);
        }
        Ok(AnnotationPools { d_ex, d_un, d_ps, d_im: Vec::new(), rounds })
    }

    /// `d_ps` as trained on: the pseudo-implicit seed plus everything
    /// accepted so far.
    pub fn training_set(&self) -> Vec<ExtractionInstance> {
        self.d_ps.iter().chain(&self.d_im).cloned().collect()
    }

    /// `d_un`, `d_ps` and `d_im` never share a sentence id.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.d_un
            .iter()
            .map(|s| s.id.as_str())
            .chain(self.d_ps.iter().chain(&self.d_im).map(|i| i.id()))
            .all(|id| seen.insert(id))
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_corpus(&dir.join("d_ex.jsonl"), &self.d_ex, Some("d_ex"))?;
        let un: Vec<ExtractionInstance> =
            self.d_un.iter().map(|s| ExtractionInstance::new(s.clone(), vec![])).collect();
        write_corpus(&dir.join("d_un.jsonl"), &un, Some("d_un"))?;
        write_corpus(&dir.join("d_ps.jsonl"), &self.d_ps, Some("d_ps"))?;
        write_corpus(&dir.join("d_im.jsonl"), &self.d_im, Some("d_im"))
    }
}

/// Anything that can be retrained and then queried.
pub trait AnnotationTrainer {
    type Error: std::fmt::Display;

    fn train(&mut self, data: &[ExtractionInstance]) -> Result<(), Self::Error>;
    fn extract(&self, s: &Sentence) -> Vec<Triplet>;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Correct(Triplet),
}

impl Decision {
    pub fn accepted(&self) -> bool {
        !matches!(self, Decision::Reject)
    }
}

pub trait AnnotatorOracle {
    fn judge(&mut self, s: &Sentence, proposal: &Triplet) -> Decision;
}

/// Judges proposals against known gold. With probability `noise_rate` the
/// verdict flips. With `corrections`, a wrong proposal whose subject and
/// object match a gold triplet is corrected to it instead of rejected.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    gold: HashMap<String, Vec<Triplet>>,
    pub noise_rate: f64,
    pub corrections: bool,
    rng: ChaCha8Rng,
}

impl SimulatedOracle {
    pub fn new(gold: &[ExtractionInstance], noise_rate: f64, seed: u64) -> Self {
        SimulatedOracle {
            gold: gold.iter().map(|i| (i.id().to_string(), i.triplets.clone())).collect(),
            noise_rate,
            corrections: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn perfect(gold: &[ExtractionInstance]) -> Self {
        Self::new(gold, 0.0, 0)
    }
}

impl AnnotatorOracle for SimulatedOracle {
    fn judge(&mut self, s: &Sentence, proposal: &Triplet) -> Decision {
        let gold = self.gold.get(&s.id).map(Vec::as_slice).unwrap_or(&[]);
        let right = gold.contains(proposal);
        let flip = self.noise_rate > 0.0 && self.rng.random_bool(self.noise_rate.min(1.0));
        if right != flip {
            return Decision::Accept;
        }
        if self.corrections && !right {
            if let Some(g) = gold.iter().find(|g| g.subject == proposal.subject && g.object == proposal.object) {
                return Decision::Correct(g.clone());
            }
        }
        Decision::Reject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub round: usize,
    pub sentence_id: String,
    pub triplet: Triplet,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub train_size: usize,
    pub proposals: usize,
    pub accepted: usize,
    pub corrected: usize,
    pub rejected: usize,
    pub sentences_moved: usize,
    pub d_un: usize,
    pub d_im: usize,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationOutcome {
    pub pools: AnnotationPools,
    pub stats: Vec<RoundStats>,
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, thiserror::Error)]
#[error("round {round}: training failed: {message}")]
pub struct TrainingFailed {
    pub round: usize,
    pub message: String,
}

/// Runs `pools.rounds` rounds: train on `d_ps` plus `d_im`, predict on
/// `d_un`, send implicit predictions to the oracle, and move sentences with
/// at least one accepted triplet into `d_im`. Rejected sentences stay in
/// `d_un` and can be proposed again later.
pub fn iterative_annotation<T: AnnotationTrainer, O: AnnotatorOracle>(
    mut pools: AnnotationPools,
    trainer: &mut T,
    oracle: &mut O,
) -> Result<AnnotationOutcome, TrainingFailed> {
    let mut stats = Vec::new();
    let mut proposals = Vec::new();
    for round in 1..=pools.rounds {
        let train = pools.training_set();
        trainer.train(&train).map_err(|e| TrainingFailed { round, message: e.to_string() })?;
        let mut st = RoundStats {
            round,
            train_size: train.len(),
            proposals: 0,
            accepted: 0,
            corrected: 0,
            rejected: 0,
            sentences_moved: 0,
            d_un: 0,
            d_im: 0,
            disjoint: true,
        };
        let mut remaining = Vec::new();
        for s in std::mem::take(&mut pools.d_un) {
            let predicted = ExtractionInstance::new(s.clone(), trainer.extract(&s));
            let flags = classify_triplet_categories(&predicted);
            let mut kept: Vec<Triplet> = Vec::new();
            let mut seen = HashSet::new();
            for (t, f) in predicted.triplets.iter().zip(flags) {
                if !f.implicit || !seen.insert(t.clone()) {
                    continue;
                }
                st.proposals += 1;
                let decision = oracle.judge(&s, t);
                match &decision {
                    Decision::Accept => {
                        st.accepted += 1;
                        kept.push(t.clone());
                    }
                    Decision::Correct(fixed) => {
                        st.corrected += 1;
                        kept.push(fixed.clone());
                    }
                    Decision::Reject => st.rejected += 1,
                }
                proposals.push(Proposal { round, sentence_id: s.id.clone(), triplet: t.clone(), decision });
            }
            if kept.is_empty() {
                remaining.push(s);
            } else {
                st.sentences_moved += 1;
                kept.dedup();
                pools.d_im.push(ExtractionInstance::new(s, kept));
            }
        }
        pools.d_un = remaining;
        st.d_un = pools.d_un.len();
        st.d_im = pools.d_im.len();
        st.disjoint = pools.is_disjoint();
        stats.push(st);
    }
    Ok(AnnotationOutcome { pools, stats, proposals })
}

/// Kappa between two annotators' accept/reject verdicts on the same items.
pub fn agreement(a: &[Decision], b: &[Decision]) -> Result<f64, crate::metrics::MetricsError> {
    let la: Vec<bool> = a.iter().map(Decision::accepted).collect();
    let lb: Vec<bool> = b.iter().map(Decision::accepted).collect();
    cohens_kappa(&la, &lb)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMode {
    #[default]
    SingleLink,
    StarAroundMostFrequent,
}

pub const POI_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiLabel {
    pub label: String,
    pub representative: Triplet,
    pub count: usize,
    pub members: Vec<Triplet>,
}

/// Per-element similarity used by default: token Dice on each slot.
pub fn element_dice(a: &Triplet, b: &Triplet) -> [f64; 3] {
    [token_dice(&a.subject, &b.subject), token_dice(&a.predicate, &b.predicate), token_dice(&a.object, &b.object)]
}

fn concat_label(attribute: &str, object: &str) -> String {
    display(&[tokenize(attribute), tokenize(object)].concat())
}

fn similar(sim3: &dyn Fn(&Triplet, &Triplet) -> [f64; 3], a: &Triplet, b: &Triplet) -> bool {
    a == b || sim3(a, b).iter().all(|&s| s > POI_THRESHOLD)
}

/// Clusters near-duplicate triplets (all three element similarities above
/// 0.7), replaces each cluster by its most frequent member and ranks
/// clusters by size. The label joins the attribute (predicate) and object.
pub fn normalize_poi_triplets(
    collection: &[Triplet],
    sim3: &dyn Fn(&Triplet, &Triplet) -> [f64; 3],
    mode: ClusterMode,
) -> Vec<PoiLabel> {
    // Distinct triplets in first-occurrence order, with counts.
    let mut distinct: Vec<(Triplet, usize)> = Vec::new();
    let mut index: HashMap<&Triplet, usize> = HashMap::new();
    for t in collection {
        match index.get(t) {
            Some(&i) => distinct[i].1 += 1,
            None => {
                index.insert(t, distinct.len());
                distinct.push((t.clone(), 1));
            }
        }
    }
    let n = distinct.len();
    let mut cluster_of: Vec<usize> = (0..n).collect();
    match mode {
        ClusterMode::SingleLink => {
            fn root(parent: &mut [usize], mut x: usize) -> usize {
                while parent[x] != x {
                    parent[x] = parent[parent[x]];
                    x = parent[x];
                }
                x
            }
            for i in 0..n {
                for j in i + 1..n {
                    if similar(sim3, &distinct[i].0, &distinct[j].0) {
                        let (a, b) = (root(&mut cluster_of, i), root(&mut cluster_of, j));
                        cluster_of[a.max(b)] = a.min(b);
                    }
                }
            }
            cluster_of = (0..n).map(|i| root(&mut cluster_of, i)).collect();
        }
        ClusterMode::StarAroundMostFrequent => {
            let mut by_freq: Vec<usize> = (0..n).collect();
            by_freq.sort_by_key(|&i| (std::cmp::Reverse(distinct[i].1), i));
            let mut assigned = vec![false; n];
            for &c in &by_freq {
                if assigned[c] {
                    continue;
                }
                for &j in &by_freq {
                    if !assigned[j] && (j == c || similar(sim3, &distinct[c].0, &distinct[j].0)) {
                        assigned[j] = true;
                        cluster_of[j] = c;
                    }
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cluster_of.iter().enumerate() {
        clusters.entry(c).or_default().push(i);
    }
    let mut labels: Vec<(usize, PoiLabel)> = clusters
        .into_values()
        .map(|members| {
            let first = *members.iter().min().expect("non-empty cluster");
            let rep = *members.iter().max_by_key(|&&i| (distinct[i].1, std::cmp::Reverse(i))).expect("non-empty");
            let representative = distinct[rep].0.clone();
            let count = members.iter().map(|&i| distinct[i].1).sum();
            let label = concat_label(&representative.predicate, &representative.object);
            let members =
                members.iter().flat_map(|&i| std::iter::repeat_n(distinct[i].0.clone(), distinct[i].1)).collect();
            (first, PoiLabel { label, representative, count, members })
        })
        .collect();
    labels.sort_by_key(|(first, l)| (std::cmp::Reverse(l.count), *first));
    labels.into_iter().map(|(_, l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};

    fn t(s: &str, p: &str, o: &str) -> Triplet {
        Triplet::new(s, p, o).unwrap()
    }

    #[test]
    fn pool_seed_is_masked() {
        let s = Sentence::new("p1", "The swimming pool is 2 meters deep").unwrap();
        let ex = ExtractionInstance::new(s, vec![t("swimming pool", "deep", "2 meters")]);
        let pools = AnnotationPools::new(vec![ex], vec![], 0, 1).unwrap();
        assert_eq!(pools.d_ps.len(), 1);
        assert_eq!(pools.d_ps[0].sentence.text, "The swimming pool is 2 meters");
        assert!(classify_triplet_categories(&pools.d_ps[0])[0].implicit);
    }

    /// Remembers its training data and answers with the gold of any
    /// sentence it has seen plus a fixed lookup for unseen ones.
    struct Lookup {
        answers: HashMap<String, Vec<Triplet>>,
        trained: usize,
    }

    impl AnnotationTrainer for Lookup {
        type Error = String;

        fn train(&mut self, data: &[ExtractionInstance]) -> Result<(), String> {
            self.trained += 1;
            for d in data {
                self.answers.insert(d.id().to_string(), d.triplets.clone());
            }
            Ok(())
        }

        fn extract(&self, s: &Sentence) -> Vec<Triplet> {
            self.answers.get(&s.id).cloned().unwrap_or_default()
        }
    }

    #[test]
    fn zero_rounds_do_nothing() {
        let corpus = generate_synthetic(&SynthConfig { size: 10, ..Default::default() }).unwrap();
        let un: Vec<Sentence> = corpus.iter().map(|i| i.sentence.clone()).collect();
        let pools = AnnotationPools::new(vec![], un, 0, 0).unwrap();
        let mut trainer = Lookup { answers: HashMap::new(), trained: 0 };
        let out = iterative_annotation(pools, &mut trainer, &mut SimulatedOracle::perfect(&corpus)).unwrap();
        assert!(out.pools.d_im.is_empty());
        assert_eq!(trainer.trained, 0);
    }

    #[test]
    fn perfect_oracle_accepts_exactly_the_right_proposals() {
        let corpus = generate_synthetic(&SynthConfig { size: 40, ..Default::default() }).unwrap();
        let (ex, un) = corpus.split_at(10);
        // The stub gets half of the unlabeled sentences right and garbles
        // the implicit triplets of the rest.
        let mut answers = HashMap::new();
        for (i, inst) in un.iter().enumerate() {
            let ts = if i % 2 == 0 {
                inst.triplets.clone()
            } else {
                inst.triplets.iter().map(|t| Triplet::new(&t.subject, "is near", &t.object).unwrap()).collect()
            };
            answers.insert(inst.id().to_string(), ts);
        }
        let pools = AnnotationPools::new(ex.to_vec(), un.iter().map(|i| i.sentence.clone()).collect(), 2, 3).unwrap();
        let mut trainer = Lookup { answers, trained: 0 };
        let out = iterative_annotation(pools, &mut trainer, &mut SimulatedOracle::perfect(&corpus)).unwrap();
        let gold: HashMap<&str, &Vec<Triplet>> = corpus.iter().map(|i| (i.id(), &i.triplets)).collect();
        let mut want: Vec<(String, Triplet)> = Vec::new();
        for inst in un.iter().step_by(2) {
            let flags = classify_triplet_categories(inst);
            for (t, f) in inst.triplets.iter().zip(flags) {
                if f.implicit {
                    want.push((inst.id().to_string(), t.clone()));
                }
            }
        }
        let mut got: Vec<(String, Triplet)> =
            out.pools.d_im.iter().flat_map(|i| i.triplets.iter().map(|t| (i.id().to_string(), t.clone()))).collect();
        want.sort();
        got.sort();
        assert_eq!(got, want);
        for p in &out.proposals {
            assert_eq!(p.decision.accepted(), gold[p.sentence_id.as_str()].contains(&p.triplet));
        }
        assert!(out.stats.iter().all(|s| s.disjoint));
        assert_eq!(out.stats.len(), 2);
        assert!(out.stats[1].train_size >= out.stats[0].train_size);
        assert_eq!(out.stats[1].accepted, 0);
    }

    #[test]
    fn noisy_oracles_disagree_sometimes() {
        let corpus = generate_synthetic(&SynthConfig { size: 50, ..Default::default() }).unwrap();
        let mut a = SimulatedOracle::new(&corpus, 0.1, 1);
        let mut b = SimulatedOracle::new(&corpus, 0.1, 2);
        let mut da = Vec::new();
        let mut db = Vec::new();
        for inst in &corpus {
            for t in &inst.triplets {
                da.push(a.judge(&inst.sentence, t));
                db.push(b.judge(&inst.sentence, &Triplet::new(&t.subject, "x", &t.object).unwrap()));
            }
        }
        let k = agreement(&da, &db).unwrap();
        assert!(k < 1.0);
        assert_eq!(agreement(&da, &da).unwrap(), 1.0);
        let again: Vec<Decision> = {
            let mut a2 = SimulatedOracle::new(&corpus, 0.1, 1);
            corpus
                .iter()
                .flat_map(|i| i.triplets.iter().map(|t| a2.judge(&i.sentence, t)).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(again, da);
    }

    #[test]
    fn corrections() {
        let corpus = generate_synthetic(&SynthConfig { size: 5, ..Default::default() }).unwrap();
        let mut o = SimulatedOracle::perfect(&corpus);
        o.corrections = true;
        let g = &corpus[0].triplets[0];
        let wrong = Triplet::new(&g.subject, "zzz", &g.object).unwrap();
        assert_eq!(o.judge(&corpus[0].sentence, &wrong), Decision::Correct(g.clone()));
    }

    #[test]
    fn poi_label_concatenation() {
        let labels = normalize_poi_triplets(&[t("Haidilao", "food", "fresh")], &element_dice, ClusterMode::SingleLink);
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].label, "food fresh");
        let zh = normalize_poi_triplets(&[t("海底捞", "食材", "新鲜")], &element_dice, ClusterMode::SingleLink);
        assert_eq!(zh[0].label, "食材新鲜");
        assert!(normalize_poi_triplets(&[], &element_dice, ClusterMode::SingleLink).is_empty());
    }

    #[test]
    fn poi_clustering_with_stub_similarity() {
        let a = t("Haidilao", "food", "fresh");
        let near = t("Haidilao", "ingredients", "fresh");
        let b = t("Haidilao", "service", "slow");
        let sim = |x: &Triplet, y: &Triplet| {
            let pair = [x.predicate.as_str(), y.predicate.as_str()];
            if pair.contains(&"service") {
                [0.1; 3]
            } else {
                [0.8; 3]
            }
        };
        let input = vec![a.clone(), b.clone(), a.clone(), near.clone(), a.clone()];
        for mode in [ClusterMode::SingleLink, ClusterMode::StarAroundMostFrequent] {
            let labels = normalize_poi_triplets(&input, &sim, mode);
            assert_eq!(labels.len(), 2);
            assert_eq!((labels[0].count, labels[0].representative.clone()), (4, a.clone()));
            assert_eq!((labels[1].count, labels[1].representative.clone()), (1, b.clone()));
        }
        let mut reversed = input.clone();
        reversed.reverse();
        let counts = |l: Vec<PoiLabel>| l.iter().map(|x| (x.count, x.representative.clone())).collect::<Vec<_>>();
        assert_eq!(
            counts(normalize_poi_triplets(&reversed, &sim, ClusterMode::SingleLink)),
            counts(normalize_poi_triplets(&input, &sim, ClusterMode::SingleLink))
        );
    }
}
