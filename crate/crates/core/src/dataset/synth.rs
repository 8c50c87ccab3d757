//! Templated synthetic corpora with controlled complicated-triplet
//! categories.
//!
//! A sentence is one or more clauses joined by `;`. Each sentence is built
//! around one construction that manufactures its category mix:
//!
//! | construction | surface                                     | flags        |
//! |--------------|---------------------------------------------|--------------|
//! | simple       | `S verb O`                                  | none         |
//! | coordinated  | `S v1 O1 and v2 O2`                         | O            |
//! | shared head  | `S1 head p1 O1 while S2 head p2 O2`         | N            |
//! | repeated head| `S head p1 O1 and head p2 O2`               | O+N          |
//! | two-complement| `S verb p1 O1 p2 O2`                       | O+N, O+N+D   |
//!
//! An implicit triplet comes from a locative tail (`Paris , France` yields
//! `(Paris; is in; France)`) or an appositive (`Bruno , a painter` yields
//! `(Bruno; is; a painter)`). Extra simple clauses pad a sentence up to its
//! drawn triplet count. Category proportions are fractions of sentences that
//! contain at least one triplet with the category; counts are assigned
//! exactly, so the realized share is within rounding of the target.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::categories::CategoryFlags;
use super::order::order_triplets;
use super::DatasetError;
use crate::tokenize::tokenize;
use crate::types::{ExtractionInstance, Sentence, Triplet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub size: usize,
    pub overlapping: f64,
    pub nested: f64,
    pub discontinuous: f64,
    pub implicit: f64,
    /// Upper bound on triplets per sentence.
    pub m_max: usize,
    pub persons: Vec<String>,
    pub organizations: Vec<String>,
    /// `City/Region` pairs.
    pub places: Vec<String>,
    pub dates: Vec<String>,
    pub roles: Vec<String>,
    /// `verb:kind` with kind one of person, org, place.
    pub relations: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            size: 1000,
            overlapping: 0.3,
            nested: 0.25,
            discontinuous: 0.1,
            implicit: 0.33,
            m_max: 4,
            persons: strings(&[
                "Alice", "Bruno", "Carla", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kira",
                "Lars", "Mira", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera", "Wade",
                "Xenia", "Yusuf", "Zora", "Anton", "Bianca", "Cyrus", "Dalia",
            ]),
            organizations: strings(&[
                "Acme",
                "Globex",
                "Initech",
                "Umbrella",
                "Hooli",
                "Vandelay",
                "Stark",
                "Wayne",
                "Tyrell",
                "Cyberdyne",
                "Soylent",
                "Wonka",
                "Oscorp",
                "Gringotts",
                "Monarch",
            ]),
            places: strings(&[
                "Paris/France",
                "Lyon/France",
                "Rome/Italy",
                "Milan/Italy",
                "Madrid/Spain",
                "Seville/Spain",
                "Berlin/Germany",
                "Munich/Germany",
                "Lisbon/Portugal",
                "Porto/Portugal",
                "Oslo/Norway",
                "Bergen/Norway",
                "Tokyo/Japan",
                "Osaka/Japan",
                "Kyoto/Japan",
                "Boston/Massachusetts",
                "Denver/Colorado",
                "Austin/Texas",
                "Dallas/Texas",
                "Vienna/Austria",
            ]),
            dates: strings(&[
                "January 1901",
                "March 1912",
                "May 1923",
                "July 1934",
                "September 1945",
                "November 1956",
                "February 1967",
                "April 1978",
                "June 1989",
                "August 1990",
                "October 2001",
                "December 2012",
            ]),
            roles: strings(&["painter", "doctor", "pilot", "chef", "lawyer", "singer", "banker", "poet"]),
            relations: strings(&[
                "founded:org",
                "joined:org",
                "left:org",
                "funded:org",
                "visited:place",
                "toured:place",
                "painted:place",
                "admired:person",
                "married:person",
                "met:person",
                "praised:person",
                "hired:person",
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Person,
    Org,
    Place,
    Date,
}

impl Kind {
    fn parse(s: &str) -> Option<Kind> {
        match s {
            "person" => Some(Kind::Person),
            "org" => Some(Kind::Org),
            "place" => Some(Kind::Place),
            _ => None,
        }
    }

    fn takes_tail(self) -> bool {
        matches!(self, Kind::Person | Kind::Place)
    }
}

/// Head word plus two (preposition, object kind) complements.
type Frame = (&'static str, (&'static str, Kind), (&'static str, Kind));

/// Heads shared by two contiguous predicates (`lives in` / `lives near`).
const SHARED_HEADS: [Frame; 4] = [
    ("lives", ("in", Kind::Place), ("near", Kind::Place)),
    ("works", ("for", Kind::Org), ("with", Kind::Person)),
    ("studied", ("at", Kind::Org), ("under", Kind::Person)),
    ("sailed", ("to", Kind::Place), ("from", Kind::Place)),
];

/// Verbs taking two complements; the second predicate is gapped.
const TWO_COMPLEMENT: [Frame; 4] = [
    ("was born", ("on", Kind::Date), ("in", Kind::Place)),
    ("worked", ("at", Kind::Org), ("in", Kind::Place)),
    ("moved", ("to", Kind::Place), ("in", Kind::Date)),
    ("taught", ("at", Kind::Org), ("with", Kind::Person)),
];

const FRAME_WORDS: [&str; 8] = ["and", "while", "is", "a", ";", ",", ".", "in"];

/// A generated instance with the labels the generator intended.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub instance: ExtractionInstance,
    pub labels: Vec<CategoryFlags>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Plan {
    overlapping: bool,
    nested: bool,
    discontinuous: bool,
    implicit: bool,
}

impl Plan {
    fn base_triplets(&self) -> usize {
        let construction = if self.overlapping || self.nested || self.discontinuous { 2 } else { 1 };
        construction + usize::from(self.implicit)
    }
}

struct Pools {
    persons: Vec<String>,
    orgs: Vec<String>,
    places: Vec<(String, String)>,
    dates: Vec<String>,
    roles: Vec<String>,
    relations: Vec<(String, Kind)>,
}

impl SynthConfig {
    fn pools(&self) -> Result<Pools, DatasetError> {
        let bad = |m: String| DatasetError::InfeasibleConfig(m);
        let mut places = Vec::new();
        for p in &self.places {
            let (c, r) = p.split_once('/').ok_or_else(|| bad(format!("place {p:?} is not City/Region")))?;
            places.push((c.trim().to_string(), r.trim().to_string()));
        }
        let mut relations = Vec::new();
        for r in &self.relations {
            let (v, k) = r.split_once(':').ok_or_else(|| bad(format!("relation {r:?} is not verb:kind")))?;
            let kind = Kind::parse(k.trim()).ok_or_else(|| bad(format!("relation {r:?} has unknown kind")))?;
            relations.push((v.trim().to_string(), kind));
        }
        Ok(Pools {
            persons: self.persons.clone(),
            orgs: self.organizations.clone(),
            places,
            dates: self.dates.clone(),
            roles: self.roles.iter().map(|r| format!("a {r}")).collect(),
            relations,
        })
    }

    fn validate(&self, pools: &Pools) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InfeasibleConfig(m.to_string()));
        let props = [self.overlapping, self.nested, self.discontinuous, self.implicit];
        if props.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("proportions must lie in [0, 1]");
        }
        if props.iter().sum::<f64>() > 1.0 + 1e-9 {
            return bad("proportions must sum to at most 1");
        }
        if self.m_max == 0 {
            return bad("m_max must be at least 1");
        }
        if self.discontinuous > self.overlapping + 1e-12 || self.discontinuous > self.nested + 1e-12 {
            return bad("discontinuous triplets always come with overlapping and nested ones");
        }
        if self.m_max < 2 && props.iter().any(|&p| p > 0.0) {
            return bad("categories need at least two triplets per sentence");
        }
        let m = self.m_max;
        if pools.persons.len() < 2 * m + 2 || pools.orgs.len() < m || pools.places.len() < m + 1 {
            return bad("entity pools too small for m_max");
        }
        if pools.dates.is_empty() || pools.roles.is_empty() {
            return bad("date and role pools must be non-empty");
        }
        for kind in [Kind::Person, Kind::Org, Kind::Place] {
            if !pools.relations.iter().any(|(_, k)| *k == kind) {
                return bad("relations must cover person, org and place objects");
            }
        }
        if pools.relations.len() < m + 2 {
            return bad("too few relations for m_max clauses");
        }
        // Entities must not share words with each other or with frame words,
        // otherwise sentences pick up unintended nesting.
        let mut reserved: HashSet<String> = FRAME_WORDS.iter().map(|w| w.to_string()).collect();
        for (head, (p1, _), (p2, _)) in SHARED_HEADS.iter().chain(TWO_COMPLEMENT.iter()) {
            reserved.extend(tokenize(head));
            reserved.insert(p1.to_string());
            reserved.insert(p2.to_string());
        }
        for (v, _) in &pools.relations {
            reserved.extend(tokenize(v));
        }
        let mut seen: HashSet<String> = HashSet::new();
        let mut regions: HashSet<&str> = HashSet::new();
        let mut entities: Vec<&str> = Vec::new();
        entities.extend(pools.persons.iter().map(String::as_str));
        entities.extend(pools.orgs.iter().map(String::as_str));
        entities.extend(pools.places.iter().map(|(c, _)| c.as_str()));
        for (_, r) in &pools.places {
            if regions.insert(r) {
                entities.push(r);
            }
        }
        for e in entities {
            for t in tokenize(e) {
                let t = t.to_lowercase();
                if reserved.contains(&t) || !seen.insert(t.clone()) {
                    return Err(DatasetError::InfeasibleConfig(format!("entity word {t:?} is reused")));
                }
            }
        }
        for d in pools.dates.iter().chain(pools.roles.iter()) {
            for t in tokenize(d) {
                let t = t.to_lowercase();
                if seen.contains(&t) || (reserved.contains(&t) && t != "a") {
                    return Err(DatasetError::InfeasibleConfig(format!("word {t:?} in dates/roles collides")));
                }
            }
        }
        Ok(())
    }
}

/// One clause under construction: tokens plus the triplets it states.
struct Clause {
    tokens: Vec<String>,
    triplets: Vec<(Triplet, CategoryFlags)>,
    /// Positions in `tokens` right after a person/place object, with the object.
    tail_slots: Vec<(usize, String, Kind)>,
}

struct SentenceBuilder<'a> {
    pools: &'a Pools,
    used_entities: HashSet<String>,
    used_pred_words: HashSet<String>,
}

impl<'a> SentenceBuilder<'a> {
    fn new(pools: &'a Pools) -> Self {
        SentenceBuilder { pools, used_entities: HashSet::new(), used_pred_words: HashSet::new() }
    }

    fn entity(&mut self, kind: Kind, rng: &mut ChaCha8Rng) -> String {
        let pick = |items: Vec<&String>, rng: &mut ChaCha8Rng| -> String {
            (*items.choose(rng).expect("pool validated non-empty")).clone()
        };
        let fresh = |s: &&String| !self.used_entities.contains(*s);
        let e = match kind {
            Kind::Person => pick(self.pools.persons.iter().filter(fresh).collect(), rng),
            Kind::Org => pick(self.pools.orgs.iter().filter(fresh).collect(), rng),
            Kind::Place => pick(self.pools.places.iter().map(|(c, _)| c).filter(fresh).collect(), rng),
            Kind::Date => pick(self.pools.dates.iter().filter(fresh).collect(), rng),
        };
        self.used_entities.insert(e.clone());
        e
    }

    fn words_free(&self, words: &[&str]) -> bool {
        words.iter().all(|w| tokenize(w).iter().all(|t| !self.used_pred_words.contains(&t.to_lowercase())))
    }

    fn claim(&mut self, words: &[&str]) {
        for w in words {
            for t in tokenize(w) {
                self.used_pred_words.insert(t.to_lowercase());
            }
        }
    }

    fn relation(&mut self, want_tail: bool, rng: &mut ChaCha8Rng) -> Option<(String, Kind)> {
        let options: Vec<&(String, Kind)> = self
            .pools
            .relations
            .iter()
            .filter(|(v, k)| self.words_free(&[v]) && (!want_tail || k.takes_tail()))
            .collect();
        let (v, k) = (*options.choose(rng)?).clone();
        self.claim(&[&v]);
        Some((v, k))
    }

    fn push_object(&mut self, clause: &mut Clause, kind: Kind, rng: &mut ChaCha8Rng) -> String {
        let o = self.entity(kind, rng);
        clause.tokens.extend(tokenize(&o));
        if kind.takes_tail() {
            clause.tail_slots.push((clause.tokens.len(), o.clone(), kind));
        }
        o
    }

    fn simple(&mut self, want_tail: bool, rng: &mut ChaCha8Rng) -> Option<Clause> {
        let (verb, kind) = self.relation(want_tail, rng)?;
        let s = self.entity(Kind::Person, rng);
        let mut c = Clause { tokens: tokenize(&s), triplets: vec![], tail_slots: vec![] };
        c.tokens.extend(tokenize(&verb));
        let o = self.push_object(&mut c, kind, rng);
        c.triplets.push((Triplet::new(&s, &verb, &o).unwrap(), CategoryFlags::default()));
        Some(c)
    }

    fn coordinated(&mut self, rng: &mut ChaCha8Rng) -> Option<Clause> {
        let (v1, k1) = self.relation(false, rng)?;
        let (v2, k2) = self.relation(true, rng)?;
        let s = self.entity(Kind::Person, rng);
        let mut c = Clause { tokens: tokenize(&s), triplets: vec![], tail_slots: vec![] };
        c.tokens.extend(tokenize(&v1));
        let o1 = self.push_object(&mut c, k1, rng);
        c.tokens.push("and".into());
        c.tokens.extend(tokenize(&v2));
        let o2 = self.push_object(&mut c, k2, rng);
        let f = CategoryFlags { overlapping: true, ..Default::default() };
        c.triplets.push((Triplet::new(&s, &v1, &o1).unwrap(), f));
        c.triplets.push((Triplet::new(&s, &v2, &o2).unwrap(), f));
        Some(c)
    }

    fn pick_frame(&mut self, frames: &[Frame], rng: &mut ChaCha8Rng) -> Option<Frame> {
        let options: Vec<_> = frames.iter().filter(|(h, (p1, _), (p2, _))| self.words_free(&[h, p1, p2])).collect();
        let frame = **options.choose(rng)?;
        self.claim(&[frame.0, frame.1 .0, frame.2 .0]);
        Some(frame)
    }

    /// Shared head, with one subject (overlapping) or two (nested only).
    fn shared_head(&mut self, same_subject: bool, rng: &mut ChaCha8Rng) -> Option<Clause> {
        let (head, (p1, k1), (p2, k2)) = self.pick_frame(&SHARED_HEADS, rng)?;
        let s1 = self.entity(Kind::Person, rng);
        let mut c = Clause { tokens: tokenize(&s1), triplets: vec![], tail_slots: vec![] };
        c.tokens.extend([head.to_string(), p1.to_string()]);
        let o1 = self.push_object(&mut c, k1, rng);
        let s2 = if same_subject {
            c.tokens.push("and".into());
            s1.clone()
        } else {
            c.tokens.push("while".into());
            let s2 = self.entity(Kind::Person, rng);
            c.tokens.extend(tokenize(&s2));
            s2
        };
        c.tokens.extend([head.to_string(), p2.to_string()]);
        let o2 = self.push_object(&mut c, k2, rng);
        let f = CategoryFlags { overlapping: same_subject, nested: true, ..Default::default() };
        c.triplets.push((Triplet::new(&s1, &format!("{head} {p1}"), &o1).unwrap(), f));
        c.triplets.push((Triplet::new(&s2, &format!("{head} {p2}"), &o2).unwrap(), f));
        Some(c)
    }

    fn two_complement(&mut self, rng: &mut ChaCha8Rng) -> Option<Clause> {
        let (verb, (p1, k1), (p2, k2)) = self.pick_frame(&TWO_COMPLEMENT, rng)?;
        let s = self.entity(Kind::Person, rng);
        let mut c = Clause { tokens: tokenize(&s), triplets: vec![], tail_slots: vec![] };
        c.tokens.extend(tokenize(verb));
        c.tokens.push(p1.to_string());
        let o1 = self.push_object(&mut c, k1, rng);
        c.tokens.push(p2.to_string());
        let o2 = self.push_object(&mut c, k2, rng);
        let first = CategoryFlags { overlapping: true, nested: true, ..Default::default() };
        let second = CategoryFlags { discontinuous: true, ..first };
        c.triplets.push((Triplet::new(&s, &format!("{verb} {p1}"), &o1).unwrap(), first));
        c.triplets.push((Triplet::new(&s, &format!("{verb} {p2}"), &o2).unwrap(), second));
        Some(c)
    }

    /// Inserts `, Region` or `, a role` after a person/place object.
    fn attach_tail(&mut self, clauses: &mut [Clause], rng: &mut ChaCha8Rng) -> Option<()> {
        let slots: Vec<(usize, usize)> =
            clauses.iter().enumerate().flat_map(|(ci, c)| (0..c.tail_slots.len()).map(move |si| (ci, si))).collect();
        let &(ci, si) = slots.choose(rng)?;
        let (pos, object, kind) = clauses[ci].tail_slots[si].clone();
        let (pred, value) = match kind {
            Kind::Place => {
                let region = self.pools.places.iter().find(|(c, _)| *c == object).map(|(_, r)| r.clone())?;
                ("is in", region)
            }
            _ => ("is", self.pools.roles.choose(rng)?.clone()),
        };
        let mut insert = vec![",".to_string()];
        insert.extend(tokenize(&value));
        let clause = &mut clauses[ci];
        clause.tokens.splice(pos..pos, insert);
        clause.triplets.push((
            Triplet::new(&object, pred, &value).unwrap(),
            CategoryFlags { implicit: true, ..Default::default() },
        ));
        Some(())
    }
}

fn build_sentence(
    id: String,
    plan: Plan,
    m: usize,
    pools: &Pools,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledInstance, DatasetError> {
    let infeasible = || DatasetError::InfeasibleConfig("ran out of distinct words while building a sentence".into());
    let mut b = SentenceBuilder::new(pools);
    let mut clauses = Vec::new();
    let main = if plan.discontinuous {
        b.two_complement(rng)
    } else if plan.overlapping && plan.nested {
        b.shared_head(true, rng)
    } else if plan.nested {
        b.shared_head(false, rng)
    } else if plan.overlapping {
        b.coordinated(rng)
    } else {
        b.simple(plan.implicit, rng)
    };
    clauses.push(main.ok_or_else(infeasible)?);
    let mut count = plan.base_triplets();
    while count < m {
        clauses.push(b.simple(false, rng).ok_or_else(infeasible)?);
        count += 1;
    }
    clauses.shuffle(rng);
    if plan.implicit {
        b.attach_tail(&mut clauses, rng).ok_or_else(infeasible)?;
    }

    let mut tokens = Vec::new();
    let mut labeled = Vec::new();
    for (i, c) in clauses.into_iter().enumerate() {
        if i > 0 {
            tokens.push(";".to_string());
        }
        tokens.extend(c.tokens);
        labeled.extend(c.triplets);
    }
    tokens.push(".".to_string());
    let sentence = Sentence::from_tokens(id, &tokens)?;
    let inst = order_triplets(&ExtractionInstance::new(sentence, labeled.iter().map(|(t, _)| t.clone()).collect()));
    let labels = inst
        .triplets
        .iter()
        .map(|t| labeled.iter().find(|(u, _)| u == t).map(|(_, f)| *f).unwrap_or_default())
        .collect();
    Ok(LabeledInstance { instance: inst, labels })
}

fn count(p: f64, n: usize) -> usize {
    (p * n as f64).round() as usize
}

/// Deterministic corpus for `cfg`, with the generator's own category labels.
pub fn generate_synthetic_labeled(cfg: &SynthConfig) -> Result<Vec<LabeledInstance>, DatasetError> {
    let pools = cfg.pools()?;
    cfg.validate(&pools)?;
    let n = cfg.size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_d = count(cfg.discontinuous, n);
    let n_o = count(cfg.overlapping, n).max(n_d);
    let n_n = count(cfg.nested, n).max(n_d);
    let n_i = count(cfg.implicit, n);

    let mut plans = vec![Plan::default(); n];
    for p in plans.iter_mut().take(n_d) {
        *p = Plan { overlapping: true, nested: true, discontinuous: true, implicit: false };
    }
    for p in plans.iter_mut().take(n_o).skip(n_d) {
        p.overlapping = true;
    }
    // Nested-only sentences fill from the back so that they meet the
    // overlapping block only when the counts force it.
    let extra_n = n_n - n_d;
    for p in plans.iter_mut().rev().filter(|p| !p.discontinuous).take(extra_n) {
        p.nested = true;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assigned = 0;
    for &i in &order {
        if assigned == n_i {
            break;
        }
        if plans[i].base_triplets() < cfg.m_max {
            plans[i].implicit = true;
            assigned += 1;
        }
    }
    if assigned < n_i {
        return Err(DatasetError::InfeasibleConfig(format!(
            "only {assigned} sentences can carry an implicit triplet with m_max = {}",
            cfg.m_max
        )));
    }
    plans.shuffle(&mut rng);

    let mut out = Vec::with_capacity(n);
    for (i, plan) in plans.into_iter().enumerate() {
        let m = rng.random_range(plan.base_triplets()..=cfg.m_max.max(plan.base_triplets()));
        out.push(build_sentence(format!("syn-{i}"), plan, m, &pools, &mut rng)?);
    }
    Ok(out)
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<ExtractionInstance>, DatasetError> {
    Ok(generate_synthetic_labeled(cfg)?.into_iter().map(|l| l.instance).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::classify_triplet_categories;

    fn cfg(size: usize) -> SynthConfig {
        SynthConfig { size, ..Default::default() }
    }

    #[test]
    fn implicit_share_matches_target() {
        let corpus = generate_synthetic(&SynthConfig { seed: 7, size: 1000, ..Default::default() }).unwrap();
        let implicit: usize =
            corpus.iter().map(|i| classify_triplet_categories(i).iter().filter(|f| f.implicit).count()).sum();
        assert!((310..=350).contains(&implicit), "implicit triplets = {implicit}");
    }

    #[test]
    fn empty_size() {
        assert!(generate_synthetic(&cfg(0)).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let a = serde_json::to_string(&generate_synthetic(&cfg(200)).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_synthetic(&cfg(200)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_synthetic(&SynthConfig { seed: 8, ..cfg(200) }).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn classifier_agrees_with_generator() {
        let corpus = generate_synthetic_labeled(&cfg(1000)).unwrap();
        let mut total = 0;
        let mut agree = 0;
        for l in &corpus {
            let got = classify_triplet_categories(&l.instance);
            for (g, want) in got.iter().zip(&l.labels) {
                total += 1;
                agree += usize::from(g == want);
            }
        }
        assert_eq!(agree, total, "classifier disagrees on {} of {total}", total - agree);
    }

    #[test]
    fn sentence_proportions_and_m_range() {
        let c = SynthConfig { size: 500, ..Default::default() };
        let corpus = generate_synthetic(&c).unwrap();
        let share = |name: &str| {
            corpus.iter().filter(|i| classify_triplet_categories(i).iter().any(|f| f.get(name).unwrap())).count() as f64
                / corpus.len() as f64
        };
        assert!((share("overlapping") - c.overlapping).abs() <= 0.02);
        assert!((share("nested") - c.nested).abs() <= 0.02);
        assert!((share("discontinuous") - c.discontinuous).abs() <= 0.02);
        assert!((share("implicit") - c.implicit).abs() <= 0.02);
        let ms: HashSet<usize> = corpus.iter().map(|i| i.triplets.len()).collect();
        assert_eq!(ms, (1..=c.m_max).collect());
    }

    #[test]
    fn infeasible_configs() {
        let too_much = SynthConfig { overlapping: 0.6, nested: 0.6, ..cfg(10) };
        assert!(matches!(generate_synthetic(&too_much), Err(DatasetError::InfeasibleConfig(_))));
        let disc = SynthConfig { discontinuous: 0.3, overlapping: 0.1, ..cfg(10) };
        assert!(generate_synthetic(&disc).is_err());
        let tiny = SynthConfig { m_max: 1, ..cfg(10) };
        assert!(generate_synthetic(&tiny).is_err());
        let clash = SynthConfig { persons: vec!["Acme".into(); 12], ..cfg(10) };
        assert!(generate_synthetic(&clash).is_err());
    }

    #[test]
    fn gold_is_ordered_and_unique() {
        for inst in generate_synthetic(&cfg(300)).unwrap() {
            assert_eq!(order_triplets(&inst), inst);
            let set: HashSet<_> = inst.triplets.iter().collect();
            assert_eq!(set.len(), inst.triplets.len());
        }
    }
}
