//! Greedy and beam search over any incremental scorer.

/// An autoregressive scorer: feeding a token advances the state and yields
/// log-probabilities for the next token.
pub trait StepScorer {
    type State: Clone;

    fn start(&self) -> Self::State;
    fn step(&self, state: &mut Self::State, token: u32) -> Vec<f32>;
    fn bos(&self) -> u32;
    fn eos(&self) -> u32;
}

/// Decoded ids (end token excluded) and whether `max_len` cut decoding short.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub ids: Vec<u32>,
    pub score: f64,
    pub truncated: bool,
}

/// Highest entry, lowest index on ties.
fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn greedy<S: StepScorer>(scorer: &S, max_len: usize) -> Hypothesis {
    let mut state = scorer.start();
    let mut tok = scorer.bos();
    let mut ids = Vec::new();
    let mut score = 0.0;
    for _ in 0..max_len {
        let lp = scorer.step(&mut state, tok);
        let next = argmax(&lp);
        score += f64::from(lp[next]);
        if next as u32 == scorer.eos() {
            return Hypothesis { ids, score, truncated: false };
        }
        ids.push(next as u32);
        tok = next as u32;
    }
    Hypothesis { ids, score, truncated: true }
}

/// Beam search with summed log-probabilities. Candidates tie-break on beam
/// rank, then token id, so width 1 reproduces [`greedy`].
pub fn beam_search<S: StepScorer>(scorer: &S, width: usize, max_len: usize) -> Hypothesis {
    let width = width.max(1);
    struct Beam<T> {
        ids: Vec<u32>,
        score: f64,
        state: T,
        last: u32,
    }
    let mut alive = vec![Beam { ids: Vec::new(), score: 0.0, state: scorer.start(), last: scorer.bos() }];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut advanced = Vec::with_capacity(alive.len());
        let mut cands: Vec<(f64, usize, u32)> = Vec::new();
        for (b, beam) in alive.iter().enumerate() {
            let mut st = beam.state.clone();
            let lp = scorer.step(&mut st, beam.last);
            advanced.push(st);
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&x, &y| lp[y].total_cmp(&lp[x]).then(x.cmp(&y)));
            cands.extend(order.iter().take(width).map(|&v| (beam.score + f64::from(lp[v]), b, v as u32)));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(width);
        let mut next = Vec::new();
        for (score, b, v) in cands {
            let mut ids = alive[b].ids.clone();
            if v == scorer.eos() {
                finished.push((ids, score));
            } else {
                ids.push(v);
                next.push(Beam { ids, score, state: advanced[b].clone(), last: v });
            }
        }
        alive = next;
        let best_finished = finished.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
        let best_alive = alive.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || best_finished >= best_alive {
            break;
        }
    }
    let best_finished = finished.into_iter().reduce(|a, b| if b.1 > a.1 { b } else { a });
    match best_finished {
        Some((ids, score)) => Hypothesis { ids, score, truncated: false },
        None => {
            let best = alive.into_iter().reduce(|a, b| if b.score > a.score { b } else { a });
            best.map_or(Hypothesis { ids: Vec::new(), score: 0.0, truncated: true }, |b| Hypothesis {
                ids: b.ids,
                score: b.score,
                truncated: true,
            })
        }
    }
}
