//! Reverse-mode autodiff over [`Tensor`]s, recorded on a tape.

use std::collections::HashMap;
use std::sync::Arc;

use crate::tensor::{attention, gemm, layer_norm, log_softmax, Segment, Tensor, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

enum Op {
    Leaf,
    Param(usize),
    Gather { table: Var, ids: Vec<u32> },
    Rows { x: Var, start: usize },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    LayerNorm { x: Var, gamma: Var, xhat: Vec<f32>, rstd: Vec<f32>, beta: Var },
    Attention { q: Var, k: Var, v: Var, heads: usize, segs: Arc<Vec<Segment>>, probs: Vec<f32> },
    CrossEntropy { logits: Var, targets: Vec<u32>, probs: Vec<f32>, scale: f32 },
    WeightedSum(Vec<(Var, f32)>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations; gradients flow back from a scalar with
/// [`Tape::backward`]. With `grad` off, caches needed only for the backward
/// pass are not kept.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    grad: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new(), grad: true }
    }

    pub fn no_grad() -> Self {
        Tape { grad: false, ..Tape::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value.data[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, id: usize, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id as usize));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let out = Tensor::from_vec(len, t.cols, t.data[start * t.cols..(start + len) * t.cols].to_vec());
        self.push(out, Op::Rows { x, start })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = crate::tensor::matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let mut out = self.value(x).clone();
        crate::tensor::add_row_bias(&mut out, &self.value(b).data);
        self.push(out, Op::AddBias(x, b))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_bias(h, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (out, xhat, rstd) = layer_norm(self.value(x), &self.value(gamma).data, &self.value(beta).data);
        let (xhat, rstd) = if self.grad { (xhat, rstd) } else { (vec![], vec![]) };
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segs: Arc<Vec<Segment>>, causal: bool) -> Var {
        let (out, probs) = attention(self.value(q), self.value(k), self.value(v), heads, &segs, causal);
        let probs = if self.grad { probs } else { vec![] };
        self.push(out, Op::Attention { q, k, v, heads, segs, probs })
    }

    /// Softmax cross-entropy of each logits row against its target id.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], reduction: Reduction) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len());
        let mut total = 0.0f64;
        let mut probs = Vec::with_capacity(if self.grad { l.data.len() } else { 0 });
        for (r, &t) in targets.iter().enumerate() {
            let lp = log_softmax(l.row(r));
            total -= f64::from(lp[t as usize]);
            if self.grad {
                probs.extend(lp.iter().map(|x| x.exp()));
            }
        }
        let scale = match reduction {
            Reduction::Mean if !targets.is_empty() => 1.0 / targets.len() as f32,
            _ => 1.0,
        };
        let value = Tensor::scalar((total * f64::from(scale)) as f32);
        self.push(value, Op::CrossEntropy { logits, targets: targets.to_vec(), probs, scale })
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f32)]) -> Var {
        let total: f64 = terms.iter().map(|&(v, w)| f64::from(w) * f64::from(self.scalar(v))).sum();
        self.push(Tensor::scalar(total as f32), Op::WeightedSum(terms.to_vec()))
    }

    /// Backpropagates from scalar `root`; returns gradients of every
    /// parameter reached, keyed by parameter id.
    pub fn backward(&self, root: Var) -> Vec<(usize, Tensor)> {
        assert!(self.grad, "backward on a no-grad tape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        let mut out = Vec::new();
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.push((*id, g)),
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut dt = Tensor::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, s) in dt.row_mut(id as usize).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    acc(*table, dt);
                }
                Op::Rows { x, start } => {
                    let t = self.value(*x);
                    let mut dx = Tensor::zeros(t.rows, t.cols);
                    dx.data[start * t.cols..start * t.cols + g.data.len()].copy_from_slice(&g.data);
                    acc(*x, dx);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Tensor::zeros(av.rows, av.cols);
                    gemm(1.0, View::of(&g), View::of(bv).t(), 0.0, &mut da.data, 0, av.cols);
                    let mut db = Tensor::zeros(bv.rows, bv.cols);
                    gemm(1.0, View::of(av).t(), View::of(&g), 0.0, &mut db.data, 0, bv.cols);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::AddBias(x, b) => {
                    let mut db = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, s) in db.data.iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    acc(*b, db);
                    acc(*x, g);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    for (d, y) in dx.data.iter_mut().zip(&node.value.data) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    acc(*x, dx);
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let gm = &self.value(*gamma).data;
                    let (n, d) = (g.rows, g.cols);
                    let mut dx = Tensor::zeros(n, d);
                    let mut dgamma = Tensor::zeros(1, d);
                    let mut dbeta = Tensor::zeros(1, d);
                    for r in 0..n {
                        let gr = g.row(r);
                        let xh = &xhat[r * d..(r + 1) * d];
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gm[j];
                            m1 += dxh;
                            m2 += dxh * xh[j];
                            dgamma.data[j] += gr[j] * xh[j];
                            dbeta.data[j] += gr[j];
                        }
                        m1 /= d as f32;
                        m2 /= d as f32;
                        let out = dx.row_mut(r);
                        for j in 0..d {
                            out[j] = rstd[r] * (gr[j] * gm[j] - m1 - xh[j] * m2);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dgamma);
                    acc(*beta, dbeta);
                }
                Op::Attention { q, k, v, heads, segs, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.cols;
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f32).sqrt();
                    let mut dq = Tensor::zeros(qv.rows, d);
                    let mut dk = Tensor::zeros(kv.rows, d);
                    let mut dv = Tensor::zeros(vv.rows, d);
                    let mut off = 0;
                    for s in segs.iter() {
                        let n = s.q_len * s.k_len;
                        for h in 0..*heads {
                            let p = &probs[off..off + n];
                            off += n;
                            let pv = View { data: p, off: 0, rows: s.q_len, cols: s.k_len, rs: s.k_len, cs: 1 };
                            let go = View::block(&g.data, d, s.q_start, s.q_len, h * dh, dh);
                            // dV += P^T dO
                            gemm(1.0, pv.t(), go, 1.0, &mut dv.data, s.k_start * d + h * dh, d);
                            // dP = dO V^T
                            let mut dp = vec![0.0; n];
                            let vb = View::block(&vv.data, d, s.k_start, s.k_len, h * dh, dh);
                            gemm(1.0, go, vb.t(), 0.0, &mut dp, 0, s.k_len);
                            // dS = P * (dP - rowsum(dP * P)), times the score scale.
                            for i in 0..s.q_len {
                                let pr = &p[i * s.k_len..(i + 1) * s.k_len];
                                let dr = &mut dp[i * s.k_len..(i + 1) * s.k_len];
                                let dot: f32 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                                for (x, pp) in dr.iter_mut().zip(pr) {
                                    *x = pp * (*x - dot) * scale;
                                }
                            }
                            let ds = View { data: &dp, off: 0, rows: s.q_len, cols: s.k_len, rs: s.k_len, cs: 1 };
                            let kb = View::block(&kv.data, d, s.k_start, s.k_len, h * dh, dh);
                            let qb = View::block(&qv.data, d, s.q_start, s.q_len, h * dh, dh);
                            gemm(1.0, ds, kb, 1.0, &mut dq.data, s.q_start * d + h * dh, d);
                            gemm(1.0, ds.t(), qb, 1.0, &mut dk.data, s.k_start * d + h * dh, d);
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                    acc(*v, dv);
                }
                Op::CrossEntropy { logits, targets, probs, scale } => {
                    let l = self.value(*logits);
                    let mut dl = Tensor::from_vec(l.rows, l.cols, probs.clone());
                    for (r, &t) in targets.iter().enumerate() {
                        dl.data[r * l.cols + t as usize] -= 1.0;
                    }
                    let f = g.data[0] * scale;
                    dl.data.iter_mut().for_each(|x| *x *= f);
                    acc(*logits, dl);
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(v, Tensor::scalar(g.data[0] * w));
                    }
                }
            }
        }
        out
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// A small network touching every smooth op; returns the scalar loss.
    fn net(params: &[Tensor], tape: &mut Tape) -> Var {
        let p: Vec<Var> = params.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect();
        // p0 embedding 6x8, p1 Wq 8x8, p2 Wk, p3 Wv, p4 bias 1x8, p5 gamma, p6 beta, p7 Wout 8x5
        let x = tape.gather(p[0], &[0, 3, 5, 3, 1]);
        let h = tape.layer_norm(x, p[5], p[6]);
        let q = tape.matmul(h, p[1]);
        let k = tape.matmul(h, p[2]);
        let v = tape.linear(h, p[3], p[4]);
        let segs = Arc::new(vec![
            Segment { q_start: 0, q_len: 3, k_start: 0, k_len: 3 },
            Segment { q_start: 3, q_len: 2, k_start: 1, k_len: 4 },
        ]);
        let a = tape.attention(q, k, v, 2, segs.clone(), true);
        let a2 = tape.attention(q, k, v, 2, segs, false);
        let s = tape.add(a, a2);
        let s = tape.add(s, x);
        let tail = tape.rows(s, 1, 4);
        let logits = tape.matmul(tail, p[7]);
        let l1 = tape.cross_entropy(logits, &[0, 4, 2, 2], Reduction::Mean);
        let l2 = tape.cross_entropy(logits, &[1, 1, 3, 0], Reduction::Sum);
        tape.weighted_sum(&[(l1, 0.7), (l2, 0.3)])
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shapes = [(6, 8), (8, 8), (8, 8), (8, 8), (1, 8), (1, 8), (1, 8), (8, 5)];
        let mut params: Vec<Tensor> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
        let mut tape = Tape::new();
        let loss = net(&params, &mut tape);
        let grads: HashMap<usize, Tensor> = tape.backward(loss).into_iter().collect();
        let eps = 1e-2f32;
        let mut worst = 0.0f32;
        for (pi, shape) in shapes.iter().enumerate() {
            for e in 0..shape.0 * shape.1 {
                let orig = params[pi].data[e];
                params[pi].data[e] = orig + eps;
                let mut t = Tape::no_grad();
                let v = net(&params, &mut t);
                let plus = t.scalar(v);
                params[pi].data[e] = orig - eps;
                let mut t = Tape::no_grad();
                let v = net(&params, &mut t);
                let minus = t.scalar(v);
                params[pi].data[e] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads[&pi].data[e];
                let err = (numeric - analytic).abs() / (1.0 + numeric.abs().max(analytic.abs()));
                worst = worst.max(err);
            }
        }
        assert!(worst < 2e-3, "worst relative gradient error {worst}");
    }

    #[test]
    fn relu_gradient_away_from_the_kink() {
        let x = Tensor::from_vec(1, 4, vec![-1.5, -0.5, 0.5, 2.0]);
        let w = Tensor::from_vec(4, 2, vec![1.0, -1.0, 0.5, 0.25, -0.5, 2.0, 1.5, 1.0]);
        let mut tape = Tape::new();
        let px = tape.param(0, &x);
        let pw = tape.param(1, &w);
        let r = tape.relu(px);
        let l = tape.matmul(r, pw);
        let loss = tape.cross_entropy(l, &[1], Reduction::Mean);
        let grads: HashMap<usize, Tensor> = tape.backward(loss).into_iter().collect();
        let dx = &grads[&0].data;
        assert_eq!(&dx[..2], &[0.0, 0.0]);
        // d/dx_j = sum_c (p_c - y_c) w_jc, and p is the softmax of relu(x) @ w.
        let z: [f32; 2] = [0.5 * -0.5 + 2.0 * 1.5, 0.5 * 2.0 + 2.0 * 1.0];
        let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
        let g = [p0, -p0];
        for (j, d) in dx.iter().enumerate().skip(2) {
            let want = g[0] * w.data[j * 2] + g[1] * w.data[j * 2 + 1];
            assert!((d - want).abs() < 1e-5);
        }
    }

    #[test]
    fn unreached_params_get_no_gradient() {
        let a = Tensor::from_vec(1, 2, vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let pa = tape.param(0, &a);
        let pb = tape.param(1, &a);
        let w = Tensor::from_vec(2, 3, vec![0.1; 6]);
        let pw = tape.param(2, &w);
        let la = tape.matmul(pa, pw);
        let lb = tape.matmul(pb, pw);
        let ca = tape.cross_entropy(la, &[0], Reduction::Mean);
        let _cb = tape.cross_entropy(lb, &[1], Reduction::Mean);
        let root = tape.weighted_sum(&[(ca, 1.0)]);
        let ids: Vec<usize> = tape.backward(root).into_iter().map(|(i, _)| i).collect();
        assert!(ids.contains(&0) && ids.contains(&2) && !ids.contains(&1));
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(7, 11));
        let l = tape.cross_entropy(z, &[0, 1, 2, 3, 4, 5, 10], Reduction::Mean);
        assert!((tape.scalar(l) - (11f32).ln()).abs() < 1e-6);
    }
}
