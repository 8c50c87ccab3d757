//! Row-major f32 matrices and the kernels shared by the training tape and
//! the cached decoder.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} does not fit {} values", data.len());
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&x| f64::from(x) * f64::from(x)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A strided view into a buffer: element (i, j) is at `off + i*rs + j*cs`.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f32],
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn of(t: &'a Tensor) -> Self {
        View { data: &t.data, off: 0, rows: t.rows, cols: t.cols, rs: t.cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    /// Rows `r0..r0+n`, columns `c0..c0+m` of a row-major matrix with `ld` columns.
    pub fn block(data: &'a [f32], ld: usize, r0: usize, n: usize, c0: usize, m: usize) -> Self {
        View { data, off: r0 * ld + c0, rows: n, cols: m, rs: ld, cs: 1 }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.off + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view out of bounds");
        }
    }
}

/// Writes `alpha * a @ b + beta * c` into the block of `c` starting at `c_off`
/// with row stride `c_rs`.
pub fn gemm(alpha: f32, a: View, b: View, beta: f32, c: &mut [f32], c_off: usize, c_rs: usize) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    a.check();
    b.check();
    assert!(c_off + (m - 1) * c_rs + n <= c.len(), "output out of bounds");
    if k == 0 {
        for i in 0..m {
            for v in &mut c[c_off + i * c_rs..c_off + i * c_rs + n] {
                *v *= beta;
            }
        }
        return;
    }
    // SAFETY: the bounds of all three views were checked above and the
    // output slice is exclusively borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            c_rs as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows, b.cols);
    gemm(1.0, View::of(a), View::of(b), 0.0, &mut out.data, 0, b.cols);
    out
}

pub fn add_row_bias(x: &mut Tensor, bias: &[f32]) {
    for r in 0..x.rows {
        for (v, b) in x.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// `x @ w + b`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut out = matmul(x, w);
    add_row_bias(&mut out, &b.data);
    out
}

pub const LN_EPS: f32 = 1e-5;

/// Row-wise layer norm. Also returns the normalized input and the inverse
/// standard deviation per row for the backward pass.
pub fn layer_norm(x: &Tensor, gamma: &[f32], beta: &[f32]) -> (Tensor, Vec<f32>, Vec<f32>) {
    let d = x.cols;
    let mut out = Tensor::zeros(x.rows, d);
    let mut xhat = vec![0.0; x.rows * d];
    let mut rstd = vec![0.0; x.rows];
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            out.data[r * d + j] = h * gamma[j] + beta[j];
        }
    }
    (out, xhat, rstd)
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax(row: &[f32]) -> Vec<f32> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// One attention block between packed query rows and key/value rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

/// Multi-head scaled dot-product attention over packed segments. With
/// `causal`, query i of a segment sees keys 0..=i. Returns the output and
/// the attention probabilities (segment by segment, head by head).
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    segs: &[Segment],
    causal: bool,
) -> (Tensor, Vec<f32>) {
    let d = q.cols;
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut out = Tensor::zeros(q.rows, d);
    let mut probs = Vec::with_capacity(segs.iter().map(|s| s.q_len * s.k_len * heads).sum());
    for s in segs {
        for h in 0..heads {
            let qv = View::block(&q.data, d, s.q_start, s.q_len, h * dh, dh);
            let kv = View::block(&k.data, d, s.k_start, s.k_len, h * dh, dh);
            let mut p = vec![0.0; s.q_len * s.k_len];
            gemm(scale, qv, kv.t(), 0.0, &mut p, 0, s.k_len);
            for i in 0..s.q_len {
                let row = &mut p[i * s.k_len..(i + 1) * s.k_len];
                if causal {
                    for x in row.iter_mut().skip(i + 1) {
                        *x = f32::NEG_INFINITY;
                    }
                }
                softmax_in_place(row);
            }
            let vv = View::block(&v.data, d, s.k_start, s.k_len, h * dh, dh);
            let pv = View { data: &p, off: 0, rows: s.q_len, cols: s.k_len, rs: s.k_len, cs: 1 };
            gemm(1.0, pv, vv, 0.0, &mut out.data, s.q_start * d + h * dh, d);
            probs.extend_from_slice(&p);
        }
    }
    (out, probs)
}
