//! Named parameters in groups, Adam, and the binary parameter blob.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::ModelError;

/// Parameter groups: the shared encoder (with the embeddings) and one group
/// per decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Encoder,
    DecoderP,
    DecoderT,
    DecoderS,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Encoder, Group::DecoderP, Group::DecoderT, Group::DecoderS];

    pub fn name(self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::DecoderP => "decoder_p",
            Group::DecoderT => "decoder_t",
            Group::DecoderS => "decoder_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> usize {
        self.params.push(Param { name: name.into(), group, value });
        self.params.len() - 1
    }

    pub fn normal(
        &mut self,
        name: impl Into<String>,
        group: Group,
        rows: usize,
        cols: usize,
        std: f32,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let dist = Normal::new(0.0f32, std).expect("positive std");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.add(name, group, Tensor::from_vec(rows, cols, data))
    }

    pub fn filled(&mut self, name: impl Into<String>, group: Group, rows: usize, cols: usize, v: f32) -> usize {
        self.add(name, group, Tensor::from_vec(rows, cols, vec![v; rows * cols]))
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.params[id].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    const MAGIC: &'static [u8; 4] = b"DOIE";

    /// Little-endian blob: magic, count, then per parameter its name,
    /// shape and values.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(Self::MAGIC)?;
        f.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            f.write_all(&(p.name.len() as u32).to_le_bytes())?;
            f.write_all(p.name.as_bytes())?;
            f.write_all(&(p.value.rows as u32).to_le_bytes())?;
            f.write_all(&(p.value.cols as u32).to_le_bytes())?;
            for v in &p.value.data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()
    }

    /// Loads values into an already-built store; names and shapes must match.
    pub fn load_into(&mut self, path: &Path) -> Result<(), ModelError> {
        let bad = |m: String| ModelError::Checkpoint(format!("{}: {m}", path.display()));
        let mut f = BufReader::new(File::open(path).map_err(|e| bad(e.to_string()))?);
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |f: &mut BufReader<File>| -> Result<u32, ModelError> {
            f.read_exact(&mut u32buf).map_err(|e| bad(e.to_string()))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != Self::MAGIC {
            return Err(bad("not a parameter file".into()));
        }
        let n = read_u32(&mut f)? as usize;
        if n != self.params.len() {
            return Err(bad(format!("{n} parameters, model has {}", self.params.len())));
        }
        for p in &mut self.params {
            let len = read_u32(&mut f)? as usize;
            let mut name = vec![0u8; len];
            f.read_exact(&mut name).map_err(|e| bad(e.to_string()))?;
            let rows = read_u32(&mut f)? as usize;
            let cols = read_u32(&mut f)? as usize;
            if name != p.name.as_bytes() || rows != p.value.rows || cols != p.value.cols {
                return Err(bad(format!("parameter {} does not match", p.name)));
            }
            let mut raw = vec![0u8; rows * cols * 4];
            f.read_exact(&mut raw).map_err(|e| bad(e.to_string()))?;
            for (v, c) in p.value.data.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            }
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`]; `None` means no gradient reached
/// the parameter.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    pub grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn new(n: usize) -> Self {
        Grads { grads: vec![None; n] }
    }

    pub fn accumulate(&mut self, id: usize, g: Tensor) {
        match &mut self.grads[id] {
            Some(e) => e.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flatten().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    /// Gradient norm per parameter group.
    pub fn group_norm(&self, store: &ParamStore, group: Group) -> f64 {
        self.grads
            .iter()
            .zip(&store.params)
            .filter(|(_, p)| p.group == group)
            .filter_map(|(g, _)| g.as_ref())
            .map(Tensor::sum_sq)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.params.iter().map(|p| vec![0.0; p.value.data.len()]).collect();
        Adam { cfg, m: zeros(), v: zeros(), t: 0 }
    }

    /// One update at learning rate `lr`. Parameters without a gradient are
    /// left untouched, moments included.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f32) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, g) in grads.grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, gi), mi), vi) in
                store.params[i].value.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *p -= lr * mh / (vh.sqrt() + self.cfg.eps);
            }
        }
    }
}

/// Scales all gradients so their global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for g in grads.grads.iter_mut().flatten() {
            g.data.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Mean of the given rows, used to seed embeddings of appended tokens.
pub fn mean_row(table: &Tensor, rows: impl Iterator<Item = usize>) -> Vec<f32> {
    let mut acc = vec![0.0f32; table.cols];
    let mut n = 0;
    for r in rows {
        for (a, v) in acc.iter_mut().zip(table.row(r)) {
            *a += v;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f32);
    }
    acc
}

pub(crate) fn seed_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Burn one draw so streams for different purposes start apart.
    let _: u32 = rng.random();
    rng
}
