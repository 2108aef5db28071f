//! Complex-valued knowledge-base embeddings.
//!
//! Entities and relations live in `C^d`, stored as separate real and
//! imaginary matrices. A triple scores
//!
//! ```text
//! phi(h, r, t) = Re( sum_k h[k] * r[k] * conj(t[k]) )
//!              = sum_k  h_re r_re t_re + h_im r_re t_im + h_re r_im t_im - h_im r_im t_re
//! ```
//!
//! and the relation distribution for a pair is the softmax of `phi` over every
//! relation row, NA included.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::distribution::RelationDistribution;
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, Triple};
use crate::linalg::{axpy, sigmoid, Mat, ParamSet};

/// Borrowed complex vector.
#[derive(Debug, Clone, Copy)]
pub struct CRef<'a> {
    pub re: &'a [f64],
    pub im: &'a [f64],
}

impl<'a> CRef<'a> {
    pub fn new(re: &'a [f64], im: &'a [f64]) -> Self {
        CRef { re, im }
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }
}

/// Owned complex vector, used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CVec {
    pub fn zeros(d: usize) -> Self {
        CVec {
            re: vec![0.0; d],
            im: vec![0.0; d],
        }
    }

    pub fn as_ref(&self) -> CRef<'_> {
        CRef::new(&self.re, &self.im)
    }
}

fn check_dims(h: CRef, r: CRef, t: CRef) -> Result<()> {
    let d = h.re.len();
    for len in [h.im.len(), r.re.len(), r.im.len(), t.re.len(), t.im.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    Ok(())
}

#[inline]
fn phi(h: CRef, r: CRef, t: CRef) -> f64 {
    let mut s = 0.0;
    for k in 0..h.re.len() {
        s += h.re[k] * r.re[k] * t.re[k] + h.im[k] * r.re[k] * t.im[k] + h.re[k] * r.im[k] * t.im[k]
            - h.im[k] * r.im[k] * t.re[k];
    }
    s
}

/// The trilinear ComplEx score.
pub fn score(h: CRef, r: CRef, t: CRef) -> Result<f64> {
    check_dims(h, r, t)?;
    Ok(phi(h, r, t))
}

/// Partial derivatives of [`score`] with respect to each argument.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub head: CVec,
    pub rel: CVec,
    pub tail: CVec,
}

pub fn grad_score(h: CRef, r: CRef, t: CRef) -> Result<ScoreGrad> {
    check_dims(h, r, t)?;
    let d = h.dim();
    let (mut gh, mut gr, mut gt) = (CVec::zeros(d), CVec::zeros(d), CVec::zeros(d));
    accumulate_grad(1.0, h, r, t, &mut gh, &mut gr, &mut gt);
    Ok(ScoreGrad {
        head: gh,
        rel: gr,
        tail: gt,
    })
}

/// Adds `coef * d phi / d{h, r, t}` into the given buffers.
#[inline]
fn accumulate_grad(
    coef: f64,
    h: CRef,
    r: CRef,
    t: CRef,
    gh: &mut CVec,
    gr: &mut CVec,
    gt: &mut CVec,
) {
    for k in 0..h.re.len() {
        let (hr, hi, rr, ri, tr, ti) = (h.re[k], h.im[k], r.re[k], r.im[k], t.re[k], t.im[k]);
        gh.re[k] += coef * (rr * tr + ri * ti);
        gh.im[k] += coef * (rr * ti - ri * tr);
        gr.re[k] += coef * (hr * tr + hi * ti);
        gr.im[k] += coef * (hr * ti - hi * tr);
        gt.re[k] += coef * (hr * rr - hi * ri);
        gt.im[k] += coef * (hi * rr + hr * ri);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbeHyper {
    pub d_k: usize,
    pub neg_ratio: usize,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub init_scale: f64,
    /// Positive triples per Adam step during pretraining.
    pub batch_size: usize,
    /// Coefficient of the L2 penalty on the whole table.
    pub l2: f64,
}

impl Default for KbeHyper {
    fn default() -> Self {
        KbeHyper {
            d_k: 50,
            neg_ratio: 5,
            pretrain_lr: 0.01,
            pretrain_epochs: 200,
            init_scale: 0.1,
            batch_size: 100,
            l2: 1e-5,
        }
    }
}

/// Entity and relation embeddings; relation row `num_relations` is NA.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEmbeddingTable {
    pub entity_re: Mat,
    pub entity_im: Mat,
    pub relation_re: Mat,
    pub relation_im: Mat,
    pub d_k: usize,
}

impl ParamSet for ComplexEmbeddingTable {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.entity_re, &self.entity_im, &self.relation_re, &self.relation_im]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![
            &mut self.entity_re,
            &mut self.entity_im,
            &mut self.relation_re,
            &mut self.relation_im,
        ]
    }
}

impl ComplexEmbeddingTable {
    /// `n_relations` counts every row including NA.
    pub fn zeros(n_entities: usize, n_relations: usize, d_k: usize) -> Self {
        ComplexEmbeddingTable {
            entity_re: Mat::zeros(n_entities, d_k),
            entity_im: Mat::zeros(n_entities, d_k),
            relation_re: Mat::zeros(n_relations, d_k),
            relation_im: Mat::zeros(n_relations, d_k),
            d_k,
        }
    }

    /// Every entry, the NA row included, drawn from N(0, scale^2).
    pub fn random<R: Rng + ?Sized>(
        n_entities: usize,
        n_relations: usize,
        d_k: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        ComplexEmbeddingTable {
            entity_re: Mat::normal(n_entities, d_k, scale, rng),
            entity_im: Mat::normal(n_entities, d_k, scale, rng),
            relation_re: Mat::normal(n_relations, d_k, scale, rng),
            relation_im: Mat::normal(n_relations, d_k, scale, rng),
            d_k,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ComplexEmbeddingTable::zeros(self.num_entities(), self.num_relation_rows(), self.d_k)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_re.rows
    }

    /// Relation rows including NA.
    pub fn num_relation_rows(&self) -> usize {
        self.relation_re.rows
    }

    pub fn entity(&self, e: usize) -> CRef<'_> {
        CRef::new(self.entity_re.row(e), self.entity_im.row(e))
    }

    pub fn relation(&self, r: usize) -> CRef<'_> {
        CRef::new(self.relation_re.row(r), self.relation_im.row(r))
    }

    pub fn score(&self, h: usize, r: usize, t: usize) -> f64 {
        phi(self.entity(h), self.relation(r), self.entity(t))
    }

    /// `phi(h, r, t)` for every relation row.
    pub fn relation_scores(&self, h: usize, t: usize) -> Vec<f64> {
        (0..self.num_relation_rows())
            .map(|r| self.score(h, r, t))
            .collect()
    }

    /// Adds `coef * d phi(h, r, t)` into the matching rows of `grad`.
    pub fn accumulate_score_grad(&self, grad: &mut Self, coef: f64, h: usize, r: usize, t: usize) {
        let d = self.d_k;
        let (mut gh, mut gr, mut gt) = (CVec::zeros(d), CVec::zeros(d), CVec::zeros(d));
        accumulate_grad(coef, self.entity(h), self.relation(r), self.entity(t), &mut gh, &mut gr, &mut gt);
        let add = |m: &mut Mat, row: usize, v: &[f64]| {
            for (x, y) in m.row_mut(row).iter_mut().zip(v) {
                *x += y;
            }
        };
        add(&mut grad.entity_re, h, &gh.re);
        add(&mut grad.entity_im, h, &gh.im);
        add(&mut grad.relation_re, r, &gr.re);
        add(&mut grad.relation_im, r, &gr.im);
        add(&mut grad.entity_re, t, &gt.re);
        add(&mut grad.entity_im, t, &gt.im);
    }
}

/// `p(r | h, t)` over every relation row, NA included.
pub fn kb_relation_distribution(
    table: &ComplexEmbeddingTable,
    h: usize,
    t: usize,
) -> Result<RelationDistribution> {
    let n = table.num_entities();
    if h >= n || t >= n {
        return Err(Error::Infeasible(format!("entity id out of range ({h}, {t}) for {n} entities")));
    }
    Ok(RelationDistribution::from_logits(&table.relation_scores(h, t)))
}

/// Draws a corrupted copy of `pos`, replacing head or tail (fair coin) by a
/// uniform entity and retrying while the result is a known fact or a loop.
fn corrupt<R: Rng + ?Sized>(kb: &KnowledgeBase, pos: Triple, rng: &mut R) -> Triple {
    let n = kb.num_entities();
    let mut cand = pos;
    for _ in 0..64 {
        cand = pos;
        if rng.gen_bool(0.5) {
            cand.head = rng.gen_range(0..n);
        } else {
            cand.tail = rng.gen_range(0..n);
        }
        if cand.head != cand.tail && !kb.contains(&cand) {
            break;
        }
    }
    cand
}

/// Trains embeddings on every KB fact with the logistic loss
/// `log(1 + exp(-y * phi))` plus `l2 * ||table||^2`, using `neg_ratio`
/// corruptions per positive and Adam. Deterministic in `seed`.
pub fn pretrain(kb: &KnowledgeBase, hyper: &KbeHyper, seed: u64) -> Result<ComplexEmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = ComplexEmbeddingTable::random(
        kb.num_entities(),
        kb.num_relations() + 1,
        hyper.d_k,
        hyper.init_scale,
        &mut rng,
    );
    if hyper.pretrain_epochs == 0 || kb.triples().is_empty() {
        return Ok(table);
    }
    let mut opt = Adam::new(table.zeros_like(), AdamConfig::default());
    let mut order: Vec<Triple> = kb.triples().to_vec();
    let batch = hyper.batch_size.max(1);

    for epoch in 0..hyper.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grad = table.zeros_like();
            let count = (chunk.len() * (1 + hyper.neg_ratio)) as f64;
            for &pos in chunk {
                let mut push = |t: Triple, y: f64, grad: &mut ComplexEmbeddingTable| {
                    let s = table.score(t.head, t.rel, t.tail);
                    total += softplus(-y * s);
                    let coef = -y * sigmoid(-y * s) / count;
                    table.accumulate_score_grad(grad, coef, t.head, t.rel, t.tail);
                };
                push(pos, 1.0, &mut grad);
                for _ in 0..hyper.neg_ratio {
                    let neg = corrupt(kb, pos, &mut rng);
                    push(neg, -1.0, &mut grad);
                }
            }
            if hyper.l2 > 0.0 {
                for (g, p) in grad.tensors_mut().into_iter().zip(table.tensors()) {
                    axpy(2.0 * hyper.l2, &p.data, &mut g.data);
                }
            }
            opt.update(&mut table, &grad, hyper.pretrain_lr);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("pretraining loss at epoch {epoch}")));
        }
        debug!(
            "kbe epoch {epoch}: mean logistic loss {:.5}",
            total / (order.len() * (1 + hyper.neg_ratio)) as f64
        );
    }
    Ok(table)
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, u32 version, u64 |E|, u64 |R|+1, u64 d_k, then
// little-endian f64 rows of entity_re, entity_im, relation_re, relation_im.

const KBE_MAGIC: &[u8; 4] = b"HKBE";
const KBE_VERSION: u32 = 1;

impl ComplexEmbeddingTable {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(KBE_MAGIC)?;
        w.write_all(&KBE_VERSION.to_le_bytes())?;
        for n in [self.num_entities(), self.num_relation_rows(), self.d_k] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for m in self.tensors() {
            for v in &m.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| Error::format("<kbe checkpoint>", msg);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != KBE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != KBE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut b8)?;
            *d = u64::from_le_bytes(b8) as usize;
        }
        let [n_e, n_r, d_k] = dims;
        let mut read_mat = |rows: usize| -> Result<Mat> {
            let mut data = vec![0.0; rows * d_k];
            for v in data.iter_mut() {
                r.read_exact(&mut b8)?;
                *v = f64::from_le_bytes(b8);
            }
            Ok(Mat::from_vec(rows, d_k, data))
        };
        let table = ComplexEmbeddingTable {
            entity_re: read_mat(n_e)?,
            entity_im: read_mat(n_e)?,
            relation_re: read_mat(n_r)?,
            relation_im: read_mat(n_r)?,
            d_k,
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(table)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::read_from(fs::File::open(path)?).map_err(|e| match e {
            Error::Format { msg, .. } => Error::format(path, msg),
            Error::Io(io) => Error::format(path, io.to_string()),
            other => other,
        })
    }
}
