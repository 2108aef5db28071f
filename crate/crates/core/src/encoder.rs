//! Bag-level language model: word + position embeddings, a bidirectional
//! LSTM over the real (non-PAD) tokens of each sentence, word-level attention
//! pooling, relation-query sentence attention over the bag, and a softmax
//! output layer.
//!
//! Every forward step has a matching hand-written backward step; the
//! `*_cached` functions keep what backward needs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::distribution::RelationDistribution;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sigmoid, softmax, Mat, ParamSet};
use crate::supervision::{Bag, SentenceMention, Vocab, PAD_ID, UNK_ID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderDims {
    pub d_w: usize,
    /// Total position width, split evenly between head- and tail-relative tables.
    pub d_p: usize,
    pub d_s: usize,
    /// Sentence length L.
    pub l: usize,
    /// Relations of interest (NA excluded).
    pub n_relations: usize,
}

impl EncoderDims {
    pub fn input_width(&self) -> usize {
        self.d_w + self.d_p
    }

    pub fn validate(&self) -> Result<()> {
        if !self.d_p.is_multiple_of(2) {
            return Err(Error::Config(format!("d_p must be even, got {}", self.d_p)));
        }
        if self.d_w == 0 || self.d_s == 0 || self.l == 0 || self.n_relations == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Word vectors, looked up through `row_of` so that tokens missing from a
/// pretrained file share the UNK row.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    pub vectors: Mat,
    pub frozen: bool,
    pub row_of: Vec<usize>,
}

impl WordEmbeddingTable {
    pub fn random<R: Rng + ?Sized>(vocab_size: usize, d_w: usize, scale: f64, rng: &mut R) -> Self {
        let mut vectors = Mat::normal(vocab_size, d_w, scale, rng);
        vectors.row_mut(PAD_ID as usize).fill(0.0);
        WordEmbeddingTable {
            vectors,
            frozen: false,
            row_of: (0..vocab_size).collect(),
        }
    }

    /// Reads `token v1 ... v_d` lines. Vocabulary tokens found in the file
    /// take their vector and stay frozen; the rest map to a trainable UNK row.
    pub fn from_pretrained_text<R: Rng + ?Sized>(
        text: &str,
        vocab: &Vocab,
        d_w: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut found: HashMap<&str, Vec<f64>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().unwrap_or_default();
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let vals = vals.map_err(|_| Error::Parse {
                line: i + 1,
                msg: "non-numeric embedding value".into(),
            })?;
            if vals.len() != d_w {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {d_w} values, got {}", vals.len()),
                });
            }
            found.insert(tok, vals);
        }
        let mut table = WordEmbeddingTable::random(vocab.len(), d_w, scale, rng);
        table.frozen = true;
        for (id, tok) in vocab.tokens().iter().enumerate() {
            if id == PAD_ID as usize || id == UNK_ID as usize {
                continue;
            }
            match found.get(tok.as_str()) {
                Some(v) => {
                    table.vectors.row_mut(id).copy_from_slice(v);
                }
                None => {
                    table.row_of[id] = UNK_ID as usize;
                    table.vectors.row_mut(id).fill(0.0);
                }
            }
        }
        Ok(table)
    }

    pub fn load_pretrained<R: Rng + ?Sized>(
        path: impl AsRef<Path>,
        vocab: &Vocab,
        d_w: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::from_pretrained_text(&fs::read_to_string(path)?, vocab, d_w, scale, rng)
    }

    pub fn lookup(&self, token: u32) -> &[f64] {
        self.vectors.row(self.row_of[token as usize])
    }

    /// Rows that receive updates and regularization.
    pub fn is_trainable_row(&self, row: usize) -> bool {
        if row == PAD_ID as usize {
            false
        } else if self.frozen {
            row == UNK_ID as usize
        } else {
            true
        }
    }
}

/// Head- and tail-relative position tables, each `(2L - 1) x d_p/2`, row
/// `offset + L - 1` for offsets `-(L-1)..=(L-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEmbeddingTable {
    pub head: Mat,
    pub tail: Mat,
    pub l: usize,
}

impl PositionEmbeddingTable {
    pub fn random<R: Rng + ?Sized>(l: usize, d_p: usize, scale: f64, rng: &mut R) -> Self {
        PositionEmbeddingTable {
            head: Mat::normal(2 * l - 1, d_p / 2, scale, rng),
            tail: Mat::normal(2 * l - 1, d_p / 2, scale, rng),
            l,
        }
    }

    pub fn row_index(&self, offset: i64) -> usize {
        let idx = offset + self.l as i64 - 1;
        assert!(
            idx >= 0 && (idx as usize) < 2 * self.l - 1,
            "relative offset {offset} outside position table"
        );
        idx as usize
    }
}

/// Recurrent, attention and output weights. LSTM gate blocks are stacked
/// `[input, forget, output, candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub fwd_w: Mat,
    pub fwd_u: Mat,
    pub fwd_b: Mat,
    pub bwd_w: Mat,
    pub bwd_u: Mat,
    pub bwd_b: Mat,
    /// Word attention projection W, `2d_s x 2d_s`.
    pub att_w: Mat,
    /// Word attention vector v.
    pub att_v: Mat,
    /// Diagonal of the sentence attention bilinear form.
    pub sent_diag: Mat,
    /// One query per relation of interest.
    pub queries: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
    pub keep_input: f64,
    pub keep_output: f64,
}

impl EncoderParams {
    pub fn random<R: Rng + ?Sized>(dims: &EncoderDims, scale: f64, rng: &mut R) -> Self {
        let (d_in, ds, h2) = (dims.input_width(), dims.d_s, 2 * dims.d_s);
        EncoderParams {
            fwd_w: Mat::normal(4 * ds, d_in, scale, rng),
            fwd_u: Mat::normal(4 * ds, ds, scale, rng),
            fwd_b: Mat::zeros(1, 4 * ds),
            bwd_w: Mat::normal(4 * ds, d_in, scale, rng),
            bwd_u: Mat::normal(4 * ds, ds, scale, rng),
            bwd_b: Mat::zeros(1, 4 * ds),
            att_w: Mat::normal(h2, h2, scale, rng),
            att_v: Mat::normal(1, h2, scale, rng),
            sent_diag: Mat::normal(1, h2, scale, rng),
            queries: Mat::normal(dims.n_relations, h2, scale, rng),
            out_w: Mat::normal(dims.n_relations + 1, h2, scale, rng),
            out_b: Mat::zeros(1, dims.n_relations + 1),
            keep_input: 1.0,
            keep_output: 1.0,
        }
    }

    pub fn d_s(&self) -> usize {
        self.fwd_u.cols
    }

    pub fn input_width(&self) -> usize {
        self.fwd_w.cols
    }

    pub fn n_outputs(&self) -> usize {
        self.out_w.rows
    }

    pub fn mean_query(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.queries.cols];
        for r in 0..self.queries.rows {
            axpy(1.0 / self.queries.rows as f64, self.queries.row(r), &mut q);
        }
        q
    }
}

/// All language-side parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub words: WordEmbeddingTable,
    pub positions: PositionEmbeddingTable,
    pub params: EncoderParams,
}

impl ParamSet for LanguageModel {
    fn tensors(&self) -> Vec<&Mat> {
        let p = &self.params;
        vec![
            &self.words.vectors,
            &self.positions.head,
            &self.positions.tail,
            &p.fwd_w,
            &p.fwd_u,
            &p.fwd_b,
            &p.bwd_w,
            &p.bwd_u,
            &p.bwd_b,
            &p.att_w,
            &p.att_v,
            &p.sent_diag,
            &p.queries,
            &p.out_w,
            &p.out_b,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let p = &mut self.params;
        vec![
            &mut self.words.vectors,
            &mut self.positions.head,
            &mut self.positions.tail,
            &mut p.fwd_w,
            &mut p.fwd_u,
            &mut p.fwd_b,
            &mut p.bwd_w,
            &mut p.bwd_u,
            &mut p.bwd_b,
            &mut p.att_w,
            &mut p.att_v,
            &mut p.sent_diag,
            &mut p.queries,
            &mut p.out_w,
            &mut p.out_b,
        ]
    }
}

pub const LANGUAGE_TENSOR_NAMES: [&str; 15] = [
    "word_vectors",
    "pos_head",
    "pos_tail",
    "fwd_w",
    "fwd_u",
    "fwd_b",
    "bwd_w",
    "bwd_u",
    "bwd_b",
    "att_w",
    "att_v",
    "sent_diag",
    "queries",
    "out_w",
    "out_b",
];

impl LanguageModel {
    pub fn random<R: Rng + ?Sized>(dims: &EncoderDims, vocab_size: usize, scale: f64, rng: &mut R) -> Self {
        LanguageModel {
            words: WordEmbeddingTable::random(vocab_size, dims.d_w, scale, rng),
            positions: PositionEmbeddingTable::random(dims.l, dims.d_p, scale, rng),
            params: EncoderParams::random(dims, scale, rng),
        }
    }

    /// Zero-filled copy with identical shapes and lookup structure.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn n_outputs(&self) -> usize {
        self.params.n_outputs()
    }

    /// Clears gradient entries of rows that must never change (PAD and, for
    /// a frozen table, every pretrained row).
    pub fn mask_frozen(&self, grad: &mut LanguageModel) {
        for row in 0..grad.words.vectors.rows {
            if !self.words.is_trainable_row(row) {
                grad.words.vectors.row_mut(row).fill(0.0);
            }
        }
    }

    /// Squared L2 norm of the regularized parameters.
    pub fn reg_sum_sq(&self) -> f64 {
        let words: f64 = (0..self.words.vectors.rows)
            .filter(|&r| self.words.is_trainable_row(r))
            .map(|r| dot(self.words.vectors.row(r), self.words.vectors.row(r)))
            .sum();
        words + self.tensors()[1..].iter().map(|m| m.sum_sq()).sum::<f64>()
    }

    /// `grad += coef * d/dtheta ||theta_reg||^2`.
    pub fn add_reg_grad(&self, grad: &mut LanguageModel, coef: f64) {
        for r in 0..self.words.vectors.rows {
            if self.words.is_trainable_row(r) {
                axpy(2.0 * coef, self.words.vectors.row(r), grad.words.vectors.row_mut(r));
            }
        }
        for (g, p) in grad.tensors_mut().into_iter().zip(self.tensors()).skip(1) {
            axpy(2.0 * coef, &p.data, &mut g.data);
        }
    }
}

// ---------------------------------------------------------------------------
// Token embedding

/// Row `t` is `[word(tokens[t]), head_pos(t - head_pos), tail_pos(t - tail_pos)]`.
pub fn embed_tokens(
    sentence: &SentenceMention,
    words: &WordEmbeddingTable,
    positions: &PositionEmbeddingTable,
) -> Mat {
    embed_prefix(sentence, sentence.tokens.len(), words, positions)
}

fn embed_prefix(
    sentence: &SentenceMention,
    n: usize,
    words: &WordEmbeddingTable,
    positions: &PositionEmbeddingTable,
) -> Mat {
    let (d_w, half) = (words.vectors.cols, positions.head.cols);
    let mut out = Mat::zeros(n, d_w + 2 * half);
    for t in 0..n {
        let row = out.row_mut(t);
        if !sentence.pad_mask[t] {
            row[..d_w].copy_from_slice(words.lookup(sentence.tokens[t]));
        }
        let hi = positions.row_index(t as i64 - sentence.head_pos as i64);
        let ti = positions.row_index(t as i64 - sentence.tail_pos as i64);
        row[d_w..d_w + half].copy_from_slice(positions.head.row(hi));
        row[d_w + half..].copy_from_slice(positions.tail.row(ti));
    }
    out
}

// ---------------------------------------------------------------------------
// LSTM

#[derive(Debug, Clone)]
struct LstmCache {
    /// Post-activation gates per step, `[i, f, o, g]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    reverse: bool,
}

fn lstm_forward(w: &Mat, u: &Mat, b: &Mat, xs: &Mat, reverse: bool) -> LstmCache {
    let n = xs.rows;
    let ds = u.cols;
    let mut cache = LstmCache {
        gates: vec![0.0; n * 4 * ds],
        c: vec![0.0; n * ds],
        tanh_c: vec![0.0; n * ds],
        h: vec![0.0; n * ds],
        reverse,
    };
    let zero = vec![0.0; ds];
    let mut z = vec![0.0; 4 * ds];
    for k in 0..n {
        let t = if reverse { n - 1 - k } else { k };
        z.copy_from_slice(&b.data);
        w.matvec_acc(xs.row(t), &mut z);
        let (h_prev, c_prev) = if k == 0 {
            (&zero[..], &zero[..])
        } else {
            (&cache.h[(k - 1) * ds..k * ds], &cache.c[(k - 1) * ds..k * ds])
        };
        u.matvec_acc(h_prev, &mut z);
        let mut c_new = vec![0.0; ds];
        let mut h_new = vec![0.0; ds];
        let gates = &mut cache.gates[k * 4 * ds..(k + 1) * 4 * ds];
        for j in 0..ds {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[ds + j]);
            let o = sigmoid(z[2 * ds + j]);
            let g = z[3 * ds + j].tanh();
            gates[j] = i;
            gates[ds + j] = f;
            gates[2 * ds + j] = o;
            gates[3 * ds + j] = g;
            c_new[j] = f * c_prev[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        for j in 0..ds {
            cache.tanh_c[k * ds + j] = c_new[j].tanh();
        }
        cache.c[k * ds..(k + 1) * ds].copy_from_slice(&c_new);
        cache.h[k * ds..(k + 1) * ds].copy_from_slice(&h_new);
    }
    cache
}

impl LstmCache {
    /// Hidden state at time `t` (not step).
    fn h_at(&self, t: usize, ds: usize) -> &[f64] {
        let n = self.h.len() / ds;
        let k = if self.reverse { n - 1 - t } else { t };
        &self.h[k * ds..(k + 1) * ds]
    }
}

/// `dh` holds dLoss/dh per time index (rows), `dxs` receives dLoss/dx.
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    cache: &LstmCache,
    w: &Mat,
    u: &Mat,
    xs: &Mat,
    dh: &Mat,
    gw: &mut Mat,
    gu: &mut Mat,
    gb: &mut Mat,
    dxs: &mut Mat,
) {
    let n = xs.rows;
    let ds = u.cols;
    let mut dh_next = vec![0.0; ds];
    let mut dc_next = vec![0.0; ds];
    let mut dz = vec![0.0; 4 * ds];
    let zero = vec![0.0; ds];
    for k in (0..n).rev() {
        let t = if cache.reverse { n - 1 - k } else { k };
        let gates = &cache.gates[k * 4 * ds..(k + 1) * 4 * ds];
        let tc = &cache.tanh_c[k * ds..(k + 1) * ds];
        let (h_prev, c_prev) = if k == 0 {
            (&zero[..], &zero[..])
        } else {
            (&cache.h[(k - 1) * ds..k * ds], &cache.c[(k - 1) * ds..k * ds])
        };
        let dh_t = dh.row(t);
        for j in 0..ds {
            let (i, f, o, g) = (gates[j], gates[ds + j], gates[2 * ds + j], gates[3 * ds + j]);
            let dhj = dh_t[j] + dh_next[j];
            let d_o = dhj * tc[j];
            let dc = dc_next[j] + dhj * o * (1.0 - tc[j] * tc[j]);
            let d_i = dc * g;
            let d_g = dc * i;
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * f;
            dz[j] = d_i * i * (1.0 - i);
            dz[ds + j] = d_f * f * (1.0 - f);
            dz[2 * ds + j] = d_o * o * (1.0 - o);
            dz[3 * ds + j] = d_g * (1.0 - g * g);
        }
        gw.add_outer(&dz, xs.row(t));
        gu.add_outer(&dz, h_prev);
        axpy(1.0, &dz, &mut gb.data);
        w.matvec_t_acc(&dz, dxs.row_mut(t));
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        u.matvec_t_acc(&dz, &mut dh_next);
    }
}

// ---------------------------------------------------------------------------
// Sentence encoder

/// Everything the backward pass of one sentence needs.
#[derive(Debug, Clone)]
pub struct SentenceCache {
    n: usize,
    tokens: Vec<u32>,
    head_pos: usize,
    tail_pos: usize,
    /// Inverted-dropout scales for the embedded rows, when active.
    in_mask: Option<Vec<f64>>,
    xs: Mat,
    fwd: LstmCache,
    bwd: LstmCache,
    hs: Mat,
    m: Mat,
    attn: Vec<f64>,
    out_mask: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl SentenceCache {
    /// Word-attention weights over the real tokens.
    pub fn attention(&self) -> &[f64] {
        &self.attn
    }
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, keep: f64, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Encodes one sentence to a `2 d_s` vector: BiLSTM over the non-PAD prefix,
/// then word attention `softmax_t(v . tanh(W H[t]))` pooling.
pub fn encode_sentence<R: Rng + ?Sized>(
    embedded: &Mat,
    pad_mask: &[bool],
    params: &EncoderParams,
    dropout_on: bool,
    rng: &mut R,
) -> Vec<f64> {
    let n = pad_mask.iter().take_while(|&&p| !p).count();
    let mut xs = Mat::zeros(n, embedded.cols);
    xs.data.copy_from_slice(&embedded.data[..n * embedded.cols]);
    encode_rows(xs, params, dropout_on, rng).output
}

fn encode_rows<R: Rng + ?Sized>(
    mut xs: Mat,
    params: &EncoderParams,
    dropout_on: bool,
    rng: &mut R,
) -> SentenceCache {
    let n = xs.rows;
    let ds = params.d_s();
    let h2 = 2 * ds;
    let in_mask = (dropout_on && params.keep_input < 1.0).then(|| {
        let mask = dropout_mask(xs.data.len(), params.keep_input, rng);
        xs.data.iter_mut().zip(&mask).for_each(|(x, s)| *x *= s);
        mask
    });
    let fwd = lstm_forward(&params.fwd_w, &params.fwd_u, &params.fwd_b, &xs, false);
    let bwd = lstm_forward(&params.bwd_w, &params.bwd_u, &params.bwd_b, &xs, true);
    let mut hs = Mat::zeros(n, h2);
    for t in 0..n {
        let row = hs.row_mut(t);
        row[..ds].copy_from_slice(fwd.h_at(t, ds));
        row[ds..].copy_from_slice(bwd.h_at(t, ds));
    }
    let mut m = Mat::zeros(n, params.att_w.rows);
    let mut scores = vec![0.0; n];
    for t in 0..n {
        let mt = m.row_mut(t);
        params.att_w.matvec_acc(hs.row(t), mt);
        mt.iter_mut().for_each(|v| *v = v.tanh());
        scores[t] = dot(&params.att_v.data, mt);
    }
    let attn = if n > 0 { softmax(&scores) } else { Vec::new() };
    let mut pooled = vec![0.0; h2];
    for t in 0..n {
        axpy(attn[t], hs.row(t), &mut pooled);
    }
    let out_mask = (dropout_on && params.keep_output < 1.0).then(|| {
        let mask = dropout_mask(h2, params.keep_output, rng);
        pooled.iter_mut().zip(&mask).for_each(|(x, s)| *x *= s);
        mask
    });
    SentenceCache {
        n,
        tokens: Vec::new(),
        head_pos: 0,
        tail_pos: 0,
        in_mask,
        xs,
        fwd,
        bwd,
        hs,
        m,
        attn,
        out_mask,
        output: pooled,
    }
}

pub fn encode_sentence_cached<R: Rng + ?Sized>(
    sentence: &SentenceMention,
    model: &LanguageModel,
    dropout_on: bool,
    rng: &mut R,
) -> SentenceCache {
    let n = sentence.real_len();
    let xs = embed_prefix(sentence, n, &model.words, &model.positions);
    let mut cache = encode_rows(xs, &model.params, dropout_on, rng);
    cache.tokens = sentence.tokens[..n].to_vec();
    cache.head_pos = sentence.head_pos;
    cache.tail_pos = sentence.tail_pos;
    cache
}

/// Accumulates parameter gradients given dLoss/d(sentence vector).
pub fn backward_sentence(cache: &SentenceCache, d_out: &[f64], model: &LanguageModel, grad: &mut LanguageModel) {
    let n = cache.n;
    if n == 0 {
        return;
    }
    let p = &model.params;
    let ds = p.d_s();
    let h2 = 2 * ds;
    let mut d_pooled = d_out.to_vec();
    if let Some(mask) = &cache.out_mask {
        d_pooled.iter_mut().zip(mask).for_each(|(d, s)| *d *= s);
    }

    // word attention
    let mut d_hs = Mat::zeros(n, h2);
    let mut d_a = vec![0.0; n];
    for t in 0..n {
        axpy(cache.attn[t], &d_pooled, d_hs.row_mut(t));
        d_a[t] = dot(&d_pooled, cache.hs.row(t));
    }
    let mean: f64 = (0..n).map(|t| cache.attn[t] * d_a[t]).sum();
    let mut d_pre = vec![0.0; p.att_w.rows];
    for t in 0..n {
        let d_score = cache.attn[t] * (d_a[t] - mean);
        let mt = cache.m.row(t);
        axpy(d_score, mt, &mut grad.params.att_v.data);
        for (dp, (&v, &mv)) in d_pre.iter_mut().zip(p.att_v.data.iter().zip(mt)) {
            *dp = d_score * v * (1.0 - mv * mv);
        }
        grad.params.att_w.add_outer(&d_pre, cache.hs.row(t));
        p.att_w.matvec_t_acc(&d_pre, d_hs.row_mut(t));
    }

    // recurrences
    let mut dh_f = Mat::zeros(n, ds);
    let mut dh_b = Mat::zeros(n, ds);
    for t in 0..n {
        dh_f.row_mut(t).copy_from_slice(&d_hs.row(t)[..ds]);
        dh_b.row_mut(t).copy_from_slice(&d_hs.row(t)[ds..]);
    }
    let mut dxs = Mat::zeros(n, cache.xs.cols);
    {
        let g = &mut grad.params;
        lstm_backward(&cache.fwd, &p.fwd_w, &p.fwd_u, &cache.xs, &dh_f, &mut g.fwd_w, &mut g.fwd_u, &mut g.fwd_b, &mut dxs);
        lstm_backward(&cache.bwd, &p.bwd_w, &p.bwd_u, &cache.xs, &dh_b, &mut g.bwd_w, &mut g.bwd_u, &mut g.bwd_b, &mut dxs);
    }
    if let Some(mask) = &cache.in_mask {
        dxs.data.iter_mut().zip(mask).for_each(|(d, s)| *d *= s);
    }

    // embeddings
    if cache.tokens.len() != n {
        return;
    }
    let d_w = model.words.vectors.cols;
    let half = model.positions.head.cols;
    for t in 0..n {
        let row = dxs.row(t);
        let word_row = model.words.row_of[cache.tokens[t] as usize];
        axpy(1.0, &row[..d_w], grad.words.vectors.row_mut(word_row));
        let hi = model.positions.row_index(t as i64 - cache.head_pos as i64);
        let ti = model.positions.row_index(t as i64 - cache.tail_pos as i64);
        axpy(1.0, &row[d_w..d_w + half], grad.positions.head.row_mut(hi));
        axpy(1.0, &row[d_w + half..], grad.positions.tail.row_mut(ti));
    }
    model.mask_frozen(grad);
}

// ---------------------------------------------------------------------------
// Sentence attention and output

/// Which relation query drives sentence attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    /// The gold relation's query; NA falls back to the mean query.
    Gold(usize),
    /// Mean of all relation queries, for inference.
    Mean,
}

fn query_vector(params: &EncoderParams, mode: QueryMode) -> Vec<f64> {
    match mode {
        QueryMode::Gold(r) if r < params.queries.rows => params.queries.row(r).to_vec(),
        _ => params.mean_query(),
    }
}

/// Selective attention: `b = softmax_i(x_i . diag(A) . q)`, returns
/// `(sum_i b_i x_i, b)`.
pub fn attend_sentences(sentence_vectors: &Mat, params: &EncoderParams, mode: QueryMode) -> (Vec<f64>, Vec<f64>) {
    let q = query_vector(params, mode);
    attend_with_query(sentence_vectors, &params.sent_diag.data, &q)
}

fn attend_with_query(xs: &Mat, diag: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(xs.rows >= 1, "a bag needs at least one sentence");
    let aq: Vec<f64> = diag.iter().zip(q).map(|(a, b)| a * b).collect();
    let scores: Vec<f64> = (0..xs.rows).map(|i| dot(xs.row(i), &aq)).collect();
    let weights = softmax(&scores);
    let mut s = vec![0.0; xs.cols];
    for i in 0..xs.rows {
        axpy(weights[i], xs.row(i), &mut s);
    }
    (s, weights)
}

pub fn output_logits(s_l: &[f64], params: &EncoderParams) -> Vec<f64> {
    let mut logits = params.out_b.data.clone();
    params.out_w.matvec_acc(s_l, &mut logits);
    logits
}

/// `softmax(W_out s_L + b_out)` over the relations plus NA.
pub fn language_distribution(s_l: &[f64], params: &EncoderParams) -> RelationDistribution {
    RelationDistribution::from_logits(&output_logits(s_l, params))
}

/// Forward state of one bag.
#[derive(Debug, Clone)]
pub struct BagCache {
    pub sentences: Vec<SentenceCache>,
    xs: Mat,
    query: Vec<f64>,
    mode: QueryMode,
    pub sentence_weights: Vec<f64>,
    pub s_l: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn forward_bag<R: Rng + ?Sized>(
    bag: &Bag,
    model: &LanguageModel,
    mode: QueryMode,
    dropout_on: bool,
    rng: &mut R,
) -> BagCache {
    let sentences: Vec<SentenceCache> = bag
        .sentences
        .iter()
        .map(|s| encode_sentence_cached(s, model, dropout_on, rng))
        .collect();
    let h2 = 2 * model.params.d_s();
    let mut xs = Mat::zeros(sentences.len(), h2);
    for (i, c) in sentences.iter().enumerate() {
        xs.row_mut(i).copy_from_slice(&c.output);
    }
    let query = query_vector(&model.params, mode);
    let (s_l, weights) = attend_with_query(&xs, &model.params.sent_diag.data, &query);
    let probs = language_distribution(&s_l, &model.params).probs;
    BagCache {
        sentences,
        xs,
        query,
        mode,
        sentence_weights: weights,
        s_l,
        probs,
    }
}

/// Backpropagates dLoss/dlogits through the whole bag.
pub fn backward_bag(cache: &BagCache, d_logits: &[f64], model: &LanguageModel, grad: &mut LanguageModel) {
    let p = &model.params;
    grad.params.out_w.add_outer(d_logits, &cache.s_l);
    axpy(1.0, d_logits, &mut grad.params.out_b.data);
    let mut d_s = vec![0.0; cache.s_l.len()];
    p.out_w.matvec_t_acc(d_logits, &mut d_s);

    let t = cache.xs.rows;
    let w = &cache.sentence_weights;
    let mut d_x = Mat::zeros(t, cache.xs.cols);
    let d_b: Vec<f64> = (0..t).map(|i| dot(&d_s, cache.xs.row(i))).collect();
    let mean: f64 = (0..t).map(|i| w[i] * d_b[i]).sum();
    let diag = &p.sent_diag.data;
    let mut d_q = vec![0.0; cache.query.len()];
    for i in 0..t {
        axpy(w[i], &d_s, d_x.row_mut(i));
        let d_e = w[i] * (d_b[i] - mean);
        if d_e == 0.0 {
            continue;
        }
        let xi = cache.xs.row(i);
        let dxi = d_x.row_mut(i);
        for k in 0..xi.len() {
            dxi[k] += d_e * diag[k] * cache.query[k];
            grad.params.sent_diag.data[k] += d_e * xi[k] * cache.query[k];
            d_q[k] += d_e * xi[k] * diag[k];
        }
    }
    match cache.mode {
        QueryMode::Gold(r) if r < p.queries.rows => axpy(1.0, &d_q, grad.params.queries.row_mut(r)),
        _ => {
            let share = 1.0 / p.queries.rows as f64;
            for r in 0..p.queries.rows {
                axpy(share, &d_q, grad.params.queries.row_mut(r));
            }
        }
    }
    for (i, sc) in cache.sentences.iter().enumerate() {
        backward_sentence(sc, d_x.row(i), model, grad);
    }
}

/// Inference-time language distribution: no dropout, mean query. Identical
/// sentences inside a bag are encoded once.
pub fn bag_distribution(bag: &Bag, model: &LanguageModel) -> RelationDistribution {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let h2 = 2 * model.params.d_s();
    let mut xs = Mat::zeros(bag.sentences.len(), h2);
    let mut memo: Vec<(&SentenceMention, Vec<f64>)> = Vec::new();
    for (i, s) in bag.sentences.iter().enumerate() {
        let v = match memo.iter().find(|(m, _)| *m == s) {
            Some((_, v)) => v.clone(),
            None => {
                let v = encode_sentence_cached(s, model, false, &mut rng).output;
                memo.push((s, v.clone()));
                v
            }
        };
        xs.row_mut(i).copy_from_slice(&v);
    }
    let (s_l, _) = attend_sentences(&xs, &model.params, QueryMode::Mean);
    language_distribution(&s_l, &model.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> EncoderDims {
        EncoderDims {
            d_w: 6,
            d_p: 4,
            d_s: 5,
            l: 6,
            n_relations: 3,
        }
    }

    fn sentence(tokens: &[u32], head_pos: usize, tail_pos: usize, l: usize) -> SentenceMention {
        crate::supervision::normalize_sentence(tokens, head_pos, tail_pos, l).unwrap()
    }

    fn model(seed: u64) -> LanguageModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LanguageModel::random(&dims(), 12, 0.5, &mut rng)
    }

    #[test]
    fn embedding_rows_and_offsets() {
        let m = model(1);
        let s = SentenceMention {
            tokens: vec![4, PAD_ID],
            head_pos: 0,
            tail_pos: 1,
            pad_mask: vec![false, true],
        };
        let mut pos = m.positions.clone();
        pos.l = 2;
        pos.head = Mat::normal(3, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        pos.tail = Mat::normal(3, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let e = embed_tokens(&s, &m.words, &pos);
        assert_eq!((e.rows, e.cols), (2, 10));
        let row0 = e.row(0);
        assert_eq!(&row0[..6], m.words.vectors.row(4));
        // offsets (0, -1) map to rows 1 and 0
        assert_eq!(&row0[6..8], pos.head.row(1));
        assert_eq!(&row0[8..], pos.tail.row(0));
        assert!(e.row(1)[..6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_pad_sentence_has_zero_word_part() {
        let m = model(1);
        let s = SentenceMention {
            tokens: vec![PAD_ID; 3],
            head_pos: 0,
            tail_pos: 2,
            pad_mask: vec![true; 3],
        };
        let e = embed_tokens(&s, &m.words, &m.positions);
        for t in 0..3 {
            assert!(e.row(t)[..6].iter().all(|&v| v == 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = encode_sentence(&e, &s.pad_mask, &m.params, false, &mut rng);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn input_width_matches_dims() {
        let d = EncoderDims {
            d_w: 16,
            d_p: 24,
            d_s: 4,
            l: 5,
            n_relations: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = LanguageModel::random(&d, 8, 0.1, &mut rng);
        let s = sentence(&[3, 4, 5], 0, 2, 5);
        assert_eq!(embed_tokens(&s, &m.words, &m.positions).cols, 40);
        assert!(EncoderDims { d_p: 25, ..d }.validate().is_err());
    }

    #[test]
    fn singleton_token_gets_full_attention() {
        let m = model(2);
        let s = SentenceMention {
            tokens: vec![3, PAD_ID, PAD_ID],
            head_pos: 0,
            tail_pos: 1,
            pad_mask: vec![false, true, true],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = encode_sentence_cached(&s, &m, false, &mut rng);
        assert_eq!(c.attention(), &[1.0]);
    }

    #[test]
    fn encoding_without_dropout_is_deterministic() {
        let m = model(3);
        let s = sentence(&[2, 3, 4, 5], 1, 3, 6);
        let e = embed_tokens(&s, &m.words, &m.positions);
        let a = encode_sentence(&e, &s.pad_mask, &m.params, false, &mut ChaCha8Rng::seed_from_u64(1));
        let b = encode_sentence(&e, &s.pad_mask, &m.params, false, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        let mut dropped = m.params.clone();
        dropped.keep_input = 0.5;
        dropped.keep_output = 0.5;
        let c = encode_sentence(&e, &s.pad_mask, &dropped, true, &mut ChaCha8Rng::seed_from_u64(1));
        assert_ne!(a, c);
    }

    #[test]
    fn pad_tokens_do_not_change_the_encoding() {
        let m = model(4);
        let short = sentence(&[2, 3, 4], 0, 2, 3);
        let padded = sentence(&[2, 3, 4], 0, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = encode_sentence_cached(&short, &m, false, &mut rng).output;
        let b = encode_sentence_cached(&padded, &m, false, &mut rng).output;
        assert_eq!(a, b);
    }

    #[test]
    fn sentence_attention_contracts() {
        let m = model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = Mat::normal(1, 10, 1.0, &mut rng);
        let (s, w) = attend_sentences(&xs, &m.params, QueryMode::Gold(1));
        assert_eq!(s, xs.row(0));
        assert_eq!(w, vec![1.0]);

        let mut same = Mat::zeros(3, 10);
        for i in 0..3 {
            same.row_mut(i).copy_from_slice(xs.row(0));
        }
        let (s, _) = attend_sentences(&same, &m.params, QueryMode::Mean);
        for (a, b) in s.iter().zip(xs.row(0)) {
            assert!((a - b).abs() < 1e-15);
        }

        let xs = Mat::normal(4, 10, 1.0, &mut rng);
        let perm = [2, 0, 3, 1];
        let mut shuffled = Mat::zeros(4, 10);
        for (i, &p) in perm.iter().enumerate() {
            shuffled.row_mut(i).copy_from_slice(xs.row(p));
        }
        let (s1, w1) = attend_sentences(&xs, &m.params, QueryMode::Gold(0));
        let (s2, w2) = attend_sentences(&shuffled, &m.params, QueryMode::Gold(0));
        for (i, &p) in perm.iter().enumerate() {
            assert!((w2[i] - w1[p]).abs() < 1e-15);
        }
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_distribution_cases() {
        let mut p = model(6).params;
        p.out_w.fill(0.0);
        p.out_b.fill(0.0);
        let d = language_distribution(&[1.0; 10], &p);
        assert!(d.probs.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        p.out_w = Mat::zeros(2, 10);
        p.out_b = Mat::from_vec(1, 2, vec![3f64.ln(), 0.0]);
        let d = language_distribution(&[0.3; 10], &p);
        assert!((d.probs[0] - 0.75).abs() < 1e-12 && (d.probs[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pretrained_vectors_freeze_known_tokens() {
        let corpus = vec![crate::supervision::RawSentence {
            head: "a".into(),
            tail: "b".into(),
            tokens: vec!["a".into(), "likes".into(), "b".into()],
        }];
        let vocab = Vocab::from_corpus(&corpus);
        let text = "likes 1 2\na 3 4\nzzz 5 6\n";
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = WordEmbeddingTable::from_pretrained_text(text, &vocab, 2, 0.1, &mut rng).unwrap();
        assert!(t.frozen);
        assert_eq!(t.lookup(vocab.id("likes")), &[1.0, 2.0]);
        assert_eq!(t.lookup(vocab.id("a")), &[3.0, 4.0]);
        assert_eq!(t.row_of[vocab.id("b") as usize], UNK_ID as usize);
        assert!(t.is_trainable_row(UNK_ID as usize));
        assert!(!t.is_trainable_row(vocab.id("likes") as usize));
        assert!(!t.is_trainable_row(PAD_ID as usize));
        assert!(WordEmbeddingTable::from_pretrained_text("x 1\n", &vocab, 2, 0.1, &mut rng).is_err());
    }
}
