//! The three losses, the joint objective, and the training loop with
//! separate Adam learning rates for the language and knowledge parameters.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::config::KvFile;
use crate::encoder::{backward_bag, forward_bag, EncoderDims, LanguageModel, QueryMode, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::kbe::{pretrain, ComplexEmbeddingTable, KbeHyper};
use crate::linalg::{argmax, softmax, Mat, ParamSet};
use crate::supervision::{Bag, LabeledDataset};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Language loss only.
    Base,
    /// Language and knowledge losses.
    Naive,
    /// Language, knowledge and dissimilarity losses.
    Full,
    /// Independently trained models combined only at inference.
    Weston,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Naive, Variant::Full, Variant::Weston];

    pub fn uses_knowledge_loss(self) -> bool {
        matches!(self, Variant::Naive | Variant::Full)
    }

    pub fn uses_dissimilarity(self) -> bool {
        self == Variant::Full
    }

    /// Whether a pretrained KB embedding must exist before training.
    pub fn needs_kbe(self) -> bool {
        self != Variant::Base
    }

    fn code(self) -> u8 {
        match self {
            Variant::Base => 0,
            Variant::Naive => 1,
            Variant::Full => 2,
            Variant::Weston => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.code() == c)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Naive => "naive",
            Variant::Full => "full",
            Variant::Weston => "weston",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "naive" => Ok(Variant::Naive),
            "full" => Ok(Variant::Full),
            "weston" => Ok(Variant::Weston),
            other => Err(Error::Config(format!("unknown variant {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub lr1: f64,
    pub lr2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub t: usize,
    pub l: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr1: 5e-4,
            lr2: 1e-5,
            lambda: 0.0003,
            alpha: 0.6,
            t: 5,
            l: 30,
            epochs: 30,
            batch_size: 50,
            seed: 1,
            variant: Variant::Full,
        }
    }
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 10] = [
        "lr1",
        "lr2",
        "lambda",
        "alpha",
        "T",
        "L",
        "epochs",
        "batch_size",
        "seed",
        "variant",
    ];

    /// Reads the training keys present in `kv` on top of the defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = TrainingConfig::default();
        kv.read_into("lr1", &mut c.lr1)?;
        kv.read_into("lr2", &mut c.lr2)?;
        kv.read_into("lambda", &mut c.lambda)?;
        kv.read_into("alpha", &mut c.alpha)?;
        kv.read_into("T", &mut c.t)?;
        kv.read_into("L", &mut c.l)?;
        kv.read_into("epochs", &mut c.epochs)?;
        kv.read_into("batch_size", &mut c.batch_size)?;
        kv.read_into("seed", &mut c.seed)?;
        kv.read_into("variant", &mut c.variant)?;
        c.validate()?;
        Ok(c)
    }

    /// Parses a training config file; every key must be a training key.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(&Self::KEYS)?;
        Self::from_kv(&kv)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("lr1", self.lr1);
        kv.set("lr2", self.lr2);
        kv.set("lambda", self.lambda);
        kv.set("alpha", self.alpha);
        kv.set("T", self.t);
        kv.set("L", self.l);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("seed", self.seed);
        kv.set("variant", self.variant);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let rates_ok = [self.lr1, self.lr2, self.lambda]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !rates_ok {
            return Err(Error::Config("learning rates and lambda must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.t == 0 || self.l == 0 || self.batch_size == 0 {
            return Err(Error::Config("T, L and batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Combination weight used at inference: the base variant has no
    /// knowledge side.
    pub fn inference_alpha(&self) -> f64 {
        if self.variant == Variant::Base {
            1.0
        } else {
            self.alpha
        }
    }
}

/// Language-side architecture knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_w: usize,
    pub d_p: usize,
    pub d_s: usize,
    pub keep_input: f64,
    pub keep_output: f64,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 16,
            d_p: 8,
            d_s: 32,
            keep_input: 0.9,
            keep_output: 0.7,
            init_scale: 0.1,
        }
    }
}

/// Both parameter sets plus their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub language: LanguageModel,
    pub knowledge: ComplexEmbeddingTable,
    pub adam_language: Adam<LanguageModel>,
    pub adam_knowledge: Adam<ComplexEmbeddingTable>,
}

impl ModelState {
    pub fn new(language: LanguageModel, knowledge: ComplexEmbeddingTable) -> Self {
        ModelState {
            adam_language: Adam::new(language.zeros_like(), AdamConfig::default()),
            adam_knowledge: Adam::new(knowledge.zeros_like(), AdamConfig::default()),
            language,
            knowledge,
        }
    }

    /// Fresh language parameters for `dataset` next to a given knowledge table.
    pub fn init(
        dataset: &LabeledDataset,
        knowledge: ComplexEmbeddingTable,
        model: &ModelConfig,
        words: Option<WordEmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        if knowledge.num_entities() != dataset.num_entities
            || knowledge.num_relation_rows() != dataset.num_relations + 1
        {
            return Err(Error::IndexSpace(format!(
                "dataset has {} entities / {} relations, knowledge table has {} / {}",
                dataset.num_entities,
                dataset.num_relations + 1,
                knowledge.num_entities(),
                knowledge.num_relation_rows()
            )));
        }
        let dims = EncoderDims {
            d_w: model.d_w,
            d_p: model.d_p,
            d_s: model.d_s,
            l: dataset.l,
            n_relations: dataset.num_relations,
        };
        dims.validate()?;
        let mut rng = init_rng(seed);
        let mut language = LanguageModel::random(&dims, dataset.vocab.len(), model.init_scale, &mut rng);
        if let Some(w) = words {
            if w.vectors.rows != dataset.vocab.len() || w.vectors.cols != model.d_w {
                return Err(Error::IndexSpace("word table does not match vocabulary".into()));
            }
            language.words = w;
        }
        language.params.keep_input = model.keep_input;
        language.params.keep_output = model.keep_output;
        Ok(ModelState::new(language, knowledge))
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Per-batch objective values. `total` is the optimized objective of the
/// variant; the individual terms are always reported.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub j_l: f64,
    pub j_g: f64,
    pub j_d: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub language: LanguageModel,
    pub knowledge: ComplexEmbeddingTable,
}

impl Gradients {
    pub fn zeros(state: &ModelState) -> Self {
        Gradients {
            language: state.language.zeros_like(),
            knowledge: state.knowledge.zeros_like(),
        }
    }
}

#[inline]
fn clamped_nll(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Argmax of the knowledge-side distribution, smallest id on ties.
pub fn kb_prediction(knowledge: &ComplexEmbeddingTable, head: usize, tail: usize) -> usize {
    argmax(&softmax(&knowledge.relation_scores(head, tail)))
}

/// Shared forward/backward over the language side for J_L and/or J_D.
/// Returns `(J_L, J_D, gradient of the selected terms)`.
fn language_terms<R: Rng + ?Sized>(
    batch: &[Bag],
    state: &ModelState,
    with_l: bool,
    with_d: bool,
    dropout: Option<&mut R>,
) -> (f64, f64, LanguageModel) {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len() as f64;
    let model = &state.language;
    let mut grad = model.zeros_like();
    let (mut j_l, mut j_d) = (0.0, 0.0);
    let mut noop = rand::rngs::mock::StepRng::new(0, 0);
    let mut dropout = dropout;
    for bag in batch {
        let cache = match dropout.as_deref_mut() {
            Some(rng) => forward_bag(bag, model, QueryMode::Gold(bag.rel), true, rng),
            None => forward_bag(bag, model, QueryMode::Gold(bag.rel), false, &mut noop),
        };
        let r_star = kb_prediction(&state.knowledge, bag.head, bag.tail);
        j_l += clamped_nll(cache.probs[bag.rel]) / n;
        j_d += clamped_nll(cache.probs[r_star]) / n;

        let mut d_logits = vec![0.0; cache.probs.len()];
        let mut add_ce = |target: usize| {
            if cache.probs[target] >= PROB_FLOOR {
                for (k, d) in d_logits.iter_mut().enumerate() {
                    *d += (cache.probs[k] - if k == target { 1.0 } else { 0.0 }) / n;
                }
            }
        };
        if with_l {
            add_ce(bag.rel);
        }
        if with_d {
            add_ce(r_star);
        }
        if with_l || with_d {
            backward_bag(&cache, &d_logits, model, &mut grad);
        }
    }
    (j_l, j_d, grad)
}

/// `J_L = -(1/N) sum_i log p(r_i | S_i)` and its gradient over the language
/// parameters. Dropout is applied when an RNG is supplied.
pub fn loss_language<R: Rng + ?Sized>(
    batch: &[Bag],
    state: &ModelState,
    dropout: Option<&mut R>,
) -> (f64, LanguageModel) {
    let (j_l, _, g) = language_terms(batch, state, true, false, dropout);
    (j_l, g)
}

/// `J_G = -(1/N) sum_i log p(r_i | h_i, t_i)` and its gradient over the
/// knowledge table.
pub fn loss_knowledge(batch: &[Bag], state: &ModelState) -> (f64, ComplexEmbeddingTable) {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len() as f64;
    let table = &state.knowledge;
    let mut grad = table.zeros_like();
    let mut j_g = 0.0;
    for bag in batch {
        let probs = softmax(&table.relation_scores(bag.head, bag.tail));
        j_g += clamped_nll(probs[bag.rel]) / n;
        if probs[bag.rel] < PROB_FLOOR {
            continue;
        }
        for (r, &p) in probs.iter().enumerate() {
            let coef = (p - if r == bag.rel { 1.0 } else { 0.0 }) / n;
            table.accumulate_score_grad(&mut grad, coef, bag.head, r, bag.tail);
        }
    }
    (j_g, grad)
}

/// `J_D = -(1/N) sum_i log p(r*_i | S_i)` with `r*_i` the knowledge-side
/// argmax, held constant. The knowledge gradient is returned and is always
/// zero.
pub fn loss_dissimilarity<R: Rng + ?Sized>(
    batch: &[Bag],
    state: &ModelState,
    dropout: Option<&mut R>,
) -> (f64, LanguageModel, ComplexEmbeddingTable) {
    let (_, j_d, g) = language_terms(batch, state, false, true, dropout);
    (j_d, g, state.knowledge.zeros_like())
}

/// The variant's objective plus `lambda * ||theta_reg||^2`, with gradients.
///
/// Knowledge parameters are part of `theta_reg` only for variants that train
/// them jointly.
pub fn joint_loss<R: Rng + ?Sized>(
    batch: &[Bag],
    state: &ModelState,
    config: &TrainingConfig,
    dropout: Option<&mut R>,
) -> (LossTerms, Gradients) {
    let v = config.variant;
    let (j_l, j_d, mut g_lang) = language_terms(batch, state, true, v.uses_dissimilarity(), dropout);
    let (j_g, mut g_kb) = if v.uses_knowledge_loss() {
        loss_knowledge(batch, state)
    } else {
        let probs_nll: f64 = batch
            .iter()
            .map(|b| clamped_nll(softmax(&state.knowledge.relation_scores(b.head, b.tail))[b.rel]))
            .sum::<f64>()
            / batch.len() as f64;
        (probs_nll, state.knowledge.zeros_like())
    };

    let mut reg = state.language.reg_sum_sq();
    state.language.add_reg_grad(&mut g_lang, config.lambda);
    if v.uses_knowledge_loss() {
        reg += state.knowledge.tensors().iter().map(|m| m.sum_sq()).sum::<f64>();
        for (g, p) in g_kb.tensors_mut().into_iter().zip(state.knowledge.tensors()) {
            crate::linalg::axpy(2.0 * config.lambda, &p.data, &mut g.data);
        }
    }
    let reg = config.lambda * reg;

    let mut total = j_l + reg;
    if v.uses_knowledge_loss() {
        total += j_g;
    }
    if v.uses_dissimilarity() {
        total += j_d;
    }
    (
        LossTerms {
            j_l,
            j_g,
            j_d,
            reg,
            total,
        },
        Gradients {
            language: g_lang,
            knowledge: g_kb,
        },
    )
}

/// Mean per-batch losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub j_l: f64,
    pub j_g: f64,
    pub j_d: f64,
    pub j: f64,
}

pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,J_L,J_G,J_D,J\n");
    for e in log {
        out.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.j_l, e.j_g, e.j_d, e.j));
    }
    out
}

fn check_index_space(dataset: &LabeledDataset, state: &ModelState) -> Result<()> {
    if state.knowledge.num_entities() != dataset.num_entities
        || state.knowledge.num_relation_rows() != dataset.num_relations + 1
        || state.language.words.row_of.len() != dataset.vocab.len()
        || state.language.n_outputs() != dataset.num_relations + 1
    {
        return Err(Error::IndexSpace("model and dataset disagree on sizes".into()));
    }
    for b in &dataset.bags {
        if b.head >= dataset.num_entities || b.tail >= dataset.num_entities || b.rel > dataset.num_relations {
            return Err(Error::IndexSpace("bag references ids outside the dataset".into()));
        }
    }
    Ok(())
}

/// Runs `config.epochs` passes of shuffled mini-batch Adam over `state`.
/// Language parameters use `lr1`; knowledge parameters use `lr2` and are only
/// updated by the variants that train them jointly.
pub fn train_state(
    mut state: ModelState,
    dataset: &LabeledDataset,
    config: &TrainingConfig,
) -> Result<(ModelState, Vec<EpochLoss>)> {
    config.validate()?;
    check_index_space(dataset, &state)?;
    let mut rng = train_rng(config.seed);
    let mut order: Vec<usize> = (0..dataset.bags.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    if dataset.bags.is_empty() {
        return Ok((state, log));
    }
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<Bag> = idx.iter().map(|&i| dataset.bags[i].clone()).collect();
            let (terms, grads) = joint_loss(&batch, &state, config, Some(&mut rng));
            if !terms.total.is_finite() || !grads.language.all_finite() || !grads.knowledge.all_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
            }
            state.adam_language.update(&mut state.language, &grads.language, config.lr1);
            if config.variant.uses_knowledge_loss() {
                state.adam_knowledge.update(&mut state.knowledge, &grads.knowledge, config.lr2);
            }
            sums[0] += terms.j_l;
            sums[1] += terms.j_g;
            sums[2] += terms.j_d;
            sums[3] += terms.total;
            batches += 1;
        }
        let b = batches as f64;
        let e = EpochLoss {
            epoch,
            j_l: sums[0] / b,
            j_g: sums[1] / b,
            j_d: sums[2] / b,
            j: sums[3] / b,
        };
        info!(
            "{} epoch {epoch}: J_L={:.4} J_G={:.4} J_D={:.4} J={:.4}",
            config.variant, e.j_l, e.j_g, e.j_d, e.j
        );
        log.push(e);
    }
    Ok((state, log))
}

/// Pretrains the knowledge side on `kb` (skipped for the base variant, which
/// keeps a random table), initializes the language side, and trains.
pub fn train(
    dataset: &LabeledDataset,
    kb: &KnowledgeBase,
    config: &TrainingConfig,
    model: &ModelConfig,
    kbe: &KbeHyper,
) -> Result<(ModelState, Vec<EpochLoss>)> {
    if kb.num_entities() != dataset.num_entities || kb.num_relations() != dataset.num_relations {
        return Err(Error::IndexSpace(format!(
            "KB has {} entities / {} relations, dataset has {} / {}",
            kb.num_entities(),
            kb.num_relations(),
            dataset.num_entities,
            dataset.num_relations
        )));
    }
    let hyper = if config.variant.needs_kbe() {
        *kbe
    } else {
        KbeHyper {
            pretrain_epochs: 0,
            ..*kbe
        }
    };
    let knowledge = pretrain(kb, &hyper, config.seed)?;
    let state = ModelState::init(dataset, knowledge, model, None, config.seed)?;
    train_state(state, dataset, config)
}

// ---------------------------------------------------------------------------
// Model checkpoint: magic, u32 version, u8 variant, language tensors, word
// lookup, then the knowledge table in its own checkpoint format.

const MODEL_MAGIC: &[u8; 4] = b"HRRM";
const MODEL_VERSION: u32 = 1;

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

impl ModelState {
    pub fn write_checkpoint<W: Write>(&self, variant: Variant, mut w: W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&[variant.code()])?;
        let p = &self.language.params;
        write_u64(&mut w, p.keep_input.to_bits())?;
        write_u64(&mut w, p.keep_output.to_bits())?;
        write_u64(&mut w, self.language.positions.l as u64)?;
        w.write_all(&[self.language.words.frozen as u8])?;
        write_u64(&mut w, self.language.words.row_of.len() as u64)?;
        for &r in &self.language.words.row_of {
            write_u64(&mut w, r as u64)?;
        }
        let tensors = self.language.tensors();
        write_u64(&mut w, tensors.len() as u64)?;
        for m in tensors {
            write_u64(&mut w, m.rows as u64)?;
            write_u64(&mut w, m.cols as u64)?;
            for v in &m.data {
                write_u64(&mut w, v.to_bits())?;
            }
        }
        self.knowledge.write_to(w)
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Variant, ModelState)> {
        let bad = |msg: &str| Error::format("<model checkpoint>", msg);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != MODEL_VERSION {
            return Err(bad("unsupported version"));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let variant = Variant::from_code(b1[0]).ok_or_else(|| bad("unknown variant"))?;
        let keep_input = read_f64(&mut r)?;
        let keep_output = read_f64(&mut r)?;
        let l = read_u64(&mut r)? as usize;
        r.read_exact(&mut b1)?;
        let frozen = b1[0] != 0;
        let n_rows = read_u64(&mut r)? as usize;
        let row_of = (0..n_rows)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_tensors = read_u64(&mut r)? as usize;
        if n_tensors != 15 {
            return Err(bad("unexpected tensor count"));
        }
        let mut mats = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let data = (0..rows * cols).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            mats.push(Mat::from_vec(rows, cols, data));
        }
        let knowledge = ComplexEmbeddingTable::read_from(r)?;
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("tensor count checked");
        let words = WordEmbeddingTable {
            vectors: next(),
            frozen,
            row_of,
        };
        let positions = crate::encoder::PositionEmbeddingTable {
            head: next(),
            tail: next(),
            l,
        };
        let params = crate::encoder::EncoderParams {
            fwd_w: next(),
            fwd_u: next(),
            fwd_b: next(),
            bwd_w: next(),
            bwd_u: next(),
            bwd_b: next(),
            att_w: next(),
            att_v: next(),
            sent_diag: next(),
            queries: next(),
            out_w: next(),
            out_b: next(),
            keep_input,
            keep_output,
        };
        let language = LanguageModel {
            words,
            positions,
            params,
        };
        Ok((variant, ModelState::new(language, knowledge)))
    }

    pub fn save_checkpoint(&self, variant: Variant, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_checkpoint(variant, &mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Variant, ModelState)> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let bytes = fs::read(path)?;
        Self::read_checkpoint(&bytes[..]).map_err(|e| match e {
            Error::Format { msg, .. } => Error::format(path, msg),
            Error::Io(io) => Error::format(path, io.to_string()),
            other => other,
        })
    }
}
