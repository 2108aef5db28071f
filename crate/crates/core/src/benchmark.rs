//! End-to-end synthetic benchmark: KB, corpus, train/test split and the
//! pretraining KB with test pairs withheld.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KvFile;
use crate::error::{Error, Result};
use crate::kb::{generate_synthetic_kb, unordered, KnowledgeBase};
use crate::supervision::{
    align_corpus, build_test_bags, generate_synthetic_corpus, group_corpus, subsample_na, test_sentences,
    AlignStats, CorpusParams, LabeledDataset, RawSentence, Templates, Vocab,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    /// Upper bound on training bags; fewer are produced when the corpus is small.
    pub train_bags: usize,
    /// Upper bound on test bags.
    pub test_bags: usize,
    pub t: usize,
    pub l: usize,
    /// Fraction of NA bags among the aligned groups.
    pub na_rate: f64,
    /// Fraction of corpus entity pairs held out for testing.
    pub test_fraction: f64,
    pub max_sentences_per_fact: usize,
    pub na_pairs: usize,
    pub implicit_rate: f64,
    pub mislabel_rate: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            entities: 200,
            relations: 12,
            triples: 3000,
            train_bags: 4000,
            test_bags: 800,
            t: 5,
            l: 30,
            na_rate: 0.3,
            test_fraction: 0.2,
            max_sentences_per_fact: 3,
            na_pairs: 1500,
            implicit_rate: 0.0,
            mislabel_rate: 0.0,
            seed: 1,
        }
    }
}

impl BenchmarkConfig {
    pub const KEYS: [&'static str; 14] = [
        "entities",
        "relations",
        "triples",
        "train_bags",
        "test_bags",
        "T",
        "L",
        "na_rate",
        "test_fraction",
        "max_sentences_per_fact",
        "na_pairs",
        "implicit_rate",
        "mislabel_rate",
        "seed",
    ];

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = BenchmarkConfig::default();
        kv.read_into("entities", &mut c.entities)?;
        kv.read_into("relations", &mut c.relations)?;
        kv.read_into("triples", &mut c.triples)?;
        kv.read_into("train_bags", &mut c.train_bags)?;
        kv.read_into("test_bags", &mut c.test_bags)?;
        kv.read_into("T", &mut c.t)?;
        kv.read_into("L", &mut c.l)?;
        kv.read_into("na_rate", &mut c.na_rate)?;
        kv.read_into("test_fraction", &mut c.test_fraction)?;
        kv.read_into("max_sentences_per_fact", &mut c.max_sentences_per_fact)?;
        kv.read_into("na_pairs", &mut c.na_pairs)?;
        kv.read_into("implicit_rate", &mut c.implicit_rate)?;
        kv.read_into("mislabel_rate", &mut c.mislabel_rate)?;
        kv.read_into("seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("na_rate", self.na_rate),
            ("test_fraction", self.test_fraction),
            ("implicit_rate", self.implicit_rate),
            ("mislabel_rate", self.mislabel_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.t == 0 || self.l < 2 || self.max_sentences_per_fact == 0 {
            return Err(Error::Config("T, L and max_sentences_per_fact must be positive (L >= 2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    /// The complete KB; also the ground truth for held-out evaluation.
    pub kb: KnowledgeBase,
    pub corpus: Vec<RawSentence>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Unordered entity pairs reserved for testing, sorted.
    pub test_pairs: Vec<(usize, usize)>,
    pub train_stats: AlignStats,
    pub test_stats: AlignStats,
}

impl Benchmark {
    /// The KB used for embedding pretraining: every triple on a test pair removed.
    pub fn pretrain_kb(&self) -> KnowledgeBase {
        self.kb.remove_test_pairs(&self.test_pairs)
    }
}

fn split_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    rng
}

pub fn generate_benchmark(config: &BenchmarkConfig) -> Result<Benchmark> {
    config.validate()?;
    // Round-trip through the file format so ids match what later commands load.
    let generated = generate_synthetic_kb(config.entities, config.relations, config.triples, config.seed)?;
    let kb = KnowledgeBase::parse_tsv(&generated.to_tsv())?;
    let templates = Templates::synthetic(kb.num_relations());
    let corpus = generate_synthetic_corpus(
        &kb,
        &templates,
        &CorpusParams {
            max_sentences_per_fact: config.max_sentences_per_fact,
            na_pairs: config.na_pairs,
            implicit_rate: config.implicit_rate,
            mislabel_rate: config.mislabel_rate,
            seed: config.seed.wrapping_add(1),
        },
    )?;
    let vocab = Vocab::from_corpus(&corpus);
    let mut rng = split_rng(config.seed);

    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for s in &corpus {
        let h = kb.entity_id(&s.head).ok_or_else(|| Error::UnknownEntity(s.head.clone()))?;
        let t = kb.entity_id(&s.tail).ok_or_else(|| Error::UnknownEntity(s.tail.clone()))?;
        let key = unordered(h, t);
        if seen.insert(key) {
            pairs.push(key);
        }
    }
    pairs.shuffle(&mut rng);
    let n_test = (pairs.len() as f64 * config.test_fraction).round() as usize;
    let mut test_pairs = pairs[..n_test].to_vec();
    test_pairs.sort_unstable();
    let test_set: HashSet<(usize, usize)> = test_pairs.iter().copied().collect();
    let pair_of = |s: &RawSentence| {
        unordered(
            kb.entity_id(&s.head).expect("checked above"),
            kb.entity_id(&s.tail).expect("checked above"),
        )
    };
    let (test_corpus, train_corpus): (Vec<RawSentence>, Vec<RawSentence>) =
        corpus.iter().cloned().partition(|s| test_set.contains(&pair_of(s)));

    let (mut train, train_stats) = align_corpus(&kb, &train_corpus, &vocab, config.t, config.l, config.na_rate, &mut rng)?;
    train.bags.shuffle(&mut rng);
    train.bags.truncate(config.train_bags);

    let mut test_stats = AlignStats::default();
    let groups = group_corpus(&kb, &test_corpus, &vocab, config.l, &mut test_stats)?;
    let groups = subsample_na(groups, config.na_rate, &mut rng, &mut test_stats);
    let mut test_bags = build_test_bags(&test_sentences(&groups, kb.na_id()), config.t);
    test_bags.shuffle(&mut rng);
    test_bags.truncate(config.test_bags);
    let test = LabeledDataset {
        bags: test_bags,
        ..train.clone_empty()
    };

    Ok(Benchmark {
        kb,
        corpus,
        train,
        test,
        test_pairs,
        train_stats,
        test_stats,
    })
}

impl LabeledDataset {
    /// Same vocabulary and shape parameters, no bags.
    pub fn clone_empty(&self) -> LabeledDataset {
        LabeledDataset {
            bags: Vec::new(),
            vocab: self.vocab.clone(),
            t: self.t,
            l: self.l,
            num_entities: self.num_entities,
            num_relations: self.num_relations,
        }
    }
}

/// `head<TAB>tail` symbol lines.
pub fn pairs_to_text(kb: &KnowledgeBase, pairs: &[(usize, usize)]) -> String {
    let mut out = String::new();
    for &(a, b) in pairs {
        let _ = writeln!(out, "{}\t{}", kb.entities()[a].symbol, kb.entities()[b].symbol);
    }
    out
}

pub fn parse_pairs(kb: &KnowledgeBase, text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected `head<TAB>tail`".into(),
        })?;
        let id = |s: &str| kb.entity_id(s).ok_or_else(|| Error::UnknownEntity(s.to_string()));
        out.push(unordered(id(a)?, id(b)?));
    }
    Ok(out)
}

pub fn load_pairs(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    parse_pairs(kb, &std::fs::read_to_string(path)?)
}
