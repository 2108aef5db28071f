//! The operator pipeline: data generation, KB pretraining, training,
//! evaluation and plotting, all driven by one flat config file and writing
//! into one output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::benchmark::{generate_benchmark, load_pairs, pairs_to_text, BenchmarkConfig};
use crate::config::KvFile;
use crate::encoder::WordEmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate, p_at_csv, DEFAULT_PERCENTS};
use crate::kb::{load_kb, unordered, KnowledgeBase};
use crate::kbe::{pretrain, ComplexEmbeddingTable, KbeHyper};
use crate::plot::{curve_svg, parse_curve_csv};
use crate::supervision::{corpus_to_text, LabeledDataset};
use crate::training::{loss_log_csv, train_state, ModelConfig, ModelState, TrainingConfig, Variant};

pub const KB_FILE: &str = "kb.tsv";
pub const CORPUS_FILE: &str = "corpus.tsv";
pub const TRAIN_FILE: &str = "train.dataset";
pub const TEST_FILE: &str = "test.dataset";
pub const TEST_PAIRS_FILE: &str = "test_pairs.tsv";
pub const KBE_FILE: &str = "kbe.bin";

/// Every setting of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub bench: BenchmarkConfig,
    pub train: TrainingConfig,
    pub model: ModelConfig,
    pub kbe: KbeHyper,
    /// Number of consecutive seeds trained and evaluated, starting at `seed`.
    pub runs: usize,
    pub word_vectors: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            bench: BenchmarkConfig::default(),
            train: TrainingConfig::default(),
            model: ModelConfig::default(),
            kbe: KbeHyper::default(),
            runs: 1,
            word_vectors: None,
        }
    }
}

const OTHER_KEYS: [&str; 15] = [
    "d_w",
    "d_p",
    "d_s",
    "p_i",
    "p_o",
    "init_scale",
    "d_k",
    "neg_ratio",
    "pretrain_lr",
    "pretrain_epochs",
    "kbe_init_scale",
    "kbe_batch_size",
    "pretrain_l2",
    "runs",
    "word_vectors",
];

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
}

impl AppConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let known: Vec<&str> = BenchmarkConfig::KEYS
            .iter()
            .chain(TrainingConfig::KEYS.iter())
            .chain(OTHER_KEYS.iter())
            .copied()
            .collect();
        kv.reject_unknown(&known)?;
        let mut c = AppConfig {
            bench: BenchmarkConfig::from_kv(kv)?,
            train: TrainingConfig::from_kv(kv)?,
            ..AppConfig::default()
        };
        let m = &mut c.model;
        kv.read_into("d_w", &mut m.d_w)?;
        kv.read_into("d_p", &mut m.d_p)?;
        kv.read_into("d_s", &mut m.d_s)?;
        kv.read_into("p_i", &mut m.keep_input)?;
        kv.read_into("p_o", &mut m.keep_output)?;
        kv.read_into("init_scale", &mut m.init_scale)?;
        let k = &mut c.kbe;
        kv.read_into("d_k", &mut k.d_k)?;
        kv.read_into("neg_ratio", &mut k.neg_ratio)?;
        kv.read_into("pretrain_lr", &mut k.pretrain_lr)?;
        kv.read_into("pretrain_epochs", &mut k.pretrain_epochs)?;
        kv.read_into("kbe_init_scale", &mut k.init_scale)?;
        kv.read_into("kbe_batch_size", &mut k.batch_size)?;
        kv.read_into("pretrain_l2", &mut k.l2)?;
        kv.read_into("runs", &mut c.runs)?;
        c.word_vectors = kv.get_raw("word_vectors").map(PathBuf::from);
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.bench.seed = s;
            self.train.seed = s;
        }
        if let Some(v) = o.variant {
            self.train.variant = v;
        }
        if let Some(a) = o.alpha {
            self.train.alpha = a;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.bench.validate()?;
        self.train.validate()?;
        if self.bench.t != self.train.t || self.bench.l != self.train.l {
            return Err(Error::Config("T and L must agree".into()));
        }
        let m = &self.model;
        if m.d_w == 0 || m.d_s == 0 || m.d_p == 0 || !m.d_p.is_multiple_of(2) {
            return Err(Error::Config("d_w, d_s must be positive and d_p positive and even".into()));
        }
        for p in [m.keep_input, m.keep_output] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("keep probability {p} outside (0, 1]")));
            }
        }
        let k = &self.kbe;
        if k.d_k == 0 || k.neg_ratio == 0 || k.batch_size == 0 || !(k.pretrain_lr > 0.0) || !(k.init_scale > 0.0) || !(k.l2 >= 0.0) {
            return Err(Error::Config("KB embedding settings must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        Ok(())
    }

    /// The full effective configuration.
    pub fn to_kv(&self) -> KvFile {
        let mut kv = self.train.to_kv();
        let b = &self.bench;
        kv.set("entities", b.entities);
        kv.set("relations", b.relations);
        kv.set("triples", b.triples);
        kv.set("train_bags", b.train_bags);
        kv.set("test_bags", b.test_bags);
        kv.set("na_rate", b.na_rate);
        kv.set("test_fraction", b.test_fraction);
        kv.set("max_sentences_per_fact", b.max_sentences_per_fact);
        kv.set("na_pairs", b.na_pairs);
        kv.set("implicit_rate", b.implicit_rate);
        kv.set("mislabel_rate", b.mislabel_rate);
        let m = &self.model;
        kv.set("d_w", m.d_w);
        kv.set("d_p", m.d_p);
        kv.set("d_s", m.d_s);
        kv.set("p_i", m.keep_input);
        kv.set("p_o", m.keep_output);
        kv.set("init_scale", m.init_scale);
        let k = &self.kbe;
        kv.set("d_k", k.d_k);
        kv.set("neg_ratio", k.neg_ratio);
        kv.set("pretrain_lr", k.pretrain_lr);
        kv.set("pretrain_epochs", k.pretrain_epochs);
        kv.set("kbe_init_scale", k.init_scale);
        kv.set("kbe_batch_size", k.batch_size);
        kv.set("pretrain_l2", k.l2);
        kv.set("runs", self.runs);
        if let Some(w) = &self.word_vectors {
            kv.set("word_vectors", w.display());
        }
        kv
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(move |i| self.train.seed.wrapping_add(i))
    }
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to the outputs of every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    pub seed: u64,
    pub variant: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings_ms: BTreeMap<String, u128>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct Recorder {
    manifest: RunManifest,
    path: PathBuf,
    out: PathBuf,
    started: Instant,
}

impl Recorder {
    fn new(command: &str, cfg: &AppConfig, out: &Path, file_name: String) -> Self {
        let kv = cfg.to_kv();
        let config = kv
            .keys()
            .map(|k| (k.to_string(), kv.get_raw(k).unwrap_or_default().to_string()))
            .collect();
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                status: "running".into(),
                seed: cfg.train.seed,
                variant: cfg.train.variant.to_string(),
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings_ms: BTreeMap::new(),
            },
            path: out.join(file_name),
            out: out.to_path_buf(),
            started: Instant::now(),
        }
    }

    fn digest(&self, path: &Path) -> Result<FileDigest> {
        let shown = path.strip_prefix(&self.out).unwrap_or(path);
        Ok(FileDigest {
            path: shown.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }

    /// Checks that `path` exists and records its digest.
    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let d = self.digest(path)?;
        self.manifest.inputs.push(d);
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(path, bytes)?;
        let d = self.digest(path)?;
        self.manifest.outputs.push(d);
        Ok(())
    }

    fn lap(&mut self, label: &str, since: Instant) {
        self.manifest.timings_ms.insert(label.to_string(), since.elapsed().as_millis());
    }

    fn finish(mut self, result: &Result<()>) -> Result<()> {
        self.manifest.status = match result {
            Ok(()) => "ok".into(),
            Err(e) => format!("error: {e}"),
        };
        self.manifest
            .timings_ms
            .insert("total".into(), self.started.elapsed().as_millis());
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        fs::write(&self.path, json + "\n")?;
        Ok(())
    }
}

fn recorded(
    command: &str,
    cfg: &AppConfig,
    out: &Path,
    manifest_name: String,
    body: impl FnOnce(&mut Recorder) -> Result<()>,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut rec = Recorder::new(command, cfg, out, manifest_name);
    let result = body(&mut rec);
    rec.finish(&result)?;
    result
}

pub fn model_file(variant: Variant, seed: u64) -> String {
    format!("model-{variant}-seed{seed}.bin")
}

pub fn loss_file(variant: Variant, seed: u64) -> String {
    format!("loss-{variant}-seed{seed}.csv")
}

pub fn curve_file(variant: Variant, seed: u64) -> String {
    format!("pr-{variant}-seed{seed}.csv")
}

pub fn p_at_file(variant: Variant, seed: u64) -> String {
    format!("pat-{variant}-seed{seed}.csv")
}

pub fn p_at_mean_file(variant: Variant) -> String {
    format!("pat-{variant}-mean.csv")
}

pub fn plot_file(variant: Variant, seed: u64) -> String {
    format!("pr-{variant}-seed{seed}.svg")
}

// ---------------------------------------------------------------------------
// Commands

/// Generates the synthetic KB, corpus and train/test datasets.
pub fn cmd_gen_data(cfg: &AppConfig, out: &Path) -> Result<()> {
    recorded("gen-data", cfg, out, "manifest-gen-data.json".into(), |rec| {
        let t0 = Instant::now();
        let bench = generate_benchmark(&cfg.bench)?;
        rec.lap("generate", t0);

        // Leakage check: nothing on a test pair may reach pretraining.
        let pretrain_pairs: std::collections::HashSet<(usize, usize)> =
            bench.pretrain_kb().triples().iter().map(|t| t.unordered_pair()).collect();
        let leaked = bench
            .test_pairs
            .iter()
            .filter(|&&(a, b)| pretrain_pairs.contains(&unordered(a, b)))
            .count();
        if leaked > 0 {
            return Err(Error::Infeasible(format!("{leaked} test pairs leak into pretraining")));
        }
        info!(
            "{} triples, {} train bags, {} test bags, {} test pairs",
            bench.kb.triples().len(),
            bench.train.bags.len(),
            bench.test.bags.len(),
            bench.test_pairs.len()
        );
        rec.write(&out.join(KB_FILE), bench.kb.to_tsv())?;
        rec.write(&out.join(CORPUS_FILE), corpus_to_text(&bench.corpus))?;
        rec.write(&out.join(TRAIN_FILE), bench.train.to_text())?;
        rec.write(&out.join(TEST_FILE), bench.test.to_text())?;
        rec.write(&out.join(TEST_PAIRS_FILE), pairs_to_text(&bench.kb, &bench.test_pairs))?;
        Ok(())
    })
}

/// The KB with every triple on a test pair removed.
pub fn load_pretrain_kb(out: &Path) -> Result<KnowledgeBase> {
    let kb = load_kb(out.join(KB_FILE))?;
    let pairs = load_pairs(&kb, out.join(TEST_PAIRS_FILE))?;
    Ok(kb.remove_test_pairs(&pairs))
}

/// Pretrains the KB embedding on the KB minus test pairs.
pub fn cmd_pretrain(cfg: &AppConfig, out: &Path) -> Result<()> {
    recorded("pretrain-kbe", cfg, out, "manifest-pretrain-kbe.json".into(), |rec| {
        rec.input(&out.join(KB_FILE))?;
        rec.input(&out.join(TEST_PAIRS_FILE))?;
        let kb = load_pretrain_kb(out)?;
        let t0 = Instant::now();
        let table = pretrain(&kb, &cfg.kbe, cfg.train.seed)?;
        rec.lap("pretrain", t0);
        rec.write(&out.join(KBE_FILE), table.to_bytes())
    })
}

fn check_table(table: &ComplexEmbeddingTable, dataset: &LabeledDataset) -> Result<()> {
    if table.num_entities() != dataset.num_entities || table.num_relation_rows() != dataset.num_relations + 1 {
        return Err(Error::IndexSpace(format!(
            "KB embedding has {} entities / {} relation rows, dataset needs {} / {}",
            table.num_entities(),
            table.num_relation_rows(),
            dataset.num_entities,
            dataset.num_relations + 1
        )));
    }
    Ok(())
}

/// Trains `runs` models of the configured variant, one per seed.
pub fn cmd_train(cfg: &AppConfig, out: &Path) -> Result<()> {
    let variant = cfg.train.variant;
    recorded("train", cfg, out, format!("manifest-train-{variant}.json"), |rec| {
        rec.input(&out.join(TRAIN_FILE))?;
        let kbe_path = out.join(KBE_FILE);
        if variant.needs_kbe() {
            rec.input(&kbe_path)?;
        }
        if let Some(w) = &cfg.word_vectors {
            rec.input(w)?;
        }
        let dataset = LabeledDataset::load(out.join(TRAIN_FILE))?;
        if dataset.t != cfg.train.t || dataset.l != cfg.train.l {
            return Err(Error::Config(format!(
                "dataset was built with T={} L={}, config has T={} L={}",
                dataset.t, dataset.l, cfg.train.t, cfg.train.l
            )));
        }
        let pretrained = if variant.needs_kbe() {
            let table = ComplexEmbeddingTable::load(&kbe_path)?;
            check_table(&table, &dataset)?;
            Some(table)
        } else {
            None
        };
        for seed in cfg.run_seeds() {
            let t0 = Instant::now();
            let knowledge = match &pretrained {
                Some(t) => t.clone(),
                None => {
                    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                    ComplexEmbeddingTable::random(
                        dataset.num_entities,
                        dataset.num_relations + 1,
                        cfg.kbe.d_k,
                        cfg.kbe.init_scale,
                        &mut rng,
                    )
                }
            };
            let words = match &cfg.word_vectors {
                Some(path) => {
                    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                    Some(WordEmbeddingTable::load_pretrained(
                        path,
                        &dataset.vocab,
                        cfg.model.d_w,
                        cfg.model.init_scale,
                        &mut rng,
                    )?)
                }
                None => None,
            };
            let state = ModelState::init(&dataset, knowledge, &cfg.model, words, seed)?;
            let run_cfg = TrainingConfig { seed, ..cfg.train };
            let (state, log) = train_state(state, &dataset, &run_cfg)?;
            rec.lap(&format!("train-seed{seed}"), t0);
            let mut bytes = Vec::new();
            state.write_checkpoint(variant, &mut bytes)?;
            rec.write(&out.join(model_file(variant, seed)), bytes)?;
            rec.write(&out.join(loss_file(variant, seed)), loss_log_csv(&log))?;
        }
        Ok(())
    })
}

/// Evaluates every trained run on the held-out test bags. Writes per-run
/// curves, P@N tables and plots plus the P@N table averaged over runs.
pub fn cmd_eval(cfg: &AppConfig, alpha_override: Option<f64>, out: &Path) -> Result<()> {
    let variant = cfg.train.variant;
    recorded("eval", cfg, out, format!("manifest-eval-{variant}.json"), |rec| {
        rec.input(&out.join(TEST_FILE))?;
        rec.input(&out.join(KB_FILE))?;
        for seed in cfg.run_seeds() {
            rec.input(&out.join(model_file(variant, seed)))?;
        }
        let test = LabeledDataset::load(out.join(TEST_FILE))?;
        let kb = load_kb(out.join(KB_FILE))?;
        if kb.num_entities() != test.num_entities || kb.num_relations() != test.num_relations {
            return Err(Error::IndexSpace("test dataset and KB disagree on sizes".into()));
        }
        let alpha = alpha_override.unwrap_or_else(|| cfg.train.inference_alpha());
        let mut sums = vec![0.0; DEFAULT_PERCENTS.len()];
        for seed in cfg.run_seeds() {
            let (found, state) = ModelState::load_checkpoint(out.join(model_file(variant, seed)))?;
            if found != variant {
                return Err(Error::VariantMismatch {
                    expected: variant.to_string(),
                    found: found.to_string(),
                });
            }
            check_table(&state.knowledge, &test)?;
            let t0 = Instant::now();
            let ev = evaluate(&state, &test.bags, kb.triple_set(), alpha)?;
            rec.lap(&format!("eval-seed{seed}"), t0);
            info!("{variant} seed {seed} alpha {alpha}: P@N {:?}", ev.p_at);
            for (s, (_, p)) in sums.iter_mut().zip(&ev.p_at) {
                *s += p;
            }
            rec.write(&out.join(curve_file(variant, seed)), ev.curve.to_csv())?;
            rec.write(&out.join(p_at_file(variant, seed)), p_at_csv(&ev.p_at))?;
            let title = format!("{variant} (seed {seed})");
            rec.write(&out.join(plot_file(variant, seed)), curve_svg(&ev.curve, &title))?;
        }
        let mean: Vec<(u32, f64)> = DEFAULT_PERCENTS
            .iter()
            .zip(&sums)
            .map(|(&n, s)| (n, s / cfg.runs as f64))
            .collect();
        rec.write(&out.join(p_at_mean_file(variant)), p_at_csv(&mean))
    })
}

/// Renders the curve CSV of the configured variant and seed as SVG.
pub fn cmd_plot(cfg: &AppConfig, out: &Path) -> Result<()> {
    let variant = cfg.train.variant;
    let seed = cfg.train.seed;
    recorded("plot", cfg, out, format!("manifest-plot-{variant}.json"), |rec| {
        let csv = out.join(curve_file(variant, seed));
        rec.input(&csv)?;
        let curve = parse_curve_csv(&fs::read_to_string(&csv)?).map_err(|e| Error::Format {
            path: csv.clone(),
            msg: e.to_string(),
        })?;
        let title = format!("{variant} (seed {seed})");
        rec.write(&out.join(plot_file(variant, seed)), curve_svg(&curve, &title))
    })
}
