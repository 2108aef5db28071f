//! Distant supervision: turning a KB plus entity-annotated sentences into
//! fixed-size bags of fixed-length sentence mentions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::{unordered, KnowledgeBase};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.intern(PAD_TOKEN);
        v.intern(UNK_TOKEN);
        v
    }
}

impl Vocab {
    /// PAD and UNK first, then corpus tokens in first-seen order.
    pub fn from_corpus(corpus: &[RawSentence]) -> Self {
        let mut v = Vocab::default();
        for s in corpus {
            for tok in &s.tokens {
                v.intern(tok);
            }
        }
        v
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Infeasible("vocabulary must start with PAD and UNK".into()));
        }
        let mut v = Vocab {
            tokens: Vec::with_capacity(tokens.len()),
            index: HashMap::with_capacity(tokens.len()),
        };
        for t in tokens {
            if v.index.contains_key(&t) {
                return Err(Error::Infeasible(format!("duplicate vocabulary token {t}")));
            }
            v.intern(&t);
        }
        Ok(v)
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One sentence mentioning a head and a tail entity, normalized to length L.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentenceMention {
    pub tokens: Vec<u32>,
    pub head_pos: usize,
    pub tail_pos: usize,
    pub pad_mask: Vec<bool>,
}

impl SentenceMention {
    /// Number of leading non-PAD tokens.
    pub fn real_len(&self) -> usize {
        self.pad_mask.iter().take_while(|&&p| !p).count()
    }
}

/// Exactly T sentences sharing one labeling triple; `rel` may be NA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
    pub sentences: Vec<SentenceMention>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub bags: Vec<Bag>,
    pub vocab: Vocab,
    pub t: usize,
    pub l: usize,
    pub num_entities: usize,
    /// Relations of interest; NA has id `num_relations`.
    pub num_relations: usize,
}

/// Raw corpus line: two entity symbols and the tokenized sentence that
/// contains them literally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSentence {
    pub head: String,
    pub tail: String,
    pub tokens: Vec<String>,
}

/// Truncates or pads a sentence to exactly `l` tokens.
///
/// Long sentences keep the length-`l` window centered on the midpoint of the
/// two mentions, shifted just enough to stay inside the sentence. Returns
/// `None` when both mentions cannot share one window.
pub fn normalize_sentence(
    tokens: &[u32],
    head_pos: usize,
    tail_pos: usize,
    l: usize,
) -> Option<SentenceMention> {
    assert!(!tokens.is_empty() && l > 0, "empty sentence or zero length");
    assert!(head_pos < tokens.len() && tail_pos < tokens.len() && head_pos != tail_pos);
    let (lo, hi) = (head_pos.min(tail_pos), head_pos.max(tail_pos));
    if hi - lo >= l {
        return None;
    }
    let n = tokens.len();
    let start = if n > l {
        let centered = (head_pos as i64 + tail_pos as i64 - l as i64 + 1).div_euclid(2);
        centered.clamp(0, (n - l) as i64) as usize
    } else {
        0
    };
    let end = (start + l).min(n);
    let mut out: Vec<u32> = tokens[start..end].to_vec();
    let real = out.len();
    out.resize(l, PAD_ID);
    let pad_mask = (0..l).map(|i| i >= real).collect();
    Some(SentenceMention {
        tokens: out,
        head_pos: head_pos - start,
        tail_pos: tail_pos - start,
        pad_mask,
    })
}

/// Splits `sentences` into ⌈n/T⌉ chunks of exactly T in input order. The last
/// short chunk is topped up by sampling with replacement from its own members.
pub fn normalize_bag<R: Rng + ?Sized>(
    sentences: &[SentenceMention],
    t: usize,
    rng: &mut R,
) -> Vec<Vec<SentenceMention>> {
    assert!(t >= 1, "bag size must be positive");
    sentences
        .chunks(t)
        .map(|chunk| {
            let mut out = chunk.to_vec();
            while out.len() < t {
                out.push(chunk[rng.gen_range(0..chunk.len())].clone());
            }
            out
        })
        .collect()
}

/// A normalized sentence with the labeling triple it was grouped under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
    pub sentence: SentenceMention,
}

/// One bag per sentence, each holding T copies of it.
pub fn build_test_bags(sentences: &[LabeledSentence], t: usize) -> Vec<Bag> {
    assert!(t >= 1, "bag size must be positive");
    sentences
        .iter()
        .map(|s| Bag {
            head: s.head,
            rel: s.rel,
            tail: s.tail,
            sentences: vec![s.sentence.clone(); t],
        })
        .collect()
}

/// Sentences sharing one directed entity pair, with every KB relation that
/// holds for it (empty for NA).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairGroup {
    pub head: usize,
    pub tail: usize,
    pub relations: Vec<usize>,
    pub sentences: Vec<SentenceMention>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignStats {
    pub sentences_dropped: usize,
    pub na_groups_seen: usize,
    pub na_groups_kept: usize,
}

/// Groups sentences by entity pair, labels each group from the KB and
/// normalizes every sentence to length `l`. Groups whose sentences were all
/// dropped disappear.
pub fn group_corpus(
    kb: &KnowledgeBase,
    corpus: &[RawSentence],
    vocab: &Vocab,
    l: usize,
    stats: &mut AlignStats,
) -> Result<Vec<PairGroup>> {
    let mut by_pair: HashMap<(usize, usize), usize> = HashMap::new();
    let mut groups: Vec<PairGroup> = Vec::new();
    let mut rels_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for t in kb.triples() {
        rels_of.entry((t.head, t.tail)).or_default().push(t.rel);
    }

    for raw in corpus {
        let h = kb
            .entity_id(&raw.head)
            .ok_or_else(|| Error::UnknownEntity(raw.head.clone()))?;
        let t = kb
            .entity_id(&raw.tail)
            .ok_or_else(|| Error::UnknownEntity(raw.tail.clone()))?;
        if h == t {
            return Err(Error::Infeasible(format!(
                "sentence mentions {} as both head and tail",
                raw.head
            )));
        }
        let find = |sym: &str| {
            raw.tokens
                .iter()
                .position(|tok| tok == sym)
                .ok_or_else(|| Error::MentionNotFound {
                    symbol: sym.to_string(),
                })
        };
        let (hp, tp) = (find(&raw.head)?, find(&raw.tail)?);
        let ids: Vec<u32> = raw.tokens.iter().map(|tok| vocab.id(tok)).collect();
        let Some(mention) = normalize_sentence(&ids, hp, tp, l) else {
            stats.sentences_dropped += 1;
            continue;
        };
        let slot = *by_pair.entry((h, t)).or_insert_with(|| {
            let mut relations = rels_of.get(&(h, t)).cloned().unwrap_or_default();
            relations.sort_unstable();
            groups.push(PairGroup {
                head: h,
                tail: t,
                relations,
                sentences: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].sentences.push(mention);
    }
    if stats.sentences_dropped > 0 {
        warn!(
            "dropped {} sentences whose mentions do not fit in L={l}",
            stats.sentences_dropped
        );
    }
    Ok(groups)
}

/// Keeps NA groups so that they make up `na_rate` of all kept groups (as far
/// as available NA groups allow), preserving order.
pub fn subsample_na<R: Rng + ?Sized>(
    groups: Vec<PairGroup>,
    na_rate: f64,
    rng: &mut R,
    stats: &mut AlignStats,
) -> Vec<PairGroup> {
    assert!((0.0..=1.0).contains(&na_rate), "na_rate outside [0, 1]");
    let n_na = groups.iter().filter(|g| g.relations.is_empty()).count();
    let n_pos = groups.len() - n_na;
    let keep_na = if na_rate >= 1.0 {
        n_na
    } else {
        ((na_rate / (1.0 - na_rate)) * n_pos as f64).floor() as usize
    }
    .min(n_na);
    let mut chosen = vec![false; n_na];
    for i in index::sample(rng, n_na, keep_na) {
        chosen[i] = true;
    }
    stats.na_groups_seen += n_na;
    stats.na_groups_kept += keep_na;
    let mut na_idx = 0;
    groups
        .into_iter()
        .filter(|g| {
            if g.relations.is_empty() {
                na_idx += 1;
                chosen[na_idx - 1]
            } else {
                true
            }
        })
        .collect()
}

/// Builds the labeled training dataset from a corpus.
///
/// A pair with several KB relations yields one bag set per relation, each
/// receiving the whole sentence group.
#[allow(clippy::too_many_arguments)]
pub fn align_corpus<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    corpus: &[RawSentence],
    vocab: &Vocab,
    t: usize,
    l: usize,
    na_rate: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, AlignStats)> {
    let mut stats = AlignStats::default();
    let groups = group_corpus(kb, corpus, vocab, l, &mut stats)?;
    let groups = subsample_na(groups, na_rate, rng, &mut stats);
    let na = kb.na_id();
    let mut bags = Vec::new();
    for g in &groups {
        let labels: Vec<usize> = if g.relations.is_empty() {
            vec![na]
        } else {
            g.relations.clone()
        };
        for rel in labels {
            for sentences in normalize_bag(&g.sentences, t, rng) {
                bags.push(Bag {
                    head: g.head,
                    rel,
                    tail: g.tail,
                    sentences,
                });
            }
        }
    }
    Ok((
        LabeledDataset {
            bags,
            vocab: vocab.clone(),
            t,
            l,
            num_entities: kb.num_entities(),
            num_relations: kb.num_relations(),
        },
        stats,
    ))
}

/// Flattens groups into per-sentence records for held-out testing. Each
/// sentence appears once, labeled with the smallest KB relation of its pair
/// (NA when none).
pub fn test_sentences(groups: &[PairGroup], na_id: usize) -> Vec<LabeledSentence> {
    groups
        .iter()
        .flat_map(|g| {
            let rel = g.relations.first().copied().unwrap_or(na_id);
            g.sentences.iter().map(move |s| LabeledSentence {
                head: g.head,
                rel,
                tail: g.tail,
                sentence: s.clone(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic corpus

const HEAD_SLOT: &str = "$H";
const TAIL_SLOT: &str = "$T";

/// Per-relation token patterns, NA patterns last, plus a shared filler list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    patterns: Vec<Vec<Vec<String>>>,
    fillers: Vec<String>,
    keyword_owner: HashMap<String, usize>,
}

impl Templates {
    /// `patterns[r]` lists the templates of relation `r`; the final entry
    /// belongs to NA. Each template must hold both slots `$H` and `$T`.
    pub fn new(patterns: Vec<Vec<Vec<String>>>, fillers: Vec<String>) -> Result<Self> {
        let mut keyword_owner = HashMap::new();
        for (r, set) in patterns.iter().enumerate() {
            for tpl in set {
                let slots = |s: &str| tpl.iter().filter(|t| *t == s).count();
                if slots(HEAD_SLOT) != 1 || slots(TAIL_SLOT) != 1 {
                    return Err(Error::Infeasible(format!(
                        "template {tpl:?} needs exactly one $H and one $T"
                    )));
                }
                for tok in tpl.iter().filter(|t| *t != HEAD_SLOT && *t != TAIL_SLOT) {
                    match keyword_owner.insert(tok.clone(), r) {
                        Some(prev) if prev != r => {
                            return Err(Error::Infeasible(format!(
                                "keyword {tok} shared by relations {prev} and {r}"
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(Templates {
            patterns,
            fillers,
            keyword_owner,
        })
    }

    /// Two templates per relation (one head-first, one tail-first) with
    /// relation-specific keywords, and a pool of neutral fillers.
    pub fn synthetic(n_relations: usize) -> Self {
        let mut patterns = Vec::with_capacity(n_relations + 1);
        for r in 0..=n_relations {
            let tag = if r == n_relations {
                "na".to_string()
            } else {
                r.to_string()
            };
            let kw = |j: usize, w: char| format!("k{tag}_{j}{w}");
            patterns.push(vec![
                vec![HEAD_SLOT.into(), kw(0, 'a'), kw(0, 'b'), TAIL_SLOT.into()],
                vec![TAIL_SLOT.into(), kw(1, 'a'), HEAD_SLOT.into(), kw(1, 'b')],
            ]);
        }
        let fillers = (0..20).map(|i| format!("w{i}")).collect();
        Templates::new(patterns, fillers).expect("synthetic templates are well formed")
    }

    pub fn num_sets(&self) -> usize {
        self.patterns.len()
    }

    pub fn patterns(&self, rel: usize) -> &[Vec<String>] {
        &self.patterns[rel]
    }

    /// The template set whose keywords the tokens contain, if exactly one.
    pub fn identify(&self, tokens: &[String]) -> Option<usize> {
        let mut found = None;
        for tok in tokens {
            if let Some(&r) = self.keyword_owner.get(tok) {
                match found {
                    None => found = Some(r),
                    Some(prev) if prev != r => return None,
                    _ => {}
                }
            }
        }
        found
    }

    fn render<R: Rng + ?Sized>(&self, set: usize, head: &str, tail: &str, rng: &mut R) -> Vec<String> {
        let tpl = &self.patterns[set][rng.gen_range(0..self.patterns[set].len())];
        let mut out = Vec::new();
        let filler = |out: &mut Vec<String>, max: usize, rng: &mut R| {
            if self.fillers.is_empty() {
                return;
            }
            for _ in 0..rng.gen_range(0..=max) {
                out.push(self.fillers[rng.gen_range(0..self.fillers.len())].clone());
            }
        };
        filler(&mut out, 2, rng);
        for (i, tok) in tpl.iter().enumerate() {
            if i > 0 {
                filler(&mut out, 1, rng);
            }
            out.push(match tok.as_str() {
                HEAD_SLOT => head.to_string(),
                TAIL_SLOT => tail.to_string(),
                _ => tok.clone(),
            });
        }
        filler(&mut out, 2, rng);
        out
    }
}

/// Knobs for the synthetic corpus generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusParams {
    /// Each fact gets between 1 and this many sentences.
    pub max_sentences_per_fact: usize,
    /// Number of unrelated entity pairs that receive NA sentences.
    pub na_pairs: usize,
    pub implicit_rate: f64,
    pub mislabel_rate: f64,
    pub seed: u64,
}

/// The relation whose wording an implicit mention of `rel` borrows.
pub fn implicit_partner(rel: usize, n_relations: usize) -> usize {
    let p = rel ^ 1;
    if p < n_relations {
        p
    } else if rel > 0 {
        rel - 1
    } else {
        rel
    }
}

/// Emits sentences for every KB fact (own template, partner template with
/// probability `implicit_rate`, unrelated template with probability
/// `mislabel_rate`), followed by NA sentences for pairs unrelated in either
/// direction. Deterministic in `params.seed`.
pub fn generate_synthetic_corpus(
    kb: &KnowledgeBase,
    templates: &Templates,
    params: &CorpusParams,
) -> Result<Vec<RawSentence>> {
    let n_rel = kb.num_relations();
    for r in 0..=n_rel {
        if r >= templates.num_sets() || templates.patterns(r).is_empty() {
            let name = kb.relations().get(r).map_or("?", |x| x.name.as_str());
            return Err(Error::MissingTemplate(name.to_string()));
        }
    }
    for rate in [params.implicit_rate, params.mislabel_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("rate {rate} outside [0, 1]")));
        }
    }
    if params.max_sentences_per_fact == 0 {
        return Err(Error::Config("max_sentences_per_fact must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sym = |e: usize| kb.entities()[e].symbol.as_str();
    let mut out = Vec::new();

    for t in kb.triples() {
        let n = rng.gen_range(1..=params.max_sentences_per_fact);
        for _ in 0..n {
            let set = if rng.gen_bool(params.mislabel_rate) {
                // any template set other than the label's own, NA included
                let pick = rng.gen_range(0..n_rel);
                if pick >= t.rel {
                    pick + 1
                } else {
                    pick
                }
            } else if rng.gen_bool(params.implicit_rate) {
                implicit_partner(t.rel, n_rel)
            } else {
                t.rel
            };
            out.push(RawSentence {
                head: sym(t.head).to_string(),
                tail: sym(t.tail).to_string(),
                tokens: templates.render(set, sym(t.head), sym(t.tail), &mut rng),
            });
        }
    }

    let n_ent = kb.num_entities();
    let mut related = std::collections::HashSet::new();
    for t in kb.triples() {
        related.insert(t.unordered_pair());
    }
    let available = (n_ent * n_ent.saturating_sub(1)) / 2 - related.len();
    let wanted = params.na_pairs.min(available);
    let mut used = std::collections::HashSet::new();
    let mut attempts = 0usize;
    while used.len() < wanted && attempts < 100 * wanted + 1000 {
        attempts += 1;
        let h = rng.gen_range(0..n_ent);
        let t = rng.gen_range(0..n_ent);
        let key = unordered(h, t);
        if h == t || related.contains(&key) || !used.insert(key) {
            continue;
        }
        for _ in 0..rng.gen_range(1..=params.max_sentences_per_fact) {
            out.push(RawSentence {
                head: sym(h).to_string(),
                tail: sym(t).to_string(),
                tokens: templates.render(n_rel, sym(h), sym(t), &mut rng),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// File formats

pub fn corpus_to_text(corpus: &[RawSentence]) -> String {
    let mut out = String::new();
    for s in corpus {
        let _ = writeln!(out, "{}\t{}\t{}", s.head, s.tail, s.tokens.join(" "));
    }
    out
}

pub fn parse_corpus(text: &str) -> Result<Vec<RawSentence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected `head<TAB>tail<TAB>tokens`".into(),
            });
        }
        out.push(RawSentence {
            head: fields[0].to_string(),
            tail: fields[1].to_string(),
            tokens: fields[2].split(' ').filter(|t| !t.is_empty()).map(String::from).collect(),
        });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawSentence>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    parse_corpus(&fs::read_to_string(path)?)
}

const DATASET_MAGIC: &str = "hrere-dataset";
const DATASET_VERSION: u32 = 1;

impl LabeledDataset {
    /// Versioned text record file: one header line, the vocabulary, then one
    /// `b` line per bag followed by its T `s` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{DATASET_MAGIC} {DATASET_VERSION} T={} L={} vocab={} bags={} entities={} relations={}",
            self.t,
            self.l,
            self.vocab.len(),
            self.bags.len(),
            self.num_entities,
            self.num_relations
        );
        for tok in self.vocab.tokens() {
            let _ = writeln!(out, "{tok}");
        }
        for b in &self.bags {
            let _ = writeln!(out, "b {} {} {}", b.head, b.rel, b.tail);
            for s in &b.sentences {
                let _ = write!(out, "s {} {}", s.head_pos, s.tail_pos);
                for id in &s.tokens {
                    let _ = write!(out, " {id}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?).map_err(|e| match e {
            Error::Parse { line, msg } => Error::format(path, format!("line {line}: {msg}")),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty dataset file"))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(DATASET_MAGIC) {
            return Err(bad(1, "not a dataset file"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "missing version"))?;
        if version != DATASET_VERSION {
            return Err(bad(1, &format!("unsupported dataset version {version}")));
        }
        let mut fields = HashMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad(1, "bad header field"))?;
            let v: usize = v.parse().map_err(|_| bad(1, "bad header value"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(1, &format!("missing {k}")));
        let (t, l, n_vocab, n_bags) = (get("T")?, get("L")?, get("vocab")?, get("bags")?);
        let (num_entities, num_relations) = (get("entities")?, get("relations")?);

        let mut tokens = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            let (_, tok) = lines.next().ok_or_else(|| bad(0, "truncated vocabulary"))?;
            tokens.push(tok.to_string());
        }
        let vocab = Vocab::from_tokens(tokens)?;

        let mut bags = Vec::with_capacity(n_bags);
        for _ in 0..n_bags {
            let (ln, line) = lines.next().ok_or_else(|| bad(0, "truncated bag list"))?;
            let nums = parse_tagged(line, "b").ok_or_else(|| bad(ln, "expected bag line"))?;
            if nums.len() != 3 {
                return Err(bad(ln, "bag line needs head rel tail"));
            }
            let (head, rel, tail) = (nums[0], nums[1], nums[2]);
            if head >= num_entities || tail >= num_entities || rel > num_relations {
                return Err(bad(ln, "bag references unknown ids"));
            }
            let mut sentences = Vec::with_capacity(t);
            for _ in 0..t {
                let (ln, line) = lines.next().ok_or_else(|| bad(0, "truncated bag"))?;
                let nums = parse_tagged(line, "s").ok_or_else(|| bad(ln, "expected sentence line"))?;
                if nums.len() != l + 2 {
                    return Err(bad(ln, "sentence length differs from L"));
                }
                let (head_pos, tail_pos) = (nums[0], nums[1]);
                let toks: Vec<u32> = nums[2..].iter().map(|&x| x as u32).collect();
                if head_pos >= l || tail_pos >= l || head_pos == tail_pos {
                    return Err(bad(ln, "invalid mention positions"));
                }
                if toks.iter().any(|&x| x as usize >= vocab.len()) {
                    return Err(bad(ln, "token id outside vocabulary"));
                }
                let pad_mask: Vec<bool> = toks.iter().map(|&x| x == PAD_ID).collect();
                sentences.push(SentenceMention {
                    tokens: toks,
                    head_pos,
                    tail_pos,
                    pad_mask,
                });
            }
            bags.push(Bag {
                head,
                rel,
                tail,
                sentences,
            });
        }
        Ok(LabeledDataset {
            bags,
            vocab,
            t,
            l,
            num_entities,
            num_relations,
        })
    }
}

fn parse_tagged(line: &str, tag: &str) -> Option<Vec<usize>> {
    let mut it = line.split(' ');
    if it.next()? != tag {
        return None;
    }
    it.map(|x| x.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mention(id: u32) -> SentenceMention {
        SentenceMention {
            tokens: vec![id, id + 100],
            head_pos: 0,
            tail_pos: 1,
            pad_mask: vec![false, false],
        }
    }

    fn raw(h: &str, t: &str, text: &str) -> RawSentence {
        RawSentence {
            head: h.into(),
            tail: t.into(),
            tokens: text.split(' ').map(String::from).collect(),
        }
    }

    #[test]
    fn pads_short_sentence() {
        let s = normalize_sentence(&[5, 6, 7, 8, 9], 0, 3, 8).unwrap();
        assert_eq!(s.tokens, vec![5, 6, 7, 8, 9, 0, 0, 0]);
        assert_eq!((s.head_pos, s.tail_pos), (0, 3));
        assert_eq!(s.pad_mask, vec![false, false, false, false, false, true, true, true]);
        assert_eq!(s.real_len(), 5);
    }

    #[test]
    fn truncates_around_mention_midpoint() {
        let toks: Vec<u32> = (10..22).collect();
        let s = normalize_sentence(&toks, 2, 9, 10).unwrap();
        assert_eq!(s.tokens, (11..21).collect::<Vec<_>>());
        assert_eq!((s.head_pos, s.tail_pos), (1, 8));
        assert!(s.pad_mask.iter().all(|p| !p));
    }

    #[test]
    fn truncation_window_is_clamped_to_the_sentence() {
        let toks: Vec<u32> = (10..22).collect();
        let s = normalize_sentence(&toks, 11, 10, 4).unwrap();
        assert_eq!(s.tokens, vec![18, 19, 20, 21]);
        assert_eq!((s.head_pos, s.tail_pos), (3, 2));
        let s = normalize_sentence(&toks, 0, 1, 4).unwrap();
        assert_eq!(s.tokens, vec![10, 11, 12, 13]);
    }

    #[test]
    fn drops_unfittable_mentions() {
        let toks: Vec<u32> = (0..21).collect();
        assert!(normalize_sentence(&toks, 0, 20, 10).is_none());
        // span exactly L-1 still fits
        assert!(normalize_sentence(&toks, 3, 12, 10).is_some());
        assert!(normalize_sentence(&toks, 3, 13, 10).is_none());
    }

    #[test]
    fn bag_split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<_> = (1..=3).map(mention).collect();
        let chunks = normalize_bag(&s, 2, &mut rng);
        assert_eq!(chunks, vec![vec![s[0].clone(), s[1].clone()], vec![s[2].clone(), s[2].clone()]]);

        let chunks = normalize_bag(&s[..2], 2, &mut rng);
        assert_eq!(chunks, vec![s[..2].to_vec()]);

        let chunks = normalize_bag(&s[..1], 4, &mut rng);
        assert_eq!(chunks, vec![vec![s[0].clone(); 4]]);
    }

    #[test]
    fn test_bags_copy_each_sentence() {
        let ls: Vec<_> = (0..2)
            .map(|i| LabeledSentence {
                head: i,
                rel: 0,
                tail: i + 1,
                sentence: mention(i as u32),
            })
            .collect();
        let bags = build_test_bags(&ls, 3);
        assert_eq!(bags.len(), 2);
        for (b, s) in bags.iter().zip(&ls) {
            assert_eq!(b.sentences, vec![s.sentence.clone(); 3]);
            assert_eq!((b.head, b.tail), (s.head, s.tail));
        }
        assert!(build_test_bags(&[], 3).is_empty());
        assert_eq!(build_test_bags(&ls, 1)[0].sentences.len(), 1);
    }

    fn small_kb() -> KnowledgeBase {
        KnowledgeBase::parse_tsv("a\tr1\tb\nb\tr2\tc\na\tr2\tb\n").unwrap()
    }

    #[test]
    fn aligns_pairs_to_relations() {
        let kb = small_kb();
        let corpus = vec![
            raw("a", "b", "x a y b"),
            raw("a", "b", "a z b"),
            raw("a", "c", "c q a"),
        ];
        let vocab = Vocab::from_corpus(&corpus);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ds, stats) = align_corpus(&kb, &corpus, &vocab, 2, 6, 1.0, &mut rng).unwrap();
        // (a,b) carries r1 and r2 -> two bags sharing the same sentences
        assert_eq!(ds.bags.len(), 3);
        let r1 = kb.relation_id("r1").unwrap();
        let r2 = kb.relation_id("r2").unwrap();
        assert_eq!(ds.bags[0].rel, r1);
        assert_eq!(ds.bags[1].rel, r2);
        assert_eq!(ds.bags[0].sentences, ds.bags[1].sentences);
        assert_eq!(ds.bags[2].rel, kb.na_id());
        assert_eq!(stats.na_groups_seen, 1);
        for b in &ds.bags {
            assert_eq!(b.sentences.len(), 2);
            if b.rel != kb.na_id() {
                assert!(kb.contains(&crate::kb::Triple::new(b.head, b.rel, b.tail)));
            }
        }
    }

    #[test]
    fn na_rate_zero_removes_na_bags() {
        let kb = small_kb();
        let corpus = vec![raw("a", "b", "a z b"), raw("a", "c", "c q a")];
        let vocab = Vocab::from_corpus(&corpus);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ds, _) = align_corpus(&kb, &corpus, &vocab, 1, 4, 0.0, &mut rng).unwrap();
        assert!(ds.bags.iter().all(|b| b.rel != kb.na_id()));
    }

    #[test]
    fn align_errors() {
        let kb = small_kb();
        let vocab = Vocab::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = align_corpus(&kb, &[raw("a", "zz", "a zz")], &vocab, 1, 4, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::UnknownEntity(_)));
        let err = align_corpus(&kb, &[raw("a", "b", "a only")], &vocab, 1, 4, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::MentionNotFound { .. }));
    }

    #[test]
    fn corpus_respects_templates_without_noise() {
        let kb = crate::kb::generate_synthetic_kb(30, 4, 60, 2).unwrap();
        let tpl = Templates::synthetic(kb.num_relations());
        let params = CorpusParams {
            max_sentences_per_fact: 3,
            na_pairs: 20,
            implicit_rate: 0.0,
            mislabel_rate: 0.0,
            seed: 9,
        };
        let corpus = generate_synthetic_corpus(&kb, &tpl, &params).unwrap();
        for s in &corpus {
            let h = kb.entity_id(&s.head).unwrap();
            let t = kb.entity_id(&s.tail).unwrap();
            let rel = kb
                .triples()
                .iter()
                .find(|x| x.head == h && x.tail == t)
                .map_or(kb.na_id(), |x| x.rel);
            assert_eq!(tpl.identify(&s.tokens), Some(rel));
        }
        assert_eq!(corpus, generate_synthetic_corpus(&kb, &tpl, &params).unwrap());

        let noisy = CorpusParams {
            mislabel_rate: 1.0,
            ..params
        };
        let corpus = generate_synthetic_corpus(&kb, &tpl, &noisy).unwrap();
        let facts = corpus.len() - corpus.iter().filter(|s| tpl.identify(&s.tokens) == Some(kb.na_id())).count();
        assert!(facts > 0);
        for t in kb.triples() {
            let (h, tl) = (&kb.entities()[t.head].symbol, &kb.entities()[t.tail].symbol);
            for s in corpus.iter().filter(|s| &s.head == h && &s.tail == tl) {
                assert_ne!(tpl.identify(&s.tokens), Some(t.rel));
            }
        }
    }

    #[test]
    fn missing_template_is_reported() {
        let kb = crate::kb::generate_synthetic_kb(10, 3, 10, 2).unwrap();
        let tpl = Templates::synthetic(1);
        let params = CorpusParams {
            max_sentences_per_fact: 1,
            na_pairs: 0,
            implicit_rate: 0.0,
            mislabel_rate: 0.0,
            seed: 0,
        };
        assert!(matches!(
            generate_synthetic_corpus(&kb, &tpl, &params),
            Err(Error::MissingTemplate(_))
        ));
    }

    #[test]
    fn implicit_partners_stay_in_range() {
        assert_eq!(implicit_partner(0, 12), 1);
        assert_eq!(implicit_partner(1, 12), 0);
        assert_eq!(implicit_partner(10, 11), 9);
        assert_eq!(implicit_partner(0, 1), 0);
    }

    #[test]
    fn dataset_text_round_trip() {
        let kb = small_kb();
        let corpus = vec![raw("a", "b", "x a y b"), raw("b", "c", "b c")];
        let vocab = Vocab::from_corpus(&corpus);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ds, _) = align_corpus(&kb, &corpus, &vocab, 2, 5, 1.0, &mut rng).unwrap();
        let text = ds.to_text();
        let back = LabeledDataset::parse(&text).unwrap();
        assert_eq!(back, ds);
        assert!(LabeledDataset::parse("garbage").is_err());
    }

    #[test]
    fn corpus_text_round_trip() {
        let corpus = vec![raw("a", "b", "x a y b"), raw("b", "c", "b c")];
        assert_eq!(parse_corpus(&corpus_to_text(&corpus)).unwrap(), corpus);
        assert!(matches!(parse_corpus("a\tb\n"), Err(Error::Parse { line: 1, .. })));
    }
}
