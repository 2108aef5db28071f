//! Knowledge-base data model: entities, relations (with the catch-all NA),
//! fact triples, loading/saving, and the filtering steps applied before
//! embedding training.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Name reserved for the catch-all relation.
pub const NA_NAME: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entity {
    pub id: usize,
    pub symbol: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    pub id: usize,
    pub name: String,
    pub is_na: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, rel: usize, tail: usize) -> Self {
        Triple { head, rel, tail }
    }

    /// The entity pair with its endpoints in ascending order.
    pub fn unordered_pair(&self) -> (usize, usize) {
        unordered(self.head, self.tail)
    }
}

#[inline]
pub fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Entities, relations and facts.
///
/// Relation ids `0..num_relations()` are the relations of interest; the NA
/// relation always sits at id `num_relations()`. Triples keep insertion order
/// and are unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    triples: Vec<Triple>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    triple_set: HashSet<Triple>,
}

impl KnowledgeBase {
    /// Builds a KB from symbol lists and id triples, checking every invariant.
    pub fn new(
        entity_symbols: Vec<String>,
        relation_names: Vec<String>,
        triples: Vec<Triple>,
    ) -> Result<Self> {
        let mut entity_index = HashMap::with_capacity(entity_symbols.len());
        let mut entities = Vec::with_capacity(entity_symbols.len());
        for (id, symbol) in entity_symbols.into_iter().enumerate() {
            if entity_index.insert(symbol.clone(), id).is_some() {
                return Err(Error::Infeasible(format!("duplicate entity symbol {symbol}")));
            }
            entities.push(Entity { id, symbol });
        }
        let mut relation_index = HashMap::new();
        let mut relations = Vec::with_capacity(relation_names.len() + 1);
        for (id, name) in relation_names.into_iter().enumerate() {
            if name == NA_NAME {
                return Err(Error::Infeasible(format!("relation name {NA_NAME} is reserved")));
            }
            if relation_index.insert(name.clone(), id).is_some() {
                return Err(Error::Infeasible(format!("duplicate relation name {name}")));
            }
            relations.push(Relation {
                id,
                name,
                is_na: false,
            });
        }
        let na_id = relations.len();
        relation_index.insert(NA_NAME.to_string(), na_id);
        relations.push(Relation {
            id: na_id,
            name: NA_NAME.to_string(),
            is_na: true,
        });

        let mut kb = KnowledgeBase {
            entities,
            relations,
            triples: Vec::with_capacity(triples.len()),
            entity_index,
            relation_index,
            triple_set: HashSet::with_capacity(triples.len()),
        };
        for (i, t) in triples.into_iter().enumerate() {
            kb.push_triple(t, i + 1)?;
        }
        Ok(kb)
    }

    fn push_triple(&mut self, t: Triple, line: usize) -> Result<()> {
        let n = self.entities.len();
        if t.head >= n || t.tail >= n || t.rel >= self.na_id() {
            return Err(Error::Infeasible(format!(
                "triple ({}, {}, {}) references unknown ids",
                t.head, t.rel, t.tail
            )));
        }
        if t.head == t.tail {
            return Err(Error::SelfLoop {
                line,
                entity: self.entities[t.head].symbol.clone(),
            });
        }
        if !self.triple_set.insert(t) {
            return Err(Error::DuplicateTriple {
                line,
                head: self.entities[t.head].symbol.clone(),
                rel: self.relations[t.rel].name.clone(),
                tail: self.entities[t.tail].symbol.clone(),
            });
        }
        self.triples.push(t);
        Ok(())
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// All relations, NA last.
    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of relations of interest, excluding NA.
    pub fn num_relations(&self) -> usize {
        self.relations.len() - 1
    }

    pub fn na_id(&self) -> usize {
        self.relations.len() - 1
    }

    pub fn entity_id(&self, symbol: &str) -> Option<usize> {
        self.entity_index.get(symbol).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn triple_set(&self) -> &HashSet<Triple> {
        &self.triple_set
    }

    /// Number of triples each entity takes part in, as head or tail.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.entities.len()];
        for t in &self.triples {
            deg[t.head] += 1;
            deg[t.tail] += 1;
        }
        deg
    }

    /// Serializes to the tab-separated triples format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entities[t.head].symbol, self.relations[t.rel].name, self.entities[t.tail].symbol
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    /// Parses the tab-separated triples format, interning symbols in
    /// first-seen order.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entity_symbols: Vec<String> = Vec::new();
        let mut entity_ids: HashMap<String, usize> = HashMap::new();
        let mut relation_names: Vec<String> = Vec::new();
        let mut relation_ids: HashMap<String, usize> = HashMap::new();
        let mut triples = Vec::new();
        let mut lines = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `head<TAB>relation<TAB>tail`, got {raw:?}"),
                });
            }
            if fields[1] == NA_NAME {
                return Err(Error::Parse {
                    line,
                    msg: format!("relation name {NA_NAME} is reserved"),
                });
            }
            let intern = |sym: &str, names: &mut Vec<String>, ids: &mut HashMap<String, usize>| {
                *ids.entry(sym.to_string()).or_insert_with(|| {
                    names.push(sym.to_string());
                    names.len() - 1
                })
            };
            let h = intern(fields[0], &mut entity_symbols, &mut entity_ids);
            let r = intern(fields[1], &mut relation_names, &mut relation_ids);
            let t = intern(fields[2], &mut entity_symbols, &mut entity_ids);
            triples.push(Triple::new(h, r, t));
            lines.push(line);
        }

        let mut kb = KnowledgeBase::new(entity_symbols, relation_names, Vec::new())?;
        for (t, line) in triples.into_iter().zip(lines) {
            kb.push_triple(t, line)?;
        }
        Ok(kb)
    }

    /// Keeps the `k` entities taking part in the most triples (ties broken by
    /// ascending id), drops every triple touching a removed entity, and
    /// re-indexes the survivors densely in their original relative order.
    pub fn degree_filter(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Infeasible("degree filter needs k >= 1".into()));
        }
        if k >= self.entities.len() {
            return Ok(self.clone());
        }
        let deg = self.degrees();
        let mut order: Vec<usize> = (0..self.entities.len()).collect();
        order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order[..k].to_vec();
        keep.sort_unstable();

        let mut remap = vec![usize::MAX; self.entities.len()];
        for (new_id, &old_id) in keep.iter().enumerate() {
            remap[old_id] = new_id;
        }
        let symbols = keep.iter().map(|&e| self.entities[e].symbol.clone()).collect();
        let triples = self
            .triples
            .iter()
            .filter(|t| remap[t.head] != usize::MAX && remap[t.tail] != usize::MAX)
            .map(|t| Triple::new(remap[t.head], t.rel, remap[t.tail]))
            .collect();
        KnowledgeBase::new(symbols, self.relation_names(), triples)
    }

    /// Drops every triple whose unordered entity pair appears in `pairs`.
    /// Entities are kept so id spaces stay aligned with other artifacts.
    pub fn remove_test_pairs<'a, I>(&self, pairs: I) -> Self
    where
        I: IntoIterator<Item = &'a (usize, usize)>,
    {
        let banned: HashSet<(usize, usize)> =
            pairs.into_iter().map(|&(a, b)| unordered(a, b)).collect();
        let mut out = self.clone();
        out.triples.retain(|t| !banned.contains(&t.unordered_pair()));
        out.triple_set = out.triples.iter().copied().collect();
        out
    }

    /// Names of the relations of interest, without NA.
    pub fn relation_names(&self) -> Vec<String> {
        self.relations[..self.na_id()]
            .iter()
            .map(|r| r.name.clone())
            .collect()
    }

    pub fn entity_symbols(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.symbol.clone()).collect()
    }
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    KnowledgeBase::parse_tsv(&fs::read_to_string(path)?)
}

/// Group structure behind a synthetic KB: each entity belongs to one latent
/// group and each relation links one (head group, tail group) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentClusters {
    pub entity_group: Vec<usize>,
    pub relation_groups: Vec<(usize, usize)>,
}

impl LatentClusters {
    fn members(&self, g: usize) -> Vec<usize> {
        (0..self.entity_group.len())
            .filter(|&e| self.entity_group[e] == g)
            .collect()
    }
}

/// Generates a KB from a latent-cluster model, deterministic in `seed`.
pub fn generate_synthetic_kb(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    seed: u64,
) -> Result<KnowledgeBase> {
    generate_synthetic_kb_with_clusters(n_entities, n_relations, n_triples, seed).map(|(kb, _)| kb)
}

pub fn generate_synthetic_kb_with_clusters(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    seed: u64,
) -> Result<(KnowledgeBase, LatentClusters)> {
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::Infeasible("entity and relation counts must be positive".into()));
    }
    let space = n_entities
        .checked_mul(n_entities - 1)
        .and_then(|v| v.checked_mul(n_relations))
        .ok_or_else(|| Error::Infeasible("triple space overflows".into()))?;
    if n_triples > space {
        return Err(Error::Infeasible(format!(
            "{n_triples} triples requested but only {space} distinct non-loop triples exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_groups = (n_entities / 25).clamp(2, 8).min(n_entities);
    let mut perm: Vec<usize> = (0..n_entities).collect();
    perm.shuffle(&mut rng);
    let mut entity_group = vec![0; n_entities];
    for (slot, &e) in perm.iter().enumerate() {
        entity_group[e] = slot % n_groups;
    }
    let group_size: Vec<usize> = (0..n_groups)
        .map(|g| entity_group.iter().filter(|&&x| x == g).count())
        .collect();

    let mut group_pairs: Vec<(usize, usize)> = (0..n_groups)
        .flat_map(|a| (0..n_groups).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b || group_size[a] > 1)
        .collect();
    group_pairs.shuffle(&mut rng);
    let relation_groups: Vec<(usize, usize)> = (0..n_relations)
        .map(|r| {
            if r < group_pairs.len() {
                group_pairs[r]
            } else {
                group_pairs[rng.gen_range(0..group_pairs.len())]
            }
        })
        .collect();
    let clusters = LatentClusters {
        entity_group,
        relation_groups,
    };

    // Index spaces: cluster candidates are enumerated implicitly per relation.
    let members: Vec<Vec<usize>> = (0..n_groups).map(|g| clusters.members(g)).collect();
    let caps: Vec<usize> = clusters
        .relation_groups
        .iter()
        .map(|&(a, b)| {
            if a == b {
                members[a].len() * (members[a].len() - 1)
            } else {
                members[a].len() * members[b].len()
            }
        })
        .collect();
    let mut seen = HashSet::new();
    let mut cluster_triples = Vec::new();
    for r in 0..n_relations {
        let (a, b) = clusters.relation_groups[r];
        for i in 0..caps[r] {
            let (h, t) = if a == b {
                let m = members[a].len() - 1;
                let (x, y) = (i / m, i % m);
                let y = if y < x { y } else { y + 1 };
                (members[a][x], members[a][y])
            } else {
                let m = members[b].len();
                (members[a][i / m], members[b][i % m])
            };
            // Shared group pairs between relations can produce identical pairs
            // but never identical triples, since the relation differs.
            let t = Triple::new(h, r, t);
            if seen.insert(t) {
                cluster_triples.push(t);
            }
        }
    }

    let mut triples: Vec<Triple> = if n_triples <= cluster_triples.len() {
        index::sample(&mut rng, cluster_triples.len(), n_triples)
            .into_iter()
            .map(|i| cluster_triples[i])
            .collect()
    } else {
        cluster_triples.shuffle(&mut rng);
        let mut out = cluster_triples;
        let extra = n_triples - out.len();
        let rest = space - out.len();
        if extra * 2 <= rest {
            while out.len() < n_triples {
                let h = rng.gen_range(0..n_entities);
                let t = rng.gen_range(0..n_entities);
                let r = rng.gen_range(0..n_relations);
                let tr = Triple::new(h, r, t);
                if h != t && seen.insert(tr) {
                    out.push(tr);
                }
            }
        } else {
            let mut pool = Vec::with_capacity(rest);
            for h in 0..n_entities {
                for t in 0..n_entities {
                    for r in 0..n_relations {
                        let tr = Triple::new(h, r, t);
                        if h != t && !seen.contains(&tr) {
                            pool.push(tr);
                        }
                    }
                }
            }
            out.extend(
                index::sample(&mut rng, pool.len(), extra)
                    .into_iter()
                    .map(|i| pool[i]),
            );
        }
        out
    };
    triples.shrink_to_fit();

    let symbols = (0..n_entities).map(|i| format!("e{i}")).collect();
    let names = (0..n_relations).map(|r| format!("r{r}")).collect();
    Ok((KnowledgeBase::new(symbols, names, triples)?, clusters))
}
