//! Complex-valued knowledge graph embeddings trained by margin-based link
//! prediction: scoring functions, the hinge loss and its sparse gradient,
//! negative sampling, the trainer, and embedding table persistence.

mod kernels;
mod trainer;

pub use trainer::{train, TrainOutput};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kgraph::{EntityKind, EntityRef, EntityTable, KnowledgeGraph, RelationType, Triple};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("entity {0:?} has no embedding")]
    MissingEntity(EntityRef),
    #[error("relation {0} has no embedding")]
    MissingRelation(RelationType),
    #[error("negative count must be a positive even number, got {0}")]
    OddNegatives(usize),
    #[error("no type-compatible replacement entity exists for kind {0:?}")]
    NoReplacement(EntityKind),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("missing or invalid header, expected '#dim=<d> scorer=<name>'")]
    Header,
    #[error("malformed line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A vector of `dim` complex numbers, stored as `[re_1..re_d, im_1..im_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec {
    dim: usize,
    data: Vec<f64>,
}

impl ComplexVec {
    pub fn zeros(dim: usize) -> Self {
        ComplexVec {
            dim,
            data: vec![0.0; 2 * dim],
        }
    }

    pub fn from_parts(re: Vec<f64>, im: Vec<f64>) -> Result<Self, EmbedError> {
        if re.len() != im.len() {
            return Err(EmbedError::DimMismatch {
                expected: re.len(),
                got: im.len(),
            });
        }
        let dim = re.len();
        let mut data = re;
        data.extend(im);
        Ok(ComplexVec { dim, data })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if data.len() != 2 * dim {
            return Err(EmbedError::DimMismatch {
                expected: 2 * dim,
                got: data.len(),
            });
        }
        Ok(ComplexVec { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn re(&self) -> &[f64] {
        &self.data[..self.dim]
    }

    pub fn im(&self) -> &[f64] {
        &self.data[self.dim..]
    }

    /// The backing `[re | im]` buffer of length `2 * dim`.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Which scoring function interprets the vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scorer {
    ComplEx,
    TransE,
    DistMult,
}

impl Scorer {
    pub const ALL: [Scorer; 3] = [Scorer::ComplEx, Scorer::TransE, Scorer::DistMult];

    pub fn token(self) -> &'static str {
        match self {
            Scorer::ComplEx => "complex",
            Scorer::TransE => "transe",
            Scorer::DistMult => "distmult",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Scorer::ALL.into_iter().find(|s| s.token() == token)
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Optimizer {
    Adagrad,
    Sgd,
}

impl Optimizer {
    pub fn token(self) -> &'static str {
        match self {
            Optimizer::Adagrad => "adagrad",
            Optimizer::Sgd => "sgd",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "adagrad" => Some(Optimizer::Adagrad),
            "sgd" => Some(Optimizer::Sgd),
            _ => None,
        }
    }
}

/// Training hyperparameters. `workers = 1` is the deterministic mode:
/// repeated runs with equal config and seed produce bit-identical tables.
/// More workers process batches concurrently with lock-free last-write-wins
/// updates, which gives up bit-reproducibility but keeps every other
/// contract.
#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub scorer: Scorer,
    pub optimizer: Optimizer,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 400,
            learning_rate: 0.01,
            margin: 0.1,
            epochs: 50,
            negatives: 10,
            batch_size: 128,
            seed: 0,
            scorer: Scorer::ComplEx,
            optimizer: Optimizer::Adagrad,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(EmbedError::Config(format!(
                "margin must be positive and finite, got {}",
                self.margin
            )));
        }
        if self.negatives == 0 || !self.negatives.is_multiple_of(2) {
            return Err(EmbedError::OddNegatives(self.negatives));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::Config("batch size must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(EmbedError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Addresses one learned vector: an entity's or a relation's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamKey {
    Entity(EntityRef),
    Relation(RelationType),
}

/// One vector per graph entity and per relation present in the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    scorer: Scorer,
    entities: EntityTable,
    vectors: [Vec<ComplexVec>; 3],
    relations: BTreeMap<RelationType, ComplexVec>,
}

impl EmbeddingTable {
    /// A table with a zero vector for every entity and no relation rows yet.
    pub fn zeroed(entities: EntityTable, dim: usize, scorer: Scorer) -> Self {
        let vectors = [
            vec![ComplexVec::zeros(dim); entities.count(EntityKind::User)],
            vec![ComplexVec::zeros(dim); entities.count(EntityKind::Item)],
            vec![ComplexVec::zeros(dim); entities.count(EntityKind::Aspect)],
        ];
        EmbeddingTable {
            dim,
            scorer,
            entities,
            vectors,
            relations: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scorer(&self) -> Scorer {
        self.scorer
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn entity_vec(&self, entity: EntityRef) -> Option<&ComplexVec> {
        self.vectors[entity.kind.index()].get(entity.id as usize)
    }

    pub fn entity_vec_mut(&mut self, entity: EntityRef) -> Option<&mut ComplexVec> {
        self.vectors[entity.kind.index()].get_mut(entity.id as usize)
    }

    pub fn relation_vec(&self, relation: RelationType) -> Option<&ComplexVec> {
        self.relations.get(&relation)
    }

    pub fn relation_vec_mut(&mut self, relation: RelationType) -> Option<&mut ComplexVec> {
        self.relations.get_mut(&relation)
    }

    pub fn param(&self, key: ParamKey) -> Option<&ComplexVec> {
        match key {
            ParamKey::Entity(e) => self.entity_vec(e),
            ParamKey::Relation(r) => self.relation_vec(r),
        }
    }

    pub fn param_mut(&mut self, key: ParamKey) -> Option<&mut ComplexVec> {
        match key {
            ParamKey::Entity(e) => self.entity_vec_mut(e),
            ParamKey::Relation(r) => self.relation_vec_mut(r),
        }
    }

    pub fn set_entity_vec(&mut self, entity: EntityRef, vec: ComplexVec) -> Result<(), EmbedError> {
        if vec.dim() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                got: vec.dim(),
            });
        }
        *self
            .entity_vec_mut(entity)
            .ok_or(EmbedError::MissingEntity(entity))? = vec;
        Ok(())
    }

    pub fn insert_relation(
        &mut self,
        relation: RelationType,
        vec: ComplexVec,
    ) -> Result<(), EmbedError> {
        if vec.dim() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                got: vec.dim(),
            });
        }
        self.relations.insert(relation, vec);
        Ok(())
    }

    pub fn relations(&self) -> impl Iterator<Item = (RelationType, &ComplexVec)> {
        self.relations.iter().map(|(r, v)| (*r, v))
    }

    /// Renders the table as TSV: a `#dim= scorer=` header, then one row per
    /// vector (`kind:key<TAB>` followed by the `2 * dim` values, real parts
    /// first). Values round-trip exactly.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#dim={} scorer={}\n", self.dim, self.scorer.token());
        for kind in EntityKind::ALL {
            for entity in self.entities.refs(kind) {
                let vec = self.entity_vec(entity).expect("table covers its entities");
                out.push_str(&format!(
                    "{}:{}\t{}\n",
                    kind.token(),
                    self.entities.key(entity),
                    join_values(vec)
                ));
            }
        }
        for (relation, vec) in &self.relations {
            out.push_str(&format!("r:{}\t{}\n", relation.token(), join_values(vec)));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_tsv(text: &str) -> Result<EmbeddingTable, EmbedError> {
        let mut lines = text.lines().enumerate();
        let (dim, scorer) = loop {
            match lines.next() {
                Some((_, line)) if line.trim().is_empty() => continue,
                Some((_, line)) => break parse_header(line)?,
                None => return Err(EmbedError::Header),
            }
        };
        let mut table = EmbeddingTable {
            dim,
            scorer,
            entities: EntityTable::new(),
            vectors: [Vec::new(), Vec::new(), Vec::new()],
            relations: BTreeMap::new(),
        };
        for (i, raw) in lines {
            let line = i + 1;
            let content = raw.strip_suffix('\r').unwrap_or(raw);
            if content.trim().is_empty() || content.starts_with('#') {
                continue;
            }
            let (head, values_raw) =
                content
                    .split_once('\t')
                    .ok_or_else(|| EmbedError::Malformed {
                        line,
                        reason: "expected 'kind:key<TAB>values'".into(),
                    })?;
            let mut values = Vec::with_capacity(2 * dim);
            for token in values_raw.split_whitespace() {
                let v: f64 = token.parse().map_err(|_| EmbedError::Malformed {
                    line,
                    reason: format!("unparsable value {token:?}"),
                })?;
                if !v.is_finite() {
                    return Err(EmbedError::Malformed {
                        line,
                        reason: format!("non-finite value {v}"),
                    });
                }
                values.push(v);
            }
            if values.len() != 2 * dim {
                return Err(EmbedError::Malformed {
                    line,
                    reason: format!("expected {} values, got {}", 2 * dim, values.len()),
                });
            }
            let vec = ComplexVec::from_flat(dim, values)?;
            let (kind_token, key) = head.split_once(':').ok_or_else(|| EmbedError::Malformed {
                line,
                reason: "expected 'kind:key'".into(),
            })?;
            if kind_token == "r" {
                let relation =
                    RelationType::from_token(key).ok_or_else(|| EmbedError::Malformed {
                        line,
                        reason: format!("unknown relation {key:?}"),
                    })?;
                if table.relations.insert(relation, vec).is_some() {
                    return Err(EmbedError::Malformed {
                        line,
                        reason: format!("duplicate relation row {key:?}"),
                    });
                }
            } else {
                let kind =
                    EntityKind::from_token(kind_token).ok_or_else(|| EmbedError::Malformed {
                        line,
                        reason: format!("unknown entity kind {kind_token:?}"),
                    })?;
                if key.is_empty() {
                    return Err(EmbedError::Malformed {
                        line,
                        reason: "empty entity key".into(),
                    });
                }
                let entity = table.entities.intern(kind, key);
                if entity.id as usize != table.vectors[kind.index()].len() {
                    return Err(EmbedError::Malformed {
                        line,
                        reason: format!("duplicate entity row {key:?}"),
                    });
                }
                table.vectors[kind.index()].push(vec);
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbedError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

fn join_values(vec: &ComplexVec) -> String {
    vec.as_flat()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_header(line: &str) -> Result<(usize, Scorer), EmbedError> {
    let mut dim = None;
    let mut scorer = None;
    for token in line.split_whitespace() {
        if let Some(raw) = token.strip_prefix("#dim=") {
            dim = raw.parse().ok();
        } else if let Some(raw) = token.strip_prefix("scorer=") {
            scorer = Scorer::from_token(raw);
        }
    }
    match (dim, scorer) {
        (Some(dim), Some(scorer)) if dim > 0 => Ok((dim, scorer)),
        _ => Err(EmbedError::Header),
    }
}

/// Plausibility score of a (source, relation, destination) vector triplet.
pub fn score(
    scorer: Scorer,
    s: &ComplexVec,
    r: &ComplexVec,
    d: &ComplexVec,
) -> Result<f64, EmbedError> {
    for v in [r, d] {
        if v.dim() != s.dim() {
            return Err(EmbedError::DimMismatch {
                expected: s.dim(),
                got: v.dim(),
            });
        }
    }
    Ok(kernels::score_flat(
        scorer,
        s.dim(),
        s.as_flat(),
        r.as_flat(),
        d.as_flat(),
    ))
}

/// Scores a graph edge against a table, erroring when a vector is missing.
pub fn score_triple(table: &EmbeddingTable, triple: &Triple) -> Result<f64, EmbedError> {
    let s = table
        .entity_vec(triple.source)
        .ok_or(EmbedError::MissingEntity(triple.source))?;
    let r = table
        .relation_vec(triple.relation)
        .ok_or(EmbedError::MissingRelation(triple.relation))?;
    let d = table
        .entity_vec(triple.destination)
        .ok_or(EmbedError::MissingEntity(triple.destination))?;
    score(table.scorer(), s, r, d)
}

/// Hinge ranking loss for one positive score against its negative scores:
/// each negative must trail the positive by at least the margin, so the
/// per-negative term is `max(neg - pos + margin, 0)`.
pub fn margin_loss(positive: f64, negatives: &[f64], margin: f64) -> f64 {
    negatives
        .iter()
        .map(|neg| (neg - positive + margin).max(0.0))
        .sum()
}

/// Loss and sparse gradient for one positive edge with its sampled
/// negatives. The returned map holds exactly the vectors the computation
/// touched (edge endpoints, relation, and negative endpoints); untouched
/// vectors never appear, so updates stay sparse.
pub fn loss_gradient(
    table: &EmbeddingTable,
    edge: &Triple,
    negatives: &[Triple],
    margin: f64,
) -> Result<(f64, BTreeMap<ParamKey, ComplexVec>), EmbedError> {
    let dim = table.dim();
    let width = 2 * dim;
    let mut keys: Vec<ParamKey> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let slot = |keys: &mut Vec<ParamKey>, vals: &mut Vec<f64>, key: ParamKey| {
        if let Some(pos) = keys.iter().position(|k| *k == key) {
            return Ok(pos);
        }
        let vec = table.param(key).ok_or(match key {
            ParamKey::Entity(e) => EmbedError::MissingEntity(e),
            ParamKey::Relation(r) => EmbedError::MissingRelation(r),
        })?;
        if vec.dim() != dim {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                got: vec.dim(),
            });
        }
        keys.push(key);
        vals.extend_from_slice(vec.as_flat());
        Ok(keys.len() - 1)
    };

    let es = slot(&mut keys, &mut vals, ParamKey::Entity(edge.source))?;
    let er = slot(&mut keys, &mut vals, ParamKey::Relation(edge.relation))?;
    let ed = slot(&mut keys, &mut vals, ParamKey::Entity(edge.destination))?;
    let mut neg_slots = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let ns = slot(&mut keys, &mut vals, ParamKey::Entity(neg.source))?;
        let nr = slot(&mut keys, &mut vals, ParamKey::Relation(neg.relation))?;
        let nd = slot(&mut keys, &mut vals, ParamKey::Entity(neg.destination))?;
        neg_slots.push((ns, nr, nd));
    }

    let mut grads = vec![0.0; keys.len() * width];
    let scorer = table.scorer();
    let at = |slot: usize| slot * width;
    let positive = kernels::score_flat(
        scorer,
        dim,
        &vals[at(es)..at(es) + width],
        &vals[at(er)..at(er) + width],
        &vals[at(ed)..at(ed) + width],
    );
    let mut loss = 0.0;
    for &(ns, nr, nd) in &neg_slots {
        let negative = kernels::score_flat(
            scorer,
            dim,
            &vals[at(ns)..at(ns) + width],
            &vals[at(nr)..at(nr) + width],
            &vals[at(nd)..at(nd) + width],
        );
        let active = negative - positive + margin;
        if active > 0.0 {
            loss += active;
            kernels::add_partials_flat(
                scorer,
                dim,
                &vals[at(ns)..at(ns) + width],
                &vals[at(nr)..at(nr) + width],
                &vals[at(nd)..at(nd) + width],
                1.0,
                &mut grads,
                at(ns),
                at(nr),
                at(nd),
            );
            kernels::add_partials_flat(
                scorer,
                dim,
                &vals[at(es)..at(es) + width],
                &vals[at(er)..at(er) + width],
                &vals[at(ed)..at(ed) + width],
                -1.0,
                &mut grads,
                at(es),
                at(er),
                at(ed),
            );
        }
    }

    let mut gradient = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        let chunk = grads[at(i)..at(i) + width].to_vec();
        gradient.insert(*key, ComplexVec::from_flat(dim, chunk)?);
    }
    Ok((loss, gradient))
}

/// Negatives for one positive edge, split by construction: half corrupt
/// one endpoint of the edge, half are fully random triples sharing its
/// relation.
#[derive(Debug, Clone)]
pub struct NegativeSamples {
    pub corrupted: Vec<Triple>,
    pub random: Vec<Triple>,
}

impl NegativeSamples {
    pub fn into_vec(self) -> Vec<Triple> {
        let mut out = self.corrupted;
        out.extend(self.random);
        out
    }
}

const SAMPLE_RETRIES: usize = 32;

fn random_entity(
    kind: EntityKind,
    graph: &KnowledgeGraph,
    rng: &mut impl Rng,
) -> Result<EntityRef, EmbedError> {
    let count = graph.entities().count(kind);
    if count == 0 {
        return Err(EmbedError::NoReplacement(kind));
    }
    Ok(EntityRef {
        kind,
        id: rng.random_range(0..count as u32),
    })
}

/// One corrupted negative: replaces the source or destination (chosen
/// uniformly) with a random entity of the same kind, resampling while the
/// candidate collides with an existing positive edge. After a bounded
/// number of retries the last candidate is accepted.
pub fn corrupt_edge(
    edge: &Triple,
    graph: &KnowledgeGraph,
    rng: &mut impl Rng,
) -> Result<Triple, EmbedError> {
    let replace_source = rng.random_bool(0.5);
    let kind = if replace_source {
        edge.relation.source_kind()
    } else {
        edge.relation.dest_kind()
    };
    let mut candidate = *edge;
    for _ in 0..SAMPLE_RETRIES {
        let entity = random_entity(kind, graph, rng)?;
        candidate = if replace_source {
            Triple::new(entity, edge.relation, edge.destination)
        } else {
            Triple::new(edge.source, edge.relation, entity)
        };
        if !graph.contains_edge(&candidate) {
            break;
        }
    }
    Ok(candidate)
}

fn random_negative(
    edge: &Triple,
    graph: &KnowledgeGraph,
    rng: &mut impl Rng,
) -> Result<Triple, EmbedError> {
    let relation = edge.relation;
    let mut candidate = *edge;
    for _ in 0..SAMPLE_RETRIES {
        let source = random_entity(relation.source_kind(), graph, rng)?;
        let destination = random_entity(relation.dest_kind(), graph, rng)?;
        candidate = Triple::new(source, relation, destination);
        if !graph.contains_edge(&candidate) {
            break;
        }
    }
    Ok(candidate)
}

/// Samples `n` negatives for the edge (`n` even): `n / 2` corrupted, then
/// `n / 2` random. All candidates are type-valid by construction.
pub fn sample_negatives_split(
    edge: &Triple,
    graph: &KnowledgeGraph,
    n: usize,
    rng: &mut impl Rng,
) -> Result<NegativeSamples, EmbedError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(EmbedError::OddNegatives(n));
    }
    let mut corrupted = Vec::with_capacity(n / 2);
    let mut random = Vec::with_capacity(n / 2);
    for _ in 0..n / 2 {
        corrupted.push(corrupt_edge(edge, graph, rng)?);
    }
    for _ in 0..n / 2 {
        random.push(random_negative(edge, graph, rng)?);
    }
    Ok(NegativeSamples { corrupted, random })
}

/// Flat variant of [`sample_negatives_split`]: corrupted first, then random.
pub fn sample_negatives(
    edge: &Triple,
    graph: &KnowledgeGraph,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>, EmbedError> {
    Ok(sample_negatives_split(edge, graph, n, rng)?.into_vec())
}

pub(crate) fn fill_negatives(
    edge: &Triple,
    graph: &KnowledgeGraph,
    n: usize,
    rng: &mut impl Rng,
    out: &mut Vec<Triple>,
) -> Result<(), EmbedError> {
    out.clear();
    for _ in 0..n / 2 {
        out.push(corrupt_edge(edge, graph, rng)?);
    }
    for _ in 0..n / 2 {
        out.push(random_negative(edge, graph, rng)?);
    }
    Ok(())
}
