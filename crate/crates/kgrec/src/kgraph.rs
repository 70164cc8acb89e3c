//! Tripartite knowledge graph over users, items, and review aspects.
//!
//! Rating records become `highRating`/`lowRating` edges (the low side is
//! ratings of at most 3), and each aspect opinion becomes a user-to-aspect
//! edge chosen by polarity sign plus an aspect-to-item `belongsTo` edge.
//! Aspect nodes are global: one node per normalized term, shared across all
//! items it belongs to. Edges are deduplicated.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{AspectOpinion, RatingRecord};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing or invalid header, expected '#variant=<ger|gea|gera>'")]
    Header,
    #[error("malformed line {line}: expected 'kind:key<TAB>relation<TAB>kind:key'")]
    Malformed { line: usize },
    #[error("unknown relation {token:?}, line {line}")]
    UnknownRelation { token: String, line: usize },
    #[error("unknown entity kind {token:?}, line {line}")]
    UnknownKind { token: String, line: usize },
    #[error("empty entity key, line {line}")]
    EmptyKey { line: usize },
    #[error("type constraint violated, line {line}: {relation} connects {expected}")]
    TypeConstraint {
        line: usize,
        relation: &'static str,
        expected: &'static str,
    },
    #[error("edge violates type constraints: {relation} connects {expected}")]
    InvalidEdge {
        relation: &'static str,
        expected: &'static str,
    },
}

/// The three node populations of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EntityKind {
    User,
    Item,
    Aspect,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::User, EntityKind::Item, EntityKind::Aspect];

    pub fn token(self) -> char {
        match self {
            EntityKind::User => 'u',
            EntityKind::Item => 'i',
            EntityKind::Aspect => 'a',
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "u" => Some(EntityKind::User),
            "i" => Some(EntityKind::Item),
            "a" => Some(EntityKind::Aspect),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            EntityKind::User => 0,
            EntityKind::Item => 1,
            EntityKind::Aspect => 2,
        }
    }
}

/// Handle to an interned entity: its kind plus a dense per-kind id assigned
/// in first-occurrence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: u32,
}

/// The six edge types. Each fixes the kinds of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RelationType {
    Likes,
    Dislikes,
    DoesNotCare,
    BelongsTo,
    HighRating,
    LowRating,
}

impl RelationType {
    pub const ALL: [RelationType; 6] = [
        RelationType::Likes,
        RelationType::Dislikes,
        RelationType::DoesNotCare,
        RelationType::BelongsTo,
        RelationType::HighRating,
        RelationType::LowRating,
    ];

    pub fn token(self) -> &'static str {
        match self {
            RelationType::Likes => "likes",
            RelationType::Dislikes => "dislikes",
            RelationType::DoesNotCare => "doesNotCare",
            RelationType::BelongsTo => "belongsTo",
            RelationType::HighRating => "highRating",
            RelationType::LowRating => "lowRating",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        RelationType::ALL.into_iter().find(|r| r.token() == token)
    }

    pub fn source_kind(self) -> EntityKind {
        match self {
            RelationType::BelongsTo => EntityKind::Aspect,
            _ => EntityKind::User,
        }
    }

    pub fn dest_kind(self) -> EntityKind {
        match self {
            RelationType::Likes | RelationType::Dislikes | RelationType::DoesNotCare => {
                EntityKind::Aspect
            }
            _ => EntityKind::Item,
        }
    }

    fn expected(self) -> &'static str {
        match self.source_kind() {
            EntityKind::User => match self.dest_kind() {
                EntityKind::Aspect => "user -> aspect",
                _ => "user -> item",
            },
            _ => "aspect -> item",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A directed labeled edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Triple {
    pub source: EntityRef,
    pub relation: RelationType,
    pub destination: EntityRef,
}

impl Triple {
    pub fn new(source: EntityRef, relation: RelationType, destination: EntityRef) -> Self {
        Triple {
            source,
            relation,
            destination,
        }
    }

    /// True when both endpoint kinds match what the relation requires.
    pub fn satisfies_type_constraints(&self) -> bool {
        self.source.kind == self.relation.source_kind()
            && self.destination.kind == self.relation.dest_kind()
    }
}

/// Which evidence the graph carries: ratings only, opinions only, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GraphVariant {
    Ger,
    Gea,
    Gera,
}

impl GraphVariant {
    pub fn token(self) -> &'static str {
        match self {
            GraphVariant::Ger => "ger",
            GraphVariant::Gea => "gea",
            GraphVariant::Gera => "gera",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "ger" => Some(GraphVariant::Ger),
            "gea" => Some(GraphVariant::Gea),
            "gera" => Some(GraphVariant::Gera),
            _ => None,
        }
    }

    pub fn includes_ratings(self) -> bool {
        matches!(self, GraphVariant::Ger | GraphVariant::Gera)
    }

    pub fn includes_opinions(self) -> bool {
        matches!(self, GraphVariant::Gea | GraphVariant::Gera)
    }
}

/// Interning table mapping `(kind, key)` to dense per-kind ids in
/// first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityTable {
    keys: [Vec<String>; 3],
    index: [HashMap<String, u32>; 3],
}

impl EntityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, kind: EntityKind, key: &str) -> EntityRef {
        let slot = kind.index();
        if let Some(&id) = self.index[slot].get(key) {
            return EntityRef { kind, id };
        }
        let id = self.keys[slot].len() as u32;
        self.keys[slot].push(key.to_string());
        self.index[slot].insert(key.to_string(), id);
        EntityRef { kind, id }
    }

    pub fn lookup(&self, kind: EntityKind, key: &str) -> Option<EntityRef> {
        self.index[kind.index()]
            .get(key)
            .map(|&id| EntityRef { kind, id })
    }

    /// The key interned for `entity`. Panics on a handle from another table.
    pub fn key(&self, entity: EntityRef) -> &str {
        &self.keys[entity.kind.index()][entity.id as usize]
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        self.keys[kind.index()].len()
    }

    pub fn total(&self) -> usize {
        self.keys.iter().map(Vec::len).sum()
    }

    pub fn refs(&self, kind: EntityKind) -> impl Iterator<Item = EntityRef> + '_ {
        (0..self.count(kind) as u32).map(move |id| EntityRef { kind, id })
    }
}

/// Chooses the rating edge type: at most 3 is a low rating, anything above
/// is high.
pub fn rating_relation(rating: f64) -> RelationType {
    if rating <= 3.0 {
        RelationType::LowRating
    } else {
        RelationType::HighRating
    }
}

/// Chooses the user-to-aspect edge type from the polarity sign.
pub fn opinion_relation(polarity: f64) -> RelationType {
    if polarity > 0.0 {
        RelationType::Likes
    } else if polarity < 0.0 {
        RelationType::Dislikes
    } else {
        RelationType::DoesNotCare
    }
}

/// Incrementally builds a graph of the chosen variant. Records outside the
/// variant's evidence are ignored entirely (their entities are not interned).
#[derive(Debug)]
pub struct GraphBuilder {
    variant: GraphVariant,
    entities: EntityTable,
    edges: Vec<Triple>,
    seen: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new(variant: GraphVariant) -> Self {
        GraphBuilder {
            variant,
            entities: EntityTable::new(),
            edges: Vec::new(),
            seen: HashSet::new(),
        }
    }

    fn push(&mut self, triple: Triple) {
        if self.seen.insert(triple) {
            self.edges.push(triple);
        }
    }

    pub fn add_rating(&mut self, record: &RatingRecord) {
        if !self.variant.includes_ratings() {
            return;
        }
        let user = self.entities.intern(EntityKind::User, &record.user_key);
        let item = self.entities.intern(EntityKind::Item, &record.item_key);
        self.push(Triple::new(user, rating_relation(record.rating), item));
    }

    pub fn add_opinion(&mut self, record: &AspectOpinion) {
        if !self.variant.includes_opinions() {
            return;
        }
        let user = self.entities.intern(EntityKind::User, &record.user_key);
        let aspect = self
            .entities
            .intern(EntityKind::Aspect, &record.aspect_term);
        let item = self.entities.intern(EntityKind::Item, &record.item_key);
        self.push(Triple::new(user, opinion_relation(record.polarity), aspect));
        self.push(Triple::new(aspect, RelationType::BelongsTo, item));
    }

    pub fn finish(self) -> KnowledgeGraph {
        KnowledgeGraph {
            variant: self.variant,
            entities: self.entities,
            edges: self.edges,
            edge_set: self.seen,
        }
    }
}

/// Builds a graph from whole record slices: all ratings first (in input
/// order), then all opinions.
pub fn build_graph(
    ratings: &[RatingRecord],
    opinions: &[AspectOpinion],
    variant: GraphVariant,
) -> KnowledgeGraph {
    let mut builder = GraphBuilder::new(variant);
    for r in ratings {
        builder.add_rating(r);
    }
    for o in opinions {
        builder.add_opinion(o);
    }
    builder.finish()
}

/// A deduplicated edge list plus its entity table and variant tag.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    variant: GraphVariant,
    entities: EntityTable,
    edges: Vec<Triple>,
    edge_set: HashSet<Triple>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant
            && self.entities == other.entities
            && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    pub fn variant(&self) -> GraphVariant {
        self.variant
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn contains_edge(&self, triple: &Triple) -> bool {
        self.edge_set.contains(triple)
    }

    /// A graph with the same entity table and variant but a replacement edge
    /// list (deduplicated, order preserved). Handy for hold-out splits.
    pub fn with_edges(&self, edges: Vec<Triple>) -> Result<KnowledgeGraph, GraphError> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for edge in edges {
            if !edge.satisfies_type_constraints() {
                return Err(GraphError::InvalidEdge {
                    relation: edge.relation.token(),
                    expected: edge.relation.expected(),
                });
            }
            if seen.insert(edge) {
                kept.push(edge);
            }
        }
        Ok(KnowledgeGraph {
            variant: self.variant,
            entities: self.entities.clone(),
            edges: kept,
            edge_set: seen,
        })
    }

    /// Renders the graph as TSV: a `#variant=` header, then one
    /// `kind:key<TAB>relation<TAB>kind:key` line per edge.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#variant={}\n", self.variant.token());
        for edge in &self.edges {
            out.push_str(&format!(
                "{}:{}\t{}\t{}:{}\n",
                edge.source.kind.token(),
                self.entities.key(edge.source),
                edge.relation.token(),
                edge.destination.kind.token(),
                self.entities.key(edge.destination),
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_tsv(text: &str) -> Result<KnowledgeGraph, GraphError> {
        let mut lines = text.lines().enumerate();
        let variant = loop {
            match lines.next() {
                Some((_, line)) if line.trim().is_empty() => continue,
                Some((_, line)) => {
                    break line
                        .strip_prefix("#variant=")
                        .and_then(|t| GraphVariant::from_token(t.trim()))
                        .ok_or(GraphError::Header)?
                }
                None => return Err(GraphError::Header),
            }
        };
        let mut entities = EntityTable::new();
        let mut edges = Vec::new();
        let mut edge_set = HashSet::new();
        for (i, raw) in lines {
            let line = i + 1;
            let content = raw.strip_suffix('\r').unwrap_or(raw);
            if content.trim().is_empty() || content.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split('\t').collect();
            if fields.len() != 3 {
                return Err(GraphError::Malformed { line });
            }
            let relation =
                RelationType::from_token(fields[1]).ok_or_else(|| GraphError::UnknownRelation {
                    token: fields[1].to_string(),
                    line,
                })?;
            let source = parse_entity(&mut entities, fields[0], line)?;
            let destination = parse_entity(&mut entities, fields[2], line)?;
            let triple = Triple::new(source, relation, destination);
            if !triple.satisfies_type_constraints() {
                return Err(GraphError::TypeConstraint {
                    line,
                    relation: relation.token(),
                    expected: relation.expected(),
                });
            }
            if edge_set.insert(triple) {
                edges.push(triple);
            }
        }
        Ok(KnowledgeGraph {
            variant,
            entities,
            edges,
            edge_set,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeGraph, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

fn parse_entity(
    entities: &mut EntityTable,
    field: &str,
    line: usize,
) -> Result<EntityRef, GraphError> {
    let (kind_token, key) = field
        .split_once(':')
        .ok_or(GraphError::Malformed { line })?;
    let kind = EntityKind::from_token(kind_token).ok_or_else(|| GraphError::UnknownKind {
        token: kind_token.to_string(),
        line,
    })?;
    if key.is_empty() {
        return Err(GraphError::EmptyKey { line });
    }
    Ok(entities.intern(kind, key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rating(user: &str, item: &str, value: f64) -> RatingRecord {
        RatingRecord {
            user_key: user.into(),
            item_key: item.into(),
            rating: value,
            timestamp: None,
        }
    }

    fn opinion(user: &str, item: &str, aspect: &str, polarity: f64) -> AspectOpinion {
        AspectOpinion {
            user_key: user.into(),
            item_key: item.into(),
            aspect_term: aspect.into(),
            polarity,
        }
    }

    #[test]
    fn rating_threshold_splits_at_three() {
        assert_eq!(rating_relation(3.0), RelationType::LowRating);
        assert_eq!(rating_relation(1.0), RelationType::LowRating);
        assert_eq!(rating_relation(3.5), RelationType::HighRating);
        assert_eq!(rating_relation(5.0), RelationType::HighRating);
    }

    #[test]
    fn opinion_relation_follows_polarity_sign() {
        assert_eq!(opinion_relation(0.7), RelationType::Likes);
        assert_eq!(opinion_relation(-1.0), RelationType::Dislikes);
        assert_eq!(opinion_relation(0.0), RelationType::DoesNotCare);
    }

    #[test]
    fn opinion_always_adds_belongs_to() {
        let g = build_graph(
            &[],
            &[opinion("u1", "i1", "battery", 0.0)],
            GraphVariant::Gea,
        );
        let relations: Vec<RelationType> = g.edges().iter().map(|e| e.relation).collect();
        assert_eq!(
            relations,
            vec![RelationType::DoesNotCare, RelationType::BelongsTo]
        );
    }

    #[test]
    fn duplicate_evidence_collapses_to_one_edge() {
        // two users praising the same aspect of one item share the
        // aspect-to-item edge; repeating a rating adds nothing
        let g = build_graph(
            &[rating("u1", "i1", 4.0), rating("u1", "i1", 4.0)],
            &[
                opinion("u1", "i1", "battery", 0.9),
                opinion("u2", "i1", "battery", 0.5),
            ],
            GraphVariant::Gera,
        );
        assert_eq!(g.edges().len(), 4); // highRating, likes x2, one belongsTo
        let belongs = g
            .edges()
            .iter()
            .filter(|e| e.relation == RelationType::BelongsTo)
            .count();
        assert_eq!(belongs, 1);
    }

    #[test]
    fn conflicting_evidence_is_representable() {
        let g = build_graph(
            &[rating("u1", "i1", 5.0)],
            &[opinion("u1", "i1", "battery", -0.8)],
            GraphVariant::Gera,
        );
        let user = g.entities().lookup(EntityKind::User, "u1").unwrap();
        let item = g.entities().lookup(EntityKind::Item, "i1").unwrap();
        let aspect = g.entities().lookup(EntityKind::Aspect, "battery").unwrap();
        assert!(g.contains_edge(&Triple::new(user, RelationType::HighRating, item)));
        assert!(g.contains_edge(&Triple::new(user, RelationType::Dislikes, aspect)));
    }

    #[test]
    fn variants_select_their_evidence() {
        let ratings = vec![rating("u1", "i1", 4.0)];
        let opinions = vec![opinion("u2", "i2", "price", 0.5)];
        let ger = build_graph(&ratings, &opinions, GraphVariant::Ger);
        assert_eq!(ger.edges().len(), 1);
        assert_eq!(ger.entities().count(EntityKind::Aspect), 0);
        assert_eq!(ger.entities().count(EntityKind::User), 1);
        let gea = build_graph(&ratings, &opinions, GraphVariant::Gea);
        assert_eq!(gea.edges().len(), 2);
        assert!(gea.entities().lookup(EntityKind::User, "u1").is_none());
        let gera = build_graph(&ratings, &opinions, GraphVariant::Gera);
        assert_eq!(gera.edges().len(), 3);
    }

    #[test]
    fn aspect_nodes_are_global_across_items() {
        let g = build_graph(
            &[],
            &[
                opinion("u1", "i1", "battery", 0.9),
                opinion("u2", "i2", "battery", 0.9),
            ],
            GraphVariant::Gea,
        );
        assert_eq!(g.entities().count(EntityKind::Aspect), 1);
        let belongs = g
            .edges()
            .iter()
            .filter(|e| e.relation == RelationType::BelongsTo)
            .count();
        assert_eq!(belongs, 2); // same aspect node, one belongsTo per item
    }

    #[test]
    fn entity_ids_are_dense_in_first_occurrence_order() {
        let g = build_graph(
            &[rating("bob", "zebra", 4.0), rating("alice", "apple", 2.0)],
            &[],
            GraphVariant::Ger,
        );
        let bob = g.entities().lookup(EntityKind::User, "bob").unwrap();
        let alice = g.entities().lookup(EntityKind::User, "alice").unwrap();
        assert_eq!(bob.id, 0);
        assert_eq!(alice.id, 1);
        assert_eq!(g.entities().key(bob), "bob");
    }

    #[test]
    fn tsv_round_trip_preserves_graph() {
        let g = build_graph(
            &[rating("u1", "i1", 2.0), rating("u2", "i1", 5.0)],
            &[
                opinion("u1", "i1", "battery", 1.0),
                opinion("u2", "i1", "battery", -1.0),
                opinion("u3", "i1", "screen", 0.0),
            ],
            GraphVariant::Gera,
        );
        let loaded = KnowledgeGraph::from_tsv(&g.to_tsv()).unwrap();
        assert_eq!(loaded, g);
        assert_eq!(loaded.to_tsv(), g.to_tsv());
    }

    #[test]
    fn load_rejects_unknown_relation_with_line_number() {
        let text = "#variant=gera\nu:u1\tloves\ta:battery\n";
        let err = KnowledgeGraph::from_tsv(text).unwrap_err();
        assert_eq!(err.to_string(), "unknown relation \"loves\", line 2");
    }

    #[test]
    fn load_rejects_bad_header_and_kinds() {
        assert!(matches!(
            KnowledgeGraph::from_tsv("u:u1\tlikes\ta:battery\n"),
            Err(GraphError::Header)
        ));
        let err = KnowledgeGraph::from_tsv("#variant=ger\nx:u1\thighRating\ti:i1\n").unwrap_err();
        assert!(matches!(err, GraphError::UnknownKind { line: 2, .. }));
    }

    #[test]
    fn load_rejects_type_constraint_violations() {
        let err = KnowledgeGraph::from_tsv("#variant=gera\ni:i1\tlikes\ta:battery\n").unwrap_err();
        assert!(matches!(err, GraphError::TypeConstraint { line: 2, .. }));
    }

    #[test]
    fn with_edges_keeps_entities_and_validates() {
        let g = build_graph(
            &[rating("u1", "i1", 4.0), rating("u1", "i2", 2.0)],
            &[],
            GraphVariant::Ger,
        );
        let half = g.with_edges(g.edges()[..1].to_vec()).unwrap();
        assert_eq!(half.edges().len(), 1);
        assert_eq!(half.entities(), g.entities());
        let user = g.entities().lookup(EntityKind::User, "u1").unwrap();
        let bad = Triple::new(user, RelationType::BelongsTo, user);
        assert!(g.with_edges(vec![bad]).is_err());
    }

    prop_compose! {
        fn arb_rating()(u in 0u8..6, i in 0u8..6, r in 1.0f64..=5.0) -> RatingRecord {
            RatingRecord {
                user_key: format!("u{u}"),
                item_key: format!("i{i}"),
                rating: r,
                timestamp: None,
            }
        }
    }

    prop_compose! {
        fn arb_opinion()(u in 0u8..6, i in 0u8..6, a in 0u8..4, p in -1.0f64..=1.0) -> AspectOpinion {
            AspectOpinion {
                user_key: format!("u{u}"),
                item_key: format!("i{i}"),
                aspect_term: format!("asp{a}"),
                polarity: p,
            }
        }
    }

    proptest! {
        #[test]
        fn built_edges_always_satisfy_type_constraints(
            ratings in proptest::collection::vec(arb_rating(), 0..30),
            opinions in proptest::collection::vec(arb_opinion(), 0..30),
        ) {
            for variant in [GraphVariant::Ger, GraphVariant::Gea, GraphVariant::Gera] {
                let g = build_graph(&ratings, &opinions, variant);
                for edge in g.edges() {
                    prop_assert!(edge.satisfies_type_constraints());
                }
            }
        }

        #[test]
        fn union_variant_edge_count_is_sum_of_parts(
            ratings in proptest::collection::vec(arb_rating(), 0..30),
            opinions in proptest::collection::vec(arb_opinion(), 0..30),
        ) {
            let ger = build_graph(&ratings, &opinions, GraphVariant::Ger);
            let gea = build_graph(&ratings, &opinions, GraphVariant::Gea);
            let gera = build_graph(&ratings, &opinions, GraphVariant::Gera);
            // rating and opinion edges cannot coincide, so the union is exact
            prop_assert_eq!(gera.edges().len(), ger.edges().len() + gea.edges().len());
        }

        #[test]
        fn graph_tsv_round_trip(
            ratings in proptest::collection::vec(arb_rating(), 0..20),
            opinions in proptest::collection::vec(arb_opinion(), 0..20),
        ) {
            let g = build_graph(&ratings, &opinions, GraphVariant::Gera);
            let loaded = KnowledgeGraph::from_tsv(&g.to_tsv()).unwrap();
            prop_assert_eq!(loaded, g);
        }
    }
}
