//! The model lineup the harness evaluates: embedding rankers over each
//! graph variant, matrix factorization, popularity, and random.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{AspectOpinion, RatingRecord};
use crate::embed::{self, EmbeddingTable, TrainConfig};
use crate::kgraph::{build_graph, EntityKind, EntityRef, EntityTable, GraphVariant};
use crate::recsys::{
    self,
    mf::{mf_als_train, recommend_mf, AlsConfig, FactorModel},
    RecommendationList, RecsysError,
};
use crate::util::derive_seed;

/// A trained per-fold model that can order candidate items for a user.
/// Entity handles belong to the evaluation universe table.
pub trait RankModel: Send + Sync {
    fn rank(
        &self,
        user: EntityRef,
        candidates: &[EntityRef],
        k: usize,
    ) -> Result<RecommendationList, RecsysError>;
}

/// Builds a fresh model from one fold's training data. Training failures
/// come back as plain messages so the harness can report them per model
/// and keep evaluating the rest.
pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &str;
    fn train(
        &self,
        train_ratings: &[RatingRecord],
        train_opinions: &[AspectOpinion],
        universe: &EntityTable,
        seed: u64,
    ) -> Result<Box<dyn RankModel>, String>;
}

/// The six standard models of the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    Gera,
    Ger,
    Gea,
    Mf,
    Pop,
    Rdm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gera,
        ModelKind::Ger,
        ModelKind::Gea,
        ModelKind::Mf,
        ModelKind::Pop,
        ModelKind::Rdm,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ModelKind::Gera => "gera",
            ModelKind::Ger => "ger",
            ModelKind::Gea => "gea",
            ModelKind::Mf => "mf",
            ModelKind::Pop => "pop",
            ModelKind::Rdm => "rdm",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|m| m.token() == token)
    }
}

/// Factories for the requested model kinds. Embedding models share the
/// training hyperparameters; MF takes its own config. The per-fold seed
/// handed to `train` overrides the seeds inside both configs.
pub fn standard_models(
    kinds: &[ModelKind],
    train: &TrainConfig,
    als: &AlsConfig,
) -> Vec<Box<dyn ModelFactory>> {
    kinds
        .iter()
        .map(|kind| -> Box<dyn ModelFactory> {
            match kind {
                ModelKind::Gera => Box::new(EmbeddingFactory {
                    variant: GraphVariant::Gera,
                    config: train.clone(),
                }),
                ModelKind::Ger => Box::new(EmbeddingFactory {
                    variant: GraphVariant::Ger,
                    config: train.clone(),
                }),
                ModelKind::Gea => Box::new(EmbeddingFactory {
                    variant: GraphVariant::Gea,
                    config: train.clone(),
                }),
                ModelKind::Mf => Box::new(MfFactory {
                    config: als.clone(),
                }),
                ModelKind::Pop => Box::new(PopFactory),
                ModelKind::Rdm => Box::new(RdmFactory),
            }
        })
        .collect()
}

/// Below every cosine similarity, so entities unseen during fold training
/// sink to the bottom and resolve by the id tie rule.
const UNSEEN_SCORE: f64 = -2.0;

struct EmbeddingFactory {
    variant: GraphVariant,
    config: TrainConfig,
}

impl ModelFactory for EmbeddingFactory {
    fn name(&self) -> &str {
        self.variant.token()
    }

    fn train(
        &self,
        train_ratings: &[RatingRecord],
        train_opinions: &[AspectOpinion],
        universe: &EntityTable,
        seed: u64,
    ) -> Result<Box<dyn RankModel>, String> {
        let graph = build_graph(train_ratings, train_opinions, self.variant);
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        let out = embed::train(&graph, &config).map_err(|e| e.to_string())?;
        Ok(Box::new(EmbeddingModel {
            table: out.table,
            universe: universe.clone(),
        }))
    }
}

/// Ranks by cosine similarity in the fold-trained table. Universe handles
/// are translated by key because the fold graph interns its own ids; users
/// or items absent from the fold score [`UNSEEN_SCORE`].
struct EmbeddingModel {
    table: EmbeddingTable,
    universe: EntityTable,
}

impl RankModel for EmbeddingModel {
    fn rank(
        &self,
        user: EntityRef,
        candidates: &[EntityRef],
        k: usize,
    ) -> Result<RecommendationList, RecsysError> {
        if k == 0 {
            return Err(RecsysError::ZeroK);
        }
        let user_vec = self
            .table
            .entities()
            .lookup(EntityKind::User, self.universe.key(user))
            .and_then(|u| self.table.entity_vec(u));
        let scored = recsys::unique_sorted(candidates)
            .into_iter()
            .map(|item| {
                let item_vec = self
                    .table
                    .entities()
                    .lookup(EntityKind::Item, self.universe.key(item))
                    .and_then(|i| self.table.entity_vec(i));
                let score = match (user_vec, item_vec) {
                    (Some(u), Some(v)) => recsys::cosine(recsys::flatten(u), recsys::flatten(v))
                        .unwrap_or(UNSEEN_SCORE),
                    _ => UNSEEN_SCORE,
                };
                (item, score)
            })
            .collect();
        Ok(RecommendationList {
            user,
            entries: recsys::rank_desc(scored, k),
        })
    }
}

struct MfFactory {
    config: AlsConfig,
}

impl ModelFactory for MfFactory {
    fn name(&self) -> &str {
        "mf"
    }

    fn train(
        &self,
        train_ratings: &[RatingRecord],
        _train_opinions: &[AspectOpinion],
        universe: &EntityTable,
        seed: u64,
    ) -> Result<Box<dyn RankModel>, String> {
        // factor rows span the whole universe so every candidate has a row;
        // users and items unseen in this fold shrink to zero factors
        let mut triples = Vec::with_capacity(train_ratings.len());
        for r in train_ratings {
            let u = universe
                .lookup(EntityKind::User, &r.user_key)
                .ok_or_else(|| format!("user {:?} outside the rating universe", r.user_key))?;
            let i = universe
                .lookup(EntityKind::Item, &r.item_key)
                .ok_or_else(|| format!("item {:?} outside the rating universe", r.item_key))?;
            triples.push((u.id as usize, i.id as usize, r.rating));
        }
        let config = AlsConfig {
            seed,
            ..self.config.clone()
        };
        let model = mf_als_train(
            &triples,
            universe.count(EntityKind::User),
            universe.count(EntityKind::Item),
            &config,
        )
        .map_err(|e| e.to_string())?;
        Ok(Box::new(MfModel { model }))
    }
}

struct MfModel {
    model: FactorModel,
}

impl RankModel for MfModel {
    fn rank(
        &self,
        user: EntityRef,
        candidates: &[EntityRef],
        k: usize,
    ) -> Result<RecommendationList, RecsysError> {
        recommend_mf(&self.model, user, candidates, k)
    }
}

struct PopFactory;

impl ModelFactory for PopFactory {
    fn name(&self) -> &str {
        "pop"
    }

    fn train(
        &self,
        train_ratings: &[RatingRecord],
        _train_opinions: &[AspectOpinion],
        universe: &EntityTable,
        _seed: u64,
    ) -> Result<Box<dyn RankModel>, String> {
        let mut items = Vec::with_capacity(train_ratings.len());
        for r in train_ratings {
            items.push(
                universe
                    .lookup(EntityKind::Item, &r.item_key)
                    .ok_or_else(|| format!("item {:?} outside the rating universe", r.item_key))?,
            );
        }
        Ok(Box::new(PopModel {
            counts: recsys::interaction_counts(items),
        }))
    }
}

struct PopModel {
    counts: HashMap<EntityRef, u64>,
}

impl RankModel for PopModel {
    fn rank(
        &self,
        user: EntityRef,
        candidates: &[EntityRef],
        k: usize,
    ) -> Result<RecommendationList, RecsysError> {
        recsys::recommend_pop(user, &self.counts, candidates, k)
    }
}

struct RdmFactory;

impl ModelFactory for RdmFactory {
    fn name(&self) -> &str {
        "rdm"
    }

    fn train(
        &self,
        _train_ratings: &[RatingRecord],
        _train_opinions: &[AspectOpinion],
        _universe: &EntityTable,
        seed: u64,
    ) -> Result<Box<dyn RankModel>, String> {
        Ok(Box::new(RdmModel { seed }))
    }
}

/// Draws an independent stream per user so lists are uncorrelated across
/// users while staying deterministic for the fold seed.
struct RdmModel {
    seed: u64,
}

impl RankModel for RdmModel {
    fn rank(
        &self,
        user: EntityRef,
        candidates: &[EntityRef],
        k: usize,
    ) -> Result<RecommendationList, RecsysError> {
        let user_seed = derive_seed(self.seed, "user", user.id as u64, 0);
        recsys::recommend_random(user, candidates, k, user_seed)
    }
}
