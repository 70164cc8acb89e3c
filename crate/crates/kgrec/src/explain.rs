//! Aspect-level explanations for recommended items. A recommendation is
//! explained by the opinions a cohort of the target user's most similar
//! users expressed about the item's aspects, aggregated into per-aspect
//! like/dislike/indifference counts, plus batch-level quality statistics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embed::EmbeddingTable;
use crate::kgraph::{EntityKind, EntityRef, EntityTable, KnowledgeGraph, RelationType, Triple};
use crate::recsys::{cosine, flatten, recommend_embedding, RecsysError};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("n must be at least 1")]
    ZeroN,
    #[error("batch must be non-empty")]
    EmptyBatch,
    #[error(transparent)]
    Recsys(#[from] RecsysError),
}

/// Cohort opinion tallies for one aspect. Each cohort member contributes
/// at most one to each counter since graph edges are deduplicated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AspectCounts {
    pub likes: u32,
    pub dislikes: u32,
    pub does_not_care: u32,
}

impl AspectCounts {
    fn is_zero(&self) -> bool {
        self.likes == 0 && self.dislikes == 0 && self.does_not_care == 0
    }
}

/// Why one item was recommended to one user: for every aspect of the item
/// that at least one cohort member has an opinion about, the cohort's
/// opinion counts. Aspects are listed in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Explanation {
    pub user: EntityRef,
    pub item: EntityRef,
    pub aspects: Vec<(EntityRef, AspectCounts)>,
    pub cohort_size: usize,
}

/// The `n` users most similar to `user` by cosine over the flattened
/// embedding vectors, descending, ties broken by ascending id. The target
/// is never part of its own cohort.
pub fn top_similar_users(
    user: EntityRef,
    table: &EmbeddingTable,
    n: usize,
) -> Result<Vec<EntityRef>, ExplainError> {
    if n == 0 {
        return Err(ExplainError::ZeroN);
    }
    let user_vec = table
        .entity_vec(user)
        .ok_or(RecsysError::MissingUser(user))?;
    let mut scored = Vec::new();
    for other in table.entities().refs(EntityKind::User) {
        if other == user {
            continue;
        }
        let other_vec = table
            .entity_vec(other)
            .expect("enumerated users exist in the table");
        scored.push((other, cosine(flatten(user_vec), flatten(other_vec))?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored.into_iter().map(|(u, _)| u).collect())
}

/// Tallies the cohort's opinions about the item's aspects. An aspect is an
/// entity with a BelongsTo edge into the item; a cohort member counts once
/// per (aspect, opinion relation) edge it holds. Aspects nobody in the
/// cohort has an opinion about are dropped, and when that leaves nothing
/// the item is uncovered and `None` is returned.
pub fn explain_item(
    user: EntityRef,
    item: EntityRef,
    graph: &KnowledgeGraph,
    cohort: &[EntityRef],
) -> Option<Explanation> {
    let mut counts: BTreeMap<EntityRef, AspectCounts> = BTreeMap::new();
    for edge in graph.edges() {
        if edge.relation == RelationType::BelongsTo && edge.destination == item {
            counts.insert(edge.source, AspectCounts::default());
        }
    }
    for (aspect, tally) in counts.iter_mut() {
        for &member in cohort {
            if graph.contains_edge(&Triple::new(member, RelationType::Likes, *aspect)) {
                tally.likes += 1;
            }
            if graph.contains_edge(&Triple::new(member, RelationType::Dislikes, *aspect)) {
                tally.dislikes += 1;
            }
            if graph.contains_edge(&Triple::new(member, RelationType::DoesNotCare, *aspect)) {
                tally.does_not_care += 1;
            }
        }
    }
    let aspects: Vec<(EntityRef, AspectCounts)> = counts
        .into_iter()
        .filter(|(_, tally)| !tally.is_zero())
        .collect();
    if aspects.is_empty() {
        return None;
    }
    Some(Explanation {
        user,
        item,
        aspects,
        cohort_size: cohort.len(),
    })
}

/// Recommends the top `k` items for `user` over every item in the table,
/// then explains each one through the opinions of the `n` most similar
/// users. Items come back in recommendation order, uncovered ones paired
/// with `None`.
pub fn explain_recommendations(
    user: EntityRef,
    table: &EmbeddingTable,
    graph: &KnowledgeGraph,
    k: usize,
    n: usize,
) -> Result<Vec<(EntityRef, Option<Explanation>)>, ExplainError> {
    let candidates: Vec<EntityRef> = table.entities().refs(EntityKind::Item).collect();
    let recommended = recommend_embedding(table, user, &candidates, k)?;
    let cohort = top_similar_users(user, table, n)?;
    Ok(recommended
        .entries
        .into_iter()
        .map(|(item, _)| (item, explain_item(user, item, graph, &cohort)))
        .collect())
}

/// Quality statistics over a batch of per-user explanation lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationStats {
    /// Fraction of recommended items that received an explanation.
    pub coverage: f64,
    /// Total likes over total dislikes plus indifference counts; `None`
    /// when the denominator is zero.
    pub lk_other: Option<f64>,
    /// Mean number of unique aspects per recommendation list.
    pub n_aspects: f64,
    /// Mean number of aspects per covered item; 0 when nothing is covered.
    pub asp_per_item: f64,
}

pub fn explanation_stats(
    batch: &[Vec<(EntityRef, Option<Explanation>)>],
) -> Result<ExplanationStats, ExplainError> {
    let total: usize = batch.iter().map(|list| list.len()).sum();
    if batch.is_empty() || total == 0 {
        return Err(ExplainError::EmptyBatch);
    }
    let mut covered = 0usize;
    let mut likes = 0u64;
    let mut others = 0u64;
    let mut aspect_entries = 0usize;
    let mut unique_sum = 0.0;
    for list in batch {
        let mut unique: Vec<EntityRef> = Vec::new();
        for (_, explanation) in list {
            let Some(explanation) = explanation else {
                continue;
            };
            covered += 1;
            aspect_entries += explanation.aspects.len();
            for (aspect, tally) in &explanation.aspects {
                likes += u64::from(tally.likes);
                others += u64::from(tally.dislikes) + u64::from(tally.does_not_care);
                unique.push(*aspect);
            }
        }
        unique.sort_unstable();
        unique.dedup();
        unique_sum += unique.len() as f64;
    }
    Ok(ExplanationStats {
        coverage: covered as f64 / total as f64,
        lk_other: if others == 0 {
            None
        } else {
            Some(likes as f64 / others as f64)
        },
        n_aspects: unique_sum / batch.len() as f64,
        asp_per_item: if covered == 0 {
            0.0
        } else {
            aspect_entries as f64 / covered as f64
        },
    })
}

/// Renders an explanation as "aspect (x +, y -)" terms joined by "; ",
/// with an extra ", z ~" inside the parentheses when anyone was
/// indifferent.
pub fn render_explanation(explanation: &Explanation, entities: &EntityTable) -> String {
    let mut parts = Vec::with_capacity(explanation.aspects.len());
    for (aspect, tally) in &explanation.aspects {
        let mut part = format!(
            "{} ({} +, {} -",
            entities.key(*aspect),
            tally.likes,
            tally.dislikes
        );
        if tally.does_not_care > 0 {
            part.push_str(&format!(", {} ~", tally.does_not_care));
        }
        part.push(')');
        parts.push(part);
    }
    parts.join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, AspectOpinion, RatingRecord, SynthConfig};
    use crate::embed::{ComplexVec, EmbeddingTable, Scorer, TrainConfig};
    use crate::kgraph::{build_graph, GraphVariant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn user(id: u32) -> EntityRef {
        EntityRef {
            kind: EntityKind::User,
            id,
        }
    }

    /// Two users, one item, one aspect: u0 likes a0 which belongs to i0.
    fn tiny_graph() -> KnowledgeGraph {
        let ratings = vec![rating("u0", "i0", 5.0), rating("u1", "i0", 4.0)];
        let opinions = vec![opinion("u0", "i0", "a0", 1.0)];
        build_graph(&ratings, &opinions, GraphVariant::Gera)
    }

    #[test]
    fn empty_cohort_leaves_the_item_uncovered() {
        let graph = tiny_graph();
        let item = graph.entities().lookup(EntityKind::Item, "i0").unwrap();
        assert_eq!(explain_item(user(1), item, &graph, &[]), None);
    }

    #[test]
    fn single_liking_cohort_member_counts_one_zero_zero() {
        let graph = tiny_graph();
        let item = graph.entities().lookup(EntityKind::Item, "i0").unwrap();
        let liker = graph.entities().lookup(EntityKind::User, "u0").unwrap();
        let explanation = explain_item(user(1), item, &graph, &[liker]).unwrap();
        assert_eq!(explanation.cohort_size, 1);
        assert_eq!(explanation.aspects.len(), 1);
        let (aspect, tally) = explanation.aspects[0];
        assert_eq!(graph.entities().key(aspect), "a0");
        assert_eq!(
            tally,
            AspectCounts {
                likes: 1,
                dislikes: 0,
                does_not_care: 0
            }
        );
    }

    fn brute_force_counts(
        item: EntityRef,
        graph: &KnowledgeGraph,
        cohort: &[EntityRef],
    ) -> BTreeMap<EntityRef, AspectCounts> {
        let mut counts: BTreeMap<EntityRef, AspectCounts> = BTreeMap::new();
        for edge in graph.edges() {
            if edge.relation == RelationType::BelongsTo && edge.destination == item {
                counts.insert(edge.source, AspectCounts::default());
            }
        }
        for &member in cohort {
            for edge in graph.edges() {
                if edge.source != member {
                    continue;
                }
                let Some(tally) = counts.get_mut(&edge.destination) else {
                    continue;
                };
                match edge.relation {
                    RelationType::Likes => tally.likes += 1,
                    RelationType::Dislikes => tally.dislikes += 1,
                    RelationType::DoesNotCare => tally.does_not_care += 1,
                    _ => {}
                }
            }
        }
        counts
    }

    #[test]
    fn counts_match_a_brute_force_triple_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for round in 0..25 {
            let (ratings, opinions) = generate_synthetic(&SynthConfig {
                n_user_clusters: 2,
                users_per_cluster: 4,
                items_per_cluster: 5,
                aspects: 6,
                noise_rate: 0.2,
                seed: round,
            })
            .unwrap();
            let graph = build_graph(&ratings, &opinions, GraphVariant::Gera);
            let users: Vec<EntityRef> = graph.entities().refs(EntityKind::User).collect();
            let items: Vec<EntityRef> = graph.entities().refs(EntityKind::Item).collect();
            for _ in 0..5 {
                let item = items[rng.random_range(0..items.len())];
                let cohort: Vec<EntityRef> = users
                    .iter()
                    .copied()
                    .filter(|_| rng.random_bool(0.5))
                    .collect();
                let expected: BTreeMap<EntityRef, AspectCounts> =
                    brute_force_counts(item, &graph, &cohort)
                        .into_iter()
                        .filter(|(_, t)| !t.is_zero())
                        .collect();
                let got = explain_item(user(0), item, &graph, &cohort);
                match got {
                    None => assert!(expected.is_empty(), "round {round}: missed counts"),
                    Some(explanation) => {
                        let got_map: BTreeMap<EntityRef, AspectCounts> =
                            explanation.aspects.iter().copied().collect();
                        assert_eq!(got_map, expected, "round {round}");
                    }
                }
            }
        }
    }

    #[test]
    fn every_reported_aspect_belongs_to_the_item() {
        let (ratings, opinions) = generate_synthetic(&SynthConfig {
            n_user_clusters: 2,
            users_per_cluster: 5,
            items_per_cluster: 4,
            aspects: 5,
            noise_rate: 0.1,
            seed: 7,
        })
        .unwrap();
        let graph = build_graph(&ratings, &opinions, GraphVariant::Gera);
        let users: Vec<EntityRef> = graph.entities().refs(EntityKind::User).collect();
        for item in graph.entities().refs(EntityKind::Item) {
            if let Some(explanation) = explain_item(users[0], item, &graph, &users) {
                for (aspect, _) in &explanation.aspects {
                    assert!(graph.contains_edge(&Triple::new(
                        *aspect,
                        RelationType::BelongsTo,
                        item
                    )));
                }
            }
        }
    }

    /// Embedding table over the graph's entities with seeded random
    /// vectors, so similarities are well defined without training.
    fn random_table(graph: &KnowledgeGraph, dim: usize, seed: u64) -> EmbeddingTable {
        let mut table = EmbeddingTable::zeroed(graph.entities().clone(), dim, Scorer::ComplEx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in EntityKind::ALL {
            let refs: Vec<EntityRef> = table.entities().refs(kind).collect();
            for entity in refs {
                let data: Vec<f64> = (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                table
                    .set_entity_vec(entity, ComplexVec::from_flat(dim, data).unwrap())
                    .unwrap();
            }
        }
        table
    }

    #[test]
    fn identical_vector_ranks_first_and_target_is_excluded() {
        let (ratings, opinions) = generate_synthetic(&SynthConfig {
            n_user_clusters: 2,
            users_per_cluster: 5,
            items_per_cluster: 3,
            aspects: 4,
            noise_rate: 0.0,
            seed: 1,
        })
        .unwrap();
        let graph = build_graph(&ratings, &opinions, GraphVariant::Gera);
        let mut table = random_table(&graph, 4, 2);
        let target = user(0);
        let twin = user(7);
        let twin_vec = table.entity_vec(target).unwrap().clone();
        table.set_entity_vec(twin, twin_vec).unwrap();
        let cohort = top_similar_users(target, &table, 3).unwrap();
        assert_eq!(cohort[0], twin);
        assert!(!cohort.contains(&target));
    }

    #[test]
    fn oversized_n_returns_every_other_user() {
        let graph = tiny_graph();
        let table = random_table(&graph, 3, 5);
        let cohort = top_similar_users(user(0), &table, 50).unwrap();
        assert_eq!(cohort, vec![user(1)]);
        assert!(matches!(
            top_similar_users(user(0), &table, 0),
            Err(ExplainError::ZeroN)
        ));
        assert!(matches!(
            top_similar_users(user(9), &table, 3),
            Err(ExplainError::Recsys(RecsysError::MissingUser(_)))
        ));
    }

    #[test]
    fn similarity_ranking_matches_a_full_sort() {
        let ratings: Vec<RatingRecord> = (0..50)
            .map(|u| rating(&format!("u{u}"), "i0", 4.0))
            .collect();
        let graph = build_graph(&ratings, &[], GraphVariant::Ger);
        let table = random_table(&graph, 6, 11);
        let target = user(13);
        let got = top_similar_users(target, &table, 49).unwrap();
        let target_vec = flatten(table.entity_vec(target).unwrap()).to_vec();
        let mut expected: Vec<(EntityRef, f64)> = (0..50)
            .map(user)
            .filter(|u| *u != target)
            .map(|u| {
                let v = flatten(table.entity_vec(u).unwrap());
                (u, cosine(&target_vec, v).unwrap())
            })
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        assert_eq!(
            got,
            expected.into_iter().map(|(u, _)| u).collect::<Vec<_>>()
        );
    }

    #[test]
    fn recommendation_order_is_preserved_and_ger_is_uncovered() {
        let (ratings, opinions) = generate_synthetic(&SynthConfig {
            n_user_clusters: 2,
            users_per_cluster: 4,
            items_per_cluster: 4,
            aspects: 5,
            noise_rate: 0.0,
            seed: 3,
        })
        .unwrap();
        let gera = build_graph(&ratings, &opinions, GraphVariant::Gera);
        let table = crate::embed::train(
            &gera,
            &TrainConfig {
                dim: 6,
                epochs: 4,
                negatives: 2,
                batch_size: 32,
                seed: 5,
                ..TrainConfig::default()
            },
        )
        .unwrap()
        .table;
        let target = user(0);
        let explained = explain_recommendations(target, &table, &gera, 5, 4).unwrap();
        let candidates: Vec<EntityRef> = table.entities().refs(EntityKind::Item).collect();
        let recommended = recommend_embedding(&table, target, &candidates, 5).unwrap();
        let order: Vec<EntityRef> = explained.iter().map(|(item, _)| *item).collect();
        let expected: Vec<EntityRef> = recommended.entries.iter().map(|(item, _)| *item).collect();
        assert_eq!(order, expected);
        assert!(
            explained.iter().any(|(_, e)| e.is_some()),
            "dense corpus should cover something"
        );

        // same entities, ratings-only graph: no aspects means no coverage
        let ger = build_graph(&ratings, &opinions, GraphVariant::Ger);
        let ger_table = crate::embed::train(
            &ger,
            &TrainConfig {
                dim: 6,
                epochs: 4,
                negatives: 2,
                batch_size: 32,
                seed: 5,
                ..TrainConfig::default()
            },
        )
        .unwrap()
        .table;
        let explained = explain_recommendations(target, &ger_table, &ger, 5, 4).unwrap();
        assert!(explained.iter().all(|(_, e)| e.is_none()));
    }

    fn fabricated_explanation(aspect_ids: &[u32], tallies: &[AspectCounts]) -> Explanation {
        Explanation {
            user: user(0),
            item: EntityRef {
                kind: EntityKind::Item,
                id: 0,
            },
            aspects: aspect_ids
                .iter()
                .zip(tallies)
                .map(|(id, tally)| {
                    (
                        EntityRef {
                            kind: EntityKind::Aspect,
                            id: *id,
                        },
                        *tally,
                    )
                })
                .collect(),
            cohort_size: 30,
        }
    }

    #[test]
    fn stats_match_hand_computed_fixture() {
        // one list of 30 recommendations, 9 covered; global counts
        // likes=10, dislikes=4, doesNotCare=1
        let mut list: Vec<(EntityRef, Option<Explanation>)> = Vec::new();
        for i in 0..30u32 {
            let item = EntityRef {
                kind: EntityKind::Item,
                id: i,
            };
            if i < 9 {
                let tally = AspectCounts {
                    likes: if i == 0 { 2 } else { 1 },
                    dislikes: if i < 4 { 1 } else { 0 },
                    does_not_care: if i == 0 { 1 } else { 0 },
                };
                // aspects cycle through 3 ids so uniqueness matters
                list.push((item, Some(fabricated_explanation(&[i % 3], &[tally]))));
            } else {
                list.push((item, None));
            }
        }
        let stats = explanation_stats(&[list]).unwrap();
        assert!((stats.coverage - 0.30).abs() < 1e-15);
        assert_eq!(stats.lk_other, Some(2.0));
        assert!((stats.n_aspects - 3.0).abs() < 1e-15);
        assert!((stats.asp_per_item - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_like_batches_have_undefined_lk_other() {
        let list = vec![(
            EntityRef {
                kind: EntityKind::Item,
                id: 0,
            },
            Some(fabricated_explanation(
                &[0],
                &[AspectCounts {
                    likes: 3,
                    dislikes: 0,
                    does_not_care: 0,
                }],
            )),
        )];
        let stats = explanation_stats(&[list]).unwrap();
        assert_eq!(stats.lk_other, None);
        assert!(matches!(
            explanation_stats(&[]),
            Err(ExplainError::EmptyBatch)
        ));
        assert!(matches!(
            explanation_stats(&[vec![]]),
            Err(ExplainError::EmptyBatch)
        ));
    }

    #[test]
    fn renderer_matches_the_expected_shape() {
        let mut entities = EntityTable::new();
        entities.intern(EntityKind::Aspect, "characters");
        entities.intern(EntityKind::Aspect, "plot");
        let explanation = fabricated_explanation(
            &[0, 1],
            &[
                AspectCounts {
                    likes: 15,
                    dislikes: 5,
                    does_not_care: 0,
                },
                AspectCounts {
                    likes: 1,
                    dislikes: 0,
                    does_not_care: 2,
                },
            ],
        );
        assert_eq!(
            render_explanation(&explanation, &entities),
            "characters (15 +, 5 -); plot (1 +, 0 -, 2 ~)"
        );
    }
}
