//! Top-N recommendation: cosine ranking over embeddings plus the reference
//! baselines (random, popularity, and ALS matrix factorization in [`mf`]).

pub mod mf;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embed::{ComplexVec, EmbeddingTable};
use crate::kgraph::{EntityRef, EntityTable};

#[derive(Debug, Error)]
pub enum RecsysError {
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("user {0:?} has no embedding")]
    MissingUser(EntityRef),
    #[error("candidate {0:?} has no embedding")]
    MissingCandidate(EntityRef),
    #[error("entity {0:?} is outside the factor model")]
    OutsideModel(EntityRef),
    #[error("normal equations are singular; use a regularization above 0")]
    Singular,
    #[error("invalid factorization config: {0}")]
    Config(String),
}

/// A user's ranked items with their scores, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub user: EntityRef,
    pub entries: Vec<(EntityRef, f64)>,
}

/// Renders lists as TSV rows `user_key<TAB>rank<TAB>item_key<TAB>score`
/// with 1-based ranks.
pub fn recommendations_to_tsv(lists: &[RecommendationList], entities: &EntityTable) -> String {
    let mut out = String::new();
    for list in lists {
        for (rank, (item, score)) in list.entries.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                entities.key(list.user),
                rank + 1,
                entities.key(*item),
                score
            ));
        }
    }
    out
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, RecsysError> {
    if u.len() != v.len() {
        return Err(RecsysError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(RecsysError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// A complex vector viewed as the length-2d real vector `[re | im]`, the
/// form every similarity computation runs on.
pub fn flatten(vec: &ComplexVec) -> &[f64] {
    vec.as_flat()
}

/// Sorts scored candidates best first, breaking score ties by ascending
/// entity id, and keeps the top k.
pub(crate) fn rank_desc(mut scored: Vec<(EntityRef, f64)>, k: usize) -> Vec<(EntityRef, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub(crate) fn unique_sorted(candidates: &[EntityRef]) -> Vec<EntityRef> {
    let mut out = candidates.to_vec();
    out.sort();
    out.dedup();
    out
}

/// Ranks the candidate items by cosine similarity between the user's
/// flattened embedding and each item's, returning the top k.
pub fn recommend_embedding(
    table: &EmbeddingTable,
    user: EntityRef,
    candidates: &[EntityRef],
    k: usize,
) -> Result<RecommendationList, RecsysError> {
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    let user_vec = table
        .entity_vec(user)
        .ok_or(RecsysError::MissingUser(user))?;
    let mut scored = Vec::new();
    for item in unique_sorted(candidates) {
        let item_vec = table
            .entity_vec(item)
            .ok_or(RecsysError::MissingCandidate(item))?;
        scored.push((item, cosine(flatten(user_vec), flatten(item_vec))?));
    }
    Ok(RecommendationList {
        user,
        entries: rank_desc(scored, k),
    })
}

/// Random baseline: every candidate draws a uniform score from a seeded
/// generator and the top k by score are returned, so the result is a
/// uniformly random k-subset in random order. Candidates are canonicalized
/// by id first, making the outcome independent of input order.
pub fn recommend_random(
    user: EntityRef,
    candidates: &[EntityRef],
    k: usize,
    seed: u64,
) -> Result<RecommendationList, RecsysError> {
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scored = unique_sorted(candidates)
        .into_iter()
        .map(|item| (item, rng.random::<f64>()))
        .collect();
    Ok(RecommendationList {
        user,
        entries: rank_desc(scored, k),
    })
}

/// Occurrence counts over a stream of interacted items.
pub fn interaction_counts(items: impl IntoIterator<Item = EntityRef>) -> HashMap<EntityRef, u64> {
    let mut counts = HashMap::new();
    for item in items {
        *counts.entry(item).or_insert(0) += 1;
    }
    counts
}

/// Popularity baseline: candidates ranked by training interaction count
/// (items never interacted with count 0), ties by ascending id. Embeddings
/// are never consulted; the signature admits none.
pub fn recommend_pop(
    user: EntityRef,
    counts: &HashMap<EntityRef, u64>,
    candidates: &[EntityRef],
    k: usize,
) -> Result<RecommendationList, RecsysError> {
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    let scored = unique_sorted(candidates)
        .into_iter()
        .map(|item| (item, counts.get(&item).copied().unwrap_or(0) as f64))
        .collect();
    Ok(RecommendationList {
        user,
        entries: rank_desc(scored, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Scorer;
    use crate::kgraph::EntityKind;
    use proptest::prelude::*;

    fn user(id: u32) -> EntityRef {
        EntityRef {
            kind: EntityKind::User,
            id,
        }
    }

    fn item(id: u32) -> EntityRef {
        EntityRef {
            kind: EntityKind::Item,
            id,
        }
    }

    #[test]
    fn cosine_matches_closed_forms() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap().abs() < 1e-15);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_vectors_and_mismatched_lengths() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 2.0]),
            Err(RecsysError::ZeroVector)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(RecsysError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn flatten_concatenates_real_then_imaginary() {
        let v = ComplexVec::from_parts(vec![2.0], vec![3.0]).unwrap();
        assert_eq!(flatten(&v), &[2.0, 3.0]);
        assert!((cosine(flatten(&v), flatten(&v)).unwrap() - 1.0).abs() < 1e-15);
    }

    /// A table over `n_users` users and `n_items` items with seeded random
    /// vectors.
    fn random_table(n_users: u32, n_items: u32, dim: usize, seed: u64) -> EmbeddingTable {
        let mut entities = EntityTable::new();
        for u in 0..n_users {
            entities.intern(EntityKind::User, &format!("u{u}"));
        }
        for i in 0..n_items {
            entities.intern(EntityKind::Item, &format!("i{i}"));
        }
        let mut table = EmbeddingTable::zeroed(entities, dim, Scorer::ComplEx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in [EntityKind::User, EntityKind::Item] {
            let count = table.entities().count(kind) as u32;
            for id in 0..count {
                let vec = ComplexVec::from_flat(
                    dim,
                    (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                table.set_entity_vec(EntityRef { kind, id }, vec).unwrap();
            }
        }
        table
    }

    #[test]
    fn identical_item_vector_ranks_first() {
        let mut table = random_table(1, 5, 3, 1);
        let user_vec = table.entity_vec(user(0)).unwrap().clone();
        table.set_entity_vec(item(3), user_vec).unwrap();
        let candidates: Vec<EntityRef> = (0..5).map(item).collect();
        let list = recommend_embedding(&table, user(0), &candidates, 5).unwrap();
        assert_eq!(list.entries[0].0, item(3));
        assert!((list.entries[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_k_returns_all_candidates() {
        let table = random_table(1, 4, 2, 2);
        let candidates: Vec<EntityRef> = (0..4).map(item).collect();
        let list = recommend_embedding(&table, user(0), &candidates, 100).unwrap();
        assert_eq!(list.entries.len(), 4);
    }

    #[test]
    fn zero_k_is_rejected_everywhere() {
        let table = random_table(1, 2, 2, 3);
        let candidates = vec![item(0), item(1)];
        assert!(matches!(
            recommend_embedding(&table, user(0), &candidates, 0),
            Err(RecsysError::ZeroK)
        ));
        assert!(matches!(
            recommend_random(user(0), &candidates, 0, 1),
            Err(RecsysError::ZeroK)
        ));
        assert!(matches!(
            recommend_pop(user(0), &HashMap::new(), &candidates, 0),
            Err(RecsysError::ZeroK)
        ));
    }

    #[test]
    fn missing_user_is_an_error() {
        let table = random_table(1, 2, 2, 4);
        assert!(matches!(
            recommend_embedding(&table, user(9), &[item(0)], 1),
            Err(RecsysError::MissingUser(_))
        ));
    }

    fn brute_force_order(
        table: &EmbeddingTable,
        user: EntityRef,
        candidates: &[EntityRef],
    ) -> Vec<(EntityRef, f64)> {
        let uv = flatten(table.entity_vec(user).unwrap());
        let mut all: Vec<(EntityRef, f64)> = candidates
            .iter()
            .map(|&c| {
                (
                    c,
                    cosine(uv, flatten(table.entity_vec(c).unwrap())).unwrap(),
                )
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all
    }

    #[test]
    fn thousand_candidate_ranking_matches_full_sort_oracle() {
        let table = random_table(1, 1000, 4, 5);
        let candidates: Vec<EntityRef> = (0..1000).map(item).collect();
        let list = recommend_embedding(&table, user(0), &candidates, 50).unwrap();
        let oracle = brute_force_order(&table, user(0), &candidates);
        assert_eq!(list.entries, oracle[..50].to_vec());
    }

    proptest! {
        #[test]
        fn ranking_matches_oracle_and_is_scale_invariant(
            n in 1u32..60,
            k in 1usize..20,
            seed in 0u64..1000,
            scale in 1e-3f64..1e3,
        ) {
            let table = random_table(1, n, 3, seed);
            let candidates: Vec<EntityRef> = (0..n).map(item).collect();
            let list = recommend_embedding(&table, user(0), &candidates, k).unwrap();
            let oracle = brute_force_order(&table, user(0), &candidates);
            let take = k.min(candidates.len());
            prop_assert_eq!(&list.entries, &oracle[..take].to_vec());

            // scaling every vector by a positive constant permutes nothing
            let mut scaled = table.clone();
            for kind in [EntityKind::User, EntityKind::Item] {
                let count = scaled.entities().count(kind) as u32;
                for id in 0..count {
                    let e = EntityRef { kind, id };
                    let mut v = scaled.entity_vec(e).unwrap().clone();
                    for x in v.as_flat_mut() {
                        *x *= scale;
                    }
                    scaled.set_entity_vec(e, v).unwrap();
                }
            }
            let rescored = recommend_embedding(&scaled, user(0), &candidates, k).unwrap();
            let order: Vec<EntityRef> = list.entries.iter().map(|e| e.0).collect();
            let scaled_order: Vec<EntityRef> = rescored.entries.iter().map(|e| e.0).collect();
            prop_assert_eq!(order, scaled_order);
        }
    }

    #[test]
    fn random_baseline_is_deterministic_and_order_insensitive() {
        let candidates: Vec<EntityRef> = (0..10).map(item).collect();
        let a = recommend_random(user(0), &candidates, 5, 99).unwrap();
        let b = recommend_random(user(0), &candidates, 5, 99).unwrap();
        assert_eq!(a, b);
        let mut shuffled = candidates.clone();
        shuffled.reverse();
        let c = recommend_random(user(0), &shuffled, 5, 99).unwrap();
        assert_eq!(a, c);
        let d = recommend_random(user(0), &candidates, 5, 100).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn random_baseline_with_full_k_is_a_permutation() {
        let candidates: Vec<EntityRef> = (0..8).map(item).collect();
        let list = recommend_random(user(0), &candidates, 8, 7).unwrap();
        let mut got: Vec<EntityRef> = list.entries.iter().map(|e| e.0).collect();
        got.sort();
        assert_eq!(got, candidates);
    }

    #[test]
    fn random_baseline_choice_frequencies_are_uniform() {
        let candidates = vec![item(0), item(1), item(2)];
        let mut hits = [0u32; 3];
        for trial in 0..10_000u64 {
            let list = recommend_random(user(0), &candidates, 1, trial).unwrap();
            hits[list.entries[0].0.id as usize] += 1;
        }
        for h in hits {
            let freq = h as f64 / 10_000.0;
            assert!((freq - 1.0 / 3.0).abs() < 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn popularity_ranks_by_count_then_id() {
        let counts = interaction_counts(vec![item(1), item(1), item(1), item(2)]);
        let candidates = vec![item(0), item(1), item(2)];
        let list = recommend_pop(user(0), &counts, &candidates, 3).unwrap();
        let order: Vec<EntityRef> = list.entries.iter().map(|e| e.0).collect();
        assert_eq!(order, vec![item(1), item(2), item(0)]);
        assert_eq!(list.entries[0].1, 3.0);
        assert_eq!(list.entries[2].1, 0.0);

        // all-equal counts fall back to ascending id
        let tied = interaction_counts(vec![item(0), item(1), item(2)]);
        let list = recommend_pop(user(0), &tied, &[item(2), item(0), item(1)], 3).unwrap();
        let order: Vec<EntityRef> = list.entries.iter().map(|e| e.0).collect();
        assert_eq!(order, vec![item(0), item(1), item(2)]);
    }

    #[test]
    fn tsv_rendering_uses_keys_and_one_based_ranks() {
        let mut entities = EntityTable::new();
        let u = entities.intern(EntityKind::User, "alice");
        let a = entities.intern(EntityKind::Item, "film_a");
        let b = entities.intern(EntityKind::Item, "film_b");
        let lists = vec![RecommendationList {
            user: u,
            entries: vec![(b, 0.75), (a, 0.5)],
        }];
        assert_eq!(
            recommendations_to_tsv(&lists, &entities),
            "alice\t1\tfilm_b\t0.75\nalice\t2\tfilm_a\t0.5\n"
        );
    }
}
