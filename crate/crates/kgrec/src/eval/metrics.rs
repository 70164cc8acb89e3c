//! Ranking metrics over a produced ordering and a relevance set.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

fn hits_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> usize {
    ranked
        .iter()
        .take(k)
        .filter(|i| relevant.contains(i))
        .count()
}

/// Fraction of the top k that is relevant; the denominator shrinks to the
/// ranking length when fewer than k items were ranked.
pub fn precision_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    let denom = k.min(ranked.len());
    if denom == 0 {
        return 0.0;
    }
    hits_at_k(ranked, relevant, k) as f64 / denom as f64
}

/// Fraction of the relevant set found in the top k; 0 when nothing is
/// relevant.
pub fn recall_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    hits_at_k(ranked, relevant, k) as f64 / relevant.len() as f64
}

/// Harmonic mean of precision and recall at k; 0 when both vanish.
pub fn f1_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    let p = precision_at_k(ranked, relevant, k);
    let r = recall_at_k(ranked, relevant, k);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Discounted cumulative gain of the top k against the ideal ordering of
/// the gain table. Rank i (1-based) is discounted by log2(i + 1). Items
/// absent from the table gain 0; a gain table with no positive entry gives
/// 0.
pub fn ndcg_at_k<T: Eq + Hash>(ranked: &[T], gains: &HashMap<T, f64>, k: usize) -> f64 {
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, item)| gains.get(item).copied().unwrap_or(0.0) / discount(i))
        .sum();
    let mut ideal: Vec<f64> = gains.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| g / discount(i))
        .sum();
    if idcg <= 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// [`ndcg_at_k`] with gain 1 for every relevant item.
pub fn ndcg_binary_at_k<T: Eq + Hash + Clone>(
    ranked: &[T],
    relevant: &HashSet<T>,
    k: usize,
) -> f64 {
    let gains: HashMap<T, f64> = relevant.iter().map(|i| (i.clone(), 1.0)).collect();
    ndcg_at_k(ranked, &gains, k)
}
