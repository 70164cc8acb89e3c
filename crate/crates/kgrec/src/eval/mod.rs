//! The ranking evaluation protocol: per-user k-fold splits of the rating
//! records, per-fold model training without test leakage, ranking metrics
//! over each user's held-out items, and paired significance tests between
//! models.

mod metrics;
mod models;
mod significance;

pub use metrics::{f1_at_k, ndcg_at_k, ndcg_binary_at_k, precision_at_k, recall_at_k};
pub use models::{standard_models, ModelFactory, ModelKind, RankModel};
pub use significance::{paired_significance, two_sided_p, PairedTest};

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AspectOpinion, RatingRecord};
use crate::kgraph::{EntityKind, EntityRef, EntityTable};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample lengths differ: {left} vs {right}")]
    SampleMismatch { left: usize, right: usize },
    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("comparison count must be at least 1")]
    ZeroComparisons,
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    BadAlpha(f64),
    #[error("folds must be at least 2, got {0}")]
    BadFolds(usize),
    #[error("ks must be non-empty")]
    EmptyKs,
    #[error("at least one model is required")]
    NoModels,
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
}

/// Fold id per rating-record index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    folds: usize,
    assignment: Vec<usize>,
}

impl FoldSplit {
    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
}

/// Shuffles each user's records with a seeded generator and deals them
/// round-robin, so per-user fold sizes never differ by more than one.
pub fn kfold_split(
    ratings: &[RatingRecord],
    folds: usize,
    seed: u64,
) -> Result<FoldSplit, EvalError> {
    if folds < 2 {
        return Err(EvalError::BadFolds(folds));
    }
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut per_user: Vec<Vec<usize>> = Vec::new();
    for (i, r) in ratings.iter().enumerate() {
        let next = per_user.len();
        let u = *user_index.entry(&r.user_key).or_insert(next);
        if u == next {
            per_user.push(Vec::new());
        }
        per_user[u].push(i);
    }
    let mut assignment = vec![0usize; ratings.len()];
    for (u, indices) in per_user.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "fold", u as u64, 0));
        indices.shuffle(&mut rng);
        for (j, &record) in indices.iter().enumerate() {
            assignment[record] = j % folds;
        }
    }
    Ok(FoldSplit { folds, assignment })
}

/// One fold's training and test views.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train_ratings: Vec<RatingRecord>,
    pub train_opinions: Vec<AspectOpinion>,
    pub test_ratings: Vec<RatingRecord>,
}

/// Splits one fold out: its records are the test set, the rest train.
/// Every rating or opinion touching a held-out (user, item) pair is
/// withheld from training entirely, so no test interaction leaks a signal
/// through a duplicate rating or an opinion edge.
pub fn fold_train_test(
    ratings: &[RatingRecord],
    opinions: &[AspectOpinion],
    split: &FoldSplit,
    fold: usize,
) -> FoldData {
    let test_pairs: HashSet<(&str, &str)> = ratings
        .iter()
        .zip(split.assignment())
        .filter(|&(_, &a)| a == fold)
        .map(|(r, _)| (r.user_key.as_str(), r.item_key.as_str()))
        .collect();
    let mut data = FoldData {
        train_ratings: Vec::new(),
        train_opinions: Vec::new(),
        test_ratings: Vec::new(),
    };
    for (r, &a) in ratings.iter().zip(split.assignment()) {
        if a == fold {
            data.test_ratings.push(r.clone());
        } else if !test_pairs.contains(&(r.user_key.as_str(), r.item_key.as_str())) {
            data.train_ratings.push(r.clone());
        }
    }
    for o in opinions {
        if !test_pairs.contains(&(o.user_key.as_str(), o.item_key.as_str())) {
            data.train_opinions.push(o.clone());
        }
    }
    data
}

/// Where the paired test draws its samples: one value per fold (the fold
/// means), or one value per evaluated user across all folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignificanceSource {
    Folds,
    Users,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub significance: SignificanceSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            ks: vec![10, 20, 30],
            seed: 0,
            alpha: 0.05,
            significance: SignificanceSource::Folds,
        }
    }
}

/// Metric identifiers in report order.
pub const METRIC_NAMES: [&str; 4] = ["precision", "recall", "f1", "ndcg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub metric: String,
    pub k: usize,
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub error: Option<String>,
    pub cells: Vec<MetricCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

/// Cross-model comparison for one (metric, k) column: the best mean(s),
/// and the best model paired against every other, Bonferroni-corrected
/// over the column's comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnResult {
    pub metric: String,
    pub k: usize,
    pub best: Vec<String>,
    pub best_significant: bool,
    pub pairs: Vec<PairComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub folds: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub significance: SignificanceSource,
    pub models: Vec<ModelReport>,
    pub columns: Vec<ColumnResult>,
}

impl MetricsReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn cell(&self, model: &str, metric: &str, k: usize) -> Option<&MetricCell> {
        self.model(model)?
            .cells
            .iter()
            .find(|c| c.metric == metric && c.k == k)
    }

    pub fn column(&self, metric: &str, k: usize) -> Option<&ColumnResult> {
        self.columns.iter().find(|c| c.metric == metric && c.k == k)
    }
}

fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = mean_or_zero(values);
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn samples_for(per_fold: &[Vec<f64>], source: SignificanceSource) -> Vec<f64> {
    match source {
        SignificanceSource::Folds => per_fold.iter().map(|v| mean_or_zero(v)).collect(),
        SignificanceSource::Users => per_fold.iter().flatten().copied().collect(),
    }
}

/// Runs the whole protocol. Per fold: training data is the fold's
/// complement (leakage-filtered), each factory trains with a seed derived
/// from (seed, model name, fold), and every user with a test rating has
/// their distinct test items ranked. The candidate set is that user's own
/// test items; relevant means a test rating above 3. Users whose test fold
/// holds no relevant item contribute zeros rather than being skipped.
/// Metrics average over users, then over folds. A model that fails to
/// train or rank is reported with its error while the rest complete.
pub fn evaluate(
    factories: &[Box<dyn ModelFactory>],
    ratings: &[RatingRecord],
    opinions: &[AspectOpinion],
    config: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    if factories.is_empty() {
        return Err(EvalError::NoModels);
    }
    let mut seen_names = HashSet::new();
    for f in factories {
        if !seen_names.insert(f.name().to_string()) {
            return Err(EvalError::DuplicateModel(f.name().to_string()));
        }
    }
    if config.ks.is_empty() {
        return Err(EvalError::EmptyKs);
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(EvalError::BadAlpha(config.alpha));
    }
    let mut ks = config.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let max_k = *ks.last().unwrap();

    let mut universe = EntityTable::new();
    for r in ratings {
        universe.intern(EntityKind::User, &r.user_key);
        universe.intern(EntityKind::Item, &r.item_key);
    }

    let split = kfold_split(ratings, config.folds, config.seed)?;

    let n_models = factories.len();
    let n_cells = METRIC_NAMES.len() * ks.len();
    let mut user_values: Vec<Vec<Vec<Vec<f64>>>> =
        vec![vec![vec![Vec::new(); config.folds]; n_cells]; n_models];
    let mut errors: Vec<Option<String>> = vec![None; n_models];

    #[allow(clippy::needless_range_loop)]
    for fold in 0..config.folds {
        let data = fold_train_test(ratings, opinions, &split, fold);
        let mut by_user: HashMap<EntityRef, (Vec<EntityRef>, HashSet<EntityRef>)> = HashMap::new();
        for r in &data.test_ratings {
            let user = universe
                .lookup(EntityKind::User, &r.user_key)
                .expect("test user interned in universe");
            let item = universe
                .lookup(EntityKind::Item, &r.item_key)
                .expect("test item interned in universe");
            let entry = by_user.entry(user).or_default();
            entry.0.push(item);
            if r.rating > 3.0 {
                entry.1.insert(item);
            }
        }
        let mut users: Vec<EntityRef> = by_user.keys().copied().collect();
        users.sort();
        for (candidates, _) in by_user.values_mut() {
            candidates.sort();
            candidates.dedup();
        }

        for (m, factory) in factories.iter().enumerate() {
            if errors[m].is_some() {
                continue;
            }
            let seed = derive_seed(config.seed, factory.name(), fold as u64, 0);
            let model =
                match factory.train(&data.train_ratings, &data.train_opinions, &universe, seed) {
                    Ok(model) => model,
                    Err(message) => {
                        errors[m] = Some(format!("fold {fold}: {message}"));
                        continue;
                    }
                };
            for &user in &users {
                let (candidates, relevant) = &by_user[&user];
                let ranked = match model.rank(user, candidates, max_k) {
                    Ok(list) => list,
                    Err(e) => {
                        errors[m] = Some(format!("fold {fold}: {e}"));
                        break;
                    }
                };
                let items: Vec<EntityRef> = ranked.entries.iter().map(|e| e.0).collect();
                for (mi, metric) in METRIC_NAMES.iter().enumerate() {
                    for (ki, &k) in ks.iter().enumerate() {
                        let value = match *metric {
                            "precision" => precision_at_k(&items, relevant, k),
                            "recall" => recall_at_k(&items, relevant, k),
                            "f1" => f1_at_k(&items, relevant, k),
                            _ => ndcg_binary_at_k(&items, relevant, k),
                        };
                        user_values[m][mi * ks.len() + ki][fold].push(value);
                    }
                }
            }
        }
    }

    let mut model_reports = Vec::with_capacity(n_models);
    for (m, factory) in factories.iter().enumerate() {
        let mut cells = Vec::new();
        if errors[m].is_none() {
            for (mi, metric) in METRIC_NAMES.iter().enumerate() {
                for (ki, &k) in ks.iter().enumerate() {
                    let fold_values: Vec<f64> = user_values[m][mi * ks.len() + ki]
                        .iter()
                        .map(|vals| mean_or_zero(vals))
                        .collect();
                    let mean = mean_or_zero(&fold_values);
                    let std = sample_std(&fold_values);
                    cells.push(MetricCell {
                        metric: metric.to_string(),
                        k,
                        fold_values,
                        mean,
                        std,
                    });
                }
            }
        }
        model_reports.push(ModelReport {
            name: factory.name().to_string(),
            error: errors[m].take(),
            cells,
        });
    }

    let eligible: Vec<usize> = (0..n_models)
        .filter(|&m| model_reports[m].error.is_none())
        .collect();
    let mut columns = Vec::new();
    for (mi, metric) in METRIC_NAMES.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let cell_index = mi * ks.len() + ki;
            let mut column = ColumnResult {
                metric: metric.to_string(),
                k,
                best: Vec::new(),
                best_significant: false,
                pairs: Vec::new(),
            };
            if !eligible.is_empty() {
                let best_mean = eligible
                    .iter()
                    .map(|&m| model_reports[m].cells[cell_index].mean)
                    .fold(f64::NEG_INFINITY, f64::max);
                column.best = eligible
                    .iter()
                    .filter(|&&m| model_reports[m].cells[cell_index].mean == best_mean)
                    .map(|&m| model_reports[m].name.clone())
                    .collect();
                let leader = eligible
                    .iter()
                    .copied()
                    .find(|&m| model_reports[m].cells[cell_index].mean == best_mean)
                    .expect("non-empty eligible set has a leader");
                let n_comparisons = eligible.len() - 1;
                let mut all_significant = n_comparisons > 0;
                for &m in &eligible {
                    if m == leader {
                        continue;
                    }
                    let a = samples_for(&user_values[leader][cell_index], config.significance);
                    let b = samples_for(&user_values[m][cell_index], config.significance);
                    let test = match paired_significance(&a, &b, n_comparisons, config.alpha) {
                        Ok(test) => test,
                        // too few users to pair: report the comparison as
                        // uninformative instead of failing the run
                        Err(EvalError::TooFewSamples(_)) => PairedTest {
                            t: 0.0,
                            p: 1.0,
                            significant: false,
                        },
                        Err(e) => return Err(e),
                    };
                    all_significant &= test.significant;
                    column.pairs.push(PairComparison {
                        a: model_reports[leader].name.clone(),
                        b: model_reports[m].name.clone(),
                        t: test.t,
                        p: test.p,
                        significant: test.significant,
                    });
                }
                column.best_significant = all_significant;
            }
            columns.push(column);
        }
    }

    Ok(MetricsReport {
        folds: config.folds,
        ks,
        seed: config.seed,
        alpha: config.alpha,
        significance: config.significance,
        models: model_reports,
        columns,
    })
}
