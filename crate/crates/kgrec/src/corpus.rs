//! Rating and aspect-opinion corpus handling: TSV ingestion and writing,
//! activity filtering, summary statistics, and a clustered synthetic
//! generator for experiments.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line}: expected {expected} tab-separated fields, got {got}")]
    FieldCount {
        line: usize,
        expected: &'static str,
        got: usize,
    },
    #[error("unparsable {field}, line {line}: {value:?}")]
    BadNumber {
        field: &'static str,
        line: usize,
        value: String,
    },
    #[error("rating out of range, line {line}: {value}")]
    RatingRange { line: usize, value: f64 },
    #[error("polarity out of range, line {line}: {value}")]
    PolarityRange { line: usize, value: f64 },
    #[error("empty {field}, line {line}")]
    EmptyField { field: &'static str, line: usize },
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// One explicit rating a user gave an item. Ratings live on a 1-5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_key: String,
    pub item_key: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// One aspect-level opinion mined from a review: the sign of `polarity`
/// says whether the user liked (+), disliked (-), or was indifferent to (0)
/// the aspect of that item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectOpinion {
    pub user_key: String,
    pub item_key: String,
    pub aspect_term: String,
    pub polarity: f64,
}

/// Corpus-level summary counts. `rating_sparsity` is the naive density
/// `n_ratings / (n_users * n_items)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_opinions: usize,
    pub rating_sparsity: f64,
}

fn read_file(path: impl AsRef<Path>) -> Result<String, CorpusError> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: impl AsRef<Path>, text: &str) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Yields `(1-based line number, content)` for data lines, skipping blank
/// lines and `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.strip_suffix('\r').unwrap_or(line)))
        .filter(|(_, line)| !line.trim().is_empty() && !line.starts_with('#'))
}

fn parse_f64(field: &'static str, line: usize, raw: &str) -> Result<f64, CorpusError> {
    raw.trim().parse().map_err(|_| CorpusError::BadNumber {
        field,
        line,
        value: raw.to_string(),
    })
}

fn require_key(field: &'static str, line: usize, raw: &str) -> Result<String, CorpusError> {
    if raw.is_empty() {
        return Err(CorpusError::EmptyField { field, line });
    }
    Ok(raw.to_string())
}

/// Parses rating records from TSV text: `user<TAB>item<TAB>rating[<TAB>timestamp]`.
pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>, CorpusError> {
    let mut records = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(CorpusError::FieldCount {
                line,
                expected: "3 or 4",
                got: fields.len(),
            });
        }
        let user_key = require_key("user key", line, fields[0])?;
        let item_key = require_key("item key", line, fields[1])?;
        let rating = parse_f64("rating", line, fields[2])?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(CorpusError::RatingRange {
                line,
                value: rating,
            });
        }
        let timestamp = match fields.get(3) {
            Some(raw) => Some(raw.trim().parse().map_err(|_| CorpusError::BadNumber {
                field: "timestamp",
                line,
                value: raw.to_string(),
            })?),
            None => None,
        };
        records.push(RatingRecord {
            user_key,
            item_key,
            rating,
            timestamp,
        });
    }
    Ok(records)
}

/// Loads rating records from a TSV file.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>, CorpusError> {
    parse_ratings(&read_file(path)?)
}

/// Parses opinion records from TSV text:
/// `user<TAB>item<TAB>aspect<TAB>polarity`. Aspect terms are trimmed and
/// lowercased so the same surface form always maps to one aspect.
pub fn parse_opinions(text: &str) -> Result<Vec<AspectOpinion>, CorpusError> {
    let mut records = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorpusError::FieldCount {
                line,
                expected: "4",
                got: fields.len(),
            });
        }
        let user_key = require_key("user key", line, fields[0])?;
        let item_key = require_key("item key", line, fields[1])?;
        let aspect_term = fields[2].trim().to_lowercase();
        if aspect_term.is_empty() {
            return Err(CorpusError::EmptyField {
                field: "aspect",
                line,
            });
        }
        let polarity = parse_f64("polarity", line, fields[3])?;
        if !(-1.0..=1.0).contains(&polarity) {
            return Err(CorpusError::PolarityRange {
                line,
                value: polarity,
            });
        }
        records.push(AspectOpinion {
            user_key,
            item_key,
            aspect_term,
            polarity,
        });
    }
    Ok(records)
}

/// Loads opinion records from a TSV file.
pub fn load_opinions(path: impl AsRef<Path>) -> Result<Vec<AspectOpinion>, CorpusError> {
    parse_opinions(&read_file(path)?)
}

/// Renders rating records as TSV, one record per line, in input order.
pub fn format_ratings(records: &[RatingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        match r.timestamp {
            Some(ts) => {
                writeln!(out, "{}\t{}\t{}\t{}", r.user_key, r.item_key, r.rating, ts)
            }
            None => writeln!(out, "{}\t{}\t{}", r.user_key, r.item_key, r.rating),
        }
        .expect("string write");
    }
    out
}

/// Renders opinion records as TSV, one record per line, in input order.
pub fn format_opinions(records: &[AspectOpinion]) -> String {
    let mut out = String::new();
    for o in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            o.user_key, o.item_key, o.aspect_term, o.polarity
        )
        .expect("string write");
    }
    out
}

/// Writes rating records to a TSV file. Loading the file back reproduces
/// the record sequence exactly.
pub fn write_ratings(records: &[RatingRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_file(path, &format_ratings(records))
}

/// Writes opinion records to a TSV file.
pub fn write_opinions(
    records: &[AspectOpinion],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_file(path, &format_opinions(records))
}

/// Keeps only records of users with strictly more than `min_ratings`
/// rating records, preserving input order. Applying the filter twice
/// changes nothing.
pub fn filter_min_ratings(records: &[RatingRecord], min_ratings: usize) -> Vec<RatingRecord> {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for r in records {
        *counts.entry(r.user_key.as_str()).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| counts[r.user_key.as_str()] > min_ratings)
        .cloned()
        .collect()
}

/// Computes summary counts over both record kinds. Users and items are
/// counted as distinct keys across ratings and opinions combined.
pub fn dataset_stats(ratings: &[RatingRecord], opinions: &[AspectOpinion]) -> DatasetStats {
    let mut users: HashSet<&str> = HashSet::new();
    let mut items: HashSet<&str> = HashSet::new();
    for r in ratings {
        users.insert(&r.user_key);
        items.insert(&r.item_key);
    }
    for o in opinions {
        users.insert(&o.user_key);
        items.insert(&o.item_key);
    }
    let n_users = users.len();
    let n_items = items.len();
    let n_ratings = ratings.len();
    let rating_sparsity = if n_users == 0 || n_items == 0 {
        0.0
    } else {
        n_ratings as f64 / (n_users as f64 * n_items as f64)
    };
    DatasetStats {
        n_users,
        n_items,
        n_ratings,
        n_opinions: opinions.len(),
        rating_sparsity,
    }
}

/// Configuration for the clustered synthetic corpus generator.
#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub n_user_clusters: usize,
    pub users_per_cluster: usize,
    pub items_per_cluster: usize,
    pub aspects: usize,
    /// Fraction of interactions whose preference sign is flipped.
    pub noise_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_user_clusters == 0 || self.users_per_cluster == 0 || self.items_per_cluster == 0 {
            return Err(CorpusError::Config(
                "cluster, user, and item counts must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(CorpusError::Config(format!(
                "noise rate must lie in [0, 1], got {}",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

/// Generates a clustered corpus: every user rates every item, scoring their
/// own cluster's items 4-5 and other clusters' items 1-2, and opines on each
/// aspect of the item's cluster with matching sign (positive inside the
/// cluster, negative outside). A `noise_rate` fraction of interactions has
/// its preference flipped. Aspect `t` is owned by cluster `t % clusters`.
/// Output is deterministic per seed.
pub fn generate_synthetic(
    cfg: &SynthConfig,
) -> Result<(Vec<RatingRecord>, Vec<AspectOpinion>), CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ratings = Vec::new();
    let mut opinions = Vec::new();
    let cluster_aspects: Vec<Vec<usize>> = (0..cfg.n_user_clusters)
        .map(|c| {
            (0..cfg.aspects)
                .filter(|t| t % cfg.n_user_clusters == c)
                .collect()
        })
        .collect();
    for uc in 0..cfg.n_user_clusters {
        for uj in 0..cfg.users_per_cluster {
            let user_key = format!("u{uc}_{uj}");
            #[allow(clippy::needless_range_loop)]
            for ic in 0..cfg.n_user_clusters {
                for ij in 0..cfg.items_per_cluster {
                    let item_key = format!("i{ic}_{ij}");
                    let in_cluster = uc == ic;
                    let flip = rng.random_bool(cfg.noise_rate);
                    let likes = in_cluster != flip;
                    let base = if likes { 4 } else { 1 };
                    let rating = (base + rng.random_range(0..=1)) as f64;
                    ratings.push(RatingRecord {
                        user_key: user_key.clone(),
                        item_key: item_key.clone(),
                        rating,
                        timestamp: None,
                    });
                    for &t in &cluster_aspects[ic] {
                        let flip = rng.random_bool(cfg.noise_rate);
                        let likes = in_cluster != flip;
                        let magnitude = rng.random_range(0.25..=1.0);
                        let polarity = if likes { magnitude } else { -magnitude };
                        opinions.push(AspectOpinion {
                            user_key: user_key.clone(),
                            item_key: item_key.clone(),
                            aspect_term: format!("asp{t}"),
                            polarity,
                        });
                    }
                }
            }
        }
    }
    Ok((ratings, opinions))
}
