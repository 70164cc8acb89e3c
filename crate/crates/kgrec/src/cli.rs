//! Command-line driver. Each subcommand wires the library modules
//! together, logs its resolved configuration as one JSON line for
//! reproducibility, and never mutates its inputs.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::corpus::{
    dataset_stats, generate_synthetic, load_opinions, load_ratings, write_opinions, write_ratings,
    AspectOpinion, SynthConfig,
};
use crate::embed::{self, EmbeddingTable, Optimizer, Scorer, TrainConfig};
use crate::eval::{
    evaluate, standard_models, EvalConfig, MetricsReport, ModelKind, SignificanceSource,
    METRIC_NAMES,
};
use crate::explain::{explain_item, render_explanation, top_similar_users};
use crate::kgraph::{build_graph, EntityKind, EntityRef, GraphVariant, KnowledgeGraph};
use crate::recsys::mf::AlsConfig;
use crate::recsys::{recommend_embedding, recommendations_to_tsv};

#[derive(Parser)]
#[command(
    name = "kgrec",
    version,
    about = "rating and aspect-opinion graph embeddings for explainable recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered ratings/opinions corpus
    Synth(SynthArgs),
    /// Summarize a ratings/opinions corpus
    Stats(StatsArgs),
    /// Convert ratings and opinions into a knowledge graph file
    BuildGraph(BuildGraphArgs),
    /// Learn entity and relation embeddings from a graph file
    Train(TrainArgs),
    /// Rank items for one user from an embedding file
    Recommend(RecommendArgs),
    /// Explain one user's recommendations through similar users' opinions
    Explain(ExplainArgs),
    /// Cross-validated model comparison with significance tests
    Evaluate(EvaluateArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    user_clusters: usize,
    #[arg(long, default_value_t = 25)]
    users_per_cluster: usize,
    #[arg(long, default_value_t = 15)]
    items_per_cluster: usize,
    #[arg(long, default_value_t = 10)]
    aspects: usize,
    /// Fraction of interactions with a flipped preference sign
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, env = "KGREC_SEED", default_value_t = 0)]
    seed: u64,
    /// Ratings TSV destination
    #[arg(long)]
    ratings_out: PathBuf,
    /// Opinions TSV destination
    #[arg(long)]
    opinions_out: PathBuf,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    opinions: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout only
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BuildGraphArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    opinions: Option<PathBuf>,
    /// Graph variant: ger (ratings), gea (opinions), gera (both)
    #[arg(long, default_value = "gera")]
    variant: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 400)]
    dim: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Negative samples per positive edge (even, half corrupted, half random)
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Scoring function: complex, transe, or distmult
    #[arg(long, default_value = "complex")]
    scorer: String,
    /// Update rule: adagrad or sgd
    #[arg(long, default_value = "adagrad")]
    optimizer: String,
    /// Training threads; 1 is bit-reproducible
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "KGREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RecommendArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// User key to recommend for
    #[arg(long)]
    user: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Write the ranked TSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExplainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    user: String,
    /// How many items to recommend and explain
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// How many similar users form the opinion cohort
    #[arg(long, default_value_t = 30)]
    cohort: usize,
    /// Optional review TSV (user, item, text) echoed next to explanations
    #[arg(long)]
    reviews: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExplainFormat::Text)]
    format: ExplainFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    opinions: Option<PathBuf>,
    /// Comma-separated models: gera, ger, gea, mf, pop, rdm
    #[arg(long, value_delimiter = ',', default_value = "gera,ger,gea,mf,pop,rdm")]
    models: Vec<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30])]
    ks: Vec<usize>,
    #[arg(long, env = "KGREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Paired-test samples: per-fold means or per-user values
    #[arg(long, value_enum, default_value_t = SignificanceArg::Folds)]
    significance: SignificanceArg,
    #[arg(long, default_value_t = 400)]
    dim: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value = "complex")]
    scorer: String,
    #[arg(long, default_value = "adagrad")]
    optimizer: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Matrix-factorization latent factors
    #[arg(long, default_value_t = 200)]
    factors: usize,
    #[arg(long, default_value_t = 0.1)]
    regularization: f64,
    #[arg(long, default_value_t = 15)]
    iterations: usize,
    /// Stdout rendering: an aligned table (tsv) or the JSON document
    #[arg(long, value_enum, default_value_t = ReportFormat::Tsv)]
    format: ReportFormat,
    /// Write the JSON document (config echo + report) here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ExplainFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ReportFormat {
    Tsv,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SignificanceArg {
    Folds,
    Users,
}

impl From<SignificanceArg> for SignificanceSource {
    fn from(arg: SignificanceArg) -> Self {
        match arg {
            SignificanceArg::Folds => SignificanceSource::Folds,
            SignificanceArg::Users => SignificanceSource::Users,
        }
    }
}

fn init_logger() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
}

/// Entry point for the binary: parses `std::env::args`, prints usage and
/// exits non-zero on bad flags, runs the subcommand otherwise.
pub fn run() -> ExitCode {
    init_logger();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Same as `run` but over explicit arguments and returning errors instead
/// of exiting, which is what tests want.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logger();
    let cli = Cli::try_parse_from(args)?;
    dispatch(cli)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Stats(args) => run_stats(args),
        Command::BuildGraph(args) => run_build_graph(args),
        Command::Train(args) => run_train(args),
        Command::Recommend(args) => run_recommend(args),
        Command::Explain(args) => run_explain(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

fn log_config(command: &str, args: &impl Serialize) -> anyhow::Result<()> {
    let line = serde_json::to_string(&json!({ "command": command, "config": args }))?;
    log::info!("resolved config: {line}");
    Ok(())
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    log_config("synth", &args)?;
    let (ratings, opinions) = generate_synthetic(&SynthConfig {
        n_user_clusters: args.user_clusters,
        users_per_cluster: args.users_per_cluster,
        items_per_cluster: args.items_per_cluster,
        aspects: args.aspects,
        noise_rate: args.noise,
        seed: args.seed,
    })?;
    write_ratings(&ratings, &args.ratings_out)?;
    write_opinions(&opinions, &args.opinions_out)?;
    log::info!(
        "wrote {} ratings and {} opinions",
        ratings.len(),
        opinions.len()
    );
    Ok(())
}

fn load_optional_opinions(path: &Option<PathBuf>) -> anyhow::Result<Vec<AspectOpinion>> {
    match path {
        Some(path) => Ok(load_opinions(path)?),
        None => Ok(Vec::new()),
    }
}

fn run_stats(args: StatsArgs) -> anyhow::Result<()> {
    log_config("stats", &args)?;
    let ratings = load_ratings(&args.ratings)?;
    let opinions = load_optional_opinions(&args.opinions)?;
    let stats = dataset_stats(&ratings, &opinions);
    let mut text = serde_json::to_string_pretty(&stats)?;
    text.push('\n');
    println!("{}", text.trim_end());
    if args.out.is_some() {
        write_or_print(&args.out, &text)?;
    }
    Ok(())
}

fn run_build_graph(args: BuildGraphArgs) -> anyhow::Result<()> {
    log_config("build-graph", &args)?;
    let variant = GraphVariant::from_token(&args.variant)
        .ok_or_else(|| anyhow!("unknown graph variant {:?}", args.variant))?;
    let ratings = load_ratings(&args.ratings)?;
    let opinions = load_optional_opinions(&args.opinions)?;
    let graph = build_graph(&ratings, &opinions, variant);
    graph.save(&args.out)?;
    log::info!(
        "wrote {} edges over {} entities",
        graph.edges().len(),
        graph.entities().total()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_config_from(
    dim: usize,
    lr: f64,
    margin: f64,
    epochs: usize,
    negatives: usize,
    batch_size: usize,
    scorer: &str,
    optimizer: &str,
    workers: usize,
    seed: u64,
) -> anyhow::Result<TrainConfig> {
    Ok(TrainConfig {
        dim,
        learning_rate: lr,
        margin,
        epochs,
        negatives,
        batch_size,
        seed,
        scorer: Scorer::from_token(scorer).ok_or_else(|| anyhow!("unknown scorer {scorer:?}"))?,
        optimizer: Optimizer::from_token(optimizer)
            .ok_or_else(|| anyhow!("unknown optimizer {optimizer:?}"))?,
        workers,
    })
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    log_config("train", &args)?;
    let config = train_config_from(
        args.dim,
        args.lr,
        args.margin,
        args.epochs,
        args.negatives,
        args.batch_size,
        &args.scorer,
        &args.optimizer,
        args.workers,
        args.seed,
    )?;
    let graph = KnowledgeGraph::load(&args.graph)?;
    let output = embed::train(&graph, &config)?;
    output.table.save(&args.out)?;
    if let Some(last) = output.epoch_losses.last() {
        log::info!("final mean loss {last:.6}");
    }
    Ok(())
}

fn run_recommend(args: RecommendArgs) -> anyhow::Result<()> {
    log_config("recommend", &args)?;
    let table = EmbeddingTable::load(&args.embeddings)?;
    let user = table
        .entities()
        .lookup(EntityKind::User, &args.user)
        .ok_or_else(|| anyhow!("user {:?} is not in the embedding file", args.user))?;
    let candidates: Vec<EntityRef> = table.entities().refs(EntityKind::Item).collect();
    let list = recommend_embedding(&table, user, &candidates, args.k)?;
    let text = recommendations_to_tsv(&[list], table.entities());
    write_or_print(&args.out, &text)
}

fn load_reviews(path: &PathBuf) -> anyhow::Result<HashMap<(String, String), String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reviews = HashMap::new();
    for (number, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (user, item, body) = (parts.next(), parts.next(), parts.next());
        let (Some(user), Some(item), Some(body)) = (user, item, body) else {
            bail!(
                "{}: line {}: expected user<TAB>item<TAB>text",
                path.display(),
                number + 1
            );
        };
        reviews.insert((user.to_string(), item.to_string()), body.to_string());
    }
    Ok(reviews)
}

/// Recommends for one user, then explains each item from the opinions of
/// the most similar users. The embedding file and the graph file carry
/// their own entity tables, so entities are matched by key, not id.
fn run_explain(args: ExplainArgs) -> anyhow::Result<()> {
    log_config("explain", &args)?;
    let table = EmbeddingTable::load(&args.embeddings)?;
    let graph = KnowledgeGraph::load(&args.graph)?;
    let reviews = match &args.reviews {
        Some(path) => load_reviews(path)?,
        None => HashMap::new(),
    };
    let user = table
        .entities()
        .lookup(EntityKind::User, &args.user)
        .ok_or_else(|| anyhow!("user {:?} is not in the embedding file", args.user))?;
    let graph_user = graph
        .entities()
        .lookup(EntityKind::User, &args.user)
        .ok_or_else(|| anyhow!("user {:?} is not in the graph", args.user))?;
    let candidates: Vec<EntityRef> = table.entities().refs(EntityKind::Item).collect();
    let recommended = recommend_embedding(&table, user, &candidates, args.k)?;
    let cohort: Vec<EntityRef> = top_similar_users(user, &table, args.cohort)?
        .into_iter()
        .filter_map(|u| {
            graph
                .entities()
                .lookup(EntityKind::User, table.entities().key(u))
        })
        .collect();

    let mut lines = String::new();
    let mut records = Vec::new();
    for (rank, (item, score)) in recommended.entries.iter().enumerate() {
        let item_key = table.entities().key(*item);
        let explanation = graph
            .entities()
            .lookup(EntityKind::Item, item_key)
            .and_then(|g_item| explain_item(graph_user, g_item, &graph, &cohort));
        let review = reviews.get(&(args.user.clone(), item_key.to_string()));
        match args.format {
            ExplainFormat::Text => {
                let rendered = explanation
                    .as_ref()
                    .map(|e| render_explanation(e, graph.entities()))
                    .unwrap_or_else(|| "-".to_string());
                lines.push_str(&format!("{}\t{}\t{}", rank + 1, item_key, rendered));
                if let Some(review) = review {
                    lines.push_str(&format!("\t{review}"));
                }
                lines.push('\n');
            }
            ExplainFormat::Json => {
                let aspects = explanation.as_ref().map(|e| {
                    e.aspects
                        .iter()
                        .map(|(aspect, tally)| {
                            json!({
                                "aspect": graph.entities().key(*aspect),
                                "likes": tally.likes,
                                "dislikes": tally.dislikes,
                                "doesNotCare": tally.does_not_care,
                            })
                        })
                        .collect::<Vec<_>>()
                });
                records.push(json!({
                    "rank": rank + 1,
                    "item": item_key,
                    "score": score,
                    "aspects": aspects,
                    "review": review,
                }));
            }
        }
    }
    let text = match args.format {
        ExplainFormat::Text => lines,
        ExplainFormat::Json => {
            let mut text = serde_json::to_string_pretty(&json!({
                "user": args.user,
                "cohort_size": cohort.len(),
                "items": records,
            }))?;
            text.push('\n');
            text
        }
    };
    write_or_print(&args.out, &text)
}

fn run_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    log_config("evaluate", &args)?;
    let mut kinds = Vec::new();
    for token in &args.models {
        kinds.push(ModelKind::from_token(token).ok_or_else(|| anyhow!("unknown model {token:?}"))?);
    }
    let train = train_config_from(
        args.dim,
        args.lr,
        args.margin,
        args.epochs,
        args.negatives,
        args.batch_size,
        &args.scorer,
        &args.optimizer,
        args.workers,
        args.seed,
    )?;
    let als = AlsConfig {
        factors: args.factors,
        regularization: args.regularization,
        iterations: args.iterations,
        seed: args.seed,
    };
    let ratings = load_ratings(&args.ratings)?;
    let opinions = load_optional_opinions(&args.opinions)?;
    let factories = standard_models(&kinds, &train, &als);
    let config = EvalConfig {
        folds: args.folds,
        ks: args.ks.clone(),
        seed: args.seed,
        alpha: args.alpha,
        significance: args.significance.into(),
    };
    let report = evaluate(&factories, &ratings, &opinions, &config)?;
    if let Some(path) = &args.out {
        let document = json!({
            "config": {
                "command": "evaluate",
                "args": &args,
            },
            "report": &report,
        });
        let mut text = serde_json::to_string_pretty(&document)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    match args.format {
        ReportFormat::Tsv => print!("{}", render_report(&report)),
        ReportFormat::Structured => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

/// Renders the report as an aligned tab-separated table: one row per
/// model, one column per (metric, k). The best mean in each column is
/// bracketed (ties all bracketed), and a `*` follows when the leader beats
/// every other model in the Bonferroni-corrected paired test.
pub fn render_report(report: &MetricsReport) -> String {
    let mut headers = vec!["model".to_string()];
    for metric in METRIC_NAMES {
        for &k in &report.ks {
            headers.push(format!("{metric}@{k}"));
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for model in &report.models {
        let mut row = vec![model.name.clone()];
        if let Some(error) = &model.error {
            row.push(format!("failed: {error}"));
            rows.push(row);
            continue;
        }
        for metric in METRIC_NAMES {
            for &k in &report.ks {
                let cell = report
                    .cell(&model.name, metric, k)
                    .expect("completed models have every cell");
                let column = report.column(metric, k).expect("column exists");
                let mut text = format!("{:.4}", cell.mean);
                if column.best.contains(&model.name) {
                    text = format!("[{text}]");
                    if column.best_significant {
                        text.push('*');
                    }
                }
                row.push(text);
            }
        }
        rows.push(row);
    }
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let render_row = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                format!(
                    "{:width$}",
                    cell,
                    width = widths.get(i).copied().unwrap_or(0)
                )
            })
            .collect();
        let mut line = padded.join("\t");
        while line.ends_with(' ') {
            line.pop();
        }
        line.push('\n');
        line
    };
    let mut out = render_row(&headers);
    for row in &rows {
        out.push_str(&render_row(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ColumnResult, MetricCell, ModelReport, PairComparison};

    fn cell(metric: &str, k: usize, mean: f64) -> MetricCell {
        MetricCell {
            metric: metric.to_string(),
            k,
            fold_values: vec![mean],
            mean,
            std: 0.0,
        }
    }

    fn tiny_report(best_significant: bool, tie: bool) -> MetricsReport {
        let second = if tie { 0.5 } else { 0.25 };
        let mut columns = Vec::new();
        let mut a_cells = Vec::new();
        let mut b_cells = Vec::new();
        for metric in METRIC_NAMES {
            a_cells.push(cell(metric, 10, 0.5));
            b_cells.push(cell(metric, 10, second));
            let mut best = vec!["alpha".to_string()];
            if tie {
                best.push("beta".to_string());
            }
            columns.push(ColumnResult {
                metric: metric.to_string(),
                k: 10,
                best,
                best_significant,
                pairs: vec![PairComparison {
                    a: "alpha".into(),
                    b: "beta".into(),
                    t: 3.0,
                    p: 0.01,
                    significant: best_significant,
                }],
            });
        }
        MetricsReport {
            folds: 2,
            ks: vec![10],
            seed: 0,
            alpha: 0.05,
            significance: SignificanceSource::Folds,
            models: vec![
                ModelReport {
                    name: "alpha".into(),
                    error: None,
                    cells: a_cells,
                },
                ModelReport {
                    name: "beta".into(),
                    error: None,
                    cells: b_cells,
                },
            ],
            columns,
        }
    }

    #[test]
    fn report_marks_best_and_significance() {
        let text = render_report(&tiny_report(true, false));
        assert!(text.contains("[0.5000]*"), "{text}");
        assert!(text.contains("0.2500"), "{text}");
        assert!(text.lines().next().unwrap().starts_with("model"));
        assert!(text.contains("f1@10"));
    }

    #[test]
    fn report_without_significance_has_no_star() {
        let text = render_report(&tiny_report(false, false));
        assert!(text.contains("[0.5000]"), "{text}");
        assert!(!text.contains('*'), "{text}");
    }

    #[test]
    fn tied_models_are_both_bracketed() {
        let text = render_report(&tiny_report(false, true));
        let bracketed = text.matches("[0.5000]").count();
        assert_eq!(bracketed, 2 * METRIC_NAMES.len());
    }

    #[test]
    fn failed_models_render_their_error() {
        let mut report = tiny_report(false, false);
        report.models[1] = ModelReport {
            name: "beta".into(),
            error: Some("fold 0: boom".into()),
            cells: vec![],
        };
        let text = render_report(&report);
        assert!(text.contains("failed: fold 0: boom"), "{text}");
    }

    #[test]
    fn unknown_flags_and_subcommands_are_rejected() {
        assert!(run_from(["kgrec", "frobnicate"]).is_err());
        assert!(run_from(["kgrec", "train", "--no-such-flag"]).is_err());
        assert!(run_from(["kgrec", "evaluate", "--ratings", "/nonexistent/r.tsv"]).is_err());
    }

    #[test]
    fn seed_falls_back_to_the_environment() {
        std::env::set_var("KGREC_SEED", "99");
        let cli =
            Cli::try_parse_from(["kgrec", "train", "--graph", "g.tsv", "--out", "e.tsv"]).unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        assert_eq!(args.seed, 99);
        std::env::remove_var("KGREC_SEED");
        let cli = Cli::try_parse_from([
            "kgrec", "train", "--graph", "g.tsv", "--seed", "3", "--out", "e.tsv",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        assert_eq!(args.seed, 3);
    }

    #[test]
    fn model_and_ks_lists_parse_from_commas() {
        let cli = Cli::try_parse_from([
            "kgrec",
            "evaluate",
            "--ratings",
            "r.tsv",
            "--models",
            "gera,pop",
            "--ks",
            "5,15",
            "--seed",
            "1",
        ])
        .unwrap();
        let Command::Evaluate(args) = cli.command else {
            panic!("expected evaluate");
        };
        assert_eq!(args.models, vec!["gera", "pop"]);
        assert_eq!(args.ks, vec![5, 15]);
        assert_eq!(args.folds, 5);
        assert_eq!(args.dim, 400);
        assert_eq!(args.lr, 0.01);
    }
}
