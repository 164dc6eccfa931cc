//! Command-line verbs mirroring the HTTP endpoints.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tickscope_core::classify::{FeedbackEvent, TargetField, Verdict};
use tickscope_core::index::{DateRange, Query};
use tickscope_core::ingest::IngestConfig;
use tickscope_core::themes::{LdaConfig, ThemeMethod};

use crate::engine::{
    CorrelationRequest, CvRequest, Engine, Envelope, FieldsUpdate, Learner, PrecisionRequest, RecommendRequest,
    SearchRequest, ThemesRequest,
};
use crate::error::ApiError;
use crate::render::Table;
use crate::settings::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(name = "tickscope", version, about = "Search, triage and theme mining over ticket logs")]
pub struct Cli {
    /// TOML settings file (default: ./tickscope.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Data directory; overrides the settings file and environment.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub output: Output,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a delimited export, index it and train the recommenders.
    Ingest(IngestArgs),
    /// Banded similarity search.
    Search(SearchArgs),
    /// Rank assignees or business processes for a ticket.
    Recommend(RecommendArgs),
    /// Record an accept or reject verdict.
    Feedback(FeedbackArgs),
    /// Mine recurring themes, or list tickets shared by two phrases.
    Themes(ThemesArgs),
    /// Evaluation protocols.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Replace the field configuration from a JSON file.
    Fields {
        file: PathBuf,
    },
    /// List stored artifact versions.
    Versions,
    /// Run the HTTP API.
    Serve {
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub file: PathBuf,
    /// Seed for classifier training.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The file has no header; mappings are 1-based column numbers.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub source_label: Option<String>,
    #[arg(long)]
    pub datetime_format: Option<String>,
    /// Column override as FIELD=COLUMN; repeatable.
    #[arg(long = "map", value_parser = parse_pair)]
    pub map: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Filter as FIELD=VALUE in hierarchy order; repeatable.
    #[arg(long = "filter", value_parser = parse_pair)]
    pub filters: Vec<(String, String)>,
    #[arg(long, value_parser = parse_date, requires = "to")]
    pub from: Option<DateTime<Utc>>,
    #[arg(long, value_parser = parse_date_end, requires = "from")]
    pub to: Option<DateTime<Utc>>,
    /// Include per-term explanations (JSON output).
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Assignee,
    #[value(name = "business-process", alias = "business_process")]
    BusinessProcess,
}

impl From<TargetArg> for TargetField {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Assignee => TargetField::Assignee,
            TargetArg::BusinessProcess => TargetField::BusinessProcess,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Linear,
    Kernel,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(value_enum)]
    pub target: TargetArg,
    #[arg(long)]
    pub summary: Option<String>,
    #[arg(long, default_value = "")]
    pub description: String,
    /// Use the text of this corpus ticket when no summary is given.
    #[arg(long)]
    pub ticket: Option<String>,
    #[arg(long, value_parser = parse_date, requires = "to")]
    pub from: Option<DateTime<Utc>>,
    #[arg(long, value_parser = parse_date_end, requires = "from")]
    pub to: Option<DateTime<Utc>>,
    #[arg(long, value_enum, default_value = "linear")]
    pub learner: LearnerArg,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerdictArg {
    #[value(alias = "accepted")]
    Accept,
    #[value(alias = "rejected")]
    Reject,
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long)]
    pub event_id: String,
    #[arg(long)]
    pub ticket: String,
    #[arg(long, value_enum)]
    pub target: TargetArg,
    #[arg(long)]
    pub label: String,
    #[arg(long, value_enum)]
    pub verdict: VerdictArg,
    /// Defaults to the corpus ticket's summary.
    #[arg(long)]
    pub summary: Option<String>,
    #[arg(long)]
    pub description: Option<String>,
}

#[derive(Debug, Args)]
pub struct ThemesArgs {
    /// TF, TF_IDF, LSA, LDA, or a fusion: LSA+TF, LSA+TF_IDF, LSA+LDA, LDA+TF, LDA+TF_IDF.
    #[arg(long, default_value = "LSA+TF", value_parser = parse_method)]
    pub method: ThemeMethod,
    /// Required when mining.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub coverage_target: Option<f64>,
    #[arg(long)]
    pub lsa_rank: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub tag_field: Option<String>,
    /// Instead of mining, list tickets containing both phrases.
    #[arg(long, num_args = 2, value_names = ["P", "Q"], conflicts_with = "seed")]
    pub pair: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Stratified k-fold cross-validation of a recommender.
    Cv {
        #[arg(long, value_enum, default_value = "assignee")]
        target: TargetArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision at k from a judgments file of `query,ticket,judgment` lines.
    PrecisionAtK {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation of per-label training size with holdout accuracy.
    Correlation {
        #[arg(long, value_enum, default_value = "assignee")]
        target: TargetArg,
        #[arg(long)]
        seed: u64,
        /// File with one holdout ticket id per line.
        #[arg(long, conflicts_with = "holdout_last")]
        holdout: Option<PathBuf>,
        /// Hold out the last N tickets in corpus order.
        #[arg(long)]
        holdout_last: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    if k.trim().is_empty() {
        return Err(format!("empty name in {s:?}"));
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_date(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| format!("expected YYYY-MM-DD or RFC 3339, got {s:?}"))
}

/// Like [`parse_date`], but a bare date means the end of that day.
fn parse_date_end(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(23, 59, 59).unwrap().and_utc())
        .map_err(|_| format!("expected YYYY-MM-DD or RFC 3339, got {s:?}"))
}

fn parse_method(s: &str) -> Result<ThemeMethod, String> {
    s.parse()
}

fn range(from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> Option<DateRange> {
    Some(DateRange { from: from?, to: to? })
}

fn emit<T: Serialize + Table>(output: Output, out: &mut dyn Write, value: &Envelope<T>) -> std::io::Result<()> {
    match output {
        Output::Json => {
            serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
            writeln!(out)
        }
        Output::Table => write!(out, "{}", value.table()),
    }
}

fn write_report<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), ApiError> {
    if let Some(path) = path {
        let bytes = serde_json::to_vec_pretty(value).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(path, bytes)
            .map_err(|e| ApiError::new(400, "UnwritableOutput", format!("{}: {e}", path.display())).with_field("out"))?;
    }
    Ok(())
}

fn read_input(path: &PathBuf, field: &str) -> Result<Vec<u8>, ApiError> {
    std::fs::read(path).map_err(|e| {
        ApiError::new(400, "UnreadableSource", format!("{}: {e}", path.display())).with_field(field)
    })
}

/// Parses `args` and runs the verb, writing results to `out` and errors to
/// `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let body = serde_json::to_string(&e).unwrap_or_else(|_| e.to_string());
            let _ = writeln!(err, "{body}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    let mut settings =
        Settings::load(cli.config.as_deref()).map_err(|e| ApiError::new(400, "BadSettings", e.to_string()))?;
    if let Some(dir) = cli.data_dir {
        settings.data_dir = dir;
    }
    let engine = Engine::open(settings)?;
    let io = |e: std::io::Error| ApiError::internal(e.to_string());
    let output = cli.output;
    match cli.command {
        Command::Ingest(a) => {
            let bytes = read_input(&a.file, "file")?;
            let mut config = IngestConfig {
                delimiter: a.delimiter,
                has_header: !a.no_header,
                datetime_format: a.datetime_format,
                column_overrides: a.map.into_iter().collect(),
                ..IngestConfig::default()
            };
            config.source_label = a.source_label.unwrap_or_else(|| {
                a.file
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or(config.source_label.clone())
            });
            let env = engine.ingest_bytes(&bytes, &config, Some(a.seed))?;
            emit(output, out, &env).map_err(io)
        }
        Command::Search(a) => {
            let query = Query {
                text: a.query,
                filters: a.filters,
                date_range: range(a.from, a.to),
                k: a.top,
            };
            let env = engine.search(&SearchRequest {
                query,
                explain: a.explain,
            })?;
            emit(output, out, &env).map_err(io)
        }
        Command::Recommend(a) => {
            let request = RecommendRequest {
                ticket_id: a.ticket,
                summary: a.summary.unwrap_or_default(),
                description: a.description,
                recency: range(a.from, a.to),
                learner: match a.learner {
                    LearnerArg::Linear => Learner::Linear,
                    LearnerArg::Kernel => Learner::Kernel,
                },
                k: a.k,
                gamma: a.gamma,
            };
            let env = engine.recommend(a.target.into(), &request)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Feedback(a) => {
            let known = engine.ticket_text(&a.ticket);
            let summary = match (a.summary, &known) {
                (Some(s), _) => s,
                (None, Some((s, _))) => s.clone(),
                (None, None) => {
                    return Err(ApiError::new(
                        422,
                        "UnknownTicket",
                        format!("ticket {:?} is not in the corpus; pass --summary", a.ticket),
                    )
                    .with_field("summary"))
                }
            };
            let description = a
                .description
                .or_else(|| known.map(|(_, d)| d))
                .unwrap_or_default();
            let event = FeedbackEvent {
                event_id: a.event_id,
                ticket_id: a.ticket,
                target_field: a.target.into(),
                label: a.label,
                verdict: match a.verdict {
                    VerdictArg::Accept => Verdict::Accepted,
                    VerdictArg::Reject => Verdict::Rejected,
                },
                summary,
                description,
                timestamp: Utc::now(),
            };
            let env = engine.feedback(&event)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Themes(a) => {
            if let Some(pair) = a.pair {
                let env = engine.theme_pair(&pair[0], &pair[1])?;
                return emit(output, out, &env).map_err(io);
            }
            let lda = if a.topics.or(a.sweeps).or(a.burn_in).is_some() || a.alpha.or(a.beta).is_some() {
                let d = LdaConfig::default();
                Some(LdaConfig {
                    topics: a.topics.unwrap_or(d.topics),
                    alpha: a.alpha.or(d.alpha),
                    beta: a.beta.unwrap_or(d.beta),
                    sweeps: a.sweeps.unwrap_or(d.sweeps),
                    burn_in: a.burn_in.unwrap_or(d.burn_in),
                })
            } else {
                None
            };
            let env = engine.themes(&ThemesRequest {
                method: Some(a.method),
                seed: a.seed,
                top_n: a.top_n,
                coverage_target: a.coverage_target,
                lsa_rank: a.lsa_rank,
                lsa_centrality: None,
                lda,
                tag_field: a.tag_field,
            })?;
            emit(output, out, &env).map_err(io)
        }
        Command::Evaluate(EvaluateCommand::Cv {
            target,
            folds,
            seed,
            out: path,
        }) => {
            let env = engine.evaluate_cv(&CvRequest {
                target: Some(target.into()),
                folds: Some(folds),
                seed: Some(seed),
                ..CvRequest::default()
            })?;
            write_report(&path, &env.result)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Evaluate(EvaluateCommand::PrecisionAtK { judgments, k, out: path }) => {
            let text = String::from_utf8(read_input(&judgments, "judgments")?)
                .map_err(|_| ApiError::malformed("judgments file is not UTF-8").with_field("judgments"))?;
            let env = engine.evaluate_precision(&PrecisionRequest {
                k,
                judgments: Some(text),
                counts: None,
            })?;
            write_report(&path, &env.result)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Evaluate(EvaluateCommand::Correlation {
            target,
            seed,
            holdout,
            holdout_last,
            out: path,
        }) => {
            let holdout = match holdout {
                Some(p) => String::from_utf8_lossy(&read_input(&p, "holdout")?)
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                None => Vec::new(),
            };
            let env = engine.evaluate_correlation(&CorrelationRequest {
                target: Some(target.into()),
                seed: Some(seed),
                holdout,
                holdout_last,
            })?;
            write_report(&path, &env.result)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Fields { file } => {
            let bytes = read_input(&file, "file")?;
            let update: FieldsUpdate =
                serde_json::from_slice(&bytes).map_err(|e| ApiError::malformed(e.to_string()).with_field("file"))?;
            let env = engine.set_fields(update)?;
            emit(output, out, &env).map_err(io)
        }
        Command::Versions => {
            let env = engine.versions()?;
            emit(output, out, &env).map_err(io)
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| engine.settings().bind.clone());
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime
                .block_on(crate::http::serve(Arc::new(engine), &bind))
                .map_err(|e| ApiError::new(500, "ServeFailed", e.to_string()))
        }
    }
}
