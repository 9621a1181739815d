use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use arcross_core::cluegen::{
    export_finetune_records, BackendConfig, BackendKind, ClueGenerator, ClueRecord, ExportOptions, FineTuneConfigRecord,
    HttpBackend, MockBackend, PromptTemplate, TextBackend,
};
use arcross_core::corpus::{dataset_stats, ContextKeywordPair, FilterConfig};
use arcross_core::evaluation::{
    aggregate_ratings, check_unique, clue_sets, corpus_rouge, render_rating_table, RatingRecord, ReferenceMode,
};
use arcross_core::grid::{build_crossword, render_grid, AnswerEntry, BuildConfig, Puzzle, RenderFormat};
use arcross_core::store::{read_jsonl, DraftStatus, PuzzleDraft, Store, StoreFile};
use arcross_core::wiki::{FetchMode, WikiClient};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::error::CliError;
use crate::workflow;

#[derive(Debug, Parser)]
#[command(name = "arcross", version, about = "Arabic crossword clue pipeline: ingest, filter, generate, evaluate, build")]
pub struct Cli {
    /// Store directory holding manifest.json and the JSONL files.
    #[arg(long, global = true, env = "STORE_DIR", default_value = "store")]
    pub store: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty store.
    Init,
    /// Add articles from JSONL files or fetch them by title.
    Ingest(IngestArgs),
    /// Turn the corpus into (context, keyword) pairs, logging rejections.
    Filter(FilterArgs),
    /// Generate clues for every pair.
    GenClues(GenArgs),
    /// Score clues with ROUGE-1/2/L.
    EvalRouge(RougeArgs),
    /// Import or report A–E quality ratings.
    #[command(subcommand)]
    Ratings(RatingsCommand),
    /// Length and category distributions of pairs and clues.
    Stats,
    /// Create drafts and edit their clue selection.
    #[command(subcommand)]
    Draft(DraftCommand),
    /// Lay out a crossword from a draft or an answers file.
    Build(BuildArgs),
    /// Render a built draft as text, SVG or JSON.
    Export(ExportArgs),
    /// Write instruction-tuning records for the stored clues.
    ExportFinetune(FinetuneArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL files of article records.
    pub files: Vec<PathBuf>,
    /// Article title to fetch (repeatable).
    #[arg(long = "fetch")]
    pub fetch: Vec<String>,
    /// MediaWiki API endpoint for live fetches.
    #[arg(long, default_value = "https://ar.wikipedia.org/w/api.php")]
    pub endpoint: String,
    /// Read fetches from this fixture directory instead of the network.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Category recorded on fetched articles.
    #[arg(long, default_value = "")]
    pub category: String,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, default_value_t = 50)]
    pub min_context_words: usize,
    #[arg(long)]
    pub max_context_words: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendName {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendName>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Backend config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `ar`, `en`, or a template file.
    #[arg(long, default_value = "ar")]
    pub template: String,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Only the first N pairs.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RougeMode {
    /// Against each clue's source context.
    Text,
    /// Against reference clues for the same contexts.
    Reference,
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub mode: RougeMode,
    /// JSONL clue records to compare against in reference mode.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RatingsCommand {
    /// Append ratings from a JSONL file.
    Import { file: PathBuf },
    /// Percentage of each level per model.
    Report {
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum DraftCommand {
    /// Start a draft, optionally with clue ids selected.
    Create {
        #[arg(long)]
        id: Option<String>,
        clues: Vec<String>,
    },
    /// Select more clues.
    Add { id: String, clues: Vec<String> },
    /// Deselect clues.
    Remove { id: String, clues: Vec<String> },
    /// Print the current state of every draft.
    List,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct BuildSource {
    #[arg(long)]
    pub draft: Option<String>,
    /// JSON array of answers (strings or {answer, clue_ref} objects).
    #[arg(long)]
    pub answers: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub source: BuildSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_backtracks: Option<u64>,
    /// Write the puzzle JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub draft: String,
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// `gpt35`, `llama`, or a JSON file with a fine-tune config record.
    #[arg(long, default_value = "gpt35")]
    pub config: String,
    #[arg(long, default_value = "ar")]
    pub template: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave out clues with hard validation flags.
    #[arg(long)]
    pub skip_flagged: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Allowed CORS origin; any origin when unset.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.store.as_path();
    match cli.command {
        Command::Init => {
            let store = Store::open_or_init(root)?;
            print_json(&json!({"store": store.root(), "schema_version": store.manifest().schema_version}));
        }
        Command::Ingest(args) => ingest(root, args)?,
        Command::Filter(args) => {
            let store = Store::open(root)?;
            let config = FilterConfig {
                min_context_words: args.min_context_words,
                max_context_words: args.max_context_words,
                ..Default::default()
            };
            print_json(&workflow::run_filter(&store, &config)?);
        }
        Command::GenClues(args) => gen_clues(root, args)?,
        Command::EvalRouge(args) => eval_rouge(root, args)?,
        Command::Ratings(cmd) => ratings(root, cmd)?,
        Command::Stats => {
            let store = Store::open(root)?;
            let pairs: Vec<ContextKeywordPair> = store.read_all(StoreFile::Pairs)?;
            let clues: Vec<ClueRecord> = store.read_all(StoreFile::Clues)?;
            print_json(&dataset_stats(&pairs, &clues));
        }
        Command::Draft(cmd) => draft(root, cmd)?,
        Command::Build(args) => build(root, args)?,
        Command::Export(args) => export(root, args)?,
        Command::ExportFinetune(args) => export_finetune(root, args)?,
        Command::Serve(args) => {
            let store = Store::open(root)?;
            crate::server::serve(store, &args.host, args.port, args.cors_origin.as_deref())?;
        }
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn ingest(root: &Path, args: IngestArgs) -> Result<(), CliError> {
    if args.files.is_empty() && args.fetch.is_empty() {
        return Err(CliError::Usage("ingest needs files or --fetch titles".into()));
    }
    let store = Store::open_or_init(root)?;
    let mut records = Vec::new();
    for path in &args.files {
        records.extend(workflow::read_article_file(path)?);
    }
    let mut fetch_errors = Vec::new();
    if !args.fetch.is_empty() {
        let mode = match &args.fixtures {
            Some(dir) => FetchMode::Fixture(dir.clone()),
            None => FetchMode::Live,
        };
        let client = WikiClient::new(&args.endpoint, mode).with_category(args.category.clone());
        for (title, result) in args.fetch.iter().zip(client.fetch_many(&args.fetch, args.concurrency, &Default::default())) {
            match result {
                Ok(r) => records.push(r),
                Err(e) => fetch_errors.push(json!({"title": title, "error": e.to_string()})),
            }
        }
    }
    let summary = workflow::ingest_records(&store, records)?;
    print_json(&json!({"summary": summary, "fetch_errors": fetch_errors}));
    if !fetch_errors.is_empty() {
        return Err(CliError::pipeline("fetch-failed", format!("{} titles could not be fetched", fetch_errors.len())));
    }
    Ok(())
}

fn load_template(name: &str) -> Result<PromptTemplate, CliError> {
    match name {
        "ar" => Ok(PromptTemplate::arabic()),
        "en" => Ok(PromptTemplate::english()),
        path => {
            let text = fs::read_to_string(path)?;
            let id = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
            PromptTemplate::new(id, "ar", &text).map_err(|e| CliError::pipeline("invalid-template", e))
        }
    }
}

fn gen_clues(root: &Path, args: GenArgs) -> Result<(), CliError> {
    let store = Store::open(root)?;
    let mut config = match &args.config {
        Some(path) => BackendConfig::parse(&fs::read_to_string(path)?).map_err(|e| CliError::pipeline("invalid-config", e))?,
        None => BackendConfig::default(),
    };
    match args.backend {
        Some(BackendName::Mock) => config.kind = BackendKind::Mock,
        Some(BackendName::Http) => config.kind = BackendKind::Http,
        None => {}
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let concurrency = args.concurrency.unwrap_or(config.concurrency);
    let backend: Box<dyn TextBackend> = match config.kind {
        BackendKind::Mock => Box::new(MockBackend::new(config.seed)),
        BackendKind::Http => {
            Box::new(HttpBackend::from_config(&config).map_err(|e| CliError::pipeline("invalid-config", e))?)
        }
    };
    let template = load_template(&args.template)?;
    let generator = ClueGenerator::new(backend.as_ref(), &template, config.sampling);
    let summary = workflow::run_generation(&store, &generator, concurrency, args.limit)?;
    print_json(&summary);
    Ok(())
}

fn eval_rouge(root: &Path, args: RougeArgs) -> Result<(), CliError> {
    let store = Store::open(root)?;
    let pairs: Vec<ContextKeywordPair> = store.read_all(StoreFile::Pairs)?;
    let contexts = pairs.iter().map(|p| (p.pair_id(), p.context.clone())).collect();
    let clues: Vec<ClueRecord> = store.read_all(StoreFile::Clues)?;
    let candidates = clue_sets(&clues, &contexts);
    let result = match args.mode {
        RougeMode::Text => corpus_rouge(&candidates, ReferenceMode::AgainstSourceText),
        RougeMode::Reference => {
            let path = args.reference.ok_or_else(|| CliError::Usage("--mode reference needs --reference".into()))?;
            let reference: Vec<ClueRecord> = read_jsonl(&path)?;
            let reference = clue_sets(&reference, &contexts);
            corpus_rouge(&candidates, ReferenceMode::AgainstReferenceClues(&reference))
        }
    }
    .map_err(|e| CliError::pipeline("evaluation", e))?;
    print_json(&result);
    Ok(())
}

fn ratings(root: &Path, cmd: RatingsCommand) -> Result<(), CliError> {
    let store = Store::open(root)?;
    match cmd {
        RatingsCommand::Import { file } => {
            let incoming: Vec<RatingRecord> = read_jsonl(&file)?;
            let clues: Vec<ClueRecord> = store.read_all(StoreFile::Clues)?;
            let clues = workflow::clue_index(clues);
            let mut records = Vec::with_capacity(incoming.len());
            for mut r in incoming {
                r.validate().map_err(|e| CliError::pipeline("invalid-rating", e))?;
                if r.model_id.is_empty() {
                    r.model_id = clues.get(&r.clue_ref).map(|c| c.generator_id.clone()).unwrap_or_default();
                }
                records.push(r);
            }
            let mut all: Vec<RatingRecord> = store.read_all(StoreFile::Ratings)?;
            all.extend(records.iter().cloned());
            check_unique(&all).map_err(|e| CliError::pipeline("duplicate-rating", e))?;
            let n = store.append(StoreFile::Ratings, &records)?;
            print_json(&json!({"imported": n}));
        }
        RatingsCommand::Report { format } => {
            let all: Vec<RatingRecord> = store.read_all(StoreFile::Ratings)?;
            let report = aggregate_ratings(&all).map_err(|e| CliError::pipeline("evaluation", e))?;
            match format {
                ReportFormat::Table => print!("{}", render_rating_table(&report)),
                ReportFormat::Json => print_json(&report),
            }
        }
    }
    Ok(())
}

fn draft(root: &Path, cmd: DraftCommand) -> Result<(), CliError> {
    let store = Store::open(root)?;
    let drafts = store.drafts()?;
    let clues = workflow::clue_index(store.read_all(StoreFile::Clues)?);
    let check = |refs: &[String]| match refs.iter().find(|r| !clues.contains_key(*r)) {
        Some(r) => Err(CliError::pipeline("unknown-clue", format!("no clue `{r}` in the store"))),
        None => Ok(()),
    };
    let find = |id: &str| {
        drafts
            .iter()
            .find(|d| d.draft_id == id)
            .cloned()
            .ok_or_else(|| CliError::pipeline("unknown-draft", format!("no draft `{id}`")))
    };
    let updated = match cmd {
        DraftCommand::List => {
            print_json(&drafts);
            return Ok(());
        }
        DraftCommand::Create { id, clues: refs } => {
            check(&refs)?;
            let id = id.unwrap_or_else(|| workflow::next_draft_id(&drafts));
            if drafts.iter().any(|d| d.draft_id == id) {
                return Err(CliError::pipeline("duplicate-draft", format!("draft `{id}` exists")));
            }
            workflow::update_selection(&PuzzleDraft::new(id), &refs, &[])
        }
        DraftCommand::Add { id, clues: refs } => {
            check(&refs)?;
            workflow::update_selection(&find(&id)?, &refs, &[])
        }
        DraftCommand::Remove { id, clues: refs } => workflow::update_selection(&find(&id)?, &[], &refs),
    };
    store.append(StoreFile::Drafts, std::slice::from_ref(&updated))?;
    print_json(&updated);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnswerInput {
    Plain(String),
    Entry(AnswerEntry),
}

fn build(root: &Path, args: BuildArgs) -> Result<(), CliError> {
    let mut config = BuildConfig { seed: args.seed, ..Default::default() };
    if let Some(n) = args.max_backtracks {
        config.max_backtracks = n;
    }
    let puzzle = if let Some(id) = &args.source.draft {
        let store = Store::open(root)?;
        let draft = store
            .draft(id)?
            .ok_or_else(|| CliError::pipeline("unknown-draft", format!("no draft `{id}`")))?;
        let clues = workflow::clue_index(store.read_all(StoreFile::Clues)?);
        let built = workflow::build_draft(&clues, &draft, &config).map_err(CliError::Build)?;
        store.append(StoreFile::Drafts, std::slice::from_ref(&built))?;
        built.grid.expect("built draft has a grid")
    } else {
        let path = args.source.answers.as_ref().expect("clap enforces one source");
        let inputs: Vec<AnswerInput> = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| CliError::pipeline("invalid-answers", format!("{}: {e}", path.display())))?;
        let answers: Vec<AnswerEntry> = inputs
            .into_iter()
            .enumerate()
            .map(|(i, a)| match a {
                AnswerInput::Plain(answer) => AnswerEntry::new(answer, format!("a{}", i + 1)),
                AnswerInput::Entry(e) => e,
            })
            .collect();
        let grid = build_crossword(&answers, &config).map_err(CliError::Build)?;
        Puzzle::from_grid(&grid).expect("built grids are valid")
    };
    let bytes = render_grid(&puzzle.to_grid(), RenderFormat::Json).expect("built grids render");
    write_output(args.out.as_deref(), &bytes)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn export(root: &Path, args: ExportArgs) -> Result<(), CliError> {
    let format: RenderFormat = args.format.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let store = Store::open(root)?;
    let draft = store
        .draft(&args.draft)?
        .ok_or_else(|| CliError::pipeline("unknown-draft", format!("no draft `{}`", args.draft)))?;
    let Some(puzzle) = &draft.grid else {
        return Err(CliError::pipeline("not-built", format!("draft `{}` has no grid yet", draft.draft_id)));
    };
    let bytes = render_grid(&puzzle.to_grid(), format).map_err(|e| CliError::pipeline("render", e))?;
    write_output(args.out.as_deref(), &bytes)?;
    if draft.status != DraftStatus::Exported {
        let exported = PuzzleDraft { status: DraftStatus::Exported, ..draft };
        store.append(StoreFile::Drafts, &[exported])?;
    }
    Ok(())
}

fn export_finetune(root: &Path, args: FinetuneArgs) -> Result<(), CliError> {
    let store = Store::open(root)?;
    let config = match FineTuneConfigRecord::preset(&args.config) {
        Some(c) => c,
        None => {
            let c: FineTuneConfigRecord = serde_json::from_slice(&fs::read(&args.config)?)
                .map_err(|e| CliError::pipeline("invalid-config", e))?;
            c.validate().map_err(|e| CliError::pipeline("invalid-config", e))?;
            c
        }
    };
    let template = load_template(&args.template)?;
    let pairs: Vec<ContextKeywordPair> = store.read_all(StoreFile::Pairs)?;
    let clues: Vec<ClueRecord> = store.read_all(StoreFile::Clues)?;
    let mut by_ref: std::collections::HashMap<String, Vec<ClueRecord>> = Default::default();
    for c in clues {
        by_ref.entry(c.context_ref.clone()).or_default().push(c);
    }
    let sets: Vec<(ContextKeywordPair, Vec<ClueRecord>)> = pairs
        .into_iter()
        .filter_map(|p| by_ref.remove(&p.pair_id()).map(|c| (p, c)))
        .collect();
    let mut out = std::io::BufWriter::new(fs::File::create(&args.out)?);
    let summary =
        export_finetune_records(&sets, &template, &config, ExportOptions { skip_flagged: args.skip_flagged }, &mut out)?;
    let mut sidecar_path = args.out.clone().into_os_string();
    sidecar_path.push(".meta.json");
    fs::write(&sidecar_path, serde_json::to_vec_pretty(&summary.sidecar).expect("sidecar serializes"))?;
    print_json(&json!({"records": summary.sidecar.record_count, "clues": summary.sidecar.clue_count, "skipped_sets": summary.skipped_sets, "sidecar": PathBuf::from(sidecar_path)}));
    Ok(())
}
