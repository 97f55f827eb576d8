use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plugsearch::analysis::{AnalyzerConfig, StopwordSource, TokenizerMode};
use plugsearch::index::build_index;
use plugsearch::ingest::{load, ErrorPolicy, LoadOptions, Mode, SourceFormat, SourceSpec};
use plugsearch::preprocess::shard_dataset;
use plugsearch::registry::{
    load_index_from_hub, pack_index, serve_registry, PackOptions, RegistryClient, RegistryLocation, Token,
    DEFAULT_QUOTA_BYTES, TOKEN_ENV,
};
use plugsearch::scaffold::{self, TemplateContext, TemplateOrigin};
use plugsearch::search::{result_page, Bm25Params, Docstore, SearchOptions};
use plugsearch::service::{self, ServiceConfig};
use plugsearch::{Error, Result};

#[derive(Parser)]
#[command(name = "plugsearch", version, about = "Build, serve and share BM25 search indexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a source without writing anything
    Ingest(IngestArgs),
    /// Split a source into size-bounded shards
    Shard(ShardArgs),
    /// Build an index from shards
    Index(IndexArgs),
    /// Query an index and print one page of results
    Search(SearchArgs),
    /// Write a reproducible index archive
    Pack(PackArgs),
    /// Publish an index to a registry
    Push(PushArgs),
    /// Fetch and verify an index from a registry
    Pull(PullArgs),
    /// Registry server
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Search-app scaffolding
    #[command(subcommand)]
    App(AppCommand),
    /// Serve an index over HTTP
    Serve(ServeArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// File, directory or http(s) URL
    location: String,
    /// jsonl, csv or textdir; inferred when omitted
    #[arg(long)]
    format: Option<SourceFormat>,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long)]
    id_field: Option<String>,
    /// Drop bad records instead of stopping at the first one
    #[arg(long)]
    skip_errors: bool,
    /// Reject invalid UTF-8 instead of replacing it
    #[arg(long)]
    strict_utf8: bool,
    /// Field delimiter for delimited files
    #[arg(long, default_value = ",")]
    delimiter: char,
}

impl SourceArgs {
    fn spec(&self) -> SourceSpec {
        let mut spec = SourceSpec::infer(&self.location, &self.text_field);
        if let Some(format) = self.format {
            spec.format = format;
        }
        spec.id_field = self.id_field.clone();
        spec
    }

    fn options(&self) -> Result<LoadOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter {:?} is not ASCII", self.delimiter)));
        }
        Ok(LoadOptions {
            strict_utf8: self.strict_utf8,
            on_error: if self.skip_errors { ErrorPolicy::Skip } else { ErrorPolicy::Abort },
            delimiter: self.delimiter as u8,
            ..LoadOptions::default()
        })
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct ShardArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Shard size limit, e.g. 300B, 64MB, 1GB
    #[arg(long, default_value = "1GB")]
    size: String,
    /// Alias for --text-field
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzerArgs {
    #[arg(long, default_value = "unicode-word")]
    tokenizer: TokenizerMode,
    #[arg(long)]
    no_lowercase: bool,
    #[arg(long)]
    keep_punctuation: bool,
    /// Shipped list name (en, fr, ...) or a file with one word per line
    #[arg(long)]
    stopwords: Option<String>,
    /// BCP-47 tag selecting a shipped stopword list
    #[arg(long)]
    language: Option<String>,
    /// Subword vocabulary file (required with --tokenizer subword)
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl AnalyzerArgs {
    fn config(&self) -> AnalyzerConfig {
        let stopwords = self.stopwords.as_ref().map(|s| {
            if Path::new(s).is_file() {
                StopwordSource::File(PathBuf::from(s))
            } else {
                StopwordSource::Named(s.clone())
            }
        });
        AnalyzerConfig {
            mode: self.tokenizer,
            lowercase: !self.no_lowercase,
            strip_punctuation: !self.keep_punctuation,
            stopwords,
            subword_vocab: self.vocab.clone(),
            language_tag: self.language.clone(),
        }
    }
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    shards: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(short = 'q', long)]
    query: String,
    #[arg(short = 'k', long, default_value_t = 100)]
    k: usize,
    /// Page number; negative values count from the last page
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    page: i64,
    #[arg(long, default_value_t = 20)]
    per_page: usize,
    /// Shard directory; defaults to the one recorded in the index
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    index: PathBuf,
    /// Archive path, or a directory to write index.tar.gz into
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "local")]
    slug: String,
    #[arg(long, default_value_t = 0)]
    version: u64,
    /// Warn when the index exceeds this many bytes
    #[arg(long, default_value_t = DEFAULT_QUOTA_BYTES)]
    quota: u64,
}

#[derive(Args)]
struct RegistryArgs {
    /// file:///path or http(s)://host[:port]
    #[arg(long)]
    registry: String,
    #[arg(long)]
    org: String,
}

impl RegistryArgs {
    fn location(&self) -> Result<RegistryLocation> {
        RegistryLocation::new(&self.registry, &self.org)
    }
}

#[derive(Args)]
struct PushArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    slug: String,
    #[command(flatten)]
    registry: RegistryArgs,
    #[arg(long, default_value_t = DEFAULT_QUOTA_BYTES)]
    quota: u64,
}

#[derive(Args)]
struct PullArgs {
    #[arg(long)]
    slug: String,
    #[command(flatten)]
    registry: RegistryArgs,
    #[arg(long, default_value = ".plugsearch-cache")]
    cache: PathBuf,
    /// Defaults to the latest version
    #[arg(long)]
    version: Option<u64>,
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Serve a registry from a directory; uploads need PLUGSEARCH_TOKEN when it is set
    Serve {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7861")]
        bind: String,
    },
}

#[derive(Subcommand)]
enum AppCommand {
    /// Render a template into OUT/{local_app}
    Create {
        #[arg(long, default_value = "vanilla")]
        template: String,
        /// Context value, KEY=VALUE (repeatable)
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, String)>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Extra template directory (repeatable)
        #[arg(long = "templates")]
        templates: Vec<PathBuf>,
    },
    /// Upload a rendered app as a space
    Push {
        #[arg(long)]
        slug: String,
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long, default_value = "app")]
        dir: PathBuf,
        #[arg(long, default_value = "static")]
        sdk: String,
        /// Remove the app directory after the registry acknowledges it
        #[arg(long)]
        delete: bool,
    },
    /// List available templates
    List {
        #[arg(long = "templates")]
        templates: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = service::DEFAULT_BIND)]
    bind: String,
    /// Allowed CORS origin (repeatable); * allows any
    #[arg(long)]
    cors: Vec<String>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long, default_value_t = service::DEFAULT_RESULTS_CAP)]
    results_cap: usize,
    #[arg(long, default_value_t = service::DEFAULT_PAGE_SIZE_CAP)]
    page_size_cap: usize,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_assignment(raw: &str) -> std::result::Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected KEY=VALUE, got {raw:?}"))
}

fn search_paths(extra: &[PathBuf]) -> Vec<PathBuf> {
    let mut paths = extra.to_vec();
    paths.extend(scaffold::default_search_paths());
    paths
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let stream = load(&args.source.spec(), &args.source.options()?, Mode::Streaming)?;
    let mut count = 0u64;
    let mut first_error = None;
    let mut stream = stream;
    for item in stream.by_ref() {
        match item {
            Ok(_) => count += 1,
            Err(e) => {
                first_error = Some(e);
                break;
            }
        }
    }
    let report = stream.report();
    println!("records: {count}");
    if report.rejected > 0 {
        println!("rejected: {}", report.rejected);
    }
    if report.utf8_replacements > 0 {
        println!("utf8 replacements: {}", report.utf8_replacements);
    }
    match first_error {
        Some(e) => {
            println!("first error: {e}");
            Err(e)
        }
        None => {
            println!("first error: none");
            Ok(())
        }
    }
}

fn shard(args: &ShardArgs) -> Result<()> {
    let mut spec = args.source.spec();
    if let Some(field) = &args.field {
        spec.text_field = field.clone();
    }
    let stream = load(&spec, &args.source.options()?, Mode::Streaming)?;
    let manifest = shard_dataset(stream, &args.size, &spec.text_field, &args.out)?;
    println!(
        "{} documents in {} shards at {}",
        manifest.total_docs,
        manifest.shard_files.len(),
        args.out.display()
    );
    Ok(())
}

fn index(args: &IndexArgs) -> Result<()> {
    let summary = build_index(&args.shards, &args.out, &args.analyzer.config(), args.threads)?;
    let stats = summary.stats;
    println!(
        "indexed {} documents, {} terms, {} tokens (avgdl {:.3}) in {:.2}s",
        stats.num_docs,
        stats.num_terms,
        stats.total_tokens,
        stats.avgdl,
        summary.elapsed.as_secs_f64()
    );
    Ok(())
}

fn search(args: &SearchArgs) -> Result<()> {
    let index = std::sync::Arc::new(plugsearch::index::Index::open(&args.index)?);
    let options = SearchOptions {
        params: Bm25Params::new(args.k1, args.b)?,
        ..SearchOptions::default()
    };
    let ranked = index.search(&args.query, args.k, &options)?;
    let docstore = match &args.docs {
        Some(path) => Docstore::open(path, index)?,
        None => Docstore::open_for(index)?,
    };
    let page = result_page(&docstore, &ranked, args.page, args.per_page)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&page).expect("page serializes"));
        return Ok(());
    }
    println!(
        "{} results, page {} of {}",
        page.total_results,
        page.page_number + 1,
        page.num_pages.max(1)
    );
    let first_rank = page.page_number * page.results_per_page;
    for (i, row) in page.rows.iter().enumerate() {
        println!("{:>4}. {}  {:.4}", first_rank + i as u64 + 1, row.id, row.score);
        println!("      {}", row.snippet);
    }
    Ok(())
}

fn pack(args: &PackArgs) -> Result<()> {
    let outcome = pack_index(
        &args.index,
        &args.out,
        &PackOptions {
            slug: args.slug.clone(),
            version: args.version,
            quota_bytes: args.quota,
            ..PackOptions::default()
        },
    )?;
    println!("{}", outcome.archive.display());
    Ok(())
}

fn push(args: &PushArgs) -> Result<()> {
    let client = RegistryClient::new(args.registry.location()?)?;
    let published = client.push_index(
        &args.slug,
        &args.index,
        &PackOptions {
            quota_bytes: args.quota,
            ..PackOptions::default()
        },
    )?;
    println!("{}", published.url);
    Ok(())
}

fn pull(args: &PullArgs) -> Result<()> {
    let path = load_index_from_hub(&args.slug, &args.registry.location()?, &args.cache, args.version)?;
    println!("{}", path.display());
    Ok(())
}

fn wait_forever(handle: plugsearch::http::ServerHandle) {
    println!("listening on {}", handle.url());
    handle.wait();
}

fn app(command: &AppCommand) -> Result<()> {
    match command {
        AppCommand::Create {
            template,
            set,
            out,
            templates,
        } => {
            let context: TemplateContext = set.iter().cloned().collect();
            let path = scaffold::create_app_with(template, &context, out, &search_paths(templates))?;
            println!("{}", path.display());
        }
        AppCommand::Push {
            slug,
            registry,
            dir,
            sdk,
            delete,
        } => {
            let space =
                scaffold::create_space_from_local(slug, &registry.org, sdk, dir, &registry.location()?, *delete)?;
            println!("{}", space.url);
        }
        AppCommand::List { templates } => {
            for info in scaffold::list_templates(&search_paths(templates)) {
                let origin = match &info.origin {
                    TemplateOrigin::Builtin => "built-in".to_string(),
                    TemplateOrigin::Directory(dir) => dir.display().to_string(),
                };
                println!(
                    "{}\t{}\trequired: {}\t{}",
                    info.descriptor.name,
                    origin,
                    info.descriptor.required_keys.join(","),
                    info.descriptor.description
                );
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(&args),
        Command::Shard(args) => shard(&args),
        Command::Index(args) => index(&args),
        Command::Search(args) => search(&args),
        Command::Pack(args) => pack(&args),
        Command::Push(args) => push(&args),
        Command::Pull(args) => pull(&args),
        Command::Registry(RegistryCommand::Serve { root, bind }) => {
            let token = Token::from_env();
            if token.is_none() {
                tracing::warn!("{TOKEN_ENV} is not set; uploads are unauthenticated");
            }
            wait_forever(serve_registry(&root, &bind, token)?);
            Ok(())
        }
        Command::App(command) => app(&command),
        Command::Serve(args) => {
            let config = ServiceConfig {
                shards_path: args.docs,
                bind: args.bind,
                results_cap: args.results_cap,
                page_size_cap: args.page_size_cap,
                cors_origins: args.cors,
                ..ServiceConfig::new(args.index)
            };
            wait_forever(service::serve(&config)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
