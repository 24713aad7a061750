use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use coderec_miner::{
    crawl, parse_topics, Client, CrawlCache, HarvestOptions, HttpTransport, MinerConfig,
    MinerError, RepoFilter,
};

/// Build a code recommendation dataset from a GitHub-compatible API.
#[derive(Parser, Debug)]
#[command(name = "miner", version)]
struct Args {
    /// Topics to search, comma or whitespace separated, `#` comments.
    #[arg(long)]
    topics_file: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repositories to sample after filtering.
    #[arg(long, default_value_t = 300)]
    max_repos: usize,
    #[arg(long, default_value_t = 250)]
    min_stars: u64,
    #[arg(long, default_value_t = 3)]
    min_contributors: usize,
    #[arg(long, default_value_t = 3)]
    min_history_months: u32,
    #[arg(long, default_value = "https://api.github.com")]
    api_url: String,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "GITHUB_TOKEN")]
    token_env: String,
    /// Response cache; defaults to `<out>/.crawl-cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Answer from the cache only.
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Skip file contents.
    #[arg(long)]
    no_content: bool,
    #[arg(long, default_value_t = 256 * 1024)]
    max_file_bytes: u64,
}

const CACHE_DIR: &str = ".crawl-cache";

fn run(args: Args) -> Result<(), MinerError> {
    let text = std::fs::read_to_string(&args.topics_file).map_err(|e| {
        MinerError::Config(format!("cannot read {}: {e}", args.topics_file.display()))
    })?;
    let topics = parse_topics(&text);
    if topics.is_empty() {
        return Err(MinerError::Config(format!(
            "{} lists no topics",
            args.topics_file.display()
        )));
    }
    let token = std::env::var(&args.token_env)
        .ok()
        .filter(|t| !t.is_empty());
    if token.is_none() && !args.offline {
        log::warn!(
            "${} is not set; unauthenticated limits apply",
            args.token_env
        );
    }
    let cache_dir = args
        .cache
        .clone()
        .unwrap_or_else(|| args.out.join(CACHE_DIR));
    let client = Client::new(HttpTransport::new(&args.api_url, token)?)
        .with_cache(CrawlCache::open(&cache_dir)?)
        .offline(args.offline);
    let cfg = MinerConfig {
        filter: RepoFilter {
            min_stars: args.min_stars,
            min_contributors: args.min_contributors,
            min_history_months: args.min_history_months,
            topics,
            sample_size: args.max_repos,
        },
        seed: args.seed,
        workers: args.workers,
        harvest: HarvestOptions {
            with_content: !args.no_content,
            max_file_bytes: args.max_file_bytes,
        },
    };
    let keep: Vec<&str> = if args.cache.is_none() {
        vec![CACHE_DIR]
    } else {
        vec![]
    };
    let summary = crawl(&client, &cfg, &args.out, &keep)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serialises")
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("miner: {e}");
            ExitCode::from(match &e {
                e if e.is_config() => 2,
                MinerError::Core(c) if c.is_data_error() => 3,
                _ => 1,
            })
        }
    }
}
