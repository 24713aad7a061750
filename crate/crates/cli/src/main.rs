use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coderec_cli::serve::{serve, AppState};
use coderec_cli::{encode_features, load_run, prepare, train_run, CliError, Result, Snapshot};
use coderec_core::config::{ModelKind, Protocol, RunConfig};
use coderec_core::recommend::Scope;
use coderec_miner::{
    crawl, Client, CrawlCache, HarvestOptions, HttpTransport, MinerConfig, RepoFilter,
};

#[derive(Parser)]
#[command(name = "coderec", version, about = "Graph-based code recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl a code-hosting API into a dataset directory.
    Ingest(IngestArgs),
    /// Split a dataset and print its summary table.
    Prepare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Write segment features: TF-IDF, or an imported feature file realigned.
    Encode {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Feature file produced by an external encoder.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Train a model and write a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a run on the test window.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Comma-separated cutoffs, e.g. 5,10,20.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Top-K files for one user.
    Recommend {
        #[arg(long)]
        run: PathBuf,
        /// Raw id, login or dense index.
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "intra")]
        scope: Scope,
        #[arg(long)]
        json: bool,
    },
    /// Serve recommendations over HTTP.
    Serve {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (`key = value` with `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; overrides `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Feature file; overrides `data.features`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value`, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Turn on an ablation flag. Repeatable.
    #[arg(long = "flag", value_name = "NAME")]
    flags: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        for f in &self.flags {
            cfg.flags.set(f, true)?;
        }
        if let Some(d) = &self.data {
            cfg.dataset = d.clone();
        }
        if let Some(f) = &self.features {
            cfg.features = Some(f.clone());
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    topics_file: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
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
    #[arg(long, default_value = "GITHUB_TOKEN")]
    token_env: String,
    /// Response cache; defaults to `<out>/.crawl-cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.topics_file)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.topics_file.display())))?;
    let topics = coderec_miner::parse_topics(&text);
    if topics.is_empty() {
        return Err(CliError::Usage(format!(
            "{} lists no topics",
            a.topics_file.display()
        )));
    }
    let token = std::env::var(&a.token_env).ok().filter(|t| !t.is_empty());
    let cache_dir = a
        .cache
        .clone()
        .unwrap_or_else(|| a.out.join(".crawl-cache"));
    let client = Client::new(HttpTransport::new(&a.api_url, token)?)
        .with_cache(CrawlCache::open(&cache_dir)?)
        .offline(a.offline);
    let cfg = MinerConfig {
        filter: RepoFilter {
            min_stars: a.min_stars,
            min_contributors: a.min_contributors,
            min_history_months: a.min_history_months,
            topics,
            sample_size: a.max_repos,
        },
        seed: a.seed,
        workers: a.workers,
        harvest: HarvestOptions::default(),
    };
    let keep: Vec<&str> = if a.cache.is_none() {
        vec![".crawl-cache"]
    } else {
        vec![]
    };
    let summary = crawl(&client, &cfg, &a.out, &keep)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serialises")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Prepare { config, json } => {
            let cfg = config.resolve()?;
            let summary = prepare(&cfg.dataset, cfg.t1, cfg.t2)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&summary).expect("summary serialises")
                );
            } else {
                print!("{summary}");
            }
            Ok(())
        }
        Command::Encode {
            config,
            out,
            import,
        } => {
            let cfg = config.resolve()?;
            let s = encode_features(&cfg.dataset, &out, import.as_deref(), &cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&s).expect("summary serialises")
            );
            Ok(())
        }
        Command::Train { config, out } => {
            let cfg = config.resolve()?;
            let out = out.unwrap_or_else(|| cfg.output.join(cfg.tag()));
            let (archived, log) = train_run(&cfg, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "run": archived.output,
                    "tag": archived.tag(),
                    "epochs": log.epochs.len(),
                    "best_epoch": log.best_epoch,
                    "best_val_ndcg10": log.best_val,
                    "final_loss": log.epochs.last().map(|e| e.loss),
                })
            );
            Ok(())
        }
        Command::Evaluate {
            run,
            protocol,
            k,
            json,
        } => {
            let loaded = load_run(&run)?;
            let protocol = protocol.unwrap_or(loaded.cfg.protocol);
            let ks = if k.is_empty() {
                loaded.cfg.ks.clone()
            } else {
                k
            };
            let report = loaded.evaluate(protocol, &ks)?;
            std::fs::write(
                run.join(format!("report-{protocol}.json")),
                report.to_json(),
            )?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Command::Recommend {
            run,
            user,
            k,
            scope,
            json,
        } => {
            let snap = Snapshot::load(&run)?;
            let r = snap.query(&user, k, scope)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&r).expect("response serialises")
                );
            } else {
                println!("{:>4}  {:>12}  {:<40}  repo", "rank", "score", "file");
                for (i, item) in r.items.iter().enumerate() {
                    println!(
                        "{:>4}  {:>12.6}  {:<40}  {}",
                        i + 1,
                        item.score,
                        item.file,
                        item.repo
                    );
                }
            }
            Ok(())
        }
        Command::Serve { run, port, bind } => {
            let snap = Snapshot::load(&run)?;
            let state = AppState::new(run, snap);
            serve(state, SocketAddr::new(bind, port), |addr| {
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
            })?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coderec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
