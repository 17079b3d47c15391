use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use baitline_core::analytics::{format_hundredths, format_percent, Report};
use baitline_core::engagement::Engine;
use baitline_core::runtime::{
    analyze, build_model, build_transport, discover, engage, engine_parts, offer_patterns, open_store, simulate,
    RunConfig, RuntimeError,
};
use baitline_core::store::{replay_file, Snapshot};
use baitline_core::transport::TransportKind;
use baitline_gateway::{Clock, Gateway, GatewayOptions};

/// Finds paid video-chat channels, engages their operators through a
/// supervised decoy and reports on what they disclose.
#[derive(Debug, Parser)]
#[command(name = "baitline", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the simulated network; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Approve every draft without review. Simulated network only.
    #[arg(long, global = true)]
    auto_approve: bool,
    /// Allow the live transport named in the config.
    #[arg(long, global = true)]
    enable_live: bool,
    /// Event log to use instead of the one in the config.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Harvest channels, judge them and record offer posters.
    Discover,
    /// Open sessions with every eligible account and run them until they end
    /// or need an operator.
    Engage {
        /// Stop after this many seconds of transport time.
        #[arg(long)]
        for_secs: Option<u64>,
    },
    /// Write the report for every terminated conversation in the log.
    Analyze {
        /// Directory for the CSV files and summary.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Count never-answered conversations in the round distribution.
        #[arg(long)]
        include_ghosts: bool,
    },
    /// Serve the operator API over the configured store and transport.
    Serve {
        /// Address to bind; overrides the config.
        #[arg(long)]
        bind: Option<String>,
        /// On the simulated network, move time only through
        /// `POST /simnet/advance`.
        #[arg(long)]
        manual_clock: bool,
    },
    /// Discover, engage with auto-approval and analyze on the simulated
    /// network, into an empty log.
    Simulate {
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, RuntimeError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.auto_approve {
        cfg.engagement.auto_approve = true;
    }
    if common.enable_live {
        cfg.transport.enable_live = true;
    }
    if let Some(log) = &common.log {
        cfg.store.path = log.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<(), RuntimeError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), RuntimeError> {
    match cli.command {
        Command::Discover => {
            let cfg = load_config(&cli.common)?;
            ensure_parent(&cfg.store.path)?;
            let model = build_model(&cfg)?;
            let mut store = open_store(&cfg)?;
            let mut transport = build_transport(&cfg, &store)?;
            let s = discover(&cfg, &mut store, transport.as_mut(), model.as_ref())?;
            println!("search terms: {}", s.keywords.join(", "));
            if s.keywords_degraded {
                println!("  (synonym expansion failed; searched the configured keywords only)");
            }
            println!("channels harvested: {} ({} new)", s.harvested, s.new_channels);
            if !s.skipped.is_empty() {
                println!("unreachable handles: {}", s.skipped.join(", "));
            }
            if s.beyond_cap > 0 {
                println!("handles beyond the depth cap: {}", s.beyond_cap);
            }
            println!("verdicts: {} relevant, {} irrelevant, {} escalated", s.relevant, s.irrelevant, s.escalated);
            println!("new accounts: {}", s.new_actors);
            println!("log: {}", cfg.store.path.display());
            if let Some(reason) = s.aborted {
                return Err(RuntimeError::Incomplete(reason));
            }
        }
        Command::Engage { for_secs } => {
            let cfg = load_config(&cli.common)?;
            ensure_parent(&cfg.store.path)?;
            let model = build_model(&cfg)?;
            let store = open_store(&cfg)?;
            let transport = build_transport(&cfg, &store)?;
            let mut engine = Engine::new(engine_parts(&cfg, model)?, transport, store)?;
            let until = for_secs.map(|s| engine.now() + (s as i64) * 1000);
            let s = engage(&mut engine, until)?;
            println!("sessions opened: {}", s.opened.len());
            println!("stopped: {}", s.outcome);
            let pending = engine.pending().len();
            if pending > 0 {
                println!("{pending} drafts await review; `baitline serve` exposes the queue");
            }
        }
        Command::Analyze { out, include_ghosts } => {
            let mut cfg = load_config(&cli.common)?;
            cfg.analytics.exclude_no_response = !include_ghosts;
            let snapshot = replay_file(&cfg.store.path)?;
            let report = analyze(&snapshot, &cfg, &out)?;
            print_report(&snapshot, &report);
            println!("report written to {}", out.display());
        }
        Command::Serve { bind, manual_clock } => {
            let cfg = load_config(&cli.common)?;
            if cfg.engagement.auto_approve {
                return Err(RuntimeError::ConfigInvalid("serve is for supervised runs; drop auto_approve".into()));
            }
            let token = std::env::var(&cfg.gateway.token_env).unwrap_or_default();
            if token.is_empty() {
                return Err(RuntimeError::ConfigInvalid(format!("set {} to the operator token", cfg.gateway.token_env)));
            }
            ensure_parent(&cfg.store.path)?;
            let model = build_model(&cfg)?;
            let store = open_store(&cfg)?;
            let transport = build_transport(&cfg, &store)?;
            let engine = Engine::new(engine_parts(&cfg, model)?, transport, store)?;
            let clock = match cfg.transport.kind {
                TransportKind::Simnet => Clock::Simulated { auto: !manual_clock },
                TransportKind::Live => Clock::Wall { tick: Duration::from_secs(1) },
            };
            let options = GatewayOptions {
                token,
                clock,
                analytics: cfg.analytics.clone(),
                offer_patterns: offer_patterns(&cfg)?,
            };
            let bind = bind.unwrap_or(cfg.gateway.bind.clone());
            serve(Gateway::new(engine, options), &bind)?;
        }
        Command::Simulate { out } => {
            let mut cfg = load_config(&cli.common)?;
            cfg.engagement.auto_approve = true;
            ensure_parent(&cfg.store.path)?;
            let s = simulate(&cfg, &out)?;
            println!("channels: {} harvested, {} relevant", s.discover.harvested, s.discover.relevant);
            println!("accounts: {} identified, {} engaged", s.discover.new_actors, s.engage.opened.len());
            let snapshot = replay_file(&cfg.store.path)?;
            print_report(&snapshot, &s.report);
            println!("log: {}", cfg.store.path.display());
            println!("report written to {}", out.display());
        }
    }
    Ok(())
}

fn print_report(snapshot: &Snapshot, r: &Report) {
    println!("events: {}", snapshot.sequence);
    println!("terminated conversations: {}", r.terminated);
    if let Some(s) = &r.summary {
        println!("  payment details obtained: {} ({}%)", s.success_count, format_percent(s.success_count, s.total));
        println!("  no response: {} ({}%)", s.no_response_count, format_percent(s.no_response_count, s.total));
        println!("  ended early: {} ({}%)", s.premature_count, format_percent(s.premature_count, s.total));
    }
    if let Some(m) = r.success_median_rounds {
        println!("median rounds to payment details: {m}");
    }
    println!("disclosures: {}", r.disclosures_total);
    for p in &r.payments {
        println!("  {:<18} {:>3}  {}%", p.method.label(), p.count, format_hundredths(p.percent_hundredths));
    }
}

fn serve(gateway: Gateway, bind: &str) -> Result<(), RuntimeError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        gateway.settle().await.map_err(std::io::Error::other)?;
        eprintln!("serving on http://{}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
        let app = gateway.router();
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        });
        tokio::select! {
            r = server => r?,
            _ = gateway.ticker() => {}
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
