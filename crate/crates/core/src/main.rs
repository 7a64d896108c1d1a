use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use avsearch::bridge::{self, Session};
use avsearch::config::Config;
use avsearch::error::{Error, Result};
use avsearch::harness::{self, MapEntry};
use avsearch::policy::PolicyKind;
use avsearch::render::{render_image, render_text, RenderConfig};
use avsearch::scene::{SceneMap, SlotLayout};
use avsearch::selftest;

/// Embodied audiovisual search simulator.
///
/// Set AVSEARCH_LOG (error, warn, info, debug, trace) for diagnostics on stderr.
#[derive(Debug, Parser)]
#[command(name = "avsearch", version)]
struct Cli {
    /// TOML configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the condition grid of maps as JSON files.
    GenMaps {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_condition: Option<usize>,
        /// Slot layout JSON; the built-in parking lot by default.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every map for a number of repeats and write metrics.
    Run {
        #[arg(long, default_value = "greedy")]
        policy: PolicyKind,
        /// Directory of maps; generated from the configured seed when absent.
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Episode logs, one JSON record per line.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Summarize a metrics CSV per condition.
    Aggregate {
        metrics: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Attach the human reference accuracy.
        #[arg(long)]
        human: bool,
    },
    /// Draw one logged episode on its map.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Index of the episode within the log file.
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// PPM image to write; the text view always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        pixels_per_metre: u32,
    },
    /// Serve the JSON-lines protocol on stdio or a Unix socket.
    Bridge {
        #[arg(long)]
        socket: Option<PathBuf>,
        /// Map used by resets that name none.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Exit after the first client disconnects.
        #[arg(long)]
        once: bool,
    },
    /// Run the invariant suite.
    Selftest {
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_map(path: &Path) -> Result<Arc<SceneMap>> {
    Ok(Arc::new(SceneMap::load(path)?))
}

fn execute(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenMaps {
            seed,
            per_condition,
            layout,
            out,
        } => {
            let layout = match layout {
                Some(p) => SlotLayout::load(&p)?,
                None => SlotLayout::default(),
            };
            let seed = seed.unwrap_or(cfg.harness.seed);
            let per = per_condition.unwrap_or(cfg.harness.maps_per_condition);
            let maps = harness::generate_map_set(seed, per, &layout)?;
            harness::save_map_set(&maps, &out)?;
            println!("wrote {} maps to {}", maps.len(), out.display());
        }
        Command::Run {
            policy,
            maps,
            repeats,
            seed,
            out,
            logs,
        } => {
            if let Some(s) = seed {
                cfg.harness.seed = s;
            }
            let repeats = repeats.unwrap_or(cfg.harness.repeats);
            let maps: Vec<MapEntry> = match maps {
                Some(dir) => harness::load_map_set(&dir)?,
                None => harness::generate_map_set(cfg.harness.seed, cfg.harness.maps_per_condition, &SlotLayout::default())?,
            };
            if maps.is_empty() {
                return Err(Error::InvalidConfig("no maps to run".into()));
            }
            let started = std::time::Instant::now();
            let result = harness::run_experiment(&cfg, policy, &maps, repeats)?;
            log::info!("{} episodes in {:.1?}", result.rows.len(), started.elapsed());
            let mut csv = Vec::new();
            harness::write_metrics(&result.rows, &mut csv)?;
            write(&out, csv)?;
            if let Some(p) = logs {
                write(&p, result.logs.concat())?;
            }
            println!("wrote {} rows to {}", result.rows.len(), out.display());
        }
        Command::Aggregate { metrics, json, human } => {
            let file = std::fs::File::open(&metrics).map_err(|e| Error::Io {
                path: metrics.clone(),
                source: e,
            })?;
            let mut agg = harness::aggregate(&harness::read_metrics(file)?)?;
            if human {
                agg = agg.with_human_reference();
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&agg)?);
            } else {
                print!("{}", agg.to_table());
            }
        }
        Command::Render {
            map,
            log,
            episode,
            out,
            pixels_per_metre,
        } => {
            let map = load_map(&map)?;
            let text = std::fs::read_to_string(&log).map_err(|e| Error::Io {
                path: log.clone(),
                source: e,
            })?;
            let logs = harness::read_episode_logs(&text)?;
            let ep = logs.get(episode).ok_or_else(|| {
                Error::InvalidConfig(format!("episode {episode} not in log ({} episodes)", logs.len()))
            })?;
            let rc = RenderConfig {
                pixels_per_metre,
                ..RenderConfig::default()
            };
            if let Some(p) = out {
                write(&p, render_image(&map, ep, &rc).to_ppm())?;
            }
            print!("{}", render_text(&map, ep, &rc));
        }
        Command::Bridge { socket, map, once } => {
            let default_map = map.as_deref().map(load_map).transpose()?;
            match socket {
                #[cfg(unix)]
                Some(path) => bridge::serve_unix(&path, cfg.env, default_map, once)?,
                #[cfg(not(unix))]
                Some(_) => return Err(Error::InvalidConfig("sockets need a Unix platform".into())),
                None => {
                    let stdin = std::io::stdin();
                    let mut session = Session::new(cfg.env, default_map);
                    bridge::serve_stream(stdin.lock(), std::io::stdout().lock(), &mut session)?;
                }
            }
        }
        Command::Selftest { out } => {
            let report = selftest::run(&cfg);
            let text = report.to_text();
            print!("{text}");
            if let Some(p) = out {
                write(&p, &text)?;
            }
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AVSEARCH_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
