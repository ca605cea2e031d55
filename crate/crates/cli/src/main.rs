use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cardstack_core::events::{read_jsonl_file, write_jsonl};
use cardstack_core::sim::{infer_preference, report, session_ids, simulate_with, Execution, PolicyMix, SimConfig};
use cardstack_core::{Config, SessionId};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cardstack", version, about = "Card-stack learning recommender tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded synthetic students and write their choice-event log.
    Simulate {
        #[arg(long, default_value_t = 100)]
        students: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Comma-separated `policy=weight` pairs summing to 1.
        #[arg(long, default_value = "challenge_seeking=0.5,challenge_averse=0.5")]
        policy_mix: String,
        /// Scale of the post-answer quit probability `quit_scale * (1 - Cp)`.
        #[arg(long, default_value_t = 0.0)]
        quit_scale: f64,
        /// JSONL output path; `-` writes the log to stdout.
        #[arg(long)]
        out: PathBuf,
        /// Engine constants; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run students one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Infer each session's challenge preference from a log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// Only this session.
        #[arg(long)]
        session: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate engagement, quits and inference accuracy per true policy.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    // Locked per command: the server logs to stdout from worker threads.
    let stdout = || std::io::stdout().lock();
    match cli.command {
        Command::Simulate {
            students,
            items,
            steps,
            seed,
            policy_mix,
            quit_scale,
            out,
            config,
            sequential,
        } => {
            let config = load_config(config.as_ref())?;
            let to_stdout = out.as_os_str() == "-";
            let cfg = SimConfig {
                n_students: students,
                n_items: items,
                steps_per_student: steps,
                seed,
                policy_mix: policy_mix.parse::<PolicyMix>()?,
                quit_scale,
                output_path: (!to_stdout).then_some(out.clone()),
                ..SimConfig::default()
            };
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let outcome = simulate_with(&cfg, &config, exec)?;
            let events = outcome.events();
            if to_stdout {
                write_jsonl(stdout(), &events)?;
            } else {
                eprintln!(
                    "wrote {} events for {students} students to {}",
                    events.len(),
                    out.display()
                );
            }
        }
        Command::Analyze {
            log,
            session,
            format,
            config,
        } => {
            let config = load_config(config.as_ref())?;
            let events = read_jsonl_file(&log).with_context(|| format!("reading {}", log.display()))?;
            let ids = match session {
                Some(s) => {
                    let id = SessionId::new(s);
                    if !events.iter().any(|e| e.session_id == id) {
                        bail!("session {id} not found in {}", log.display());
                    }
                    vec![id]
                }
                None => session_ids(&events),
            };
            let results: Vec<_> = ids
                .iter()
                .map(|id| infer_preference(&events, id, &config.inference))
                .collect();
            let mut stdout = stdout();
            match format {
                Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&results)?)?,
                Format::Text | Format::Csv => {
                    let fmt_cr = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.3}"));
                    let header = [
                        "session_id",
                        "preference",
                        "engaged",
                        "skipped",
                        "engaged_mean_cr",
                        "skipped_mean_cr",
                    ];
                    let rows: Vec<[String; 6]> = results
                        .iter()
                        .map(|r| {
                            [
                                r.session_id.to_string(),
                                r.preference.to_string(),
                                r.engaged.to_string(),
                                r.skipped.to_string(),
                                fmt_cr(r.engaged_mean_cr),
                                fmt_cr(r.skipped_mean_cr),
                            ]
                        })
                        .collect();
                    if matches!(format, Format::Csv) {
                        writeln!(stdout, "{}", header.join(","))?;
                        for row in &rows {
                            writeln!(stdout, "{}", row.join(","))?;
                        }
                    } else {
                        let mut widths = header.map(str::len);
                        for row in &rows {
                            for (w, cell) in widths.iter_mut().zip(row) {
                                *w = (*w).max(cell.len());
                            }
                        }
                        let line = |cells: &[&str]| {
                            cells
                                .iter()
                                .zip(widths)
                                .enumerate()
                                .map(|(k, (c, w))| if k < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                                .collect::<Vec<_>>()
                                .join("  ")
                        };
                        writeln!(stdout, "{}", line(&header).trim_end())?;
                        for row in &rows {
                            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
                            writeln!(stdout, "{}", line(&cells).trim_end())?;
                        }
                    }
                }
            }
        }
        Command::Report { log, format, config } => {
            let config = load_config(config.as_ref())?;
            let events = read_jsonl_file(&log).with_context(|| format!("reading {}", log.display()))?;
            let rep = report(&events, &config.inference);
            let mut stdout = stdout();
            match format {
                Format::Text => write!(stdout, "{}", rep.to_text())?,
                Format::Csv => write!(stdout, "{}", rep.to_csv())?,
                Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&rep)?)?,
            }
        }
        Command::Serve { config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let config = load_config(config.as_ref())?.with_env_overrides()?;
            tokio::runtime::Runtime::new()?.block_on(cardstack_server::serve(config))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
