//! `t2v-align`: batch front end over flat files.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 partial failure
//! (some items failed), 3 total failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use t2v_align::config::{BackendSpec, RunConfig};
use t2v_align::qa::QaMode;
use t2v_align::qg::QgMode;
use t2v_align::run::{self, Outcome};
use t2v_align::scoring::{display_score, CategorySlicing};
use t2v_align::stats::HumanAggregate;
use t2v_align::Error;

#[derive(Parser)]
#[command(
    name = "t2v-align",
    version,
    about = "Question-driven text-to-video alignment scoring"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// http, replay:<cassette>, record:<cassette> or scripted:<script.json>.
    #[arg(long, global = true)]
    backend: Option<BackendSpec>,
    /// Pipeline mode: multi_agent|vanilla for qg, full|no_ka|no_vu|no_cr|ka_only|direct for qa.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Seed for sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate atomic questions for every prompt.
    Qg {
        /// JSONL of {prompt_id, text, source}.
        #[arg(long)]
        prompts: PathBuf,
        /// Questions JSONL to write.
        #[arg(long)]
        out: PathBuf,
        /// Directory for graphs, elements and failures [default: <out dir>/graphs].
        #[arg(long)]
        graphs: Option<PathBuf>,
    },
    /// Answer every question against every manifest video.
    Qa {
        #[arg(long)]
        questions: PathBuf,
        /// JSONL of {video_id, prompt_id, model, video | frames_dir}.
        #[arg(long)]
        videos: PathBuf,
        /// Transcripts JSONL to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score transcripts per video and build the leaderboard.
    Score {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// per_question or per_prompt.
        #[arg(long)]
        slicing: Option<CategorySlicing>,
    },
    /// Correlate engine scores with human annotations.
    Correlate {
        /// reports.jsonl from `score`.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        slicing: Option<CategorySlicing>,
        /// mean or median of annotator Likert scores.
        #[arg(long)]
        human: Option<HumanAggregate>,
    },
    /// Benchmark corpus tools.
    #[command(subcommand)]
    Bench(Bench),
    /// Render a Markdown report from score (and correlate) outputs.
    Report {
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        correlation: Option<PathBuf>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Bench {
    /// Attach question categories to prompts and write corpus statistics.
    Classify {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a category-balanced subset.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        /// Classify with these questions first.
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        /// Manifest JSONL to write; a .summary.json is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn load_config(g: &Global) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(spec) = &g.backend {
        cfg.apply_backend(spec);
    }
    if let Some(n) = g.concurrency {
        cfg.concurrency = n;
    }
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    cfg.check()?;
    Ok(cfg)
}

fn apply_mode<T: std::str::FromStr<Err = String>>(mode: &Option<String>, slot: &mut T) -> Result<(), Failure> {
    if let Some(m) = mode {
        *slot = m.parse().map_err(Failure::Usage)?;
    }
    Ok(())
}

fn no_mode(g: &Global, command: &str) -> Result<(), Failure> {
    match &g.mode {
        Some(_) => Err(Failure::Usage(format!("--mode does not apply to {command}"))),
        None => Ok(()),
    }
}

fn parent_or_dot(p: &Path) -> &Path {
    p.parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

fn execute(cli: Cli) -> Result<Outcome, Failure> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    match cli.command {
        Command::Qg { prompts, out, graphs } => {
            apply_mode::<QgMode>(&g.mode, &mut cfg.qg.mode)?;
            let graphs = graphs.unwrap_or_else(|| parent_or_dot(&out).join("graphs"));
            let backend = cfg.build_backend()?;
            let templates = cfg.templates()?;
            let s = run::cmd_qg(&prompts, &out, &graphs, &cfg, &*backend, &templates)?;
            println!(
                "qg: {} prompt(s), {} question(s), {} failed",
                s.prompts,
                s.questions,
                s.failures.len()
            );
            Ok(s.outcome())
        }
        Command::Qa { questions, videos, out } => {
            apply_mode::<QaMode>(&g.mode, &mut cfg.qa.mode)?;
            let backend = cfg.build_backend()?;
            let templates = cfg.templates()?;
            let s = run::cmd_qa(&questions, &videos, &out, &cfg, &*backend, &templates)?;
            println!(
                "qa ({}): {} item(s), {} answered, {} unanswered, {} video error(s)",
                cfg.qa.mode,
                s.items,
                s.answered,
                s.unanswered,
                s.errors.len()
            );
            for e in &s.errors {
                eprintln!("  {}: {}", e.id, e.error);
            }
            Ok(s.outcome())
        }
        Command::Score {
            transcripts,
            questions,
            out,
            slicing,
        } => {
            no_mode(g, "score")?;
            let s = run::cmd_score(&transcripts, &questions, &out, slicing.unwrap_or(cfg.scoring.slicing))?;
            for r in &s.reports {
                println!(
                    "{}\t{}\t{} ({}/{})",
                    r.video_id,
                    r.model,
                    display_score(r.score_value()),
                    r.score.numerator,
                    r.score.denominator
                );
            }
            println!(
                "score: {} video(s) scored, {} omitted",
                s.reports.len(),
                s.omitted.len()
            );
            Ok(Outcome::from_counts(s.reports.len(), s.omitted.len()))
        }
        Command::Correlate {
            reports,
            annotations,
            out,
            slicing,
            human,
        } => {
            no_mode(g, "correlate")?;
            let o = run::cmd_correlate(
                &reports,
                &annotations,
                &out,
                slicing.unwrap_or(cfg.scoring.slicing),
                human.unwrap_or(cfg.scoring.human_aggregate),
            )?;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into());
            println!(
                "correlate: n={} kendall_tau={} spearman_rho={} (x100)",
                o.summary.overall.n,
                fmt(o.summary.overall.kendall_tau_x100),
                fmt(o.summary.overall.spearman_rho_x100)
            );
            if let Some(a) = &o.accuracy {
                println!("accuracy: {:.2}% over {} question(s)", a.accuracy * 100.0, a.compared);
            }
            Ok(Outcome::Success)
        }
        Command::Bench(Bench::Classify { corpus, questions, out }) => {
            no_mode(g, "bench classify")?;
            let s = run::cmd_bench_classify(&corpus, &questions, &out)?;
            println!(
                "bench classify: {} prompt(s), {} question(s)",
                s.total_prompts, s.total_questions
            );
            Ok(Outcome::Success)
        }
        Command::Bench(Bench::Sample {
            corpus,
            questions,
            k,
            out,
        }) => {
            no_mode(g, "bench sample")?;
            let r = run::cmd_bench_sample(&corpus, questions.as_deref(), k, cfg.seed, &out)?;
            println!(
                "bench sample: {} prompt(s), L1 distance {:.4}",
                r.selected.len(),
                r.l1_distance
            );
            Ok(Outcome::Success)
        }
        Command::Report {
            score,
            correlation,
            out,
        } => {
            no_mode(g, "report")?;
            let md = run::cmd_report(&score, correlation.as_deref(), out.as_deref())?;
            if out.is_none() {
                print!("{md}");
            }
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
