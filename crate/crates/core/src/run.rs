//! Batch commands over flat files. Every command is re-runnable: with a
//! replay or scripted backend the outputs are byte-identical across runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::benchmark::{classify, ingest, stratified_sample, CorpusStats, PromptRecord, SampleResult};
use crate::category::Category;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::frames::{sample_frames, FrameSet, FrameSource};
use crate::jsonl::{read_jsonl, write_json, write_jsonl, write_text};
use crate::llm::ChatBackend;
use crate::qa::{answer, KnowledgeCache, QaMode, QaTranscript};
use crate::qg::{generate_questions, AtomicQuestion};
use crate::scoring::{display_score, leaderboard, AlignmentReport, CategorySlicing, Leaderboard, ScoredItem};
use crate::stats::{
    accuracy, correlate, gold_answers, human_scores, load_annotations, AccuracySummary, CorrelationSummary,
    HumanAggregate,
};
use crate::templates::PromptTemplates;

/// Applies `f` to every item on up to `workers` threads and returns the
/// results in input order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

/// Batch outcome, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
    Failed,
}

impl Outcome {
    pub fn from_counts(ok: usize, failed: usize) -> Self {
        match (ok, failed) {
            (_, 0) => Outcome::Success,
            (0, _) => Outcome::Failed,
            _ => Outcome::Partial,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 2,
            Outcome::Failed => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QgSummary {
    pub prompts: usize,
    pub questions: usize,
    pub failures: Vec<ItemFailure>,
}

impl QgSummary {
    pub fn outcome(&self) -> Outcome {
        Outcome::from_counts(self.prompts - self.failures.len(), self.failures.len())
    }
}

/// Generates questions for every prompt of a `{prompt_id, text}` JSONL file.
///
/// Writes the questions file, `<graphs_dir>/<prompt_id>.graph.json` and
/// `.elements.json` per prompt, and `<graphs_dir>/failures.jsonl`.
pub fn cmd_qg(
    prompts_path: &Path,
    questions_out: &Path,
    graphs_dir: &Path,
    config: &RunConfig,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
) -> Result<QgSummary> {
    let prompts = ingest(prompts_path)?;
    if prompts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no prompts in {}",
            prompts_path.display()
        )));
    }
    let options = config.qg_options();
    let results = par_map(&prompts, config.concurrency, |p| {
        generate_questions(&p.prompt_id, &p.text, &options, backend, templates)
    });

    std::fs::create_dir_all(graphs_dir).map_err(|e| Error::io(graphs_dir, e))?;
    let mut questions = Vec::new();
    let mut failures = Vec::new();
    for (p, result) in prompts.iter().zip(results) {
        match result {
            Ok(out) => {
                if let Some(graph) = &out.graph {
                    let mut text = graph.to_json_string();
                    text.push('\n');
                    write_text(&graphs_dir.join(format!("{}.graph.json", p.prompt_id)), &text)?;
                }
                if let Some(elements) = &out.elements {
                    write_json(&graphs_dir.join(format!("{}.elements.json", p.prompt_id)), elements)?;
                }
                questions.extend(out.questions);
            }
            Err(e) => {
                log::warn!("prompt {} failed: {e}", p.prompt_id);
                failures.push(ItemFailure {
                    id: p.prompt_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    write_jsonl(questions_out, &questions)?;
    write_jsonl(&graphs_dir.join("failures.jsonl"), &failures)?;
    Ok(QgSummary {
        prompts: prompts.len(),
        questions: questions.len(),
        failures,
    })
}

/// One line of a video manifest. Exactly one of `video` and `frames_dir`
/// is set; relative paths are taken from the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub prompt_id: String,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
}

impl VideoEntry {
    pub fn source(&self) -> Result<FrameSource> {
        match (&self.video, &self.frames_dir) {
            (Some(v), None) => Ok(FrameSource::Video(v.clone())),
            (None, Some(d)) => Ok(FrameSource::Directory(d.clone())),
            _ => Err(Error::InvalidArgument(format!(
                "video {} must set exactly one of video and frames_dir",
                self.video_id
            ))),
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<VideoEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries: Vec<VideoEntry> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for e in &mut entries {
        if !seen.insert(e.video_id.clone()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate video_id '{}' in manifest",
                e.video_id
            )));
        }
        for p in [&mut e.video, &mut e.frames_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSummary {
    pub items: usize,
    pub answered: usize,
    pub unanswered: usize,
    /// Problems that produced no transcript at all, such as a video whose
    /// prompt has no questions.
    pub errors: Vec<ItemFailure>,
}

impl QaSummary {
    pub fn outcome(&self) -> Outcome {
        Outcome::from_counts(self.answered, self.unanswered + self.errors.len())
    }
}

/// Answers every question of every manifest video and writes transcripts in
/// manifest order, then question order.
pub fn cmd_qa(
    questions_path: &Path,
    manifest_path: &Path,
    transcripts_out: &Path,
    config: &RunConfig,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
) -> Result<QaSummary> {
    let questions: Vec<AtomicQuestion> = read_jsonl(questions_path)?;
    let videos = load_manifest(manifest_path)?;
    let (transcripts, errors) = run_qa(&questions, &videos, config, backend, templates)?;
    write_jsonl(transcripts_out, &transcripts)?;
    let answered = transcripts.iter().filter(|t| t.is_answered()).count();
    Ok(QaSummary {
        items: transcripts.len(),
        answered,
        unanswered: transcripts.len() - answered,
        errors,
    })
}

/// In-memory form of [`cmd_qa`].
pub fn run_qa(
    questions: &[AtomicQuestion],
    videos: &[VideoEntry],
    config: &RunConfig,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
) -> Result<(Vec<QaTranscript>, Vec<ItemFailure>)> {
    let mode = config.qa.mode;
    let settings = config.qa_settings();
    let extractor = config.extractor();

    let mut by_prompt: HashMap<&str, Vec<&AtomicQuestion>> = HashMap::new();
    for q in questions {
        by_prompt.entry(q.prompt_id.as_str()).or_default().push(q);
    }

    let frames: Vec<std::result::Result<FrameSet, String>> = par_map(videos, config.concurrency, |v| {
        v.source()
            .and_then(|s| sample_frames(&s, config.qa.frame_count, &extractor))
            .map_err(|e| e.to_string())
    });

    let mut errors = Vec::new();
    let mut items: Vec<(usize, &AtomicQuestion)> = Vec::new();
    for (vi, v) in videos.iter().enumerate() {
        match by_prompt.get(v.prompt_id.as_str()) {
            Some(qs) => items.extend(qs.iter().map(|q| (vi, *q))),
            None => errors.push(ItemFailure {
                id: v.video_id.clone(),
                error: format!("no questions for prompt '{}'", v.prompt_id),
            }),
        }
    }

    let cache = KnowledgeCache::new();
    let transcripts = par_map(&items, config.concurrency, |(vi, q)| {
        let video = &videos[*vi];
        let fail = |msg: String| {
            log::warn!("{} on {}: {msg}", q.question_id, video.video_id);
            QaTranscript::unanswered(q, &video.video_id, &video.model, mode, msg)
        };
        let frames = match &frames[*vi] {
            Ok(f) => f,
            Err(e) => return fail(e.clone()),
        };
        let mut ka_warning = None;
        let knowledge = if mode.uses_knowledge() {
            match cache.get_or_augment(&q.prompt_id, &q.source_prompt, backend, templates, &settings.knowledge) {
                Ok(k) => Some(k),
                Err(e) if mode == QaMode::Full => {
                    ka_warning = Some(e.to_string());
                    None
                }
                Err(e) => return fail(e.to_string()),
            }
        } else {
            None
        };
        match answer(
            q,
            &video.video_id,
            frames,
            knowledge.as_ref(),
            backend,
            templates,
            &settings.video,
            mode,
        ) {
            Ok(mut t) => {
                t.model = video.model.clone();
                if let Some(w) = ka_warning {
                    t.warnings.insert(0, w);
                }
                t
            }
            Err(e) => fail(e.to_string()),
        }
    });
    Ok((transcripts, errors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub reports: Vec<AlignmentReport>,
    /// Videos without a single answered question.
    pub omitted: Vec<String>,
    pub leaderboard: Leaderboard,
}

/// Groups transcripts by video and scores each one.
pub fn score_transcripts(
    transcripts: &[QaTranscript],
    questions: &[AtomicQuestion],
) -> Result<(Vec<AlignmentReport>, Vec<String>)> {
    let categories: HashMap<&str, Category> = questions.iter().map(|q| (q.question_id.as_str(), q.category)).collect();
    let mut by_video: BTreeMap<&str, Vec<&QaTranscript>> = BTreeMap::new();
    for t in transcripts {
        by_video.entry(t.video_id.as_str()).or_default().push(t);
    }
    let mut reports = Vec::new();
    let mut omitted = Vec::new();
    for (video, ts) in by_video {
        let items = ts
            .iter()
            .map(|t| {
                let category = *categories.get(t.question_id.as_str()).ok_or_else(|| {
                    Error::InvalidArgument(format!("transcript refers to unknown question '{}'", t.question_id))
                })?;
                Ok(ScoredItem {
                    question_id: t.question_id.clone(),
                    category,
                    verdict: t.verdict,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match AlignmentReport::build(video, &ts[0].prompt_id, &ts[0].model, &items) {
            Ok(r) => reports.push(r),
            Err(Error::EmptyInput) => {
                log::warn!("video {video} has no answered questions; omitted");
                omitted.push(video.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((reports, omitted))
}

/// Writes `reports/<video_id>.json`, `reports.jsonl` and the leaderboard as
/// JSON, CSV and Markdown under `out_dir`.
pub fn cmd_score(
    transcripts_path: &Path,
    questions_path: &Path,
    out_dir: &Path,
    slicing: CategorySlicing,
) -> Result<ScoreSummary> {
    let transcripts: Vec<QaTranscript> = read_jsonl(transcripts_path)?;
    let questions: Vec<AtomicQuestion> = read_jsonl(questions_path)?;
    let (reports, omitted) = score_transcripts(&transcripts, &questions)?;
    for r in &reports {
        write_json(&out_dir.join("reports").join(format!("{}.json", r.video_id)), r)?;
    }
    write_jsonl(&out_dir.join("reports.jsonl"), &reports)?;
    let board = leaderboard(&reports, slicing);
    write_json(&out_dir.join("leaderboard.json"), &board)?;
    write_text(&out_dir.join("leaderboard.csv"), &board.to_csv())?;
    write_text(&out_dir.join("leaderboard.md"), &board.to_markdown())?;
    write_jsonl(&out_dir.join("omitted.jsonl"), &omitted)?;
    Ok(ScoreSummary {
        reports,
        omitted,
        leaderboard: board,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelateOutput {
    pub summary: CorrelationSummary,
    pub accuracy: Option<AccuracySummary>,
}

pub fn correlate_reports(
    reports: &[AlignmentReport],
    annotations: &[crate::stats::HumanAnnotation],
    slicing: CategorySlicing,
    how: HumanAggregate,
) -> Result<CorrelateOutput> {
    let engine: BTreeMap<String, f64> = reports.iter().map(|r| (r.video_id.clone(), r.score_value())).collect();
    let per_cat: BTreeMap<String, BTreeMap<Category, f64>> = reports
        .iter()
        .map(|r| (r.video_id.clone(), r.category_values(slicing)))
        .collect();
    let human = human_scores(annotations, how);
    let summary = correlate(&engine, &human, &per_cat)?;

    let gold = gold_answers(annotations);
    let accuracy = if gold.is_empty() {
        None
    } else {
        let verdicts: BTreeMap<(String, String), _> = reports
            .iter()
            .flat_map(|r| {
                r.verdicts
                    .iter()
                    .map(move |(q, v)| ((r.video_id.clone(), q.clone()), *v))
            })
            .collect();
        accuracy(&verdicts, &gold).ok()
    };
    Ok(CorrelateOutput { summary, accuracy })
}

/// Writes `correlation.{json,csv,md}` and, when annotators answered
/// questions, `accuracy.json`.
pub fn cmd_correlate(
    reports_path: &Path,
    annotations_path: &Path,
    out_dir: &Path,
    slicing: CategorySlicing,
    how: HumanAggregate,
) -> Result<CorrelateOutput> {
    let reports: Vec<AlignmentReport> = read_jsonl(reports_path)?;
    let annotations = load_annotations(annotations_path)?;
    let out = correlate_reports(&reports, &annotations, slicing, how)?;
    write_json(&out_dir.join("correlation.json"), &out.summary)?;
    write_text(&out_dir.join("correlation.csv"), &out.summary.to_csv())?;
    write_text(&out_dir.join("correlation.md"), &out.summary.to_markdown())?;
    if let Some(acc) = &out.accuracy {
        write_json(&out_dir.join("accuracy.json"), acc)?;
    }
    Ok(out)
}

/// Writes `classified.jsonl`, `stats.json`, `stats.csv` and `sources.csv`.
pub fn cmd_bench_classify(corpus: &Path, questions_path: &Path, out_dir: &Path) -> Result<CorpusStats> {
    let records = ingest(corpus)?;
    let questions: Vec<AtomicQuestion> = read_jsonl(questions_path)?;
    let (classified, stats) = classify(&records, &questions)?;
    write_jsonl(&out_dir.join("classified.jsonl"), &classified)?;
    write_json(&out_dir.join("stats.json"), &stats)?;
    write_text(&out_dir.join("stats.csv"), &stats.to_csv())?;
    write_text(&out_dir.join("sources.csv"), &stats.sources_csv())?;
    Ok(stats)
}

/// Samples `k` prompts. The corpus must already carry category counts
/// unless `questions_path` is given, in which case it is classified first.
/// Writes the selected records to `manifest_out` and the distributions to
/// `<manifest_out>.summary.json`.
pub fn cmd_bench_sample(
    corpus: &Path,
    questions_path: Option<&Path>,
    k: usize,
    seed: Option<u64>,
    manifest_out: &Path,
) -> Result<SampleResult> {
    let mut records: Vec<PromptRecord> = ingest(corpus)?;
    if let Some(qp) = questions_path {
        let questions: Vec<AtomicQuestion> = read_jsonl(qp)?;
        records = classify(&records, &questions)?.0;
    } else if let Some(r) = records.iter().find(|r| r.category_counts.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "prompt '{}' has no category counts; pass questions or a classified corpus",
            r.prompt_id
        )));
    }
    let result = stratified_sample(&records, k, seed)?;
    write_jsonl(manifest_out, &result.selected)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        k: usize,
        seed: Option<u64>,
        l1_distance: f64,
        corpus_distribution: &'a BTreeMap<Category, f64>,
        sample_distribution: &'a BTreeMap<Category, f64>,
        sample_question_counts: &'a BTreeMap<Category, usize>,
        prompt_ids: Vec<&'a str>,
    }
    let summary = Summary {
        k,
        seed,
        l1_distance: result.l1_distance,
        corpus_distribution: &result.corpus_distribution,
        sample_distribution: &result.sample_distribution,
        sample_question_counts: &result.sample_question_counts,
        prompt_ids: result.selected.iter().map(|r| r.prompt_id.as_str()).collect(),
    };
    let mut name = manifest_out.as_os_str().to_owned();
    name.push(".summary.json");
    write_json(Path::new(&name), &summary)?;
    Ok(result)
}

/// Renders a Markdown report from a `score` output directory and, if
/// given, a `correlate` output directory.
pub fn cmd_report(score_dir: &Path, correlation_dir: Option<&Path>, out: Option<&Path>) -> Result<String> {
    let reports: Vec<AlignmentReport> = read_jsonl(&score_dir.join("reports.jsonl"))?;
    let board_path = score_dir.join("leaderboard.md");
    let board = std::fs::read_to_string(&board_path).map_err(|e| Error::io(&board_path, e))?;
    let omitted: Vec<String> = read_jsonl(&score_dir.join("omitted.jsonl")).unwrap_or_default();

    let mut md = String::from("# Alignment report\n\n## Leaderboard\n\n");
    md.push_str(&board);
    md.push_str("\n## Videos\n\n");
    let mut rows = vec![vec![
        "video".to_string(),
        "model".to_string(),
        "prompt".to_string(),
        "score".to_string(),
        "yes/answered".to_string(),
        "unanswered".to_string(),
    ]];
    for r in &reports {
        rows.push(vec![
            r.video_id.clone(),
            r.model.clone(),
            r.prompt_id.clone(),
            display_score(r.score_value()),
            format!("{}/{}", r.score.numerator, r.score.denominator),
            r.unanswered.to_string(),
        ]);
    }
    md.push_str(&crate::scoring::markdown_table(&rows));
    let unanswered: usize = reports.iter().map(|r| r.unanswered).sum();
    let _ = writeln!(
        md,
        "\n{} video(s) scored, {} unanswered question(s) excluded, {} video(s) omitted.",
        reports.len(),
        unanswered,
        omitted.len()
    );
    if let Some(dir) = correlation_dir {
        let p = dir.join("correlation.md");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        md.push_str("\n## Correlation with human scores\n\n");
        md.push_str(&text);
        let acc = dir.join("accuracy.json");
        if acc.is_file() {
            let a: AccuracySummary = crate::jsonl::read_json(&acc)?;
            let _ = writeln!(
                md,
                "\nAnswer accuracy: {:.2}% ({} of {} resolved questions; {} tied).",
                a.accuracy * 100.0,
                a.matched,
                a.compared,
                a.unresolved
            );
        }
    }
    if let Some(out) = out {
        write_text(out, &md)?;
    }
    Ok(md)
}
