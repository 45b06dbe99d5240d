//! Deterministic test assets: hand-built cases under `fixtures/` and seeded
//! synthetic corpora and annotation sets.
//!
//! Case layout, one directory per case:
//!
//! ```text
//! fixtures/<name>/
//!   case.json            prompt, ids, expected order, verdicts, expected scores
//!   elements.json        expected extractor output
//!   graph.json           expected scene graph
//!   questions.jsonl      expected questions in traversal order
//!   supplementary.jsonl  optional extra questions scored with the case
//!   script.json          scripted backend table for every agent call
//!   cassette.jsonl       recorded run of the full pipeline (optional)
//!   frames/              tiny synthetic PNG frames
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmark::PromptRecord;
use crate::category::Category;
use crate::error::{Error, Result};
use crate::jsonl::{read_json, read_jsonl};
use crate::qa::Verdict;
use crate::qg::{check_order, question_id, traverse, AtomicQuestion, ElementSet};
use crate::scene_graph::{NodeId, SceneGraph};
use crate::scoring::{aggregate, Fraction};
use crate::stats::HumanAnnotation;

pub const FIXTURE_NAMES: [&str; 3] = ["space_station_water", "penguin_cactus", "single_entity"];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseFile {
    name: String,
    prompt_id: String,
    prompt: String,
    video_id: String,
    model: String,
    expected_order: Vec<NodeId>,
    verdicts: BTreeMap<String, Verdict>,
    expected_score: Fraction,
    expected_per_category: BTreeMap<Category, Fraction>,
}

#[derive(Debug, Clone)]
pub struct FixtureCase {
    pub name: String,
    pub dir: PathBuf,
    pub prompt_id: String,
    pub prompt: String,
    pub video_id: String,
    pub model: String,
    pub elements: ElementSet,
    pub graph: SceneGraph,
    pub expected_order: Vec<NodeId>,
    /// Questions the pipeline should produce, in order.
    pub questions: Vec<AtomicQuestion>,
    /// Extra questions scored alongside the generated ones.
    pub supplementary: Vec<AtomicQuestion>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub expected_score: Fraction,
    pub expected_per_category: BTreeMap<Category, Fraction>,
}

impl FixtureCase {
    pub fn script_path(&self) -> PathBuf {
        self.dir.join("script.json")
    }

    pub fn cassette_path(&self) -> PathBuf {
        self.dir.join("cassette.jsonl")
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.dir.join("frames")
    }

    /// Generated plus supplementary questions.
    pub fn all_questions(&self) -> Vec<AtomicQuestion> {
        self.questions.iter().chain(&self.supplementary).cloned().collect()
    }
}

pub fn load_fixture(name: &str) -> Result<FixtureCase> {
    load_fixture_from(&fixtures_dir(), name)
}

/// Loads and cross-checks one case: the graph validates, the expected order
/// passes the order checker and matches traversal, question ids are dense,
/// and the expected score equals the aggregate of the verdicts.
pub fn load_fixture_from(root: &Path, name: &str) -> Result<FixtureCase> {
    let dir = root.join(name);
    if !dir.join("case.json").is_file() {
        return Err(Error::NotFound(format!("fixture '{name}' in {}", root.display())));
    }
    let case: CaseFile = read_json(&dir.join("case.json"))?;
    let elements: ElementSet = read_json(&dir.join("elements.json"))?;
    let graph = SceneGraph::load(&dir.join("graph.json"))?;
    let questions: Vec<AtomicQuestion> = read_jsonl(&dir.join("questions.jsonl"))?;
    let supp_path = dir.join("supplementary.jsonl");
    let supplementary = if supp_path.is_file() {
        read_jsonl(&supp_path)?
    } else {
        Vec::new()
    };

    let bad = |msg: String| Error::Contract(format!("fixture '{name}': {msg}"));
    let report = graph.validate();
    if !report.ok {
        return Err(bad(format!("graph is invalid: {}", report.messages().join("; "))));
    }
    check_order(&graph, &case.expected_order).map_err(|m| bad(format!("expected order: {m}")))?;
    let traversed: Vec<NodeId> = traverse(&graph)?.into_iter().map(|s| s.node_id).collect();
    if traversed != case.expected_order {
        return Err(bad(format!("traversal gives {traversed:?}")));
    }
    for (i, q) in questions.iter().chain(&supplementary).enumerate() {
        if q.question_id != question_id(&case.prompt_id, i) {
            return Err(bad(format!("question {} is out of sequence", q.question_id)));
        }
        if !case.verdicts.contains_key(&q.question_id) {
            return Err(bad(format!("no verdict for {}", q.question_id)));
        }
    }
    if case.verdicts.len() != questions.len() + supplementary.len() {
        return Err(bad("verdicts do not match the questions".into()));
    }
    let score = aggregate(case.verdicts.values().copied())?;
    if score != case.expected_score {
        return Err(bad(format!(
            "expected score {:?} but verdicts give {score:?}",
            case.expected_score
        )));
    }
    Ok(FixtureCase {
        name: case.name,
        dir,
        prompt_id: case.prompt_id,
        prompt: case.prompt,
        video_id: case.video_id,
        model: case.model,
        elements,
        graph,
        expected_order: case.expected_order,
        questions,
        supplementary,
        verdicts: case.verdicts,
        expected_score: case.expected_score,
        expected_per_category: case.expected_per_category,
    })
}

/// Relative frequency of each category in synthetic corpora, in
/// `Category::ALL` order. Deliberately skewed.
pub const SYNTHETIC_CATEGORY_WEIGHTS: [u32; 10] = [30, 14, 6, 12, 5, 3, 8, 4, 6, 12];

/// A corpus of `n` prompts with 1 to 3 categories each and 1 to 4 questions
/// per category. Returns unclassified records and their questions.
pub fn synthetic_corpus(n: usize, seed: u64) -> (Vec<PromptRecord>, Vec<AtomicQuestion>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = ["general", "compositional", "motion", "physics", "temporal", "generated"];
    let mut records = Vec::with_capacity(n);
    let mut questions = Vec::new();
    for i in 0..n {
        let pid = format!("syn{i:05}");
        let k = rng.gen_range(1..=3);
        let mut cats: Vec<Category> = Vec::new();
        while cats.len() < k {
            let c = *Category::ALL
                .choose_weighted(&mut rng, |c| SYNTHETIC_CATEGORY_WEIGHTS[c.index()])
                .expect("weights are positive");
            if !cats.contains(&c) {
                cats.push(c);
            }
        }
        let mut q = 0;
        for c in &cats {
            for _ in 0..rng.gen_range(1..=4) {
                questions.push(AtomicQuestion {
                    question_id: question_id(&pid, q),
                    prompt_id: pid.clone(),
                    text: format!("Is synthetic {} detail {q} shown?", c.as_str()),
                    category: *c,
                    source_node_id: None,
                    source_prompt: format!("Synthetic prompt {i}"),
                });
                q += 1;
            }
        }
        records.push(PromptRecord::new(
            pid,
            format!("Synthetic prompt {i}"),
            *sources.choose(&mut rng).expect("nonempty"),
        ));
    }
    (records, questions)
}

/// Relationship planted between engine scores and human scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planted {
    Monotone,
    AntiMonotone,
    Independent,
    /// Monotone signal plus noise.
    Noisy,
}

/// Five annotators per video on the 0.5-step Likert grid, plus engine
/// scores for the same videos with the planted relationship to the human
/// mean.
pub fn synthetic_annotations(
    videos: usize,
    planted: Planted,
    seed: u64,
) -> (Vec<HumanAnnotation>, BTreeMap<String, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut annotations = Vec::with_capacity(videos * 5);
    let mut engine = BTreeMap::new();
    for v in 0..videos {
        let video_id = format!("vid{v:04}");
        let base: f64 = rng.gen_range(0.0..=5.0);
        let mut sum = 0.0;
        for a in 0..5 {
            let raw: f64 = base + rng.gen_range(-1.0..=1.0);
            let likert = ((raw.clamp(0.0, 5.0)) * 2.0).round() / 2.0;
            sum += likert;
            annotations.push(HumanAnnotation {
                video_id: video_id.clone(),
                annotator_id: format!("ann{a}"),
                likert,
                answers: BTreeMap::new(),
            });
        }
        let mean = sum / 5.0;
        let score = match planted {
            Planted::Monotone => (mean / 5.0).powi(2),
            Planted::AntiMonotone => 1.0 - mean / 5.0,
            Planted::Independent => rng.gen_range(0.0..=1.0),
            Planted::Noisy => (mean / 5.0 + rng.gen_range(-0.2..=0.2)).clamp(0.0, 1.0),
        };
        engine.insert(video_id, score);
    }
    (annotations, engine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_load() {
        for name in FIXTURE_NAMES {
            let case = load_fixture(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(case.name, name);
            assert!(case.script_path().is_file());
        }
    }

    #[test]
    fn running_example_shape() {
        let case = load_fixture("space_station_water").unwrap();
        assert_eq!(case.graph.len(), 7);
        assert_eq!(case.questions.len(), 7);
        assert_eq!(case.all_questions().len(), 8);
        assert_eq!(case.expected_score.value(), 0.375);
        let single = load_fixture("single_entity").unwrap();
        assert_eq!((single.graph.len(), single.questions.len()), (1, 1));
    }

    #[test]
    fn unknown_fixture_is_not_found() {
        assert!(matches!(load_fixture("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn synthetic_data_is_seeded() {
        let (a, qa) = synthetic_corpus(50, 1);
        let (b, qb) = synthetic_corpus(50, 1);
        assert_eq!(a, b);
        assert_eq!(qa, qb);
        assert!(qa.len() >= 50);
        let (ann, eng) = synthetic_annotations(10, Planted::Monotone, 2);
        assert_eq!(ann.len(), 50);
        assert_eq!(eng.len(), 10);
        crate::stats::validate_annotations(&ann).unwrap();
    }
}
