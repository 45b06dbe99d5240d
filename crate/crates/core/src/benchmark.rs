//! Prompt corpora: ingestion, category classification from question labels,
//! and distribution-preserving subsets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::qg::AtomicQuestion;
use crate::scoring::csv_field;

/// Source composition of the reference 2,000-prompt corpus. The prompts
/// themselves are third-party and not bundled.
pub const REFERENCE_SOURCES: [(&str, usize); 6] = [
    ("general (VBench, EvalCrafter, VideoGen-Eval)", 880),
    ("compositional (T2V-CompBench)", 300),
    ("human motion (GAIA)", 510),
    ("physics (VideoPhy, PhyGenBench)", 160),
    ("temporal (ChronoMagic-Bench)", 100),
    ("generated hyper-realistic scenarios", 50),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories: BTreeSet<Category>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question_ids: Vec<String>,
    /// Questions per category; drives the distribution used for sampling.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub category_counts: BTreeMap<Category, usize>,
}

impl PromptRecord {
    pub fn new(prompt_id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        PromptRecord {
            prompt_id: prompt_id.into(),
            text: text.into(),
            source: source.into(),
            categories: BTreeSet::new(),
            question_ids: Vec::new(),
            category_counts: BTreeMap::new(),
        }
    }
}

/// Reads a JSONL corpus of `{prompt_id, text, source}` lines.
pub fn ingest(path: &Path) -> Result<Vec<PromptRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: PromptRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.prompt_id.trim().is_empty() {
            return Err(parse_err("empty prompt_id".into()));
        }
        if rec.text.trim().is_empty() {
            return Err(parse_err(format!("prompt '{}' has empty text", rec.prompt_id)));
        }
        if !seen.insert(rec.prompt_id.clone()) {
            return Err(parse_err(format!("duplicate prompt_id '{}'", rec.prompt_id)));
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Questions per category; every category is present, possibly zero.
    pub question_counts: BTreeMap<Category, usize>,
    /// Prompts carrying each category. A prompt may count toward several.
    pub prompt_counts: BTreeMap<Category, usize>,
    pub total_questions: usize,
    pub total_prompts: usize,
    pub prompts_per_source: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn compute(records: &[PromptRecord]) -> Self {
        let mut question_counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
        let mut prompt_counts = question_counts.clone();
        let mut prompts_per_source = BTreeMap::new();
        for r in records {
            for (c, n) in &r.category_counts {
                *question_counts.get_mut(c).unwrap() += n;
            }
            for c in &r.categories {
                *prompt_counts.get_mut(c).unwrap() += 1;
            }
            *prompts_per_source.entry(r.source.clone()).or_insert(0) += 1;
        }
        CorpusStats {
            total_questions: question_counts.values().sum(),
            total_prompts: records.len(),
            question_counts,
            prompt_counts,
            prompts_per_source,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,questions,prompts\n");
        for c in Category::ALL {
            out.push_str(&format!(
                "{},{},{}\n",
                c, self.question_counts[&c], self.prompt_counts[&c]
            ));
        }
        out.push_str(&format!("total,{},{}\n", self.total_questions, self.total_prompts));
        out
    }

    pub fn sources_csv(&self) -> String {
        let mut out = String::from("source,prompts\n");
        for (s, n) in &self.prompts_per_source {
            out.push_str(&format!("{},{}\n", csv_field(s), n));
        }
        out
    }
}

/// Assigns each prompt the set of categories found among its questions.
pub fn classify(records: &[PromptRecord], questions: &[AtomicQuestion]) -> Result<(Vec<PromptRecord>, CorpusStats)> {
    let mut by_prompt: BTreeMap<&str, Vec<&AtomicQuestion>> = BTreeMap::new();
    for q in questions {
        by_prompt.entry(q.prompt_id.as_str()).or_default().push(q);
    }
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let qs = by_prompt
            .get(r.prompt_id.as_str())
            .filter(|qs| !qs.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("prompt '{}' has no questions to classify", r.prompt_id)))?;
        let mut rec = r.clone();
        rec.question_ids = qs.iter().map(|q| q.question_id.clone()).collect();
        rec.category_counts.clear();
        for q in qs {
            *rec.category_counts.entry(q.category).or_insert(0) += 1;
        }
        rec.categories = rec.category_counts.keys().copied().collect();
        out.push(rec);
    }
    let stats = CorpusStats::compute(&out);
    Ok((out, stats))
}

/// Per-category question shares, in `Category::ALL` order.
pub fn distribution(records: &[&PromptRecord]) -> [f64; 10] {
    let counts = count_vector(records.iter().copied());
    normalize(&counts)
}

fn count_vector<'a>(records: impl Iterator<Item = &'a PromptRecord>) -> [u64; 10] {
    let mut counts = [0u64; 10];
    for r in records {
        for (c, n) in &r.category_counts {
            counts[c.index()] += *n as u64;
        }
    }
    counts
}

fn normalize(counts: &[u64; 10]) -> [f64; 10] {
    let total: u64 = counts.iter().sum();
    let mut out = [0.0; 10];
    if total > 0 {
        for (o, c) in out.iter_mut().zip(counts) {
            *o = *c as f64 / total as f64;
        }
    }
    out
}

pub fn l1_distance(a: &[f64; 10], b: &[f64; 10]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    /// Selected records in selection order.
    pub selected: Vec<PromptRecord>,
    pub l1_distance: f64,
    pub corpus_distribution: BTreeMap<Category, f64>,
    pub sample_distribution: BTreeMap<Category, f64>,
    pub sample_question_counts: BTreeMap<Category, usize>,
}

fn as_map(d: &[f64; 10]) -> BTreeMap<Category, f64> {
    Category::ALL.iter().map(|c| (*c, d[c.index()])).collect()
}

/// Greedy subset of `k` prompts whose per-category question distribution
/// stays as close as possible (L1) to the whole corpus.
///
/// Candidates are scanned in `prompt_id` order, or in a seeded shuffle when
/// `seed` is given; the first candidate with the smallest distance wins.
pub fn stratified_sample(records: &[PromptRecord], k: usize, seed: Option<u64>) -> Result<SampleResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    if k > records.len() {
        return Err(Error::InvalidArgument(format!(
            "sample size {k} exceeds corpus size {}",
            records.len()
        )));
    }
    let target = normalize(&count_vector(records.iter()));
    let mut order: Vec<&PromptRecord> = records.iter().collect();
    order.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    if let Some(seed) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let vectors: Vec<[u64; 10]> = order.iter().map(|r| count_vector(std::iter::once(*r))).collect();

    let mut taken = vec![false; order.len()];
    let mut current = [0u64; 10];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in vectors.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let mut trial = current;
            for (t, x) in trial.iter_mut().zip(v) {
                *t += x;
            }
            let d = l1_distance(&normalize(&trial), &target);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= corpus size");
        taken[i] = true;
        for (t, x) in current.iter_mut().zip(&vectors[i]) {
            *t += x;
        }
        selected.push(order[i].clone());
    }
    let achieved = normalize(&current);
    Ok(SampleResult {
        l1_distance: l1_distance(&achieved, &target),
        corpus_distribution: as_map(&target),
        sample_distribution: as_map(&achieved),
        sample_question_counts: Category::ALL
            .iter()
            .map(|c| (*c, current[c.index()] as usize))
            .collect(),
        selected,
    })
}

/// L1 distance of a uniformly random subset of size `k`.
pub fn random_sample_distance(records: &[PromptRecord], k: usize, rng: &mut impl rand::Rng) -> Result<f64> {
    if k == 0 || k > records.len() {
        return Err(Error::InvalidArgument(format!("invalid sample size {k}")));
    }
    let target = normalize(&count_vector(records.iter()));
    let picked: Vec<&PromptRecord> = records.choose_multiple(rng, k).collect();
    Ok(l1_distance(&distribution(&picked), &target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, cats: &[(Category, usize)]) -> PromptRecord {
        let mut r = PromptRecord::new(id, format!("prompt {id}"), "test");
        r.category_counts = cats.iter().copied().collect();
        r.categories = r.category_counts.keys().copied().collect();
        r
    }

    fn question(pid: &str, i: usize, c: Category) -> AtomicQuestion {
        AtomicQuestion {
            question_id: crate::qg::question_id(pid, i),
            prompt_id: pid.into(),
            text: "Is there a cat in the video?".into(),
            category: c,
            source_node_id: None,
            source_prompt: String::new(),
        }
    }

    #[test]
    fn ingest_valid_and_duplicates() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.jsonl");
        std::fs::write(
            &p,
            "{\"prompt_id\":\"a\",\"text\":\"x\",\"source\":\"s\"}\n{\"prompt_id\":\"b\",\"text\":\"y\",\"source\":\"s\"}\n{\"prompt_id\":\"c\",\"text\":\"z\",\"source\":\"t\"}\n",
        )
        .unwrap();
        assert_eq!(ingest(&p).unwrap().len(), 3);
        std::fs::write(
            &p,
            "{\"prompt_id\":\"a\",\"text\":\"x\",\"source\":\"s\"}\n{\"prompt_id\":\"a\",\"text\":\"y\",\"source\":\"s\"}\n",
        )
        .unwrap();
        let err = ingest(&p).unwrap_err().to_string();
        assert!(err.contains("duplicate prompt_id 'a'") && err.contains(":2:"), "{err}");
        std::fs::write(&p, "{\"prompt_id\":\"a\"\n").unwrap();
        assert!(matches!(ingest(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn classify_maps_labels() {
        let recs = vec![PromptRecord::new("p1", "t", "s"), PromptRecord::new("p2", "t", "s")];
        let qs = vec![
            question("p1", 0, Category::Existence),
            question("p1", 1, Category::Spatial),
            question("p1", 2, Category::Existence),
            question("p2", 0, Category::Color),
        ];
        let (out, stats) = classify(&recs, &qs).unwrap();
        assert_eq!(
            out[0].categories,
            BTreeSet::from([Category::Existence, Category::Spatial])
        );
        assert_eq!(stats.question_counts[&Category::Existence], 2);
        assert_eq!(stats.prompt_counts[&Category::Existence], 1);
        assert_eq!(stats.total_questions, 4);
        let (again, stats2) = classify(&out, &qs).unwrap();
        assert_eq!(again, out);
        assert_eq!(stats2, stats);
        assert!(classify(&[PromptRecord::new("p3", "t", "s")], &qs).is_err());
    }

    #[test]
    fn full_sample_is_exact() {
        let recs: Vec<_> = (0..20)
            .map(|i| rec(&format!("p{i:02}"), &[(Category::ALL[i % 4], 1 + i % 3)]))
            .collect();
        let s = stratified_sample(&recs, recs.len(), None).unwrap();
        assert!(s.l1_distance < 1e-12);
        assert_eq!(s.selected.len(), 20);
    }

    #[test]
    fn uniform_corpus_is_balanced() {
        let recs: Vec<_> = (0..2000)
            .map(|i| rec(&format!("p{i:04}"), &[(Category::ALL[i % 10], 1)]))
            .collect();
        let s = stratified_sample(&recs, 105, Some(3)).unwrap();
        for c in Category::ALL {
            let n = s.sample_question_counts[&c] as f64;
            assert!((n - 10.5).abs() <= 1.0, "{c}: {n}");
        }
    }

    #[test]
    fn k_one_ties_by_prompt_id() {
        let recs = vec![
            rec("b", &[(Category::Existence, 1), (Category::Color, 1)]),
            rec("a", &[(Category::Existence, 1), (Category::Color, 1)]),
            rec("c", &[(Category::Existence, 2)]),
        ];
        let s = stratified_sample(&recs, 1, None).unwrap();
        assert_eq!(s.selected[0].prompt_id, "a");
        assert!(stratified_sample(&recs, 0, None).is_err());
        assert!(stratified_sample(&recs, 4, None).is_err());
    }

    #[test]
    fn totals_conserved_across_sources() {
        let mut recs: Vec<_> = (0..30)
            .map(|i| rec(&format!("p{i}"), &[(Category::ALL[i % 7], 1 + i % 2)]))
            .collect();
        for (i, r) in recs.iter_mut().enumerate() {
            r.source = ["x", "y", "z"][i % 3].to_string();
        }
        let whole = CorpusStats::compute(&recs);
        let mut sum = 0;
        for s in ["x", "y", "z"] {
            let part: Vec<_> = recs.iter().filter(|r| r.source == s).cloned().collect();
            sum += CorpusStats::compute(&part).total_questions;
        }
        assert_eq!(sum, whole.total_questions);
        assert_eq!(whole.prompts_per_source.values().sum::<usize>(), 30);
    }
}
