//! Agreement with human judgments: rank correlations, majority-vote gold
//! answers and answer accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::qa::Verdict;
use crate::scoring::{csv_field, markdown_table};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    Ok(())
}

/// Number of tied pairs within runs of equal adjacent values.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions (bottom-up merge sort).
fn count_swaps(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

fn ratio(num: f64, a: u64, b: u64) -> f64 {
    let denom = if a == b {
        a as f64
    } else {
        (a as f64).sqrt() * (b as f64).sqrt()
    };
    (num / denom).clamp(-1.0, 1.0)
}

/// Tie-corrected Kendall tau-b in O(n log n).
///
/// Returns `None` when either vector is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_swaps(&mut ys);
    let n2 = tied_pairs(&ys);

    if n1 == n0 || n2 == n0 {
        return Ok(None);
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    let num = (n0 + n3) as f64 - (n1 + n2) as f64 - 2.0 * swaps as f64;
    Ok(Some(ratio(num, n0 - n1, n0 - n2)))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    twice_ranks(v).into_iter().map(|r| r as f64 / 2.0).collect()
}

/// Doubled average ranks, which are always integers.
fn twice_ranks(v: &[f64]) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0i64; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // positions i..=j share the mean of ranks i+1..=j+1
        let twice = (i + j + 2) as i64;
        for &k in &idx[i..=j] {
            ranks[k] = twice;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks.
///
/// Computed in integer arithmetic on doubled ranks so perfect agreement
/// comes out as exactly 1. Returns `None` when either vector is constant.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as i128;
    // 2r - (n + 1) is twice the centred rank, so these sums are 4x the usual ones.
    let centre = |r: Vec<i64>| r.into_iter().map(|v| v as i128 - (n + 1)).collect::<Vec<_>>();
    let rx = centre(twice_ranks(x));
    let ry = centre(twice_ranks(y));
    let sxy: i128 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: i128 = rx.iter().map(|a| a * a).sum();
    let syy: i128 = ry.iter().map(|b| b * b).sum();
    if sxx == 0 || syy == 0 {
        return Ok(None);
    }
    Ok(Some(ratio(sxy as f64, sxx as u64, syy as u64)))
}

/// Result of a majority vote over annotator answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Majority {
    Decided(Verdict),
    Unresolved,
}

pub fn majority_vote(answers: &[Verdict]) -> Result<Majority> {
    if answers.is_empty() {
        return Err(Error::InvalidArgument("majority vote over no answers".into()));
    }
    let yes = answers.iter().filter(|a| **a == Verdict::Yes).count();
    let no = answers.len() - yes;
    Ok(match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Majority::Decided(Verdict::Yes),
        std::cmp::Ordering::Less => Majority::Decided(Verdict::No),
        std::cmp::Ordering::Equal => Majority::Unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub accuracy: f64,
    pub matched: usize,
    pub compared: usize,
    /// Gold items skipped because the vote was tied.
    pub unresolved: usize,
}

/// Fraction of engine verdicts that match the resolved gold answers.
pub fn accuracy<K: Ord>(engine: &BTreeMap<K, Verdict>, gold: &BTreeMap<K, Majority>) -> Result<AccuracySummary> {
    let (mut matched, mut compared, mut unresolved) = (0, 0, 0);
    for (k, g) in gold {
        let Some(e) = engine.get(k) else { continue };
        match g {
            Majority::Unresolved => unresolved += 1,
            Majority::Decided(v) => {
                compared += 1;
                if v == e {
                    matched += 1;
                }
            }
        }
    }
    if compared == 0 {
        return Err(Error::InsufficientData("no overlapping resolved questions".into()));
    }
    Ok(AccuracySummary {
        accuracy: matched as f64 / compared as f64,
        matched,
        compared,
        unresolved,
    })
}

pub fn validate_likert(value: f64) -> Result<()> {
    let doubled = value * 2.0;
    if !(0.0..=5.0).contains(&value) || doubled.fract() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "likert value {value} is not in 0..=5 with 0.5 steps"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAnnotation {
    pub video_id: String,
    pub annotator_id: String,
    pub likert: f64,
    #[serde(default)]
    pub answers: BTreeMap<String, Verdict>,
}

pub fn load_annotations(path: &Path) -> Result<Vec<HumanAnnotation>> {
    let records: Vec<HumanAnnotation> = crate::jsonl::read_jsonl(path)?;
    validate_annotations(&records)?;
    Ok(records)
}

pub fn validate_annotations(records: &[HumanAnnotation]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in records {
        validate_likert(r.likert)
            .map_err(|e| Error::InvalidArgument(format!("video {} annotator {}: {e}", r.video_id, r.annotator_id)))?;
        if !seen.insert((&r.video_id, &r.annotator_id)) {
            return Err(Error::InvalidArgument(format!(
                "annotator {} appears twice for video {}",
                r.annotator_id, r.video_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAggregate {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for HumanAggregate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean" => Ok(HumanAggregate::Mean),
            "median" => Ok(HumanAggregate::Median),
            other => Err(format!("unknown aggregate '{other}' (expected mean or median)")),
        }
    }
}

/// One human score per video.
pub fn human_scores(records: &[HumanAnnotation], how: HumanAggregate) -> BTreeMap<String, f64> {
    let mut by_video: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_video.entry(&r.video_id).or_default().push(r.likert);
    }
    by_video
        .into_iter()
        .map(|(v, mut xs)| {
            let score = match how {
                HumanAggregate::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
                HumanAggregate::Median => {
                    xs.sort_by(f64::total_cmp);
                    let m = xs.len() / 2;
                    if xs.len() % 2 == 1 {
                        xs[m]
                    } else {
                        (xs[m - 1] + xs[m]) / 2.0
                    }
                }
            };
            (v.to_string(), score)
        })
        .collect()
}

/// Majority-vote gold answers keyed by (video_id, question_id).
pub fn gold_answers(records: &[HumanAnnotation]) -> BTreeMap<(String, String), Majority> {
    let mut votes: BTreeMap<(String, String), Vec<Verdict>> = BTreeMap::new();
    for r in records {
        for (q, v) in &r.answers {
            votes.entry((r.video_id.clone(), q.clone())).or_default().push(*v);
        }
    }
    votes
        .into_iter()
        .map(|(k, vs)| (k, majority_vote(&vs).expect("at least one vote")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationValues {
    pub n: usize,
    /// `None` when undefined (fewer than two pairs or a constant vector).
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub kendall_tau_x100: Option<f64>,
    pub spearman_rho_x100: Option<f64>,
}

impl CorrelationValues {
    pub fn compute(x: &[f64], y: &[f64]) -> Result<Self> {
        let (tau, rho) = if x.len() < 2 {
            (None, None)
        } else {
            (kendall_tau_b(x, y)?, spearman_rho(x, y)?)
        };
        Ok(CorrelationValues {
            n: x.len(),
            kendall_tau: tau,
            spearman_rho: rho,
            kendall_tau_x100: tau.map(|t| t * 100.0),
            spearman_rho_x100: rho.map(|r| r * 100.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub overall: CorrelationValues,
    pub per_category: BTreeMap<Category, CorrelationValues>,
}

/// Correlates engine scores with human scores over the videos present in
/// both maps. `category_scores` holds each video's per-category engine
/// values; a category's correlation uses the videos that have it.
pub fn correlate(
    engine: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
    category_scores: &BTreeMap<String, BTreeMap<Category, f64>>,
) -> Result<CorrelationSummary> {
    let shared: Vec<&String> = engine.keys().filter(|k| human.contains_key(*k)).collect();
    if shared.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 videos with both engine and human scores, found {}",
            shared.len()
        )));
    }
    let x: Vec<f64> = shared.iter().map(|k| engine[*k]).collect();
    let y: Vec<f64> = shared.iter().map(|k| human[*k]).collect();
    let overall = CorrelationValues::compute(&x, &y)?;

    let mut per_category = BTreeMap::new();
    for cat in Category::ALL {
        let (mut cx, mut cy) = (Vec::new(), Vec::new());
        for k in &shared {
            if let Some(v) = category_scores.get(*k).and_then(|m| m.get(&cat)) {
                cx.push(*v);
                cy.push(human[*k]);
            }
        }
        if !cx.is_empty() {
            per_category.insert(cat, CorrelationValues::compute(&cx, &cy)?);
        }
    }
    Ok(CorrelationSummary { overall, per_category })
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}"))
        .unwrap_or_else(|| "n/a".to_string())
}

impl CorrelationSummary {
    fn rows(&self) -> Vec<(String, &CorrelationValues)> {
        let mut rows = vec![("overall".to_string(), &self.overall)];
        rows.extend(self.per_category.iter().map(|(c, v)| (c.as_str().to_string(), v)));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,n,kendall_tau,spearman_rho,kendall_tau_x100,spearman_rho_x100\n");
        for (name, v) in self.rows() {
            let f = |o: Option<f64>| o.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&name),
                v.n,
                f(v.kendall_tau),
                f(v.spearman_rho),
                f(v.kendall_tau_x100),
                f(v.spearman_rho_x100)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut table = vec![vec!["slice".into(), "n".into(), "tau x100".into(), "rho x100".into()]];
        for (name, v) in self.rows() {
            table.push(vec![
                name,
                v.n.to_string(),
                fmt_opt(v.kendall_tau_x100, 1),
                fmt_opt(v.spearman_rho_x100, 1),
            ]);
        }
        markdown_table(&table)
    }
}
