//! Alignment scores: the fraction of a video's answered questions that got
//! a Yes, with per-category and per-model rollups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::qa::Verdict;

/// An exact `yes / answered` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: u64,
    pub denominator: u64,
}

impl Fraction {
    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

/// Mean of binary verdicts. Fails on an empty input.
pub fn aggregate<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Result<Fraction> {
    let (mut yes, mut n) = (0u64, 0u64);
    for v in verdicts {
        yes += u64::from(v.value());
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(Fraction {
        numerator: yes,
        denominator: n,
    })
}

/// Scales a [0, 1] score by 100 and prints three significant digits:
/// 0.375 -> "37.5", 1.0 -> "100", 0.05 -> "5.00".
pub fn display_score(score: f64) -> String {
    let v = score * 100.0;
    if v == 0.0 {
        return "0.00".to_string();
    }
    let mut decimals = (2 - v.abs().log10().floor() as i32).max(0) as usize;
    let rounded: f64 = format!("{v:.decimals$}").parse().unwrap_or(v);
    // Rounding can add a digit (99.96 -> 100.0).
    if rounded != 0.0 {
        decimals = (2 - rounded.abs().log10().floor() as i32).max(0) as usize;
    }
    format!("{rounded:.decimals$}")
}

/// Per-category means over the answered questions carrying each category.
/// Categories with no answered question are absent.
pub fn per_category<I>(items: I) -> BTreeMap<Category, Fraction>
where
    I: IntoIterator<Item = (Category, Option<Verdict>)>,
{
    let mut buckets: BTreeMap<Category, Vec<Verdict>> = BTreeMap::new();
    for (cat, verdict) in items {
        if let Some(v) = verdict {
            buckets.entry(cat).or_default().push(v);
        }
    }
    buckets
        .into_iter()
        .map(|(c, vs)| (c, aggregate(vs).expect("bucket is nonempty")))
        .collect()
}

/// How per-category numbers are sliced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategorySlicing {
    /// A category's score averages the verdicts of its questions.
    #[default]
    PerQuestion,
    /// A video contributes its overall score to every category its
    /// prompt's questions carry.
    PerPrompt,
}

impl std::str::FromStr for CategorySlicing {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per_question" => Ok(CategorySlicing::PerQuestion),
            "per_prompt" => Ok(CategorySlicing::PerPrompt),
            other => Err(format!(
                "unknown slicing '{other}' (expected per_question or per_prompt)"
            )),
        }
    }
}

/// One scored item: question id, category, and the verdict if answered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredItem {
    pub question_id: String,
    pub category: Category,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub video_id: String,
    pub prompt_id: String,
    #[serde(default)]
    pub model: String,
    pub verdicts: BTreeMap<String, Verdict>,
    pub score: Fraction,
    pub per_category: BTreeMap<Category, Fraction>,
    /// Every category carried by the prompt's questions, answered or not.
    pub categories: BTreeSet<Category>,
    pub answered: usize,
    pub unanswered: usize,
}

impl AlignmentReport {
    pub fn build(video_id: &str, prompt_id: &str, model: &str, items: &[ScoredItem]) -> Result<Self> {
        let verdicts: BTreeMap<String, Verdict> = items
            .iter()
            .filter_map(|i| i.verdict.map(|v| (i.question_id.clone(), v)))
            .collect();
        let score = aggregate(verdicts.values().copied())?;
        Ok(AlignmentReport {
            video_id: video_id.to_string(),
            prompt_id: prompt_id.to_string(),
            model: model.to_string(),
            per_category: per_category(items.iter().map(|i| (i.category, i.verdict))),
            categories: items.iter().map(|i| i.category).collect(),
            answered: verdicts.len(),
            unanswered: items.len() - verdicts.len(),
            verdicts,
            score,
        })
    }

    pub fn score_value(&self) -> f64 {
        self.score.value()
    }

    /// Per-category values under the chosen slicing.
    pub fn category_values(&self, slicing: CategorySlicing) -> BTreeMap<Category, f64> {
        match slicing {
            CategorySlicing::PerQuestion => self.per_category.iter().map(|(c, f)| (*c, f.value())).collect(),
            CategorySlicing::PerPrompt => self.categories.iter().map(|c| (*c, self.score.value())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub mean: f64,
    pub per_category: BTreeMap<Category, f64>,
    pub videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

/// Unweighted means over each model's videos, best model first, ties by name.
pub fn leaderboard(reports: &[AlignmentReport], slicing: CategorySlicing) -> Leaderboard {
    let mut by_model: BTreeMap<&str, Vec<&AlignmentReport>> = BTreeMap::new();
    for r in reports {
        by_model.entry(r.model.as_str()).or_default().push(r);
    }
    let mut rows: Vec<LeaderboardRow> = by_model
        .into_iter()
        .map(|(model, rs)| {
            let mean = rs.iter().map(|r| r.score_value()).sum::<f64>() / rs.len() as f64;
            let mut sums: BTreeMap<Category, (f64, usize)> = BTreeMap::new();
            for r in &rs {
                for (c, v) in r.category_values(slicing) {
                    let e = sums.entry(c).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            LeaderboardRow {
                model: model.to_string(),
                mean,
                per_category: sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect(),
                videos: rs.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.model.cmp(&b.model)));
    Leaderboard { rows }
}

impl Leaderboard {
    fn categories(&self) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| self.rows.iter().any(|r| r.per_category.contains_key(c)))
            .collect()
    }

    fn cells(&self, row: &LeaderboardRow, cats: &[Category]) -> Vec<String> {
        let mut out = vec![row.model.clone()];
        out.extend(cats.iter().map(|c| {
            row.per_category
                .get(c)
                .map(|v| display_score(*v))
                .unwrap_or_else(|| "n/a".to_string())
        }));
        out.push(display_score(row.mean));
        out.push(row.videos.to_string());
        out
    }

    fn header(cats: &[Category]) -> Vec<String> {
        let mut h = vec!["model".to_string()];
        h.extend(cats.iter().map(|c| c.as_str().to_string()));
        h.push("avg".to_string());
        h.push("videos".to_string());
        h
    }

    /// CSV with raw fractions in [0, 1].
    pub fn to_csv(&self) -> String {
        let cats = self.categories();
        let mut out = Self::header(&cats).join(",");
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![csv_field(&r.model)];
            fields.extend(
                cats.iter()
                    .map(|c| r.per_category.get(c).map(|v| v.to_string()).unwrap_or_default()),
            );
            fields.push(r.mean.to_string());
            fields.push(r.videos.to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned Markdown table with scores scaled by 100.
    pub fn to_markdown(&self) -> String {
        let cats = self.categories();
        let mut table = vec![Self::header(&cats)];
        table.extend(self.rows.iter().map(|r| self.cells(r, &cats)));
        markdown_table(&table)
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// First row is the header. Text columns are left-aligned, the rest right-aligned.
pub(crate) fn markdown_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| {
            rows.iter()
                .filter_map(|r| r.get(i))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
                .max(3)
        })
        .collect();
    let mut out = String::new();
    for (ri, row) in rows.iter().enumerate() {
        out.push('|');
        for (i, w) in widths.iter().enumerate() {
            let cell = row.get(i).map(String::as_str).unwrap_or("");
            if i == 0 {
                let _ = write!(out, " {cell:<w$} |");
            } else {
                let _ = write!(out, " {cell:>w$} |");
            }
        }
        out.push('\n');
        if ri == 0 {
            out.push('|');
            for (i, w) in widths.iter().enumerate() {
                let dashes = "-".repeat(*w);
                if i == 0 {
                    let _ = write!(out, " {dashes} |");
                } else {
                    let _ = write!(out, " {}: |", &dashes[1..]);
                }
            }
            out.push('\n');
        }
    }
    out
}
