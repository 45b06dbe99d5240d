//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 10 talks to a live OpenAI-compatible endpoint and only runs
//! when `T2V_ALIGN_LIVE=1`; see `live_smoke` for the other variables.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use t2v_align::benchmark::{classify, random_sample_distance, stratified_sample, PromptRecord};
use t2v_align::config::RunConfig;
use t2v_align::fixtures::{load_fixture, synthetic_annotations, synthetic_corpus, FixtureCase, Planted};
use t2v_align::jsonl::{read_jsonl, write_jsonl};
use t2v_align::llm::{HttpBackend, HttpConfig, LoggedBackend, ReplayBackend, ScriptTable, ScriptedBackend};
use t2v_align::qa::{QaMode, QaTranscript, Verdict};
use t2v_align::qg::{generate_questions, traverse, AtomicQuestion};
use t2v_align::run::{cmd_qa, cmd_qg, cmd_score, run_qa, score_transcripts, VideoEntry};
use t2v_align::scene_graph::{NodeId, NodeKind, SceneGraph, ViolationCode};
use t2v_align::scoring::{
    aggregate, display_score, per_category, AlignmentReport, CategorySlicing, Fraction, ScoredItem,
};
use t2v_align::stats::{correlate, human_scores, kendall_tau_b, majority_vote, spearman_rho, HumanAggregate, Majority};
use t2v_align::templates::PromptTemplates;
use t2v_align::Category;

const GRAPH_CASES: usize = 1_000;
const VALIDATE_BUDGET: Duration = Duration::from_secs(5);
const TRAVERSE_BUDGET: Duration = Duration::from_secs(10);
const MAX_NODES: usize = 12;
const RANK_PAIRS: usize = 500;
const RANK_MAX_N: usize = 50;
const RANK_TOL: f64 = 1e-12;
const SCORING_CASES: usize = 10_000;
const SCORING_TOL: f64 = 1e-12;
const CORPUS_SIZE: usize = 2_000;
const SAMPLE_K: usize = 105;
const SAMPLE_MAX_L1: f64 = 0.05;
const RANDOM_SAMPLES: usize = 100;
const NOISE_N: usize = 200;
const NOISE_TRIALS: u64 = 100;
const NOISE_MIN_PASSES: usize = 95;
const NOISE_BOUND: f64 = 0.2;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Random scene graphs

struct Built {
    graph: SceneGraph,
    entities: Vec<String>,
    attributes: Vec<String>,
}

const ATTR_LABELS: [Category; 5] = [
    Category::Color,
    Category::Material,
    Category::Shape,
    Category::Number,
    Category::Other,
];
const REL_LABELS: [Category; 4] = [Category::Spatial, Category::Action, Category::Physics, Category::Camera];

/// A valid graph with at most `MAX_NODES` nodes. Nodes and edges are added
/// in shuffled order so traversal cannot lean on insertion order.
fn random_graph(rng: &mut ChaCha8Rng) -> Built {
    let total = rng.gen_range(1..=MAX_NODES);
    let n_ent = rng.gen_range(1..=total.min(5));
    let rest = total - n_ent;
    let n_rel = if n_ent >= 2 { rng.gen_range(0..=rest) } else { 0 };
    let n_attr = rest - n_rel;

    let mut nodes: Vec<(String, NodeKind, Category)> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let entities: Vec<String> = (0..n_ent).map(|i| format!("e{i}")).collect();
    for e in &entities {
        nodes.push((e.clone(), NodeKind::Entity, Category::Existence));
    }
    let mut attributes = Vec::new();
    for i in 0..n_attr {
        let id = format!("a{i}");
        nodes.push((id.clone(), NodeKind::Attribute, *ATTR_LABELS.choose(rng).unwrap()));
        edges.push((id.clone(), entities.choose(rng).unwrap().clone()));
        attributes.push(id);
    }
    for i in 0..n_rel {
        let id = format!("r{i}");
        nodes.push((id.clone(), NodeKind::Relation, *REL_LABELS.choose(rng).unwrap()));
        let ends: Vec<&String> = entities.choose_multiple(rng, 2).collect();
        edges.push((id.clone(), ends[0].clone()));
        edges.push((id.clone(), ends[1].clone()));
    }
    nodes.shuffle(rng);
    edges.shuffle(rng);

    let mut graph = SceneGraph::new("random");
    for (id, kind, cat) in &nodes {
        graph.add_node(id, *kind, format!("label {id}"), *cat).unwrap();
    }
    for (from, to) in &edges {
        graph.add_edge(&NodeId::from(from.as_str()), &NodeId::from(to.as_str()));
    }
    Built {
        graph,
        entities,
        attributes,
    }
}

#[derive(Debug, Clone, Copy)]
enum Mutation {
    AttributeToAttribute,
    RelationOneEnd,
    RelationThreeEnds,
    SelfLoop,
    Dangling,
}

const MUTATIONS: [Mutation; 5] = [
    Mutation::AttributeToAttribute,
    Mutation::RelationOneEnd,
    Mutation::RelationThreeEnds,
    Mutation::SelfLoop,
    Mutation::Dangling,
];

fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

/// Applies a mutation and returns the violation it must produce.
fn mutate(b: &mut Built, m: Mutation, rng: &mut ChaCha8Rng) -> ViolationCode {
    let g = &mut b.graph;
    match m {
        Mutation::AttributeToAttribute => {
            let target = match b.attributes.choose(rng) {
                Some(a) => a.clone(),
                None => {
                    g.add_node("ax", NodeKind::Attribute, "red", Category::Color).unwrap();
                    g.add_edge(&id("ax"), &id(&b.entities[0]));
                    "ax".to_string()
                }
            };
            g.add_node("am", NodeKind::Attribute, "bright", Category::Color)
                .unwrap();
            g.add_edge(&id("am"), &id(&target));
            ViolationCode::AdjacentSameKind
        }
        Mutation::RelationOneEnd => {
            g.add_node("rm", NodeKind::Relation, "near", Category::Spatial).unwrap();
            g.add_edge(&id("rm"), &id(b.entities.choose(rng).unwrap()));
            ViolationCode::RelationArity
        }
        Mutation::RelationThreeEnds => {
            let mut ends: Vec<String> = b.entities.choose_multiple(rng, 3).cloned().collect();
            for i in ends.len()..3 {
                let e = format!("ex{i}");
                g.add_node(&e, NodeKind::Entity, "extra", Category::Existence).unwrap();
                ends.push(e);
            }
            g.add_node("rm", NodeKind::Relation, "between", Category::Spatial)
                .unwrap();
            for e in &ends {
                g.add_edge(&id("rm"), &id(e));
            }
            ViolationCode::RelationArity
        }
        Mutation::SelfLoop => {
            let n = g.nodes().choose(rng).unwrap().id.clone();
            g.add_edge(&n, &n);
            ViolationCode::SelfLoop
        }
        Mutation::Dangling => {
            let n = g.nodes().choose(rng).unwrap().id.clone();
            if rng.gen_bool(0.5) {
                g.add_edge(&n, &id("ghost"));
            } else {
                g.add_edge(&id("ghost"), &n);
            }
            ViolationCode::DanglingEdge
        }
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut flagged = 0;
    for i in 0..GRAPH_CASES {
        let mut b = random_graph(&mut rng);
        let clean = b.graph.validate();
        ensure(clean.ok, || format!("clean graph {i} rejected: {:?}", clean.messages()))?;
        let m = MUTATIONS[i % MUTATIONS.len()];
        let code = mutate(&mut b, m, &mut rng);
        let report = b.graph.validate();
        ensure(!report.ok && report.has(code), || {
            format!("graph {i} with {m:?} not flagged as {code:?}: {:?}", report.messages())
        })?;
        flagged += 1;
    }
    let took = start.elapsed();
    ensure(took < VALIDATE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{GRAPH_CASES} clean graphs pass, {flagged} mutated graphs flagged, {took:.2?}"
    ))
}

/// Brute-force order check: every node exactly once, entities first, each
/// attribute after its owner, each relation after both endpoints and all
/// of their attributes.
fn order_oracle(graph: &SceneGraph, order: &[NodeId]) -> Result<(), String> {
    let pos: BTreeMap<&NodeId, usize> = order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    ensure(pos.len() == order.len(), || "a node is emitted twice".into())?;
    ensure(order.len() == graph.len(), || {
        format!("{} of {} nodes emitted", order.len(), graph.len())
    })?;
    for n in graph.nodes() {
        ensure(pos.contains_key(&n.id), || format!("{} missing", n.id))?;
    }
    let kind = |n: &NodeId| graph.node(n).unwrap().kind;
    let n_ent = graph.nodes().iter().filter(|n| n.kind == NodeKind::Entity).count();
    ensure(order[..n_ent].iter().all(|n| kind(n) == NodeKind::Entity), || {
        "entities are not a prefix".into()
    })?;
    let targets =
        |n: &NodeId| -> Vec<&NodeId> { graph.edges().iter().filter(|e| &e.from == n).map(|e| &e.to).collect() };
    for n in graph.nodes() {
        match n.kind {
            NodeKind::Entity => {}
            NodeKind::Attribute => {
                for owner in targets(&n.id) {
                    ensure(pos[owner] < pos[&n.id], || {
                        format!("attribute {} before owner {owner}", n.id)
                    })?;
                }
            }
            NodeKind::Relation => {
                for end in targets(&n.id) {
                    ensure(pos[end] < pos[&n.id], || {
                        format!("relation {} before endpoint {end}", n.id)
                    })?;
                    for a in graph.nodes().iter().filter(|a| a.kind == NodeKind::Attribute) {
                        if targets(&a.id).contains(&end) {
                            ensure(pos[&a.id] < pos[&n.id], || {
                                format!("relation {} before attribute {} of {end}", n.id, a.id)
                            })?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    for i in 0..GRAPH_CASES {
        let b = random_graph(&mut rng);
        let first: Vec<NodeId> = traverse(&b.graph)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|s| s.node_id)
            .collect();
        order_oracle(&b.graph, &first).map_err(|e| format!("graph {i}: {e}"))?;
        let copy = SceneGraph::from_json_str(&b.graph.to_json_string()).map_err(|e| e.to_string())?;
        let second: Vec<NodeId> = traverse(&copy)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|s| s.node_id)
            .collect();
        ensure(first == second, || format!("graph {i}: traversal differs between runs"))?;
    }
    let took = start.elapsed();
    ensure(took < TRAVERSE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{GRAPH_CASES} graphs ordered correctly and deterministically, {took:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// Running example

const RUNNING_EXAMPLE: [(&str, Category); 7] = [
    ("Is there water in the video?", Category::Existence),
    ("Is there a cup in the video?", Category::Existence),
    ("Is there a space station in the video?", Category::Existence),
    ("Is water transparent?", Category::Material),
    ("Is the cup made of glass?", Category::Material),
    ("Is water pouring from the cup?", Category::Physics),
    ("Is the cup inside the space station?", Category::Spatial),
];

fn run_files(case: &FixtureCase, out: &Path) -> Result<(), String> {
    let e = |e: t2v_align::Error| e.to_string();
    let backend = ReplayBackend::replay(case.cassette_path()).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default();
    let templates = PromptTemplates::default();
    let prompts = out.join("prompts.jsonl");
    write_jsonl(
        &prompts,
        &[serde_json::json!({"prompt_id": case.prompt_id, "text": case.prompt, "source": "fixture"})],
    )
    .map_err(e)?;
    let questions = out.join("questions.jsonl");
    cmd_qg(&prompts, &questions, &out.join("graphs"), &cfg, &backend, &templates).map_err(e)?;
    let mut qs: Vec<AtomicQuestion> = read_jsonl(&questions).map_err(e)?;
    qs.extend(case.supplementary.iter().cloned());
    write_jsonl(&questions, &qs).map_err(e)?;
    let manifest = out.join("videos.jsonl");
    let video = VideoEntry {
        video_id: case.video_id.clone(),
        prompt_id: case.prompt_id.clone(),
        model: case.model.clone(),
        video: None,
        frames_dir: Some(case.frames_dir()),
    };
    write_jsonl(&manifest, &[video]).map_err(e)?;
    let transcripts = out.join("transcripts.jsonl");
    cmd_qa(&questions, &manifest, &transcripts, &cfg, &backend, &templates).map_err(e)?;
    cmd_score(
        &transcripts,
        &questions,
        &out.join("score"),
        CategorySlicing::PerQuestion,
    )
    .map_err(e)?;
    Ok(())
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_3() -> Outcome {
    let case = load_fixture("space_station_water").map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_files(&case, d.path())?;
    }
    let qs: Vec<AtomicQuestion> = read_jsonl(&dirs[0].path().join("questions.jsonl")).map_err(|e| e.to_string())?;
    let generated: Vec<(&str, Category)> = qs.iter().take(7).map(|q| (q.text.as_str(), q.category)).collect();
    ensure(qs.len() == 8 && generated == RUNNING_EXAMPLE, || {
        format!("questions: {generated:?}")
    })?;

    let report: AlignmentReport = t2v_align::jsonl::read_json(
        &dirs[0]
            .path()
            .join("score/reports")
            .join(format!("{}.json", case.video_id)),
    )
    .map_err(|e| e.to_string())?;
    let yes = report.verdicts.values().filter(|v| **v == Verdict::Yes).count();
    ensure(yes == 3 && report.verdicts.len() == 8, || {
        format!("verdicts {:?}", report.verdicts)
    })?;
    ensure(
        report.score
            == Fraction {
                numerator: 3,
                denominator: 8,
            },
        || format!("score {:?}", report.score),
    )?;
    ensure(report.score_value() == 0.375, || {
        format!("S = {}", report.score_value())
    })?;
    let shown = display_score(report.score_value());
    ensure(shown == "37.5", || format!("displayed {shown}"))?;

    let (a, b) = (tree_bytes(dirs[0].path()), tree_bytes(dirs[1].path()));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    ensure(a.len() == b.len() && differing.is_empty(), || {
        format!("outputs differ: {differing:?}")
    })?;
    Ok(format!(
        "7 questions match, S = 3/8 = 0.375 shown as {shown}, {} output files byte-identical",
        a.len()
    ))
}

// ---------------------------------------------------------------------------
// Rank statistics

/// Kendall tau-b by counting every pair.
fn tau_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx * dy > 0.0 {
                conc += 1;
            } else if dx * dy < 0.0 {
                disc += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let d = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    (d > 0.0).then(|| (conc - disc) as f64 / d)
}

/// Mid-ranks by counting, then Pearson on the ranks.
fn rho_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx.sqrt() * syy.sqrt()))
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..RANK_PAIRS {
        let n = rng.gen_range(2..=RANK_MAX_N);
        let levels: i32 = rng.gen_range(2..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-levels..=levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect();

        let tau = kendall_tau_b(&x, &y).map_err(|e| e.to_string())?;
        let rho = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        let (to, ro) = (tau_oracle(&x, &y), rho_oracle(&x, &y));
        ensure(close(tau, to, RANK_TOL), || {
            format!("pair {i}: tau {tau:?} vs oracle {to:?}")
        })?;
        ensure(close(rho, ro, RANK_TOL), || {
            format!("pair {i}: rho {rho:?} vs oracle {ro:?}")
        })?;
        if let (Some(a), Some(b), Some(c), Some(d)) = (tau, to, rho, ro) {
            worst = worst.max((a - b).abs()).max((c - d).abs());
        }

        let fx: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v).collect();
        let tau_t = kendall_tau_b(&fx, &gy).map_err(|e| e.to_string())?;
        let rho_t = spearman_rho(&fx, &gy).map_err(|e| e.to_string())?;
        ensure(close(tau, tau_t, RANK_TOL) && close(rho, rho_t, RANK_TOL), || {
            format!("pair {i}: not invariant under monotone transforms")
        })?;

        if x.iter().any(|v| *v != x[0]) {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let cube: Vec<f64> = x.iter().map(|v| v * v * v).collect();
            for (f, want) in [(kendall_tau_b as fn(&[f64], &[f64]) -> _, 1.0), (spearman_rho, 1.0)] {
                ensure(f(&x, &cube).unwrap() == Some(want), || {
                    format!("pair {i}: perfect concordance not exactly 1")
                })?;
                ensure(f(&x, &neg).unwrap() == Some(-want), || {
                    format!("pair {i}: perfect discordance not exactly -1")
                })?;
            }
        }
    }
    Ok(format!(
        "{RANK_PAIRS} pairs agree with pair-count and rank-Pearson oracles (max gap {worst:.1e}), exact +-1"
    ))
}

// ---------------------------------------------------------------------------
// Majority vote

fn criterion_5() -> Outcome {
    for bits in 0u32..32 {
        let answers: Vec<Verdict> = (0..5)
            .map(|i| if bits >> i & 1 == 1 { Verdict::Yes } else { Verdict::No })
            .collect();
        let yes = bits.count_ones();
        let want = if yes * 2 > 5 {
            Majority::Decided(Verdict::Yes)
        } else {
            Majority::Decided(Verdict::No)
        };
        let got = majority_vote(&answers).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{answers:?}: {got:?}, expected {want:?}"))?;
    }
    for bits in 0u32..4 {
        let answers: Vec<Verdict> = (0..2)
            .map(|i| if bits >> i & 1 == 1 { Verdict::Yes } else { Verdict::No })
            .collect();
        let want = match bits.count_ones() {
            2 => Majority::Decided(Verdict::Yes),
            0 => Majority::Decided(Verdict::No),
            _ => Majority::Unresolved,
        };
        let got = majority_vote(&answers).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{answers:?}: {got:?}, expected {want:?}"))?;
    }
    Ok("32 five-annotator and 4 two-annotator combinations match".into())
}

// ---------------------------------------------------------------------------
// Scoring algebra

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut flips = 0;
    for i in 0..SCORING_CASES {
        let n = rng.gen_range(1..=40);
        let items: Vec<(Category, Verdict)> = (0..n)
            .map(|_| {
                let c = *Category::ALL.choose(&mut rng).unwrap();
                (c, if rng.gen_bool(0.5) { Verdict::Yes } else { Verdict::No })
            })
            .collect();
        let s = aggregate(items.iter().map(|(_, v)| *v))
            .map_err(|e| e.to_string())?
            .value();
        let yes = items.iter().filter(|(_, v)| *v == Verdict::Yes).count();
        ensure((s - yes as f64 / n as f64).abs() <= SCORING_TOL, || {
            format!("case {i}: S = {s}")
        })?;

        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let sp = aggregate(shuffled.iter().map(|(_, v)| *v)).unwrap().value();
        ensure((s - sp).abs() <= SCORING_TOL, || {
            format!("case {i}: permutation changed S")
        })?;

        let nos: Vec<usize> = (0..n).filter(|j| items[*j].1 == Verdict::No).collect();
        if let Some(&j) = nos.choose(&mut rng) {
            let mut flipped = items.clone();
            flipped[j].1 = Verdict::Yes;
            let sf = aggregate(flipped.iter().map(|(_, v)| *v)).unwrap().value();
            ensure((sf - s - 1.0 / n as f64).abs() <= SCORING_TOL, || {
                format!("case {i}: flip moved S by {}", sf - s)
            })?;
            flips += 1;
        }

        let cats = per_category(items.iter().map(|(c, v)| (*c, Some(*v))));
        let recomposed: f64 = cats.values().map(|f| f.denominator as f64 / n as f64 * f.value()).sum();
        ensure((recomposed - s).abs() <= SCORING_TOL, || {
            format!("case {i}: categories recompose to {recomposed}")
        })?;

        let scored: Vec<ScoredItem> = items
            .iter()
            .enumerate()
            .map(|(j, (c, v))| ScoredItem {
                question_id: format!("q{j:02}"),
                category: *c,
                verdict: Some(*v),
            })
            .collect();
        let report = AlignmentReport::build("v", "p", "m", &scored).map_err(|e| e.to_string())?;
        ensure(
            (report.score_value() - s).abs() <= SCORING_TOL && report.unanswered == 0,
            || format!("case {i}: report disagrees"),
        )?;
    }
    Ok(format!(
        "{SCORING_CASES} cases: permutation, {flips} flips of +1/n, category decomposition"
    ))
}

// ---------------------------------------------------------------------------
// Stratified sampling

fn corpus_distribution(records: &[&PromptRecord]) -> [f64; 10] {
    let mut counts = [0.0; 10];
    for r in records {
        for (c, n) in &r.category_counts {
            counts[c.index()] += *n as f64;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.map(|c| c / total)
}

fn criterion_7() -> Outcome {
    let (records, questions) = synthetic_corpus(CORPUS_SIZE, 7);
    let (records, _) = classify(&records, &questions).map_err(|e| e.to_string())?;
    let seed = Some(7);
    let a = stratified_sample(&records, SAMPLE_K, seed).map_err(|e| e.to_string())?;
    let b = stratified_sample(&records, SAMPLE_K, seed).map_err(|e| e.to_string())?;
    let ids =
        |r: &t2v_align::benchmark::SampleResult| r.selected.iter().map(|p| p.prompt_id.clone()).collect::<Vec<_>>();
    ensure(ids(&a) == ids(&b), || "same seed picked different prompts".into())?;
    ensure(ids(&a).iter().collect::<HashSet<_>>().len() == SAMPLE_K, || {
        "duplicate prompts in sample".into()
    })?;

    let all: Vec<&PromptRecord> = records.iter().collect();
    let picked: Vec<&PromptRecord> = a.selected.iter().collect();
    let (target, got) = (corpus_distribution(&all), corpus_distribution(&picked));
    let l1: f64 = target.iter().zip(&got).map(|(x, y)| (x - y).abs()).sum();
    ensure((l1 - a.l1_distance).abs() < 1e-12, || {
        format!("reported L1 {} but recomputed {l1}", a.l1_distance)
    })?;
    ensure(l1 <= SAMPLE_MAX_L1, || format!("L1 = {l1:.4}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut sum = 0.0;
    for _ in 0..RANDOM_SAMPLES {
        sum += random_sample_distance(&records, SAMPLE_K, &mut rng).map_err(|e| e.to_string())?;
    }
    let random_mean = sum / RANDOM_SAMPLES as f64;
    ensure(l1 < random_mean, || {
        format!("L1 {l1:.4} does not beat random mean {random_mean:.4}")
    })?;
    Ok(format!(
        "k={SAMPLE_K} of {CORPUS_SIZE}: L1 = {l1:.4}, random mean = {random_mean:.4}, seeded runs identical"
    ))
}

// ---------------------------------------------------------------------------
// Answering modes

/// Stage calls each mode may issue per question, and which call carries the
/// frames.
fn permitted(mode: QaMode) -> (&'static [&'static str], &'static str) {
    match mode {
        QaMode::Full | QaMode::NoKa => (&["understanding", "reflection", "conclusion"], "understanding"),
        QaMode::NoVu => (&["reflection", "conclusion"], "reflection"),
        QaMode::NoCr => (&["understanding", "conclusion"], "understanding"),
        QaMode::KaOnly => (&["conclusion"], "conclusion"),
        QaMode::Direct => (&["direct"], "direct"),
    }
}

fn merged_script(cases: &[&FixtureCase]) -> Result<ScriptedBackend, String> {
    let mut table = ScriptTable::default();
    for c in cases {
        table
            .rules
            .extend(ScriptTable::load(&c.script_path()).map_err(|e| e.to_string())?.rules);
    }
    Ok(ScriptedBackend::new(table))
}

fn entry(case: &FixtureCase, suffix: &str) -> VideoEntry {
    VideoEntry {
        video_id: format!("{}{suffix}", case.video_id),
        prompt_id: case.prompt_id.clone(),
        model: case.model.clone(),
        video: None,
        frames_dir: Some(case.frames_dir()),
    }
}

fn criterion_8() -> Outcome {
    let ssw = load_fixture("space_station_water").map_err(|e| e.to_string())?;
    let pc = load_fixture("penguin_cactus").map_err(|e| e.to_string())?;
    let templates = PromptTemplates::default();
    let questions: Vec<AtomicQuestion> = ssw.all_questions().into_iter().chain(pc.all_questions()).collect();
    let videos = vec![entry(&ssw, ""), entry(&ssw, "_b"), entry(&pc, "")];
    let items = 2 * ssw.all_questions().len() + pc.all_questions().len();

    for mode in QaMode::ALL {
        let (stages, with_frames) = permitted(mode);
        let mut cfg = RunConfig {
            concurrency: 1,
            ..RunConfig::default()
        };
        cfg.qa.mode = mode;
        let backend = LoggedBackend::new(merged_script(&[&ssw, &pc])?);
        let (ts, errs) = run_qa(&questions, &videos, &cfg, &backend, &templates).map_err(|e| e.to_string())?;
        ensure(errs.is_empty() && ts.iter().all(QaTranscript::is_answered), || {
            format!("{mode}: unanswered items")
        })?;

        let labels = backend.labels();
        let ka = labels.iter().filter(|l| *l == "knowledge").count();
        let want_ka = if mode.uses_knowledge() { 2 } else { 0 };
        ensure(ka == want_ka, || {
            format!("{mode}: {ka} knowledge calls, expected {want_ka}")
        })?;
        let stage_calls: Vec<&str> = labels
            .iter()
            .map(String::as_str)
            .filter(|l| *l != "knowledge")
            .collect();
        let expected: Vec<&str> = (0..items).flat_map(|_| stages.iter().copied()).collect();
        ensure(stage_calls == expected, || format!("{mode}: calls {stage_calls:?}"))?;

        for r in backend.requests() {
            let should = r.label == with_frames;
            ensure((r.image_count() > 0) == should, || {
                format!("{mode}: frames on '{}' call", r.label)
            })?;
        }
    }

    // One knowledge call per prompt, however many questions and videos, even
    // with concurrent workers.
    for (qs, workers) in [
        (questions.clone(), 4),
        (vec![ssw.questions[0].clone(), pc.questions[0].clone()], 4),
    ] {
        let cfg = RunConfig {
            concurrency: workers,
            ..RunConfig::default()
        };
        let backend = LoggedBackend::new(merged_script(&[&ssw, &pc])?);
        run_qa(&qs, &videos, &cfg, &backend, &templates).map_err(|e| e.to_string())?;
        let ka = backend.labels().iter().filter(|l| *l == "knowledge").count();
        ensure(ka == 2, || format!("full mode made {ka} knowledge calls for 2 prompts"))?;
    }
    Ok(format!(
        "{} modes issue only their permitted stages; full mode: 1 knowledge call per prompt",
        QaMode::ALL.len()
    ))
}

// ---------------------------------------------------------------------------
// Correlation harness

fn planted(planted: Planted, n: usize, seed: u64) -> Result<(Option<f64>, Option<f64>), String> {
    let (ann, engine) = synthetic_annotations(n, planted, seed);
    let human = human_scores(&ann, HumanAggregate::Mean);
    let s = correlate(&engine, &human, &BTreeMap::new()).map_err(|e| e.to_string())?;
    Ok((s.overall.kendall_tau, s.overall.spearman_rho))
}

fn criterion_9() -> Outcome {
    let (tau, rho) = planted(Planted::Monotone, 60, 9)?;
    ensure(tau == Some(1.0) && rho == Some(1.0), || {
        format!("monotone gave tau {tau:?}, rho {rho:?}")
    })?;
    let (tau, rho) = planted(Planted::AntiMonotone, 60, 9)?;
    ensure(tau == Some(-1.0) && rho == Some(-1.0), || {
        format!("anti-monotone gave tau {tau:?}, rho {rho:?}")
    })?;
    let mut passes = 0;
    for seed in 0..NOISE_TRIALS {
        let (tau, rho) = planted(Planted::Independent, NOISE_N, 900 + seed)?;
        let (tau, rho) = (tau.ok_or("undefined tau")?, rho.ok_or("undefined rho")?);
        if tau.abs() < NOISE_BOUND && rho.abs() < NOISE_BOUND {
            passes += 1;
        }
    }
    ensure(passes >= NOISE_MIN_PASSES, || {
        format!("only {passes} of {NOISE_TRIALS} noise trials within bounds")
    })?;
    Ok(format!(
        "monotone +1, anti-monotone -1, independent noise within {NOISE_BOUND} in {passes}/{NOISE_TRIALS}"
    ))
}

// ---------------------------------------------------------------------------
// Live endpoint

/// `T2V_ALIGN_LIVE=1` enables the check. `T2V_ALIGN_BASE_URL` is required;
/// `T2V_ALIGN_MODEL` names the text model (default "gpt-4o-mini"),
/// `T2V_ALIGN_VIDEO_MODEL` the vision model (defaults to the text model),
/// and the bearer token is read from `T2V_ALIGN_API_TOKEN` if set.
fn live_smoke() -> Option<Outcome> {
    if std::env::var("T2V_ALIGN_LIVE").ok().as_deref() != Some("1") {
        return None;
    }
    Some((|| {
        let base_url = std::env::var("T2V_ALIGN_BASE_URL").map_err(|_| "T2V_ALIGN_BASE_URL is not set".to_string())?;
        let model = std::env::var("T2V_ALIGN_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
        let video_model = std::env::var("T2V_ALIGN_VIDEO_MODEL").unwrap_or_else(|_| model.clone());
        let backend = HttpBackend::new(HttpConfig {
            base_url,
            token_env: Some("T2V_ALIGN_API_TOKEN".into()),
            ..HttpConfig::default()
        });
        let mut cfg = RunConfig {
            concurrency: 2,
            ..RunConfig::default()
        };
        cfg.models.qg = model.clone();
        cfg.models.knowledge = model;
        cfg.models.video = video_model;
        let templates = PromptTemplates::default();
        let case = load_fixture("single_entity").map_err(|e| e.to_string())?;
        let out = generate_questions(
            "live",
            "A white lighthouse on a rocky shore.",
            &cfg.qg_options(),
            &backend,
            &templates,
        )
        .map_err(|e| format!("question generation: {e}"))?;
        ensure(!out.questions.is_empty(), || "no questions".into())?;
        let video = VideoEntry {
            prompt_id: "live".into(),
            ..entry(&case, "")
        };
        let (ts, errs) = run_qa(&out.questions, &[video], &cfg, &backend, &templates).map_err(|e| e.to_string())?;
        ensure(errs.is_empty(), || format!("{errs:?}"))?;
        let (reports, _) = score_transcripts(&ts, &out.questions).map_err(|e| e.to_string())?;
        let r = reports.first().ok_or("every question went unanswered")?;
        let s = r.score_value();
        ensure((0.0..=1.0).contains(&s), || format!("score {s} outside [0, 1]"))?;
        Ok(format!(
            "{} questions, {} answered, S = {s:.3}",
            out.questions.len(),
            r.answered
        ))
    })())
}

// ---------------------------------------------------------------------------

fn run(f: fn() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("scene-graph validation", criterion_1),
        ("traversal order", criterion_2),
        ("running example end to end", criterion_3),
        ("rank statistics vs oracles", criterion_4),
        ("majority vote", criterion_5),
        ("scoring algebra", criterion_6),
        ("stratified sampling", criterion_7),
        ("answering-mode call contracts", criterion_8),
        ("correlation sanity", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match run(*f) {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    match live_smoke() {
        None => println!("SKIP  10. live endpoint smoke: set T2V_ALIGN_LIVE=1 and T2V_ALIGN_BASE_URL to run"),
        Some(Ok(detail)) => println!("PASS  10. live endpoint smoke: {detail}"),
        Some(Err(why)) => {
            failed += 1;
            println!("FAIL  10. live endpoint smoke: {why}");
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
