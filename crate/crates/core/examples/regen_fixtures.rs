//! Rewrites the frames and recorded cassette of every bundled fixture.
//!
//! The cassette is recorded by running question generation and full-mode
//! answering against the fixture's scripted backend.
//!
//!     cargo run -p t2v-align --example regen_fixtures

use std::sync::Arc;

use t2v_align::config::RunConfig;
use t2v_align::fixtures::{load_fixture, FIXTURE_NAMES};
use t2v_align::frames::write_synthetic_frames;
use t2v_align::llm::{ChatBackend, ReplayBackend, ScriptedBackend};
use t2v_align::qg::generate_questions;
use t2v_align::run::{run_qa, VideoEntry};
use t2v_align::templates::PromptTemplates;

fn frame_count(name: &str) -> usize {
    match name {
        "space_station_water" => 12,
        "single_entity" => 3,
        _ => 8,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let templates = PromptTemplates::default();
    let config = RunConfig {
        concurrency: 1,
        ..RunConfig::default()
    };
    for name in FIXTURE_NAMES {
        let case = load_fixture(name)?;
        let frames = case.frames_dir();
        if frames.exists() {
            std::fs::remove_dir_all(&frames)?;
        }
        write_synthetic_frames(&frames, frame_count(name))?;

        let cassette = case.cassette_path();
        if cassette.exists() {
            std::fs::remove_file(&cassette)?;
        }
        let live: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::load(&case.script_path())?);
        let recorder = ReplayBackend::record(&cassette, live)?;
        let out = generate_questions(
            &case.prompt_id,
            &case.prompt,
            &config.qg_options(),
            &recorder,
            &templates,
        )?;
        let mut questions = out.questions;
        questions.extend(case.supplementary.iter().cloned());
        let video = VideoEntry {
            video_id: case.video_id.clone(),
            prompt_id: case.prompt_id.clone(),
            model: case.model.clone(),
            video: None,
            frames_dir: Some(frames),
        };
        let (transcripts, errors) = run_qa(&questions, &[video], &config, &recorder, &templates)?;
        if !errors.is_empty() || transcripts.iter().any(|t| t.verdict.is_none()) {
            let bad: Vec<_> = transcripts.iter().filter_map(|t| t.error.clone()).collect();
            return Err(format!("{name}: unanswered items while recording: {bad:?} {errors:?}").into());
        }
        println!("{name}: {} cassette entries", recorder.len());
    }
    Ok(())
}
