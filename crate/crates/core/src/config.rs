//! Run configuration, read from a TOML file.
//!
//! ```toml
//! concurrency = 4
//! templates_dir = "prompts"          # optional overrides, <name>.txt
//!
//! [backend]
//! kind = "http"                      # http | replay | record | scripted
//! base_url = "http://127.0.0.1:8000/v1"
//! token_env = "T2V_ALIGN_API_TOKEN"
//! cassette = "runs/cassette.jsonl"   # replay and record
//! script = "script.json"             # scripted
//!
//! [models]
//! qg = "gpt-4o"
//! knowledge = "gpt-4o"
//! video = "qwen2-vl-72b"
//!
//! [qg]
//! mode = "multi_agent"               # multi_agent | vanilla
//!
//! [qa]
//! mode = "full"                      # full | no_ka | no_vu | no_cr | ka_only | direct
//! frame_count = 8
//! extractor_command = "ffmpeg -loglevel error -i {input} -vf fps=2 {outdir}/f%05d.png"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{ExtractorConfig, DEFAULT_FRAME_COUNT};
use crate::llm::{AgentSettings, ChatBackend, HttpBackend, HttpConfig, ReplayBackend, ScriptedBackend};
use crate::qa::{QaMode, QaSettings};
use crate::qg::{GraphBuilderMode, QgMode, QgOptions, RenderMode};
use crate::scoring::CategorySlicing;
use crate::stats::HumanAggregate;
use crate::templates::PromptTemplates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Replay,
    Record,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub base_url: String,
    pub token_env: Option<String>,
    pub cassette: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        let http = HttpConfig::default();
        BackendSection {
            kind: BackendKind::Http,
            base_url: http.base_url,
            token_env: http.token_env,
            cassette: None,
            script: None,
            max_attempts: http.max_attempts,
            timeout_secs: http.timeout.as_secs(),
            max_in_flight: http.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub qg: String,
    pub knowledge: String,
    pub video: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            qg: "gpt-4o".into(),
            knowledge: "gpt-4o".into(),
            video: "qwen2-vl-72b-instruct".into(),
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QgSection {
    pub mode: QgMode,
    pub builder: GraphBuilderMode,
    pub renderer: RenderMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaSection {
    pub mode: QaMode,
    pub frame_count: usize,
    pub extractor_command: Option<String>,
}

impl Default for QaSection {
    fn default() -> Self {
        QaSection {
            mode: QaMode::Full,
            frame_count: DEFAULT_FRAME_COUNT,
            extractor_command: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub slicing: CategorySlicing,
    pub human_aggregate: HumanAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub concurrency: usize,
    pub seed: Option<u64>,
    pub templates_dir: Option<PathBuf>,
    pub backend: BackendSection,
    pub models: ModelsSection,
    pub qg: QgSection,
    pub qa: QaSection,
    pub scoring: ScoringSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            concurrency: 4,
            seed: None,
            templates_dir: None,
            backend: BackendSection::default(),
            models: ModelsSection::default(),
            qg: QgSection::default(),
            qa: QaSection::default(),
            scoring: ScoringSection::default(),
        }
    }
}

/// Backend choice given on the command line: `http`, `replay:<path>`,
/// `record:<path>` or `scripted:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Http,
    Replay(PathBuf),
    Record(PathBuf),
    Scripted(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "http" {
            return Ok(BackendSpec::Http);
        }
        let (kind, path) = s
            .split_once(':')
            .ok_or_else(|| format!("backend '{s}' must be http, replay:<path>, record:<path> or scripted:<path>"))?;
        if path.is_empty() {
            return Err(format!("backend '{kind}' needs a path"));
        }
        let path = PathBuf::from(path);
        match kind {
            "replay" => Ok(BackendSpec::Replay(path)),
            "record" => Ok(BackendSpec::Record(path)),
            "scripted" => Ok(BackendSpec::Scripted(path)),
            other => Err(format!("unknown backend kind '{other}'")),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.templates_dir,
            &mut self.backend.cassette,
            &mut self.backend.script,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve(base, p);
        }
    }

    /// Applies a command-line backend choice.
    pub fn apply_backend(&mut self, spec: &BackendSpec) {
        match spec {
            BackendSpec::Http => self.backend.kind = BackendKind::Http,
            BackendSpec::Replay(p) => {
                self.backend.kind = BackendKind::Replay;
                self.backend.cassette = Some(p.clone());
            }
            BackendSpec::Record(p) => {
                self.backend.kind = BackendKind::Record;
                self.backend.cassette = Some(p.clone());
            }
            BackendSpec::Scripted(p) => {
                self.backend.kind = BackendKind::Scripted;
                self.backend.script = Some(p.clone());
            }
        }
    }

    /// Checks values and that every referenced input exists.
    pub fn check(&self) -> Result<()> {
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if self.qa.frame_count == 0 {
            return Err(Error::Config("qa.frame_count must be at least 1".into()));
        }
        if let Some(dir) = &self.templates_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "templates_dir {} is not a directory",
                    dir.display()
                )));
            }
        }
        match self.backend.kind {
            BackendKind::Replay => match &self.backend.cassette {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(Error::Config(format!("cassette {} does not exist", p.display()))),
                None => return Err(Error::Config("replay backend needs backend.cassette".into())),
            },
            BackendKind::Record if self.backend.cassette.is_none() => {
                return Err(Error::Config("record backend needs backend.cassette".into()));
            }
            BackendKind::Scripted => match &self.backend.script {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(Error::Config(format!("script {} does not exist", p.display()))),
                None => return Err(Error::Config("scripted backend needs backend.script".into())),
            },
            _ => {}
        }
        Ok(())
    }

    pub fn http_config(&self) -> HttpConfig {
        HttpConfig {
            base_url: self.backend.base_url.clone(),
            token_env: self.backend.token_env.clone(),
            max_attempts: self.backend.max_attempts.max(1),
            timeout: Duration::from_secs(self.backend.timeout_secs),
            max_in_flight: self.backend.max_in_flight.max(1),
            ..HttpConfig::default()
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>> {
        self.check()?;
        Ok(match self.backend.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(self.http_config())),
            BackendKind::Replay => Arc::new(ReplayBackend::replay(self.backend.cassette.clone().expect("checked"))?),
            BackendKind::Record => {
                let live: Arc<dyn ChatBackend> = Arc::new(HttpBackend::new(self.http_config()));
                Arc::new(ReplayBackend::record(
                    self.backend.cassette.clone().expect("checked"),
                    live,
                )?)
            }
            BackendKind::Scripted => Arc::new(ScriptedBackend::load(self.backend.script.as_deref().expect("checked"))?),
        })
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir),
            None => Ok(PromptTemplates::default()),
        }
    }

    fn settings(&self, model: &str) -> AgentSettings {
        AgentSettings {
            model: model.to_string(),
            max_tokens: self.models.max_tokens,
            temperature: self.models.temperature,
        }
    }

    pub fn qg_options(&self) -> QgOptions {
        QgOptions {
            mode: self.qg.mode,
            builder: self.qg.builder,
            renderer: self.qg.renderer,
            settings: self.settings(&self.models.qg),
        }
    }

    pub fn qa_settings(&self) -> QaSettings {
        QaSettings {
            knowledge: self.settings(&self.models.knowledge),
            video: self.settings(&self.models.video),
        }
    }

    pub fn extractor(&self) -> ExtractorConfig {
        ExtractorConfig {
            command: self.qa.extractor_command.clone(),
        }
    }
}
