//! Agent prompt templates.
//!
//! Templates are plain text with named placeholders such as `{prompt}`.
//! Only the placeholders a template declares are substituted, so literal JSON
//! braces in the text are left alone. Defaults are compiled in; a directory
//! holding `<name>.txt` files overrides any subset of them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    Extract,
    BuildGraph,
    Traverse,
    VanillaQg,
    Knowledge,
    Understanding,
    Reflection,
    Conclusion,
    Direct,
}

impl TemplateName {
    pub const ALL: [TemplateName; 9] = [
        TemplateName::Extract,
        TemplateName::BuildGraph,
        TemplateName::Traverse,
        TemplateName::VanillaQg,
        TemplateName::Knowledge,
        TemplateName::Understanding,
        TemplateName::Reflection,
        TemplateName::Conclusion,
        TemplateName::Direct,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateName::Extract => "extract",
            TemplateName::BuildGraph => "build_graph",
            TemplateName::Traverse => "traverse",
            TemplateName::VanillaQg => "vanilla_qg",
            TemplateName::Knowledge => "knowledge",
            TemplateName::Understanding => "understanding",
            TemplateName::Reflection => "reflection",
            TemplateName::Conclusion => "conclusion",
            TemplateName::Direct => "direct",
        }
    }

    /// Placeholders the template must contain.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Extract | TemplateName::VanillaQg | TemplateName::Knowledge => &["prompt"],
            TemplateName::BuildGraph => &["prompt", "elements"],
            TemplateName::Traverse => &["prompt", "seeds"],
            TemplateName::Understanding => &[],
            TemplateName::Reflection | TemplateName::Conclusion => &["context", "question"],
            TemplateName::Direct => &["question"],
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            TemplateName::Extract => include_str!("../templates/extract.txt"),
            TemplateName::BuildGraph => include_str!("../templates/build_graph.txt"),
            TemplateName::Traverse => include_str!("../templates/traverse.txt"),
            TemplateName::VanillaQg => include_str!("../templates/vanilla_qg.txt"),
            TemplateName::Knowledge => include_str!("../templates/knowledge.txt"),
            TemplateName::Understanding => include_str!("../templates/understanding.txt"),
            TemplateName::Reflection => include_str!("../templates/reflection.txt"),
            TemplateName::Conclusion => include_str!("../templates/conclusion.txt"),
            TemplateName::Direct => include_str!("../templates/direct.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    texts: BTreeMap<TemplateName, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            texts: TemplateName::ALL
                .iter()
                .map(|&n| (n, n.default_text().trim_end().to_string()))
                .collect(),
        }
    }
}

impl PromptTemplates {
    /// Defaults overridden by any `<name>.txt` found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        let mut out = PromptTemplates::default();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                out.set(name, text)?;
            }
        }
        Ok(out)
    }

    pub fn set(&mut self, name: TemplateName, text: String) -> Result<()> {
        for p in name.placeholders() {
            if !text.contains(&format!("{{{p}}}")) {
                return Err(Error::Config(format!(
                    "template '{}' is missing placeholder {{{p}}}",
                    name.file_stem()
                )));
            }
        }
        self.texts.insert(name, text.trim_end().to_string());
        Ok(())
    }

    pub fn raw(&self, name: TemplateName) -> &str {
        &self.texts[&name]
    }

    /// Substitutes the declared placeholders. Values are inserted verbatim
    /// and are not rescanned.
    pub fn render(&self, name: TemplateName, values: &[(&str, &str)]) -> String {
        let allowed = name.placeholders();
        let mut out = self.raw(name).to_string();
        for p in allowed {
            let value = values.iter().find(|(k, _)| k == p).map(|(_, v)| *v).unwrap_or("");
            out = replace_once_each(&out, &format!("{{{p}}}"), value);
        }
        out
    }
}

// Splits on the marker first so inserted values never get substituted again.
fn replace_once_each(text: &str, marker: &str, value: &str) -> String {
    text.split(marker).collect::<Vec<_>>().join(value)
}
