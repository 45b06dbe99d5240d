//! The ten question categories shared by scene-graph labels, questions,
//! prompt classification and per-dimension reporting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Existence,
    Action,
    Material,
    Spatial,
    Number,
    Shape,
    Color,
    Camera,
    Physics,
    Other,
}

impl Category {
    /// Presentation order used in tables and CSV headers.
    pub const ALL: [Category; 10] = [
        Category::Existence,
        Category::Action,
        Category::Material,
        Category::Spatial,
        Category::Number,
        Category::Shape,
        Category::Color,
        Category::Camera,
        Category::Physics,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Existence => "existence",
            Category::Action => "action",
            Category::Material => "material",
            Category::Spatial => "spatial",
            Category::Number => "number",
            Category::Shape => "shape",
            Category::Color => "color",
            Category::Camera => "camera",
            Category::Physics => "physics",
            Category::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|c| *c == self).unwrap()
    }

    /// Lenient mapping for labels coming back from a model: anything outside
    /// the taxonomy becomes `Other`. "motion" is accepted as an alias of action.
    pub fn from_label_lenient(label: &str) -> Category {
        let norm = label.trim().to_ascii_lowercase();
        match norm.as_str() {
            "motion" => Category::Action,
            "colour" => Category::Color,
            _ => norm.parse().unwrap_or(Category::Other),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory(pub String);

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown category '{}'", self.0)
    }
}

impl std::error::Error for UnknownCategory {}

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}
