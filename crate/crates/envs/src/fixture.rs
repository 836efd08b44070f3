//! Seed state for the mock environments, loaded at every reset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SHIPPED_FIXTURE: &str = include_str!("../data/fixture.json");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    #[serde(default)]
    pub desktop: DesktopSeed,
    #[serde(default)]
    pub phone: PhoneSeed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesktopSeed {
    #[serde(default)]
    pub files: BTreeMap<String, String>,
    /// Extra (possibly empty) directories; parents of files exist implicitly.
    #[serde(default)]
    pub dirs: Vec<String>,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
    #[serde(default)]
    pub apps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub text: String,
    #[serde(default)]
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhoneSeed {
    /// Contact name to email address.
    #[serde(default)]
    pub contacts: BTreeMap<String, String>,
    #[serde(default)]
    pub tasks: Vec<TaskItem>,
    /// Installed packages besides the launcher; empty means the defaults.
    #[serde(default)]
    pub apps: Vec<String>,
}

impl Fixture {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid fixture: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// The fixture the golden tasks are written against.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_FIXTURE).expect("shipped fixture parses")
    }
}
