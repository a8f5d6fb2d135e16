//! Mapping of free-text action phrases onto the closed label set.
//!
//! Lookup is exact after [`normalize_phrase`]; there is no fuzzy matching.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::label::{ActionLabel, UnknownAction};

const DEFAULT_TABLE: &str = include_str!("../../data/synonyms.tsv");

#[derive(Debug, thiserror::Error)]
pub enum SynonymTableError {
    #[error("synonym table line {line}: expected `phrase<TAB>Label`, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("synonym table line {line}: unknown canonical label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("synonym table line {line}: phrase {phrase:?} already maps to {existing}")]
    Conflict {
        line: usize,
        phrase: String,
        existing: ActionLabel,
    },
    #[error("reading synonym table: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercases, maps `-`/`_` to spaces, collapses whitespace and strips
/// surrounding markdown/punctuation.
pub fn normalize_phrase(raw: &str) -> String {
    const STRIP: &[char] = &['*', '_', '`', '"', '\'', '.', ',', ';', ':', '!', '?'];
    let trimmed = raw
        .trim()
        .trim_matches(|c: char| STRIP.contains(&c) || c.is_whitespace());
    let lowered: String = trimmed
        .chars()
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .flat_map(char::to_lowercase)
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone)]
pub struct SynonymTable {
    entries: BTreeMap<String, ActionLabel>,
    digest: String,
}

impl SynonymTable {
    pub fn parse(text: &str) -> Result<Self, SynonymTableError> {
        let mut entries = BTreeMap::new();
        for label in ActionLabel::ALL {
            entries.insert(normalize_phrase(label.canonical_name()), label);
        }
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((phrase, label)) = line.split_once('\t') else {
                return Err(SynonymTableError::MalformedLine {
                    line: line_no,
                    text: line.to_string(),
                });
            };
            let label_text = label.trim();
            let label = ActionLabel::from_exact(label_text).ok_or_else(|| {
                SynonymTableError::UnknownLabel {
                    line: line_no,
                    label: label_text.to_string(),
                }
            })?;
            let key = normalize_phrase(phrase);
            if key.is_empty() {
                return Err(SynonymTableError::MalformedLine {
                    line: line_no,
                    text: line.to_string(),
                });
            }
            match entries.get(&key) {
                Some(&existing) if existing != label => {
                    return Err(SynonymTableError::Conflict {
                        line: line_no,
                        phrase: key,
                        existing,
                    })
                }
                _ => {
                    entries.insert(key, label);
                }
            }
        }
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(SynonymTable { entries, digest })
    }

    pub fn load(path: &Path) -> Result<Self, SynonymTableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SynonymTable::parse(DEFAULT_TABLE).expect("bundled synonym table is valid")
        })
    }

    pub fn builtin_text() -> &'static str {
        DEFAULT_TABLE
    }

    /// SHA-256 of the source text, recorded in run manifests.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn lookup(&self, raw: &str) -> Result<ActionLabel, UnknownAction> {
        self.entries
            .get(&normalize_phrase(raw))
            .copied()
            .ok_or_else(|| UnknownAction(raw.to_string()))
    }

    pub fn phrases(&self) -> impl Iterator<Item = (&str, ActionLabel)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Maps a raw phrase onto the closed vocabulary using the bundled table.
pub fn normalize_action_label(raw: &str) -> Result<ActionLabel, UnknownAction> {
    SynonymTable::builtin().lookup(raw)
}
