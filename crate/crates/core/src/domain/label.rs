use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the five surgical actions in the closed vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionLabel {
    Aspiration,
    Coagulation,
    Dissection,
    TissueRetraction,
    VesselClipping,
}

impl ActionLabel {
    /// Number of classes in the vocabulary.
    pub const COUNT: usize = 5;

    pub const ALL: [ActionLabel; Self::COUNT] = [
        ActionLabel::Aspiration,
        ActionLabel::Coagulation,
        ActionLabel::Dissection,
        ActionLabel::TissueRetraction,
        ActionLabel::VesselClipping,
    ];

    /// Display name as used in annotations, prompts and reports.
    pub fn canonical_name(self) -> &'static str {
        match self {
            ActionLabel::Aspiration => "Aspiration",
            ActionLabel::Coagulation => "Coagulation",
            ActionLabel::Dissection => "Dissection",
            ActionLabel::TissueRetraction => "Tissue Retraction",
            ActionLabel::VesselClipping => "Vessel Clipping",
        }
    }

    /// Rust-style identifier, used as the right-hand side of the synonym table.
    pub fn identifier(self) -> &'static str {
        match self {
            ActionLabel::Aspiration => "Aspiration",
            ActionLabel::Coagulation => "Coagulation",
            ActionLabel::Dissection => "Dissection",
            ActionLabel::TissueRetraction => "TissueRetraction",
            ActionLabel::VesselClipping => "VesselClipping",
        }
    }

    /// Exact lookup by canonical name or identifier. No case folding.
    pub fn from_exact(name: &str) -> Option<ActionLabel> {
        Self::ALL
            .into_iter()
            .find(|l| l.canonical_name() == name || l.identifier() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action label: {0:?}")]
pub struct UnknownAction(pub String);

impl FromStr for ActionLabel {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionLabel::from_exact(s).ok_or_else(|| UnknownAction(s.to_string()))
    }
}

impl Serialize for ActionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for ActionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_names_match_vocabulary() {
        let names: Vec<_> = ActionLabel::ALL
            .iter()
            .map(|l| l.canonical_name())
            .collect();
        assert_eq!(
            names,
            [
                "Aspiration",
                "Coagulation",
                "Dissection",
                "Tissue Retraction",
                "Vessel Clipping"
            ]
        );
    }

    #[test]
    fn serde_uses_display_name() {
        let json = serde_json::to_string(&ActionLabel::TissueRetraction).unwrap();
        assert_eq!(json, "\"Tissue Retraction\"");
        let back: ActionLabel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ActionLabel::TissueRetraction);
        assert!(serde_json::from_str::<ActionLabel>("\"Irrigation\"").is_err());
    }
}
