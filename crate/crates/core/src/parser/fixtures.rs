//! Random well-formed plan responses and targeted corruptions of them.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{render_fixture, ParseError, PlanResponse, RankedAction, Section};
use crate::domain::{ActionLabel, SynonymTable};

const WORDS: &[&str] = &[
    "the",
    "gallbladder",
    "cystic",
    "duct",
    "artery",
    "is",
    "exposed",
    "tissue",
    "plane",
    "clear",
    "bleeding",
    "minimal",
    "hepatocystic",
    "triangle",
    "view",
    "critical",
    "grasper",
    "hook",
    "fundus",
    "liver",
    "bed",
    "traction",
    "adequate",
    "next",
    "step",
    "should",
    "proceed",
    "with",
    "care",
    "structures",
    "identified",
    "visible",
    "smoke",
    "field",
];

fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=12);
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One to three lines of filler text.
pub fn random_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| sentence(rng)).collect::<Vec<_>>().join("\n")
}

/// A phrase the synonym table maps to `label`, in randomized letter case.
pub fn random_phrase<R: Rng>(rng: &mut R, label: ActionLabel, synonyms: &SynonymTable) -> String {
    let mut options: Vec<String> = synonyms
        .phrases()
        .filter(|(_, l)| *l == label)
        .map(|(p, _)| p.to_string())
        .collect();
    options.push(label.canonical_name().to_string());
    let phrase = options.choose(rng).expect("label has phrases").clone();
    match rng.gen_range(0..3) {
        0 => phrase,
        1 => phrase.to_uppercase(),
        _ => phrase
            .split(' ')
            .map(|w| {
                let mut c = w.chars();
                c.next()
                    .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
                    .unwrap_or_default()
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

pub fn random_plan<R: Rng>(rng: &mut R, synonyms: &SynonymTable) -> PlanResponse {
    let mut action = || {
        let label = *ActionLabel::ALL.choose(rng).expect("non-empty");
        RankedAction {
            label,
            rationale: random_text(rng),
            raw_phrase: random_phrase(rng, label, synonyms),
        }
    };
    let ranked_actions = [action(), action(), action()];
    PlanResponse {
        progress_assessment: random_text(rng),
        safety_considerations: random_text(rng),
        ranked_actions,
    }
}

/// Expected failure class of a corrupted fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectedError {
    MissingSection(Section),
    TooFewActions(usize),
    UnknownAction(String),
}

impl ExpectedError {
    pub fn matches(&self, err: &ParseError) -> bool {
        match (self, err) {
            (ExpectedError::MissingSection(s), ParseError::MissingSection { section, .. }) => {
                s == section
            }
            (ExpectedError::TooFewActions(n), ParseError::TooFewActions { found, .. }) => {
                n == found
            }
            (ExpectedError::UnknownAction(p), ParseError::UnknownAction { phrase, .. }) => {
                p == phrase
            }
            _ => false,
        }
    }
}

const UNKNOWN_PHRASES: &[&str] = &["Irrigation", "grasp the fundus", "Stapling", "Suturing"];

/// Renders `plan` and applies corruption `kind` (taken modulo 6).
pub fn corrupt<R: Rng>(rng: &mut R, plan: &PlanResponse, kind: usize) -> (String, ExpectedError) {
    let text = render_fixture(plan);
    let headings = Section::ALL.map(|s| format!("## {}\n", s.heading()));
    match kind % 6 {
        k @ 0..=2 => {
            let section = Section::ALL[k];
            (
                text.replace(&headings[k], ""),
                ExpectedError::MissingSection(section),
            )
        }
        k @ 3..=4 => {
            // Keep only the first `keep` list items.
            let keep = 5 - k;
            let mut out = String::new();
            let mut item = 0;
            let mut in_actions = false;
            for line in text.split_inclusive('\n') {
                if line == headings[2] {
                    in_actions = true;
                } else if in_actions && !line.starts_with(' ') {
                    item += 1;
                }
                if !in_actions || item <= keep {
                    out.push_str(line);
                }
            }
            (out, ExpectedError::TooFewActions(keep))
        }
        _ => {
            let mut broken = plan.clone();
            let rank = rng.gen_range(0..3);
            let phrase = UNKNOWN_PHRASES.choose(rng).expect("non-empty").to_string();
            broken.ranked_actions[rank].raw_phrase = phrase.clone();
            // Earlier ranks stay valid, so the reported phrase is the corrupted one.
            (
                render_fixture(&broken),
                ExpectedError::UnknownAction(phrase),
            )
        }
    }
}
