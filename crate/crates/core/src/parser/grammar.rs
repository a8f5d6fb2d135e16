use std::sync::OnceLock;

use regex::Regex;

use super::{ParseError, PlanResponse, RankedAction, Section};
use crate::domain::SynonymTable;

const EMPH: &str = r"(?:\*\*|__|\*)?";

fn heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"(?i)^\s*#*\s*{EMPH}\s*(?:(?:\d+|[ivx]+)[.)]\s*|\(\d+\)\s*)?{EMPH}\s*(?P<name>progress\s+assessment|safety\s+considerations?|ready[- ]to[- ]execute\s+actions?)\s*{EMPH}\s*(?P<colon>:)?\s*{EMPH}\s*(?P<rest>.*?)\s*$"
        ))
        .expect("heading regex")
    })
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:[-*+]\s+)?(?P<open>\*\*|__)?\s*(?:[1-9]\s*[.)]|\([1-9]\)|(?:first|second|third)(?:\s+action)?\s*[:.,)]|(?:rank|action|option|recommendation|choice)\s*#?\s*[1-9]\s*[:.)]?|[1-9](?:st|nd|rd|th)(?:\s+action)?\s*[:.,)]?)\s*(?P<close>\*\*|__)?\s*(?P<rest>.*)$",
        )
        .expect("item regex")
    })
}

fn section_of(name: &str) -> Section {
    let lower = name.to_ascii_lowercase();
    if lower.starts_with("progress") {
        Section::ProgressAssessment
    } else if lower.starts_with("safety") {
        Section::SafetyConsiderations
    } else {
        Section::ReadyToExecuteActions
    }
}

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn lines(raw: &str) -> Vec<Line<'_>> {
    let mut offset = 0;
    raw.split_inclusive('\n')
        .map(|chunk| {
            let line = Line {
                offset,
                text: chunk.trim_end_matches(['\n', '\r']),
            };
            offset += chunk.len();
            line
        })
        .collect()
}

/// A section heading, with any text that follows it on the same line.
fn detect_heading(line: &str) -> Option<(Section, &str)> {
    let caps = heading_re().captures(line)?;
    let rest = caps.name("rest").map_or("", |m| m.as_str());
    if caps.name("colon").is_none() && !rest.is_empty() {
        return None;
    }
    Some((section_of(&caps["name"]), rest))
}

struct SectionBody<'a> {
    offset: usize,
    inline: &'a str,
    lines: Vec<Line<'a>>,
}

fn offset_in(raw: &str, part: &str) -> usize {
    part.as_ptr() as usize - raw.as_ptr() as usize
}

fn join_trimmed<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    let joined = parts.map(str::trim).collect::<Vec<_>>().join("\n");
    joined.trim().to_string()
}

impl SectionBody<'_> {
    fn text(&self) -> String {
        join_trimmed(std::iter::once(self.inline).chain(self.lines.iter().map(|l| l.text)))
    }
}

fn split_phrase(rest: &str, bold_open: bool) -> (&str, &str) {
    const SEPARATORS: [&str; 5] = [":", " - ", " – ", " — ", " ("];
    let closing = |s: &str| s.find("**").or_else(|| s.find("__"));
    if bold_open {
        if let Some(end) = closing(rest) {
            return (&rest[..end], &rest[end + 2..]);
        }
    } else if rest.starts_with("**") || rest.starts_with("__") {
        if let Some(end) = closing(&rest[2..]) {
            return (&rest[2..2 + end], &rest[4 + end..]);
        }
    }
    let cut = SEPARATORS
        .iter()
        .filter_map(|sep| rest.find(sep))
        .min()
        .unwrap_or(rest.len());
    (&rest[..cut], &rest[cut..])
}

fn strip_separator(s: &str) -> &str {
    s.trim_start()
        .trim_start_matches([':', '-', '–', '—'])
        .trim_start()
}

struct Item<'a> {
    phrase: &'a str,
    first: &'a str,
    more: Vec<&'a str>,
}

fn parse_items<'a>(body: &SectionBody<'a>) -> Vec<Item<'a>> {
    let mut items: Vec<Item<'a>> = Vec::new();
    // Whether the current item still accepts continuation lines.
    let mut open = false;
    let mut after_blank = false;
    let all_lines = std::iter::once(body.inline).chain(body.lines.iter().map(|l| l.text));
    for text in all_lines {
        if let Some(caps) = item_re().captures(text) {
            let bold_open = caps.name("open").is_some() != caps.name("close").is_some();
            let rest = caps.name("rest").map_or("", |m| m.as_str());
            let (phrase, after) = split_phrase(rest, bold_open);
            items.push(Item {
                phrase: phrase.trim(),
                first: strip_separator(after),
                more: Vec::new(),
            });
            open = true;
            after_blank = false;
            continue;
        }
        if text.trim().is_empty() {
            after_blank = true;
            continue;
        }
        let indented = text.starts_with(char::is_whitespace);
        if after_blank && !indented {
            open = false;
        }
        after_blank = false;
        if open {
            if let Some(item) = items.last_mut() {
                item.more.push(text);
            }
        }
    }
    items
}

/// Parses with the bundled synonym table.
pub fn parse_plan(raw: &str) -> Result<PlanResponse, ParseError> {
    parse_plan_with(raw, SynonymTable::builtin())
}

pub fn parse_plan_with(raw: &str, synonyms: &SynonymTable) -> Result<PlanResponse, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut bodies: [Option<SectionBody<'_>>; 3] = [None, None, None];
    let mut current: Option<usize> = None;
    for line in lines(raw) {
        if let Some((section, inline)) = detect_heading(line.text) {
            let idx = section as usize;
            if bodies[idx].is_some() {
                return Err(ParseError::DuplicateSection {
                    section,
                    offset: line.offset,
                });
            }
            bodies[idx] = Some(SectionBody {
                offset: line.offset,
                inline,
                lines: Vec::new(),
            });
            current = Some(idx);
        } else if let Some(idx) = current {
            if let Some(body) = bodies[idx].as_mut() {
                body.lines.push(line);
            }
        }
    }
    for section in Section::ALL {
        if bodies[section as usize].is_none() {
            return Err(ParseError::MissingSection {
                section,
                offset: raw.len(),
            });
        }
    }
    let [Some(progress), Some(safety), Some(actions)] = bodies else {
        unreachable!("all sections checked above");
    };

    let items = parse_items(&actions);
    if items.len() < 3 {
        return Err(ParseError::TooFewActions {
            found: items.len(),
            offset: actions.offset,
        });
    }
    let mut ranked = Vec::with_capacity(3);
    for item in items.into_iter().take(3) {
        let label = synonyms
            .lookup(item.phrase)
            .map_err(|_| ParseError::UnknownAction {
                phrase: item.phrase.to_string(),
                offset: offset_in(raw, item.phrase),
            })?;
        ranked.push(RankedAction {
            label,
            rationale: join_trimmed(std::iter::once(item.first).chain(item.more)),
            raw_phrase: item.phrase.to_string(),
        });
    }
    let ranked_actions: [RankedAction; 3] = ranked.try_into().expect("exactly three taken");
    Ok(PlanResponse {
        progress_assessment: progress.text(),
        safety_considerations: safety.text(),
        ranked_actions,
    })
}
