use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fixtures::{corrupt, random_plan};
use super::*;
use crate::domain::ActionLabel::*;
use crate::domain::SynonymTable;

const WELL_FORMED: &str = "\
Here is my analysis.

**1. Progress Assessment:**
Calot's triangle is partially dissected; the cystic duct is visible.

**2. Safety Considerations:**
Avoid thermal injury near the common bile duct.

**3. Ready-to-Execute Actions:**
1. **Dissection**: Continue clearing the hepatocystic triangle.
2. **Vessel Clipping** - Clip the cystic artery once the critical view is achieved.
   Two clips proximally.
3. Coagulation: Control minor oozing from the liver bed.
";

#[test]
fn well_formed_response() {
    let plan = parse_plan(WELL_FORMED).unwrap();
    assert_eq!(
        plan.ranked_labels(),
        [Dissection, VesselClipping, Coagulation]
    );
    assert_eq!(
        plan.progress_assessment,
        "Calot's triangle is partially dissected; the cystic duct is visible."
    );
    assert_eq!(
        plan.ranked_actions[1].rationale,
        "Clip the cystic artery once the critical view is achieved.\nTwo clips proximally."
    );
    assert_eq!(plan.ranked_actions[1].raw_phrase, "Vessel Clipping");
}

#[test]
fn two_actions_is_too_few() {
    let raw = "## Progress Assessment\nok\n## Safety Considerations\nok\n## Ready-to-Execute Actions\n1. Dissection: a\n2. Coagulation: b\n";
    assert!(matches!(
        parse_plan(raw),
        Err(ParseError::TooFewActions { found: 2, .. })
    ));
}

#[test]
fn missing_and_duplicate_sections() {
    let raw = "## Progress Assessment\nok\n## Ready-to-Execute Actions\n1. Dissection\n2. Dissection\n3. Dissection\n";
    assert!(matches!(
        parse_plan(raw),
        Err(ParseError::MissingSection { section: Section::SafetyConsiderations, offset }) if offset == raw.len()
    ));
    let raw = "Progress Assessment: a\nSafety considerations: b\nprogress assessment: c\n";
    assert!(matches!(
        parse_plan(raw),
        Err(ParseError::DuplicateSection {
            section: Section::ProgressAssessment,
            offset: 48
        })
    ));
    assert_eq!(parse_plan("  \n"), Err(ParseError::EmptyInput));
}

#[test]
fn unknown_action_reports_offset() {
    let raw = "## Progress Assessment\nok\n## Safety Considerations\nok\n## Ready-to-Execute Actions\n1. Dissection: a\n2. Irrigation: b\n3. Dissection: c\n";
    let err = parse_plan(raw).unwrap_err();
    let ParseError::UnknownAction { phrase, offset } = err else {
        panic!("wrong error {err:?}");
    };
    assert_eq!(phrase, "Irrigation");
    assert_eq!(&raw[offset..offset + phrase.len()], "Irrigation");
}

#[test]
fn tolerant_markers_and_headings() {
    let raw = "\
# PROGRESS ASSESSMENT
Going well.
### safety consideration
Watch the duct.
Ready to execute actions:
First: **suction** to clear the field
Second, Tissue Retraction — expose the triangle
Rank 3: retract tissue (keep tension)
4. Dissection: ignored extra
";
    let plan = parse_plan(raw).unwrap();
    assert_eq!(
        plan.ranked_labels(),
        [Aspiration, TissueRetraction, TissueRetraction]
    );
    assert_eq!(plan.ranked_actions[0].rationale, "to clear the field");
    assert_eq!(plan.ranked_actions[2].rationale, "(keep tension)");
    assert_eq!(plan.safety_considerations, "Watch the duct.");
}

#[test]
fn inline_heading_text() {
    let raw = "Progress Assessment: early phase\nSafety Considerations: none noted\nReady-to-Execute Actions:\n(1) Dissection\n(2) Dissection\n(3) Coagulation\n";
    let plan = parse_plan(raw).unwrap();
    assert_eq!(plan.progress_assessment, "early phase");
    assert_eq!(plan.ranked_actions[0].rationale, "");
    // Duplicates are preserved.
    assert_eq!(plan.ranked_labels(), [Dissection, Dissection, Coagulation]);
}

#[test]
fn bold_wrapped_marker() {
    let raw = "## Progress Assessment\na\n## Safety Considerations\nb\n## Ready-to-Execute Actions\n**1. Vessel Clipping**: clip it\n**2.** Dissection: go on\n- 3) **Aspiration:** clear smoke\n";
    let plan = parse_plan(raw).unwrap();
    assert_eq!(
        plan.ranked_labels(),
        [VesselClipping, Dissection, Aspiration]
    );
    assert_eq!(plan.ranked_actions[2].rationale, "clear smoke");
}

#[test]
fn trailing_prose_not_absorbed() {
    let raw = "## Progress Assessment\na\n## Safety Considerations\nb\n## Ready-to-Execute Actions\n1. Dissection: x\n2. Dissection: y\n3. Dissection: z\n   more z\n\nOverall the plan is sound.\n";
    let plan = parse_plan(raw).unwrap();
    assert_eq!(plan.ranked_actions[2].rationale, "z\nmore z");
}

#[test]
fn labels_trace_to_input_substrings() {
    let plan = parse_plan(WELL_FORMED).unwrap();
    for action in &plan.ranked_actions {
        assert!(WELL_FORMED.contains(&action.raw_phrase));
    }
}

#[test]
fn corrupted_fixtures_fail_as_expected() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let table = SynonymTable::builtin();
    for kind in 0..60 {
        let plan = random_plan(&mut rng, table);
        let (text, expected) = corrupt(&mut rng, &plan, kind);
        let err = parse_plan(&text).unwrap_err();
        assert!(
            expected.matches(&err),
            "kind {kind}: expected {expected:?}, got {err:?}\n{text}"
        );
    }
}

proptest! {
    #[test]
    fn render_then_parse_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = random_plan(&mut rng, SynonymTable::builtin());
        let parsed = parse_plan(&render_fixture(&plan)).unwrap();
        prop_assert_eq!(parsed, plan);
    }

    #[test]
    fn parser_never_panics(raw in "\\PC{0,400}") {
        let _ = parse_plan(&raw);
    }
}
