use proptest::prelude::*;

use super::*;
use crate::domain::ActionLabel::{self, *};

fn rec(
    video: &str,
    step: usize,
    ranked: &[ActionLabel],
    target: ActionLabel,
    next: Option<ActionLabel>,
) -> PredictionRecord {
    PredictionRecord {
        video_id: video.into(),
        step_index: step,
        ranked_labels: ranked.to_vec(),
        target_next: target,
        lookahead_next: next,
    }
}

/// `hits` correct records followed by misses, all in one video.
fn fraction(hits: usize, total: usize) -> Vec<PredictionRecord> {
    (0..total)
        .map(|i| {
            let ranked = if i < hits { [Dissection] } else { [Aspiration] };
            rec("v", i, &ranked, Dissection, Some(Coagulation))
        })
        .collect()
}

#[test]
fn all_rank_one_hits_score_100() {
    let records = fraction(5, 5);
    for k in 1..=3 {
        assert_eq!(format_percent(slacc_topk(&records, k).unwrap()), "100.00");
        assert_eq!(format_percent(vlacc_topk(&records, k).unwrap()), "100.00");
    }
}

#[test]
fn standard_fractions_format_like_the_published_table() {
    for (hits, want) in [(26, "45.61"), (36, "63.16"), (38, "66.67")] {
        let v = slacc_topk(&fraction(hits, 57), 1).unwrap();
        assert_eq!(format_percent(v), want);
    }
}

#[test]
fn relaxed_fractions_format_like_the_published_table() {
    for (hits, want) in [(29, "67.44"), (42, "97.67"), (41, "95.35"), (36, "83.72")] {
        let mut records = fraction(hits, 43);
        // Records without a lookahead must not move the relaxed denominator.
        records.extend((0..14).map(|i| rec("v", 100 + i, &[VesselClipping], Dissection, None)));
        let v = reacc_topk(
            &records,
            1,
            Level::Sample,
            RelaxedPolicy::ExcludeMissingLookahead,
        )
        .unwrap();
        assert_eq!(format_percent(v), want);
    }
}

/// Every numerator n in 0..=d whose percentage formats to `shown`.
fn numerators(shown: &str, d: usize) -> Vec<usize> {
    (0..=d)
        .filter(|&n| format_percent(n as f64 / d as f64 * 100.0) == shown)
        .collect()
}

#[test]
fn denominator_search_recovers_unique_numerators() {
    assert_eq!(numerators("45.61", 57), vec![26]);
    assert_eq!(numerators("63.16", 57), vec![36]);
    assert_eq!(numerators("66.67", 57), vec![38]);
    assert_eq!(numerators("67.44", 43), vec![29]);
    assert_eq!(numerators("97.67", 43), vec![42]);
    assert_eq!(numerators("95.35", 43), vec![41]);
    assert_eq!(numerators("83.72", 43), vec![36]);
    // The relaxed cells do not fit the standard denominator.
    assert!(numerators("67.44", 57).is_empty());
    assert!(numerators("97.67", 57).is_empty());
}

#[test]
fn format_percent_rounds_half_up() {
    assert_eq!(format_percent(0.0), "0.00");
    assert_eq!(format_percent(100.0), "100.00");
    assert_eq!(format_percent(12.345), "12.35");
    assert_eq!(format_percent(12.344999), "12.34");
    assert_eq!(format_percent(100.0 / 3.0), "33.33");
    assert_eq!(format_percent(200.0 / 3.0), "66.67");
}

#[test]
fn duplicate_labels_waste_a_slot() {
    let records = [rec(
        "v",
        1,
        &[Dissection, Dissection, TissueRetraction],
        TissueRetraction,
        None,
    )];
    assert_eq!(slacc_topk(&records, 2).unwrap(), 0.0);
    assert_eq!(slacc_topk(&records, 3).unwrap(), 100.0);
    assert_eq!(
        brute_force_oracle(&records, Condition::Standard, Level::Sample, 2),
        Some(0.0)
    );
}

#[test]
fn video_level_is_unweighted_mean() {
    let records = [
        rec("a", 1, &[Dissection], Dissection, None),
        rec("b", 1, &[Aspiration], Dissection, None),
        rec("b", 2, &[Aspiration], Dissection, None),
    ];
    assert_eq!(format_percent(slacc_topk(&records, 1).unwrap()), "33.33");
    assert_eq!(format_percent(vlacc_topk(&records, 1).unwrap()), "50.00");
}

#[test]
fn single_video_level_equals_sample_level() {
    let records = fraction(3, 7);
    assert_eq!(
        slacc_topk(&records, 1).unwrap(),
        vlacc_topk(&records, 1).unwrap()
    );
}

#[test]
fn relaxed_target_set_semantics() {
    let r = rec(
        "v",
        1,
        &[Dissection],
        TissueRetraction,
        Some(VesselClipping),
    );
    assert_eq!(
        relaxed_target_set(&r, RelaxedPolicy::default()),
        RelaxedTargets::Included([TissueRetraction, VesselClipping].into())
    );
    let same = rec(
        "v",
        1,
        &[Dissection],
        TissueRetraction,
        Some(TissueRetraction),
    );
    assert_eq!(
        relaxed_target_set(&same, RelaxedPolicy::default()),
        RelaxedTargets::Included([TissueRetraction].into())
    );
    let none = rec("v", 1, &[Dissection], TissueRetraction, None);
    assert_eq!(
        relaxed_target_set(&none, RelaxedPolicy::default()),
        RelaxedTargets::Excluded
    );
    assert_eq!(
        relaxed_target_set(&none, RelaxedPolicy::TargetOnly),
        RelaxedTargets::Included([TissueRetraction].into())
    );
}

#[test]
fn lookahead_match_is_relaxed_hit_only() {
    let records = [rec(
        "v",
        1,
        &[VesselClipping],
        TissueRetraction,
        Some(VesselClipping),
    )];
    assert_eq!(slacc_topk(&records, 1).unwrap(), 0.0);
    assert_eq!(
        reacc_topk(&records, 1, Level::Sample, RelaxedPolicy::default()).unwrap(),
        100.0
    );
}

#[test]
fn errors() {
    assert_eq!(slacc_topk(&[], 1), Err(MetricsError::EmptyRecordSet));
    assert_eq!(
        slacc_topk(&fraction(1, 1), 0),
        Err(MetricsError::InvalidK(0))
    );
    assert_eq!(
        slacc_topk(&fraction(1, 1), 4),
        Err(MetricsError::InvalidK(4))
    );
    let no_lookahead = [rec("v", 1, &[Dissection], Dissection, None)];
    assert_eq!(
        reacc_topk(&no_lookahead, 1, Level::Video, RelaxedPolicy::default()),
        Err(MetricsError::EmptyRecordSet)
    );
    let empty_rank = [rec("v", 1, &[], Dissection, None)];
    assert!(matches!(
        slacc_topk(&empty_rank, 1),
        Err(MetricsError::BadRanking { len: 0, .. })
    ));
}

#[test]
fn evaluate_reports_denominators_and_exclusions() {
    let records = [
        rec("a", 1, &[Dissection], Dissection, Some(Coagulation)),
        rec("a", 2, &[Coagulation], Dissection, None),
        rec(
            "b",
            1,
            &[Aspiration, Coagulation],
            Coagulation,
            Some(Aspiration),
        ),
    ];
    let unscored = [Exclusion {
        video_id: "b".into(),
        step_index: 2,
        reason: "unparseable response".into(),
    }];
    let report = evaluate(&records, RelaxedPolicy::default(), &unscored).unwrap();
    assert_eq!(report.n_samples, 3);
    assert_eq!(report.n_videos, 2);
    assert_eq!(report.n_relaxed_samples, 2);
    assert_eq!(report.n_relaxed_videos, 2);
    assert_eq!(report.excluded.len(), 2);
    assert_eq!(report.excluded[1].reason, "unparseable response");
    assert!(report.cells().iter().all(Option::is_some));
    assert_eq!(report.re_slacc.unwrap(), [100.0; 3]);

    let table = render_table(&[("mock".to_string(), &report)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0].split('\t').count(), 18);
    assert_eq!(
        lines[1],
        "mock\t33.33\t66.67\t66.67\t25.00\t75.00\t75.00\t100.00\t100.00\t100.00\t100.00\t100.00\t100.00\t3\t2\t2\t2\t2"
    );
    assert!(lines[2].starts_with('#'));

    let audit = audit_lines(&records, RelaxedPolicy::default());
    let audit: Vec<&str> = audit.lines().collect();
    assert_eq!(audit[0], AUDIT_HEADER);
    assert_eq!(
        audit[2],
        "a\t2\tCoagulation\tDissection\t-\t-\t0\t0\t0\texcluded\t-\t-\t-"
    );
    assert_eq!(
        audit[3],
        "b\t1\tAspiration,Coagulation\tCoagulation\tAspiration\t2\t0\t1\t1\t1\t1\t1\t1"
    );
}

fn arb_label() -> impl Strategy<Value = ActionLabel> {
    (0..ActionLabel::COUNT).prop_map(|i| ActionLabel::ALL[i])
}

fn arb_records() -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec(
        (
            0..10usize,
            prop::collection::vec(arb_label(), 1..=3),
            arb_label(),
            prop::option::of(arb_label()),
        ),
        1..80,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (v, ranked, target, next))| PredictionRecord {
                video_id: format!("video{v:02}"),
                step_index: i,
                ranked_labels: ranked,
                target_next: target,
                lookahead_next: next,
            })
            .collect()
    })
}

const FAMILIES: [(Condition, Level); 4] = [
    (Condition::Standard, Level::Sample),
    (Condition::Standard, Level::Video),
    (Condition::Relaxed, Level::Sample),
    (Condition::Relaxed, Level::Video),
];

proptest! {
    #[test]
    fn engine_matches_oracle(records in arb_records()) {
        let report = evaluate(&records, RelaxedPolicy::default(), &[]).unwrap();
        for (condition, level) in FAMILIES {
            for k in 1..=3 {
                let engine = report.get(condition, level, k);
                let oracle = brute_force_oracle(&records, condition, level, k);
                match (engine, oracle) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn accuracy_is_monotone_in_k(records in arb_records()) {
        let report = evaluate(&records, RelaxedPolicy::default(), &[]).unwrap();
        for (condition, level) in FAMILIES {
            if let (Some(a), Some(b), Some(c)) = (
                report.get(condition, level, 1),
                report.get(condition, level, 2),
                report.get(condition, level, 3),
            ) {
                prop_assert!(a <= b && b <= c);
                prop_assert!((0.0..=100.0).contains(&a) && c <= 100.0);
            }
        }
    }

    #[test]
    fn standard_hit_implies_relaxed_hit(records in arb_records()) {
        for r in &records {
            let o = record_outcome(r, RelaxedPolicy::default());
            if let (Some(s), Some(relaxed)) = (o.standard_first_hit, o.relaxed_first_hit) {
                prop_assert!(relaxed.is_some_and(|x| x <= s));
            }
        }
        let included: Vec<PredictionRecord> =
            records.iter().filter(|r| r.lookahead_next.is_some()).cloned().collect();
        if !included.is_empty() {
            for k in 1..=3 {
                let s = slacc_topk(&included, k).unwrap();
                let re = reacc_topk(&included, k, Level::Sample, RelaxedPolicy::default()).unwrap();
                prop_assert!(re >= s);
            }
        }
    }
}
