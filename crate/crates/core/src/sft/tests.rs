use super::*;
use crate::domain::ActionLabel::{self, *};
use crate::gateway::mock::{plan_text, MockCaptioner, MockPlanner, MockPolicy, SequenceBackend};

struct Fixture {
    _dir: tempfile::TempDir,
    layout: FrameLayout,
    samples: Vec<PlanningSample>,
}

fn fixture(n: usize, split: Split) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let layout = FrameLayout::with_root(dir.path());
    let samples = (0..n)
        .map(|i| {
            let video = format!("VID{:02}", i % 3);
            let frame = layout.frame_ref(&video, 10 * i as u64 + 9);
            std::fs::create_dir_all(frame.path.parent().unwrap()).unwrap();
            std::fs::write(&frame.path, format!("png {i}")).unwrap();
            PlanningSample {
                video_id: video,
                step_index: i + 1,
                history_labels: vec![Dissection],
                near_frame: frame,
                current_label: Coagulation,
                current_clip_start: 10 * i as u64,
                current_clip_end: 10 * i as u64 + 9,
                target_next: ActionLabel::ALL[i % 5],
                lookahead_next: Some(ActionLabel::ALL[(i + 1) % 5]),
                split: Some(split),
            }
        })
        .collect();
    Fixture {
        _dir: dir,
        layout,
        samples,
    }
}

fn setup<'a>(
    f: &'a Fixture,
    teacher: &'a dyn Backend,
    captioner: Option<&'a dyn Backend>,
    variant: MemoryVariant,
    parts: &'a (PromptFactory, Goal),
) -> DistillSetup<'a> {
    DistillSetup {
        teacher,
        captioner,
        variant,
        factory: &parts.0,
        kb: KnowledgeBase::builtin(),
        goal: &parts.1,
        synonyms: SynonymTable::builtin(),
        layout: &f.layout,
        parallelism: 1,
    }
}

fn parts() -> (PromptFactory, Goal) {
    (PromptFactory::default(), Goal::default())
}

#[test]
fn valid_teacher_yields_one_record_per_sample() {
    let f = fixture(10, Split::Train);
    let teacher = MockPlanner::new(MockPolicy::Oracle);
    let p = parts();
    let out = distill(
        &f.samples,
        &setup(&f, &teacher, None, MemoryVariant::DirNhfm, &p),
    )
    .unwrap();
    assert_eq!(out.records.len(), 10);
    assert!(out.exclusions.is_empty());
    let r = &out.records[0];
    assert_eq!(r.images.len(), 1);
    assert_eq!(r.images[0].path, PathBuf::from("VID00/000009.png"));
    assert_eq!(r.images[0].sha256, sha256_hex(b"png 0"));
    assert!(r.messages[1].content.starts_with(IMAGE_TOKEN));
    assert_eq!(r.teacher_model, "mock:oracle");
}

#[test]
fn malformed_teacher_response_is_excluded_and_logged() {
    let f = fixture(10, Split::Train);
    let good = plan_text([Dissection, Coagulation, Aspiration], "fixed");
    let mut replies = vec![good.clone(); 10];
    replies[4] = "I cannot help with that.".into();
    let teacher = SequenceBackend::new(replies);
    let p = parts();
    let out = distill(
        &f.samples,
        &setup(&f, &teacher, None, MemoryVariant::DirNhfm, &p),
    )
    .unwrap();
    assert_eq!(out.records.len(), 9);
    assert_eq!(out.exclusions.len(), 1);
    assert_eq!(out.exclusions[0].step_index, 5);
    assert!(out.exclusions[0].reason.starts_with("parse gate"));
}

#[test]
fn indirect_variant_has_no_images() {
    let f = fixture(4, Split::Train);
    let teacher = MockPlanner::new(MockPolicy::Oracle);
    let captioner = MockCaptioner::describing();
    let p = parts();
    let s = setup(&f, &teacher, Some(&captioner), MemoryVariant::IndirNhfm, &p);
    let out = distill(&f.samples, &s).unwrap();
    assert_eq!(out.records.len(), 4);
    assert!(out.records.iter().all(|r| r.images.is_empty()));
    assert!(!out.records[0].messages[1].content.contains(IMAGE_TOKEN));
    assert_eq!(captioner.calls(), 4);
}

#[test]
fn rejects_test_split_and_ablation_variants() {
    let f = fixture(2, Split::Test);
    let teacher = MockPlanner::new(MockPolicy::Oracle);
    let p = parts();
    assert!(matches!(
        distill(
            &f.samples,
            &setup(&f, &teacher, None, MemoryVariant::DirNhfm, &p)
        ),
        Err(SftError::NotTrainSample { .. })
    ));
    let f = fixture(2, Split::Train);
    assert!(matches!(
        distill(
            &f.samples,
            &setup(&f, &teacher, None, MemoryVariant::AblationI, &p)
        ),
        Err(SftError::UnsupportedVariant(_))
    ));
    assert_eq!(teacher.calls(), 0);
}

fn records(n: usize) -> (Fixture, Vec<SftRecord>) {
    let f = fixture(n, Split::Train);
    let teacher = MockPlanner::new(MockPolicy::Oracle);
    let p = parts();
    let out = distill(
        &f.samples,
        &setup(&f, &teacher, None, MemoryVariant::DirNhfm, &p),
    )
    .unwrap();
    (f, out.records)
}

#[test]
fn export_is_sorted_and_byte_stable() {
    let (_f, mut recs) = records(2);
    recs.reverse();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let none = BTreeSet::new();
    let manifest = export(&recs, &path, &none, SynonymTable::builtin(), 0).unwrap();
    let first = std::fs::read(&path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"video_id\":\"VID00\""));
    assert!(lines[0].contains("VID00/000009.png"));
    assert!(lines[0].contains(&sha256_hex(b"png 0")));
    assert_eq!(manifest.records, 2);
    assert_eq!(manifest.per_variant["dir-nhfm"], 2);
    assert!(manifest_path(&path).is_file());

    recs.reverse();
    export(&recs, &path, &none, SynonymTable::builtin(), 0).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
    assert_eq!(read_export(&path).unwrap(), {
        let mut r = recs.clone();
        r.sort_by_key(|r| (r.video_id.clone(), r.step_index));
        r
    });
}

#[test]
fn export_refuses_test_videos_and_unparseable_assistants() {
    let (_f, recs) = records(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let test: BTreeSet<String> = ["VID01".to_string()].into();
    assert!(matches!(
        export(&recs, &path, &test, SynonymTable::builtin(), 0),
        Err(SftError::TestSplitLeak { .. })
    ));
    assert!(!path.exists());

    let mut broken = recs.clone();
    broken[0].messages.last_mut().unwrap().content = "no plan here".into();
    assert!(matches!(
        export(&broken, &path, &BTreeSet::new(), SynonymTable::builtin(), 0),
        Err(SftError::UnparseableAssistant { .. })
    ));
}

#[test]
fn sampling_is_deterministic() {
    let (_f, recs) = records(6);
    let a = sample_records(&recs, 4, 7);
    assert_eq!(a.len(), 4);
    assert_eq!(a, sample_records(&recs, 4, 7));
    assert_eq!(sample_records(&recs, 100, 7).len(), 6);
}
