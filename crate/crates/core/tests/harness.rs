mod common;

use std::fs;

use common::Synthetic;
use dynbo::error::Error;
use dynbo::geometry::{iou, BoundingBox};
use dynbo::harness::{
    emit_report, load_sequence, mean_std, run_baseline_tm, run_eval, ReportFormat, SdbtaTracker, SequenceTracker,
};
use dynbo::par::Exec;
use dynbo::similarity::{Frame, NccOracle};
use dynbo::tracker::TrackerConfig;

struct GroundTruthStub(Vec<BoundingBox>);

impl SequenceTracker for GroundTruthStub {
    fn name(&self) -> String {
        "truth".into()
    }
    fn init(&mut self, _: &Frame, _: BoundingBox) -> dynbo::Result<()> {
        Ok(())
    }
    fn track(&mut self, frame: &Frame) -> dynbo::Result<BoundingBox> {
        Ok(self.0[frame.index])
    }
    fn oracle_calls(&self) -> u64 {
        0
    }
}

struct FixedStub(Option<BoundingBox>);

impl SequenceTracker for FixedStub {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn init(&mut self, _: &Frame, b: BoundingBox) -> dynbo::Result<()> {
        self.0 = Some(b);
        Ok(())
    }
    fn track(&mut self, _: &Frame) -> dynbo::Result<BoundingBox> {
        Ok(self.0.unwrap())
    }
    fn oracle_calls(&self) -> u64 {
        0
    }
}

struct FailsAt(usize);

impl SequenceTracker for FailsAt {
    fn name(&self) -> String {
        "fails".into()
    }
    fn init(&mut self, _: &Frame, _: BoundingBox) -> dynbo::Result<()> {
        Ok(())
    }
    fn track(&mut self, frame: &Frame) -> dynbo::Result<BoundingBox> {
        if frame.index == self.0 {
            Err(Error::Precondition("service went away".into()))
        } else {
            Ok(BoundingBox::new(20.0, 20.0, 10.0, 10.0))
        }
    }
    fn oracle_calls(&self) -> u64 {
        0
    }
}

#[test]
fn load_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 3,
        ..Default::default()
    };
    seq.write(dir.path());

    fs::rename(dir.path().join("groundtruth.txt"), dir.path().join("gt.bak")).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::MissingGroundTruth(_))));

    fs::write(dir.path().join("groundtruth.txt"), "1,2,3,4\n1,2,3,4\n").unwrap();
    assert!(matches!(
        load_sequence(dir.path()),
        Err(Error::CountMismatch { frames: 3, boxes: 2 })
    ));

    fs::write(dir.path().join("groundtruth.txt"), "1,2,3,4\n1,2,3,4\n1,2,oops,4\n").unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn frames_sort_by_name_and_ignore_other_files() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 3,
        ..Default::default()
    }
    .write(dir.path());
    fs::write(dir.path().join("notes.txt"), "x").unwrap();
    let again = load_sequence(dir.path()).unwrap();
    assert_eq!(again, seq);
    let names: Vec<_> = seq
        .frames
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["frame_0001.png", "frame_0002.png", "frame_0003.png"]);
    assert_eq!(seq.ground_truth[1], BoundingBox::from_top_left(42.0, 52.0, 32.0, 32.0));
}

#[test]
fn ground_truth_tracker_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 4,
        ..Default::default()
    }
    .write(dir.path());
    let r = run_eval(&mut GroundTruthStub(seq.ground_truth.clone()), &seq).unwrap();
    assert_eq!(r.trace, vec![1.0; 3]);
    assert_eq!((r.mean_iou, r.std_iou), (1.0, 0.0));
    assert!(r.incomplete.is_none());
}

#[test]
fn fixed_box_trace_is_pure_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 5,
        ..Default::default()
    }
    .write(dir.path());
    let r = run_eval(&mut FixedStub(None), &seq).unwrap();
    let expected: Vec<f64> = (1..5)
        .map(|t| iou(&seq.ground_truth[0], &seq.ground_truth[t]).unwrap())
        .collect();
    assert_eq!(r.trace, expected);
    let (m, s) = mean_std(&expected);
    assert_eq!((r.mean_iou, r.std_iou), (m, s));
}

#[test]
fn failure_gives_partial_incomplete_report() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 5,
        ..Default::default()
    }
    .write(dir.path());
    let r = run_eval(&mut FailsAt(3), &seq).unwrap();
    assert_eq!(r.trace.len(), 2);
    assert!(r.incomplete.as_deref().unwrap().contains("service went away"));
}

#[test]
fn static_pair_self_match() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 2,
        velocity: [0.0, 0.0],
        ..Default::default()
    }
    .write(dir.path());
    let tm = run_baseline_tm(&seq, 1, Exec::default()).unwrap();
    assert!(tm.trace[0] >= 0.9, "tm {:?}", tm.trace);
    let mut sdbta = SdbtaTracker::new(NccOracle::new(), TrackerConfig::default());
    let r = run_eval(&mut sdbta, &seq).unwrap();
    assert!(r.trace[0] >= 0.9, "sdbta {:?}", r.trace);
    assert_eq!(r.oracle_calls, 240);
}

#[test]
fn tm_stride_as_large_as_region_keeps_box() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 3,
        ..Default::default()
    }
    .write(dir.path());
    let r = run_baseline_tm(&seq, 128, Exec::Serial).unwrap();
    assert_eq!(r.oracle_calls, 2);
    let c0 = seq.ground_truth[0];
    assert!(r.boxes.iter().all(|b| (b.cx, b.cy) == (c0.cx, c0.cy)));
    assert_eq!(r.metadata_value("tm.max_candidates_per_frame"), Some("1"));
}

#[test]
fn tm_issues_far_more_calls_on_a_160px_region() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        width: 400,
        height: 400,
        frames: 2,
        size: 40.0,
        start: [180.0, 180.0],
        velocity: [1.0, 0.0],
        ..Default::default()
    }
    .write(dir.path());
    let tm = run_baseline_tm(&seq, 1, Exec::default()).unwrap();
    assert_eq!(tm.metadata_value("tm.max_candidates_per_frame"), Some("25921"));
    assert!(tm.oracle_calls > 20 * 3 * 80);
}

#[test]
fn reports_recompute_from_trace() {
    let dir = tempfile::tempdir().unwrap();
    let seq = Synthetic {
        frames: 4,
        ..Default::default()
    }
    .write(dir.path());
    let a = run_eval(&mut FixedStub(None), &seq).unwrap();
    let b = run_eval(&mut GroundTruthStub(seq.ground_truth.clone()), &seq).unwrap();
    let files = emit_report(&[a.clone(), b], ReportFormat::Csv).unwrap();
    assert_eq!(files.len(), 3);
    let summary = String::from_utf8(files[2].bytes.clone()).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let (m, s) = mean_std(&a.trace);
    assert!((row[1].parse::<f64>().unwrap() - m).abs() < 5e-7);
    assert!((row[2].parse::<f64>().unwrap() - s).abs() < 5e-7);
    assert_eq!(row[3], "3");
}
