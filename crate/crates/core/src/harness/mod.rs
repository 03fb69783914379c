//! Evaluation harness: sequence loading, IOU evaluation, the template
//! matching baseline, report emission and the synthetic moving-peak runs.

mod baseline;
mod dop_bench;
mod eval;
mod report;
mod sequence;

pub use self::baseline::{run_baseline_tm, tm_candidates, TemplateMatcher};
pub use self::dop_bench::{run_dop_benchmark, DopBenchConfig, DopFrameRow, DopRun, START_RANGE};
pub use self::eval::{mean_std, run_eval, EvalReport, SdbtaTracker, SequenceTracker};
pub use self::report::{emit_report, write_report_files, ReportFile, ReportFormat, REPORT_JSON, SUMMARY_CSV};
pub use self::sequence::{load_sequence, parse_groundtruth, parse_groundtruth_line, Sequence, GROUND_TRUTH_FILE};
