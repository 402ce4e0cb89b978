//! Test report types and writers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{ActionKind, AppInfo};
use crate::memorizer::{ExecutedAction, OperationMemorizer};

/// One widget action in the replayable trace format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub source_activity: String,
    pub widget_key: String,
    pub action: ActionKind,
    pub payload: Option<String>,
}

impl TraceStep {
    pub fn from_action(action: &ExecutedAction) -> Self {
        TraceStep {
            source_activity: action.source_activity.clone(),
            widget_key: action.widget_key.clone(),
            action: action.action,
            payload: action.input_payload.clone(),
        }
    }
}

/// One line of the actions log: the executed action plus its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub action: ExecutedAction,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crash_message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub message: String,
    /// Executed actions from the start of the run through the crashing one;
    /// replaying this prefix on a fresh simulator reproduces the crash.
    pub trace: Vec<TraceStep>,
    pub at_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub turn: u64,
    pub elapsed_ms: u64,
    pub activities_covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub app_name: String,
    pub activities_declared: Vec<String>,
    pub activities_covered: Vec<String>,
    pub activities_covered_count: usize,
    pub widgets_covered: usize,
    pub activity_coverage: f64,
    pub steps_executed: u64,
    pub oracle_turns: u64,
    pub test_prompts_issued: u64,
    pub feedback_prompts_issued: u64,
    pub fallback_actions: u64,
    pub adapter_resets: u64,
    pub crashes: Vec<CrashReport>,
    pub coverage_over_time: Vec<CoveragePoint>,
    pub termination: String,
    pub seed: u64,
    pub transcript_path: Option<String>,
    pub actions_path: Option<String>,
}

/// Coverage counters derived from the memorizer.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMetrics {
    pub activities_covered: Vec<String>,
    pub widgets_covered: usize,
    pub activity_coverage: f64,
}

/// Distinct declared activities visited, distinct (activity, widget) pairs
/// operated, and the coverage ratio. Crash deduplication happens where
/// crashes are recorded, keyed on (message, final action).
pub fn compute_metrics(memorizer: &OperationMemorizer, app_info: &AppInfo) -> CoverageMetrics {
    let mut covered: Vec<String> = app_info
        .activities
        .iter()
        .filter(|a| memorizer.page_visit_count(a) > 0)
        .cloned()
        .collect();
    covered.sort();
    let total = app_info.activities.len();
    let coverage = if total == 0 { 0.0 } else { covered.len() as f64 / total as f64 };
    CoverageMetrics {
        activity_coverage: coverage,
        widgets_covered: memorizer.distinct_widgets_operated(),
        activities_covered: covered,
    }
}

/// Deduplication key for crashes: message plus the final action of the trace.
pub fn crash_dedup_key(message: &str, trace: &[TraceStep]) -> String {
    match trace.last() {
        Some(step) => format!(
            "{message}|{}|{}|{}",
            step.source_activity,
            step.widget_key,
            step.action.word()
        ),
        None => message.to_string(),
    }
}

pub fn write_actions_jsonl<W: Write>(records: &[ActionRecord], mut out: W) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

impl TestReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable run summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("app: {}\n", self.app_name));
        out.push_str(&format!(
            "activity coverage: {:.2} ({}/{})\n",
            self.activity_coverage,
            self.activities_covered_count,
            self.activities_declared.len()
        ));
        out.push_str(&format!("activities covered: {}\n", self.activities_covered.join(", ")));
        out.push_str(&format!("widgets covered: {}\n", self.widgets_covered));
        out.push_str(&format!("steps executed: {}\n", self.steps_executed));
        out.push_str(&format!(
            "oracle turns: {} (test {}, feedback {})\n",
            self.oracle_turns, self.test_prompts_issued, self.feedback_prompts_issued
        ));
        out.push_str(&format!(
            "fallback actions: {}, adapter resets: {}\n",
            self.fallback_actions, self.adapter_resets
        ));
        out.push_str(&format!("crashes: {}\n", self.crashes.len()));
        for crash in &self.crashes {
            out.push_str(&format!("  - {} (after step {})\n", crash.message, crash.at_step));
        }
        out.push_str(&format!("termination: {}\n", self.termination));
        out
    }
}
