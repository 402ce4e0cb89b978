//! Orchestrates the iterative testing loop and produces reports.
//!
//! One run: render the start prompt, ask the oracle, decode the answer into
//! steps, match and execute each step, feed the outcome into the next test
//! or feedback prompt, and repeat until a budget runs out. Failed matches
//! trigger feedback prompts up to a retry cap, then a fallback action (the
//! least-visited actionable widget) keeps the run alive. Oracle or adapter
//! loss ends the run with a partial report, never a lost run.

pub mod replay;
mod report;

pub use replay::{read_trace, replay, ReplayReport};
pub use report::{
    compute_metrics, crash_dedup_key, write_actions_jsonl, ActionRecord, CoverageMetrics,
    CoveragePoint, CrashReport, TestReport, TraceStep,
};

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::hierarchy::{ActionKind, AppInfo, GuiPage};
use crate::matcher::{
    self, ActionIntent, LexicalScorer, MatchOutcome, MatcherError, NearbyMode,
};
use crate::memorizer::{widget_key, ExecutedAction, OperationMemorizer};
use crate::oracle::{
    close_session, open_session, OracleBackend, OracleConfig, OracleError, RemoteBackend,
    ScriptedBackend, SessionLog,
};
use crate::prompter::{
    Prompt, PromptKind, Prompter, PrompterConfig, PromptTemplates, StaticContext,
};
use crate::simapp::{BridgeAdapter, DeviceAdapter, SimApp, SimEngine, StepOutcome};

pub const DEFAULT_BUDGET: Duration = Duration::from_secs(30 * 60);
pub const DEFAULT_FEEDBACK_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("adapter unreachable: {0}")]
    AdapterUnreachable(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// App under test: a simulator definition file or a bridge address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppTarget {
    Sim(PathBuf),
    Bridge(String),
}

impl FromStr for AppTarget {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        if let Some(addr) = s.strip_prefix("bridge:") {
            if addr.is_empty() {
                return Err(RunError::InvalidConfig("bridge: needs HOST:PORT".into()));
            }
            Ok(AppTarget::Bridge(addr.to_string()))
        } else {
            Ok(AppTarget::Sim(PathBuf::from(s)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleTarget {
    Scripted(PathBuf),
    ScriptedInline(Vec<String>),
    Remote(String),
}

impl FromStr for OracleTarget {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        if let Some(path) = s.strip_prefix("scripted:") {
            Ok(OracleTarget::Scripted(PathBuf::from(path)))
        } else if let Some(url) = s.strip_prefix("remote:") {
            Ok(OracleTarget::Remote(url.to_string()))
        } else {
            Err(RunError::InvalidConfig(format!(
                "oracle {s:?} must be scripted:FILE or remote:URL"
            )))
        }
    }
}

/// Parses durations like `90`, `30s`, `10m`, `500ms`, `1h`.
pub fn parse_duration(s: &str) -> Result<Duration, RunError> {
    let s = s.trim();
    let bad = || RunError::InvalidConfig(format!("cannot parse duration {s:?}"));
    let (digits, unit): (String, String) = (
        s.chars().take_while(|c| c.is_ascii_digit()).collect(),
        s.chars().skip_while(|c| c.is_ascii_digit()).collect(),
    );
    let value: u64 = digits.parse().map_err(|_| bad())?;
    match unit.trim() {
        "" | "s" => Ok(Duration::from_secs(value)),
        "ms" => Ok(Duration::from_millis(value)),
        "m" => Ok(Duration::from_secs(value * 60)),
        "h" => Ok(Duration::from_secs(value * 3600)),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub app: AppTarget,
    pub oracle: OracleTarget,
    /// Manifest summary providing app info for bridge targets.
    pub manifest: Option<PathBuf>,
    pub budget: Option<Duration>,
    pub max_steps: Option<u64>,
    pub threshold: f64,
    pub max_feedback_retries: u32,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub prompt_templates: Option<PathBuf>,
    pub oracle_config: OracleConfig,
    pub nearby_mode: NearbyMode,
    pub prompter_config: PrompterConfig,
}

impl RunConfig {
    pub fn new(app: AppTarget, oracle: OracleTarget) -> Self {
        RunConfig {
            app,
            oracle,
            manifest: None,
            budget: None,
            max_steps: None,
            threshold: matcher::DEFAULT_THRESHOLD,
            max_feedback_retries: DEFAULT_FEEDBACK_RETRIES,
            seed: 0,
            out_dir: None,
            prompt_templates: None,
            oracle_config: OracleConfig::default(),
            nearby_mode: NearbyMode::WithNearby,
            prompter_config: PrompterConfig::default(),
        }
    }

    /// Wall-clock budget, defaulting to 30 minutes when neither budget nor
    /// step cap is set.
    fn effective_budget(&self) -> Option<Duration> {
        match (self.budget, self.max_steps) {
            (None, None) => Some(DEFAULT_BUDGET),
            (budget, _) => budget,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: TestReport,
    pub actions: Vec<ActionRecord>,
    pub transcript: SessionLog,
}

/// Picks the least-visited actionable widget of the page (ties keep page
/// order); `None` when the page has no actionable widget at all.
pub fn fallback_action(page: &GuiPage, memorizer: &OperationMemorizer) -> Option<ActionIntent> {
    let mut best: Option<(u64, usize)> = None;
    for (index, widget) in page.labeled() {
        if !widget.is_actionable() {
            continue;
        }
        let visits = memorizer.widget_visit_count(&page.activity_name, &widget_key(widget));
        if best.map(|(b, _)| visits < b).unwrap_or(true) {
            best = Some((visits, index));
        }
    }
    let (_, index) = best?;
    let widget = &page.widgets[index];
    let payload = (widget.action == ActionKind::Input).then(|| "1".to_string());
    Some(ActionIntent {
        step_text: format!("fallback: {} {}", widget.action.word(), widget_key(widget)),
        widget_index: index,
        widget_key: widget_key(widget),
        action: widget.action,
        payload,
        bounds: widget.bounds,
    })
}

enum NextPrompt {
    Start,
    Test,
    Feedback(String),
}

struct LoopState {
    memorizer: OperationMemorizer,
    records: Vec<ActionRecord>,
    crashes: Vec<CrashReport>,
    crash_keys: HashSet<String>,
    steps_executed: u64,
    resets: u64,
    page: GuiPage,
    started: Instant,
}

impl LoopState {
    fn execute_intent(
        &mut self,
        adapter: &mut dyn DeviceAdapter,
        intent: &ActionIntent,
    ) -> Result<StepOutcome, RunError> {
        let outcome = adapter
            .perform(intent)
            .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
        self.steps_executed += 1;
        let crash_message = outcome.crash_message().map(str::to_string);
        if crash_message.is_some() {
            adapter
                .reset()
                .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
            self.resets += 1;
        }
        let result_page = adapter
            .current_page()
            .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
        let executed = ExecutedAction {
            step_text: intent.step_text.clone(),
            widget_key: intent.widget_key.clone(),
            action: intent.action,
            input_payload: intent.payload.clone(),
            source_activity: self.page.activity_name.clone(),
            result_activity: result_page.activity_name.clone(),
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        };
        self.records.push(ActionRecord {
            seq: self.steps_executed,
            action: executed.clone(),
            outcome: outcome.word().to_string(),
            crash_message: crash_message.clone(),
        });
        self.memorizer.record(executed, &result_page);
        if let Some(message) = crash_message {
            let trace: Vec<TraceStep> = self
                .records
                .iter()
                .map(|r| TraceStep::from_action(&r.action))
                .collect();
            let key = crash_dedup_key(&message, &trace);
            if self.crash_keys.insert(key) {
                self.crashes.push(CrashReport {
                    message,
                    trace,
                    at_step: self.steps_executed,
                });
            }
        }
        self.page = result_page;
        Ok(outcome)
    }
}

/// Drives the full loop against an adapter and oracle backend.
pub fn execute(
    config: &RunConfig,
    adapter: &mut dyn DeviceAdapter,
    backend: Box<dyn OracleBackend>,
) -> Result<RunArtifacts, RunError> {
    let templates = match &config.prompt_templates {
        Some(path) => PromptTemplates::from_file(path)
            .map_err(|e| RunError::InvalidConfig(e.to_string()))?,
        None => PromptTemplates::default(),
    };
    if config.max_feedback_retries > 10_000 {
        return Err(RunError::InvalidConfig("retry cap is unreasonably large".into()));
    }
    let mut session = open_session(config.oracle_config.clone(), backend)
        .map_err(|e| RunError::InvalidConfig(e.to_string()))?;
    let mut prompter = Prompter::new(templates, config.prompter_config.clone());
    let scorer = LexicalScorer::new(config.nearby_mode);
    let app_info = adapter.app_info().clone();
    let start_page = adapter
        .current_page()
        .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;

    let mut state = LoopState {
        memorizer: OperationMemorizer::start(&start_page),
        records: Vec::new(),
        crashes: Vec::new(),
        crash_keys: HashSet::new(),
        steps_executed: 0,
        resets: 0,
        page: start_page,
        started: Instant::now(),
    };
    let budget = config.effective_budget();
    let mut next = NextPrompt::Start;
    let mut consecutive_failures: u32 = 0;
    let mut test_prompts: u64 = 0;
    let mut feedback_prompts: u64 = 0;
    let mut fallbacks: u64 = 0;
    let mut turn: u64 = 0;
    let mut coverage_points: Vec<CoveragePoint> = Vec::new();

    let sample = |turn: u64, state: &LoopState, points: &mut Vec<CoveragePoint>| {
        let metrics = compute_metrics(&state.memorizer, &app_info);
        points.push(CoveragePoint {
            turn,
            elapsed_ms: state.started.elapsed().as_millis() as u64,
            activities_covered: metrics.activities_covered.len(),
            coverage: metrics.activity_coverage,
        });
    };
    sample(0, &state, &mut coverage_points);

    let termination;
    loop {
        // Budget checks happen between oracle turns, never mid-step.
        if let Some(max) = config.max_steps {
            if state.steps_executed >= max {
                termination = "max_steps";
                break;
            }
        }
        if let Some(limit) = budget {
            if state.started.elapsed() >= limit {
                termination = "budget_exhausted";
                break;
            }
        }

        let static_ctx = StaticContext::from_page(&app_info, &state.page);
        let prompt: Prompt = match &next {
            NextPrompt::Start => prompter
                .render_start_prompt(&static_ctx)
                .expect("start prompt rendered once"),
            NextPrompt::Test => {
                let dynamic = state.memorizer.dynamic_context(&state.page);
                prompter.render_test_prompt(&dynamic, &static_ctx)
            }
            NextPrompt::Feedback(label) => prompter.render_feedback_prompt(label, &static_ctx),
        };
        let answer = match session.ask(&prompt) {
            Ok(answer) => answer,
            Err(OracleError::ScriptExhausted) => {
                termination = "script_exhausted";
                break;
            }
            Err(e) => {
                let _ = e;
                termination = "oracle_unavailable";
                break;
            }
        };
        turn += 1;
        match prompt.kind {
            PromptKind::Test => test_prompts += 1,
            PromptKind::Feedback => feedback_prompts += 1,
            PromptKind::Start => {}
        }

        let mut turn_failure: Option<String> = None;
        match matcher::split_answer(&answer.text) {
            Err(MatcherError::NoSteps) => {
                turn_failure = Some(answer.text.trim().to_string());
            }
            Err(_) => unreachable!("split_answer only fails with NoSteps"),
            Ok(steps) => {
                for step in steps {
                    let step = matcher::extract_payload(step);
                    match matcher::match_step(&step, &state.page, &scorer, config.threshold) {
                        MatchOutcome::NoMatch { .. } => {
                            // Remaining steps of this answer are discarded.
                            turn_failure = Some(step.target_phrase.clone());
                            break;
                        }
                        MatchOutcome::Match(matched) => {
                            match matcher::step_to_action(&step, &matched, &state.page) {
                                Err(_) => {
                                    turn_failure = Some(step.target_phrase.clone());
                                    break;
                                }
                                Ok(intent) => {
                                    let outcome = state.execute_intent(adapter, &intent)?;
                                    if matches!(outcome, StepOutcome::Crash(_)) {
                                        // Page changed completely; drop the rest.
                                        break;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        match turn_failure {
            None => {
                consecutive_failures = 0;
                next = NextPrompt::Test;
            }
            Some(label) => {
                consecutive_failures += 1;
                if consecutive_failures > config.max_feedback_retries {
                    consecutive_failures = 0;
                    fallbacks += 1;
                    match fallback_action(&state.page, &state.memorizer) {
                        Some(intent) => {
                            state.execute_intent(adapter, &intent)?;
                        }
                        None => {
                            // Dead end: fall back to the adapter's reset
                            // semantics (a back/home navigation).
                            adapter
                                .reset()
                                .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
                            state.resets += 1;
                            state.page = adapter
                                .current_page()
                                .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
                        }
                    }
                    next = NextPrompt::Test;
                } else {
                    next = NextPrompt::Feedback(label);
                }
            }
        }
        sample(turn, &state, &mut coverage_points);
    }

    let metrics = compute_metrics(&state.memorizer, &app_info);
    let report = TestReport {
        app_name: app_info.app_name.clone(),
        activities_declared: app_info.activities.clone(),
        activities_covered_count: metrics.activities_covered.len(),
        activities_covered: metrics.activities_covered,
        widgets_covered: metrics.widgets_covered,
        activity_coverage: metrics.activity_coverage,
        steps_executed: state.steps_executed,
        oracle_turns: turn,
        test_prompts_issued: test_prompts,
        feedback_prompts_issued: feedback_prompts,
        fallback_actions: fallbacks,
        adapter_resets: state.resets,
        crashes: state.crashes.clone(),
        coverage_over_time: coverage_points,
        termination: termination.to_string(),
        seed: config.seed,
        transcript_path: None,
        actions_path: None,
    };
    Ok(RunArtifacts {
        report,
        actions: state.records,
        transcript: close_session(session),
    })
}

fn build_backend(config: &RunConfig) -> Result<Box<dyn OracleBackend>, RunError> {
    match &config.oracle {
        OracleTarget::Scripted(path) => Ok(Box::new(
            ScriptedBackend::from_file(path)
                .map_err(|e| RunError::InvalidConfig(format!("{}: {e}", path.display())))?,
        )),
        OracleTarget::ScriptedInline(lines) => {
            Ok(Box::new(ScriptedBackend::from_lines(lines.clone())))
        }
        OracleTarget::Remote(url) => Ok(Box::new(RemoteBackend::new(
            url.clone(),
            config.oracle_config.request_timeout,
        ))),
    }
}

fn build_adapter(config: &RunConfig) -> Result<Box<dyn DeviceAdapter>, RunError> {
    match &config.app {
        AppTarget::Sim(path) => {
            let app = SimApp::load(path).map_err(|e| RunError::InvalidConfig(e.to_string()))?;
            Ok(Box::new(SimEngine::new(app)))
        }
        AppTarget::Bridge(addr) => {
            let manifest = config.manifest.as_ref().ok_or_else(|| {
                RunError::InvalidConfig("bridge targets need --manifest for app info".into())
            })?;
            let info = AppInfo::from_manifest_file(manifest)
                .map_err(|e| RunError::InvalidConfig(e.to_string()))?;
            let adapter = BridgeAdapter::connect(addr.as_str(), info)
                .map_err(|e| RunError::AdapterUnreachable(e.to_string()))?;
            Ok(Box::new(adapter))
        }
    }
}

/// Builds the adapter and backend from the config, runs the loop, and writes
/// the report files into the output directory when one is set.
pub fn run(config: &RunConfig) -> Result<RunArtifacts, RunError> {
    let mut adapter = build_adapter(config)?;
    let backend = build_backend(config)?;
    let mut artifacts = execute(config, adapter.as_mut(), backend)?;
    if let Some(dir) = &config.out_dir {
        write_artifacts(&mut artifacts, dir)?;
    }
    Ok(artifacts)
}

pub fn write_artifacts(artifacts: &mut RunArtifacts, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let actions_path = dir.join("actions.jsonl");
    let transcript_path = dir.join("transcript.jsonl");
    let mut actions_file = std::fs::File::create(&actions_path)?;
    write_actions_jsonl(&artifacts.actions, &mut actions_file)?;
    let mut transcript_file = std::fs::File::create(&transcript_path)?;
    artifacts.transcript.write_jsonl(&mut transcript_file)?;
    artifacts.report.actions_path = Some(actions_path.display().to_string());
    artifacts.report.transcript_path = Some(transcript_path.display().to_string());
    std::fs::write(dir.join("report.json"), artifacts.report.to_json_pretty())?;
    std::fs::write(dir.join("summary.txt"), artifacts.report.summary())?;
    Ok(())
}
