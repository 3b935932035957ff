//! The construction loop: demonstrate, stabilize, synthesize, promote,
//! induce, test, and refine until the candidate validates or the attempt
//! budget runs out.
//!
//! Metrics follow the tool-quality objective: FailRate is the failing
//! fraction of test cases, StepCount the script length, AgenticRatio the
//! reasoner-dependent fraction of steps. The objective compares
//! lexicographically in that order because the three terms are not
//! commensurable, and acceptance requires a fail rate of exactly zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{execute_tool, BackendFactory, ExecutionOutcome, Reasoner, StepFailure};
use crate::promote::{infer_url_template, promote_script};
use crate::registry::StagingRegistry;
use crate::schema::{amend_schema, induce_schema, InputSchema};
use crate::stabilize::{stabilize_trace_with, StabilizeError, StabilizeOptions};
use crate::synth::{
    extract_test_inputs, synthesize_script, ActionScript, Expectation, InteractionKind, Step,
    TestCase, TestSuite,
};
use crate::tool::Tool;
use crate::trace::{ExecutionTrace, ToolCandidate};

#[derive(Debug, Error)]
pub enum TraceSourceError {
    #[error("demonstration failed: {0}")]
    DemonstrationFailed(String),
}

/// Supplies the demonstration trace for an attempt; attempt numbers start
/// at 1 so sources can vary their strategy on retries.
pub trait TraceSource {
    fn demonstrate(
        &mut self,
        candidate: &ToolCandidate,
        attempt: u32,
    ) -> Result<ExecutionTrace, TraceSourceError>;
}

/// Structured diagnosis of a failing test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackItem {
    SelectorDrift { step: usize, selectors: Vec<String> },
    UncoveredEnum { field: String, value: String },
    Timeout { step: usize, selector: String },
    SemanticMismatch { expected: String, actual: String },
    RequirednessMismatch { field: String },
}

#[derive(Debug, Error)]
#[error("unclassified failure: {summary}")]
pub struct UnclassifiedFailure {
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildBudget {
    pub max_attempts: u32,
}

impl Default for BuildBudget {
    /// The empirically observed ceiling: stubborn candidates take up to 4
    /// demonstrate-generate-validate rounds.
    fn default() -> Self {
        BuildBudget { max_attempts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: TestCase,
    pub passed: bool,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub fail_rate: f64,
    pub step_count: usize,
    pub agentic_ratio: f64,
    pub per_case: Vec<CaseResult>,
    pub feedback: Vec<FeedbackItem>,
}

/// Run every suite case on a freshly seeded session. For promoted tools each
/// case also replays the retained pass-1 script and demands byte-equal
/// extraction output; a divergence fails the case with a semantic mismatch
/// even when the stated expectation holds.
pub fn validate_tool(
    tool: &Tool,
    suite: &TestSuite,
    backend_factory: &dyn BackendFactory,
    mut reasoner: Option<&mut dyn Reasoner>,
) -> ValidationReport {
    assert!(!suite.cases.is_empty(), "validation needs a nonempty suite");
    let mut per_case = Vec::new();
    let mut feedback = Vec::new();

    for case in &suite.cases {
        let mut backend = backend_factory.make();
        let outcome = match execute_tool(tool, &case.inputs, backend.as_mut(), crate::exec::reborrow(&mut reasoner)) {
            Ok(o) => o,
            Err(e) => panic!("suite cases are schema-valid by construction: {e}"),
        };
        let mut passed = outcome.succeeded() && expectation_holds(&case.expectation, &outcome);
        let mut semantic_feedback = None;

        if passed {
            if let Some(unpromoted) = &tool.unpromoted_script {
                let bindings = tool.input_schema.effective_bindings(&case.inputs);
                let mut replay_backend = backend_factory.make();
                let replay = crate::exec::execute_script(
                    unpromoted,
                    &bindings,
                    replay_backend.as_mut(),
                    None,
                );
                let equivalent = replay.succeeded()
                    && normalized(&replay.outputs) == normalized(&outcome.outputs);
                if !equivalent {
                    passed = false;
                    // when the UI-path oracle itself failed, its diagnosis
                    // names the real problem better than "outputs differ"
                    semantic_feedback = Some(match diagnose_failure(&replay, case) {
                        Ok(item) if !replay.succeeded() => item,
                        _ => FeedbackItem::SemanticMismatch {
                            expected: summarize_outputs(&replay.outputs),
                            actual: summarize_outputs(&outcome.outputs),
                        },
                    });
                }
            }
        }

        if !passed {
            if let Some(item) = semantic_feedback {
                feedback.push(item);
            } else {
                // unclassifiable raw outcomes stay visible in per_case
                if let Ok(item) = diagnose_failure(&outcome, case) {
                    feedback.push(item);
                }
            }
        }
        per_case.push(CaseResult { case: case.clone(), passed, outcome });
    }

    let failing = per_case.iter().filter(|c| !c.passed).count();
    ValidationReport {
        fail_rate: failing as f64 / per_case.len() as f64,
        step_count: tool.script.steps.len(),
        agentic_ratio: tool.script.agentic_ratio(),
        per_case,
        feedback,
    }
}

fn expectation_holds(expectation: &Expectation, outcome: &ExecutionOutcome) -> bool {
    match expectation {
        Expectation::Completes => true,
        Expectation::ExtractionNonempty => {
            outcome.outputs.values().any(|v| !v.trim().is_empty())
        }
        Expectation::UrlMatches { pattern } => outcome.final_url.contains(pattern),
    }
}

fn normalized(outputs: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    outputs
        .iter()
        .map(|(k, v)| (k.clone(), v.trim().to_string()))
        .collect()
}

fn summarize_outputs(outputs: &BTreeMap<String, String>) -> String {
    if outputs.is_empty() {
        "(no outputs)".to_string()
    } else {
        outputs
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

/// Map a failed execution onto structured feedback.
pub fn diagnose_failure(
    outcome: &ExecutionOutcome,
    case: &TestCase,
) -> Result<FeedbackItem, UnclassifiedFailure> {
    if let Some((step, failure)) = &outcome.failure {
        return match failure {
            StepFailure::LocatorUnresolved { selectors, page_busy } => {
                if *page_busy {
                    Ok(FeedbackItem::Timeout {
                        step: *step,
                        selector: selectors.first().cloned().unwrap_or_default(),
                    })
                } else {
                    Ok(FeedbackItem::SelectorDrift { step: *step, selectors: selectors.clone() })
                }
            }
            StepFailure::SelectOptionMissing { option, field: Some(field), .. } => {
                Ok(FeedbackItem::UncoveredEnum { field: field.clone(), value: option.clone() })
            }
            other => Err(UnclassifiedFailure { summary: format!("step {step}: {other:?}") }),
        };
    }
    // execution finished but the case still failed: read the page's own
    // error banners first, then fall back to the expectation text
    if let Some((field, message)) = outcome.final_page_errors.first() {
        if message.contains("required") && !case.inputs.contains_key(field) {
            return Ok(FeedbackItem::RequirednessMismatch { field: field.clone() });
        }
        if let Some(value) = case.inputs.get(field) {
            return Ok(FeedbackItem::UncoveredEnum { field: field.clone(), value: value.clone() });
        }
        return Ok(FeedbackItem::RequirednessMismatch { field: field.clone() });
    }
    match &case.expectation {
        Expectation::ExtractionNonempty => Ok(FeedbackItem::SemanticMismatch {
            expected: "nonempty extraction output".to_string(),
            actual: summarize_outputs(&outcome.outputs),
        }),
        Expectation::UrlMatches { pattern } => Ok(FeedbackItem::SemanticMismatch {
            expected: format!("final URL matching `{pattern}`"),
            actual: outcome.final_url.clone(),
        }),
        Expectation::Completes => Err(UnclassifiedFailure {
            summary: "case failed without a failure record".to_string(),
        }),
    }
}

/// Lexicographic (fail_rate, step_count, agentic_ratio); lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScore {
    pub fail_rate: f64,
    pub step_count: usize,
    pub agentic_ratio: f64,
}

impl Eq for ObjectiveScore {}

impl Ord for ObjectiveScore {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.fail_rate
            .total_cmp(&other.fail_rate)
            .then_with(|| self.step_count.cmp(&other.step_count))
            .then_with(|| self.agentic_ratio.total_cmp(&other.agentic_ratio))
    }
}

impl PartialOrd for ObjectiveScore {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl ObjectiveScore {
    pub fn acceptable(&self) -> bool {
        self.fail_rate == 0.0
    }
}

pub fn compute_objective(report: &ValidationReport) -> ObjectiveScore {
    ObjectiveScore {
        fail_rate: report.fail_rate,
        step_count: report.step_count,
        agentic_ratio: report.agentic_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub note: String,
    pub promoted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agentic_ratio: Option<f64>,
    pub feedback: Vec<FeedbackItem>,
}

/// Everything a build produced, success or not. `Fail` is this value with
/// `tool == None`, never an exception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOutput {
    pub candidate: ToolCandidate,
    pub tool: Option<Tool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_report: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<TestSuite>,
    pub attempts: Vec<AttemptRecord>,
}

impl BuildOutput {
    pub fn succeeded(&self) -> bool {
        self.tool.is_some()
    }
}

/// Accumulated refinement state threaded across attempts.
#[derive(Default)]
struct RefinementState {
    banned_selectors: BTreeSet<String>,
    promotion_enabled: bool,
    amendments: Vec<FeedbackItem>,
    pruned_options: BTreeSet<(String, String)>,
    wait_before: BTreeSet<String>,
}

/// Run the full demonstrate-generate-validate loop for one candidate.
pub fn build_tool(
    candidate: &ToolCandidate,
    trace_source: &mut dyn TraceSource,
    budget: &BuildBudget,
    backend_factory: &dyn BackendFactory,
    mut reasoner: Option<&mut dyn Reasoner>,
) -> BuildOutput {
    assert!(budget.max_attempts >= 1);
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut state = RefinementState { promotion_enabled: true, ..Default::default() };
    let mut best_score: Option<ObjectiveScore> = None;

    for attempt in 1..=budget.max_attempts {
        let mut record = AttemptRecord {
            attempt,
            note: String::new(),
            promoted: false,
            fail_rate: None,
            step_count: None,
            agentic_ratio: None,
            feedback: Vec::new(),
        };

        // Phase I: demonstration and stabilization
        let trace = match trace_source.demonstrate(candidate, attempt) {
            Ok(t) => t,
            Err(e) => {
                record.note = format!("demonstration failed: {e}");
                attempts.push(record);
                continue;
            }
        };
        let stab_options = StabilizeOptions { banned_selectors: state.banned_selectors.clone() };
        let stab = match stabilize_trace_with(&trace, &stab_options) {
            Ok(s) => s,
            Err(StabilizeError::WhollyUnstable) => {
                record.note = "trace wholly unstable".to_string();
                attempts.push(record);
                continue;
            }
        };

        // Phase II: synthesis and optimization
        let pass1 = match synthesize_script(&stab, candidate) {
            Ok(s) => s,
            Err(e) => {
                record.note = format!("synthesis failed: {e}");
                attempts.push(record);
                continue;
            }
        };
        let pass1 = insert_waits(pass1, &state.wait_before);

        let (script, unpromoted) = if state.promotion_enabled {
            match infer_url_template(&pass1, &stab) {
                Some(inferred) => {
                    match promote_script(&pass1, &inferred, Some(backend_factory), &trace.param_bindings)
                    {
                        Ok(promoted) if promoted != pass1 => (promoted, Some(pass1.clone())),
                        _ => (pass1.clone(), None),
                    }
                }
                None => (pass1.clone(), None),
            }
        } else {
            (pass1.clone(), None)
        };
        record.promoted = unpromoted.is_some();

        let schema = match induce_schema(&trace, &pass1, candidate) {
            Ok(s) => s,
            Err(e) => {
                record.note = format!("schema induction failed: {e}");
                attempts.push(record);
                continue;
            }
        };
        let schema = match apply_refinements(&schema, &state) {
            Ok(s) => s,
            Err(e) => {
                record.note = format!("schema amendment failed: {e}");
                attempts.push(record);
                continue;
            }
        };
        let suite = extract_test_inputs(&trace, &script, &schema);

        let tool = Tool {
            name: candidate.name.clone(),
            description: candidate.description.clone(),
            start_url: candidate.start_url.clone(),
            script,
            unpromoted_script: unpromoted,
            input_schema: schema,
        };
        if let Err(e) = tool.validate() {
            record.note = format!("tool assembly failed: {e}");
            attempts.push(record);
            continue;
        }

        // Phase III: provisional registration, then end-to-end validation
        let mut staging = StagingRegistry::new();
        staging.register(tool.clone());
        let staged = staging.get(&tool.name).expect("just staged");

        let report = validate_tool(staged, &suite, backend_factory, crate::exec::reborrow(&mut reasoner));
        let score = compute_objective(&report);
        record.fail_rate = Some(report.fail_rate);
        record.step_count = Some(report.step_count);
        record.agentic_ratio = Some(report.agentic_ratio);
        record.feedback = report.feedback.clone();

        // refinement never worsens the best score seen so far
        match best_score {
            Some(previous) => {
                let new_best = previous.min(score);
                debug_assert!(new_best <= previous, "best-so-far objective must never worsen");
                best_score = Some(new_best);
            }
            None => best_score = Some(score),
        }

        if score.acceptable() {
            record.note = "validated".to_string();
            attempts.push(record);
            return BuildOutput {
                candidate: candidate.clone(),
                tool: Some(tool),
                final_report: Some(report),
                suite: Some(suite),
                attempts,
            };
        }

        record.note = "validation failed".to_string();
        dispatch_feedback(&report, &tool, &mut state);
        attempts.push(record);
    }

    BuildOutput {
        candidate: candidate.clone(),
        tool: None,
        final_report: None,
        suite: None,
        attempts,
    }
}

fn apply_refinements(
    schema: &InputSchema,
    state: &RefinementState,
) -> Result<InputSchema, crate::schema::SchemaError> {
    let mut schema = schema.clone();
    for amendment in &state.amendments {
        schema = amend_schema(&schema, amendment)?;
    }
    for (field, value) in &state.pruned_options {
        if let Some(spec) = schema.fields.iter_mut().find(|f| &f.name == field) {
            if let Some(options) = &mut spec.options {
                if options.len() > 2 && options.iter().any(|o| o == value) {
                    options.retain(|o| o != value);
                }
            }
        }
    }
    Ok(schema)
}

/// Insert a bounded settle wait before interaction steps whose primary
/// selector previously hit a timing failure.
fn insert_waits(script: ActionScript, wait_before: &BTreeSet<String>) -> ActionScript {
    if wait_before.is_empty() {
        return script;
    }
    let mut steps = Vec::with_capacity(script.steps.len());
    for step in script.steps {
        let needs_wait = match &step {
            Step::Interaction { locator: Some(loc), .. } => wait_before.contains(&loc.primary),
            _ => false,
        };
        if needs_wait {
            steps.push(Step::Interaction {
                kind: InteractionKind::Wait,
                locator: None,
                value: None,
                selected_text: None,
                key: None,
                scroll_x: None,
                scroll_y: None,
                seconds: Some(0.5),
                description: "Wait for late-rendered controls".to_string(),
                origin: None,
            });
        }
        steps.push(step);
    }
    let params = ActionScript::collect_params(&steps);
    ActionScript { steps, params }
}

/// Route each feedback item to the refinement that addresses it.
fn dispatch_feedback(report: &ValidationReport, tool: &Tool, state: &mut RefinementState) {
    for item in &report.feedback {
        match item {
            FeedbackItem::SelectorDrift { selectors, .. } => {
                // exclude the selectors observed failing; re-demonstration
                // plus re-ranking swaps in the most stable survivors
                state.banned_selectors.extend(selectors.iter().cloned());
            }
            FeedbackItem::UncoveredEnum { field, value } => {
                let schema_has_value = tool
                    .input_schema
                    .field(field)
                    .and_then(|f| f.options.as_ref())
                    .map(|opts| opts.iter().any(|o| o == value))
                    .unwrap_or(false);
                if schema_has_value {
                    // the site rejected an option the schema advertises
                    state.pruned_options.insert((field.clone(), value.clone()));
                } else {
                    state.amendments.push(item.clone());
                }
            }
            FeedbackItem::Timeout { selector, .. } => {
                state.wait_before.insert(selector.clone());
            }
            FeedbackItem::SemanticMismatch { .. } => {
                // back off the URL substitution on the next attempt
                state.promotion_enabled = false;
            }
            FeedbackItem::RequirednessMismatch { .. } => {
                state.amendments.push(item.clone());
            }
        }
    }
    // agentic-only convergence guard: enum amendments re-run induction, so
    // repeated identical amendments are deduplicated
    state.amendments.dedup();
}

/// Helper shared by the CLI and tests: does the report's enum coverage
/// include fields of the schema. (Metrics recompute from stored data only.)
pub fn recompute_fail_rate(report: &ValidationReport) -> f64 {
    let failing = report.per_case.iter().filter(|c| !c.passed).count();
    failing as f64 / report.per_case.len().max(1) as f64
}
