//! Action-script execution over a browser-session abstraction.
//!
//! Interaction steps resolve their primary selector first and fall back to
//! ranked alternates, with one short-wait retry pass before giving up.
//! Agentic steps delegate to a pluggable reasoner under a hard step budget.
//! Step failures are data embedded in the outcome, never exceptions thrown
//! past the tool boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{validate_input, Violation};
use crate::synth::{ActionScript, InteractionKind, Step};
use crate::tool::Tool;
use crate::urls;

/// Seconds slept before the single retry pass of an interaction step.
pub const RETRY_WAIT_SECONDS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no element matches `{0}`")]
    ElementNotFound(String),
    #[error("select `{selector}` has no option `{option}` (available: {available:?})")]
    OptionNotFound {
        selector: String,
        option: String,
        available: Vec<String>,
    },
    #[error("navigation to `{url}` failed: {reason}")]
    NavigationFailed { url: String, reason: String },
    #[error("element `{selector}` does not accept {operation}")]
    WrongElementKind { selector: String, operation: String },
    #[error("bad selector `{selector}`: {reason}")]
    BadSelector { selector: String, reason: String },
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
}

impl BackendError {
    /// Failures that mean "this selector did not land on a usable element",
    /// so the next alternate should be tried.
    fn is_selector_miss(&self) -> bool {
        matches!(
            self,
            BackendError::ElementNotFound(_)
                | BackendError::BadSelector { .. }
                | BackendError::WrongElementKind { .. }
        )
    }
}

/// One browser session. Implementations must be deterministic given an
/// identical seed and call sequence; the fixture backend guarantees this.
pub trait ExecutionBackend {
    fn navigate(&mut self, url: &str) -> Result<(), BackendError>;
    fn click(&mut self, selector: &str) -> Result<(), BackendError>;
    fn input(&mut self, selector: &str, text: &str) -> Result<(), BackendError>;
    fn select(&mut self, selector: &str, option_text: &str) -> Result<(), BackendError>;
    fn press(&mut self, key: &str) -> Result<(), BackendError>;
    fn scroll(&mut self, dx: i64, dy: i64) -> Result<(), BackendError>;
    fn wait(&mut self, seconds: f64) -> Result<(), BackendError>;
    fn current_url(&self) -> String;
    fn dom_snapshot(&self) -> String;
    fn extract(&mut self, goal: &str) -> Result<String, BackendError>;
    fn last_http_method(&self) -> Option<String>;
}

/// Produces identically-seeded fresh sessions; validation and promotion
/// equivalence replays each need their own.
pub trait BackendFactory {
    fn make(&self) -> Box<dyn ExecutionBackend>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasonerRequest {
    pub task: String,
    pub max_steps: u32,
    pub current_url: String,
    pub dom_snapshot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PrimitiveCommand {
    Navigate { url: String },
    Click { selector: String },
    Input { selector: String, text: String },
    SelectOption { selector: String, option: String },
    Press { key: String },
    Scroll { dx: i64, dy: i64 },
    Wait { seconds: f64 },
    Extract { goal: String, output: String },
}

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("reasoner has no plan for task: {0}")]
    Exhausted(String),
    #[error("reasoner transport failed: {0}")]
    Transport(String),
    #[error("reasoner returned malformed response: {0}")]
    Malformed(String),
}

/// The LLM-shaped planning interface: a task plus page state in, an ordered
/// list of primitive commands out.
pub trait Reasoner {
    fn plan(&mut self, request: &ReasonerRequest) -> Result<Vec<PrimitiveCommand>, ReasonerError>;
}

/// Reborrow an optional reasoner for one call without consuming the outer
/// borrow; lets callers hand the same reasoner to a sequence of executions.
pub fn reborrow<'a>(r: &'a mut Option<&mut dyn Reasoner>) -> Option<&'a mut dyn Reasoner> {
    match r {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepFailure {
    LocatorUnresolved {
        selectors: Vec<String>,
        /// The page advertised pending content (aria-busy) when resolution
        /// gave up; distinguishes timing issues from genuine drift.
        page_busy: bool,
    },
    SelectOptionMissing {
        selector: String,
        option: String,
        available: Vec<String>,
        /// Schema field the selected value was rendered from, when templated.
        field: Option<String>,
    },
    NavigationFailed {
        url: String,
        reason: String,
    },
    ExtractionFailed {
        goal: String,
        reason: String,
    },
    AgenticBudgetExhausted {
        task: String,
        budget: u32,
        planned: u32,
    },
    AgenticFailed {
        task: String,
        reason: String,
    },
    ReasonerUnavailable {
        task: String,
    },
    TemplateUnbound {
        placeholder: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    /// Script steps attempted (for fallback runs: primitive commands).
    pub steps_executed: usize,
    pub agentic_steps_executed: usize,
    pub outputs: BTreeMap<String, String>,
    pub failure: Option<(usize, StepFailure)>,
    /// Dynamic backend-call count; script step counts stay static.
    pub primitive_calls: usize,
    pub via_fallback: bool,
    pub final_url: String,
    /// Field-level error banners scraped from the final page, if any.
    pub final_page_errors: Vec<(String, String)>,
}

impl ExecutionOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == ExecStatus::Success
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("inputs rejected by schema: {0:?}")]
    InputInvalid(Vec<Violation>),
    #[error("agentic fallback exhausted: {0}")]
    FallbackExhausted(String),
}

struct Session<'a, 'b> {
    backend: &'a mut dyn ExecutionBackend,
    reasoner: Option<&'b mut dyn Reasoner>,
    primitive_calls: usize,
    outputs: BTreeMap<String, String>,
}

impl<'a, 'b> Session<'a, 'b> {
    fn new(backend: &'a mut dyn ExecutionBackend, reasoner: Option<&'b mut dyn Reasoner>) -> Self {
        Session {
            backend,
            reasoner,
            primitive_calls: 0,
            outputs: BTreeMap::new(),
        }
    }
}

/// Execute a validated tool with the given inputs. Schema violations are a
/// caller bug and error out before any backend call; step failures land in
/// the outcome.
pub fn execute_tool(
    tool: &Tool,
    inputs: &BTreeMap<String, String>,
    backend: &mut dyn ExecutionBackend,
    reasoner: Option<&mut dyn Reasoner>,
) -> Result<ExecutionOutcome, ExecError> {
    let violations = validate_input(&tool.input_schema, inputs);
    if !violations.is_empty() {
        return Err(ExecError::InputInvalid(violations));
    }
    let bindings = tool.input_schema.effective_bindings(inputs);
    Ok(execute_script(&tool.script, &bindings, backend, reasoner))
}

/// Run a bare script with fully-resolved bindings. Used by tool execution,
/// promotion equivalence replays, and validation.
pub fn execute_script(
    script: &ActionScript,
    bindings: &BTreeMap<String, String>,
    backend: &mut dyn ExecutionBackend,
    reasoner: Option<&mut dyn Reasoner>,
) -> ExecutionOutcome {
    let mut session = Session::new(backend, reasoner);
    let mut steps_executed = 0;
    let mut agentic_executed = 0;
    let mut failure = None;

    for (idx, step) in script.steps.iter().enumerate() {
        steps_executed += 1;
        if matches!(step, Step::Agentic { .. }) {
            agentic_executed += 1;
        }
        if let Err(f) = run_step(step, bindings, &mut session) {
            failure = Some((idx, f));
            break;
        }
    }

    let final_url = session.backend.current_url();
    let final_page_errors = scrape_field_errors(&session.backend.dom_snapshot());
    ExecutionOutcome {
        status: if failure.is_none() { ExecStatus::Success } else { ExecStatus::Failed },
        steps_executed,
        agentic_steps_executed: agentic_executed,
        outputs: session.outputs,
        failure,
        primitive_calls: session.primitive_calls,
        via_fallback: false,
        final_url,
        final_page_errors,
    }
}

/// Execute a single step. Public so callers can drive steps individually;
/// `execute_script` is the normal entry point.
pub fn execute_step(
    step: &Step,
    bindings: &BTreeMap<String, String>,
    backend: &mut dyn ExecutionBackend,
    reasoner: Option<&mut dyn Reasoner>,
) -> Result<BTreeMap<String, String>, StepFailure> {
    let mut session = Session::new(backend, reasoner);
    run_step(step, bindings, &mut session)?;
    Ok(session.outputs)
}

fn run_step(
    step: &Step,
    bindings: &BTreeMap<String, String>,
    session: &mut Session<'_, '_>,
) -> Result<(), StepFailure> {
    match step {
        Step::Navigation { url_template, .. } => {
            let url = urls::render_url(url_template, bindings)
                .map_err(|e| StepFailure::TemplateUnbound { placeholder: e.name })?;
            let r = session.backend.navigate(&url);
            session.primitive_calls += 1;
            r.map_err(|e| StepFailure::NavigationFailed { url, reason: e.to_string() })
        }
        Step::Interaction { kind, locator, value, selected_text, key, scroll_x, scroll_y, seconds, .. } => {
            match kind {
                InteractionKind::Wait => {
                    let r = session.backend.wait(seconds.unwrap_or(0.5));
                    session.primitive_calls += 1;
                    r.map_err(|e| StepFailure::AgenticFailed {
                        task: "wait".to_string(),
                        reason: e.to_string(),
                    })
                }
                InteractionKind::Scroll => {
                    let r = session
                        .backend
                        .scroll(scroll_x.unwrap_or(0), scroll_y.unwrap_or(0));
                    session.primitive_calls += 1;
                    r.map_err(|e| StepFailure::AgenticFailed {
                        task: "scroll".to_string(),
                        reason: e.to_string(),
                    })
                }
                InteractionKind::Click | InteractionKind::Input | InteractionKind::SelectChange | InteractionKind::KeyPress => {
                    let locator = locator.as_ref().expect("element interactions carry a locator");
                    let rendered_value = match value {
                        Some(v) => Some(render_text_field(v, bindings)?),
                        None => None,
                    };
                    let rendered_option = match selected_text {
                        Some(v) => Some(render_text_field(v, bindings)?),
                        None => None,
                    };
                    interact_with_recovery(
                        session,
                        *kind,
                        locator.selectors().map(str::to_string).collect(),
                        rendered_value,
                        rendered_option,
                        selected_text.as_deref(),
                        key.as_deref(),
                    )
                }
            }
        }
        Step::Extraction { goal, output, .. } => {
            let r = session.backend.extract(goal);
            session.primitive_calls += 1;
            match r {
                Ok(text) => {
                    session.outputs.insert(output.clone(), text);
                    Ok(())
                }
                Err(e) => Err(StepFailure::ExtractionFailed {
                    goal: goal.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        Step::Agentic { task, max_steps, .. } => {
            let task = render_text_field(task, bindings)?;
            run_agentic(session, &task, *max_steps)
        }
    }
}

fn render_text_field(
    template: &str,
    bindings: &BTreeMap<String, String>,
) -> Result<String, StepFailure> {
    urls::render_text(template, bindings)
        .map_err(|e| StepFailure::TemplateUnbound { placeholder: e.name })
}

/// Try every selector (primary, then alternates); if all miss, wait briefly
/// and try the whole list once more. A resolved element whose select option
/// is missing aborts immediately: that is a coverage problem, not drift.
fn interact_with_recovery(
    session: &mut Session<'_, '_>,
    kind: InteractionKind,
    selectors: Vec<String>,
    value: Option<String>,
    option: Option<String>,
    option_template: Option<&str>,
    key: Option<&str>,
) -> Result<(), StepFailure> {
    for pass in 0..2 {
        if pass == 1 {
            let _ = session.backend.wait(RETRY_WAIT_SECONDS);
            session.primitive_calls += 1;
        }
        for selector in &selectors {
            let result = perform_interaction(session, kind, selector, &value, &option, key);
            match result {
                Ok(()) => return Ok(()),
                Err(e) if e.is_selector_miss() => continue,
                Err(BackendError::OptionNotFound { selector, option, available }) => {
                    return Err(StepFailure::SelectOptionMissing {
                        selector,
                        option,
                        available,
                        field: option_template.and_then(first_placeholder),
                    });
                }
                Err(e) => {
                    return Err(StepFailure::AgenticFailed {
                        task: format!("{kind:?} on {selector}"),
                        reason: e.to_string(),
                    })
                }
            }
        }
    }
    let page_busy = session.backend.dom_snapshot().contains("aria-busy=\"true\"");
    Err(StepFailure::LocatorUnresolved { selectors, page_busy })
}

fn first_placeholder(template: &str) -> Option<String> {
    urls::placeholders(template).into_iter().next()
}

fn perform_interaction(
    session: &mut Session<'_, '_>,
    kind: InteractionKind,
    selector: &str,
    value: &Option<String>,
    option: &Option<String>,
    key: Option<&str>,
) -> Result<(), BackendError> {
    match kind {
        InteractionKind::Click => {
            let r = session.backend.click(selector);
            session.primitive_calls += 1;
            r
        }
        InteractionKind::Input => {
            let r = session
                .backend
                .input(selector, value.as_deref().unwrap_or(""));
            session.primitive_calls += 1;
            r
        }
        InteractionKind::SelectChange => {
            let r = session
                .backend
                .select(selector, option.as_deref().unwrap_or(""));
            session.primitive_calls += 1;
            r
        }
        InteractionKind::KeyPress => {
            // focus the target, then send the key
            let r = session.backend.click(selector);
            session.primitive_calls += 1;
            r?;
            let r = session.backend.press(key.unwrap_or("Enter"));
            session.primitive_calls += 1;
            r
        }
        InteractionKind::Scroll | InteractionKind::Wait => unreachable!("handled by caller"),
    }
}

fn run_agentic(session: &mut Session<'_, '_>, task: &str, max_steps: u32) -> Result<(), StepFailure> {
    let request = ReasonerRequest {
        task: task.to_string(),
        max_steps,
        current_url: session.backend.current_url(),
        dom_snapshot: session.backend.dom_snapshot(),
    };
    let reasoner = match session.reasoner.as_deref_mut() {
        Some(r) => r,
        None => return Err(StepFailure::ReasonerUnavailable { task: task.to_string() }),
    };
    let commands = reasoner.plan(&request).map_err(|e| StepFailure::AgenticFailed {
        task: task.to_string(),
        reason: e.to_string(),
    })?;
    if commands.is_empty() {
        return Err(StepFailure::AgenticFailed {
            task: task.to_string(),
            reason: "reasoner returned no commands".to_string(),
        });
    }
    if commands.len() as u32 > max_steps {
        return Err(StepFailure::AgenticBudgetExhausted {
            task: task.to_string(),
            budget: max_steps,
            planned: commands.len() as u32,
        });
    }
    for command in &commands {
        run_primitive(session, command).map_err(|e| StepFailure::AgenticFailed {
            task: task.to_string(),
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

fn run_primitive(session: &mut Session<'_, '_>, command: &PrimitiveCommand) -> Result<(), BackendError> {
    session.primitive_calls += 1;
    match command {
        PrimitiveCommand::Navigate { url } => session.backend.navigate(url),
        PrimitiveCommand::Click { selector } => session.backend.click(selector),
        PrimitiveCommand::Input { selector, text } => session.backend.input(selector, text),
        PrimitiveCommand::SelectOption { selector, option } => {
            session.backend.select(selector, option)
        }
        PrimitiveCommand::Press { key } => session.backend.press(key),
        PrimitiveCommand::Scroll { dx, dy } => session.backend.scroll(*dx, *dy),
        PrimitiveCommand::Wait { seconds } => session.backend.wait(*seconds),
        PrimitiveCommand::Extract { goal, output } => {
            let text = session.backend.extract(goal)?;
            session.outputs.insert(output.clone(), text);
            Ok(())
        }
    }
}

/// Last-resort recovery: a fresh reasoner session pursues the tool's goal
/// from the failure point under a global step budget. The outcome counts as
/// fully agentic.
pub fn agentic_fallback(
    tool: &Tool,
    failure: &(usize, StepFailure),
    backend: &mut dyn ExecutionBackend,
    reasoner: Option<&mut dyn Reasoner>,
    budget: u32,
) -> Result<ExecutionOutcome, ExecError> {
    let reasoner = match reasoner {
        Some(r) => r,
        None => return Err(ExecError::FallbackExhausted("no reasoner configured".to_string())),
    };
    if budget == 0 {
        return Err(ExecError::FallbackExhausted("fallback budget is 0".to_string()));
    }
    let (step_idx, step_failure) = failure;
    let task = format!(
        "{} (the scripted attempt failed at step {} with {})",
        tool.description,
        step_idx + 1,
        failure_label(step_failure)
    );
    let request = ReasonerRequest {
        task,
        max_steps: budget,
        current_url: backend.current_url(),
        dom_snapshot: backend.dom_snapshot(),
    };
    let commands = reasoner
        .plan(&request)
        .map_err(|e| ExecError::FallbackExhausted(e.to_string()))?;
    if commands.is_empty() {
        return Err(ExecError::FallbackExhausted("reasoner returned no commands".to_string()));
    }
    if commands.len() as u32 > budget {
        return Err(ExecError::FallbackExhausted(format!(
            "plan of {} commands exceeds budget {budget}",
            commands.len()
        )));
    }

    let mut session = Session::new(backend, None);
    let mut executed = 0;
    for command in &commands {
        executed += 1;
        if let Err(e) = run_primitive(&mut session, command) {
            return Err(ExecError::FallbackExhausted(format!(
                "command {executed} failed: {e}"
            )));
        }
    }
    let final_url = session.backend.current_url();
    let final_page_errors = scrape_field_errors(&session.backend.dom_snapshot());
    Ok(ExecutionOutcome {
        status: ExecStatus::Success,
        steps_executed: executed,
        agentic_steps_executed: executed,
        outputs: session.outputs,
        failure: None,
        primitive_calls: session.primitive_calls,
        via_fallback: true,
        final_url,
        final_page_errors,
    })
}

fn failure_label(failure: &StepFailure) -> String {
    match failure {
        StepFailure::LocatorUnresolved { selectors, .. } => {
            format!("unresolved locator {selectors:?}")
        }
        StepFailure::SelectOptionMissing { option, .. } => format!("missing option `{option}`"),
        StepFailure::NavigationFailed { url, .. } => format!("failed navigation to {url}"),
        StepFailure::ExtractionFailed { goal, .. } => format!("failed extraction of {goal}"),
        StepFailure::AgenticBudgetExhausted { task, .. } => format!("budget exhausted on {task}"),
        StepFailure::AgenticFailed { task, .. } => format!("agentic failure on {task}"),
        StepFailure::ReasonerUnavailable { task } => format!("no reasoner for {task}"),
        StepFailure::TemplateUnbound { placeholder } => format!("unbound placeholder {placeholder}"),
    }
}

/// Pull `data-field` error banners out of a rendered page. String-level scan
/// so it works against any backend's snapshot.
pub fn scrape_field_errors(html: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = html;
    while let Some(pos) = rest.find("data-field=\"") {
        let after = &rest[pos + "data-field=\"".len()..];
        let Some(end_quote) = after.find('"') else { break };
        let field = &after[..end_quote];
        let tail = &after[end_quote..];
        let message = tail
            .find('>')
            .and_then(|gt| {
                let inner = &tail[gt + 1..];
                inner.find('<').map(|lt| inner[..lt].trim().to_string())
            })
            .unwrap_or_default();
        out.push((field.to_string(), message));
        rest = after;
    }
    out
}

/// Replay queue for tests and offline CLI runs: each `plan` call pops the
/// next scripted command list.
#[derive(Debug, Default)]
pub struct ScriptedReasoner {
    plans: std::collections::VecDeque<Vec<PrimitiveCommand>>,
    pub requests_seen: Vec<ReasonerRequest>,
}

impl ScriptedReasoner {
    pub fn new(plans: Vec<Vec<PrimitiveCommand>>) -> Self {
        ScriptedReasoner {
            plans: plans.into(),
            requests_seen: Vec::new(),
        }
    }

    /// A stub with nothing scripted; any consultation fails. Keeps fully
    /// deterministic pipelines honest about not needing a reasoner.
    pub fn empty() -> Self {
        Self::default()
    }
}

impl Reasoner for ScriptedReasoner {
    fn plan(&mut self, request: &ReasonerRequest) -> Result<Vec<PrimitiveCommand>, ReasonerError> {
        self.requests_seen.push(request.clone());
        self.plans
            .pop_front()
            .ok_or_else(|| ReasonerError::Exhausted(request.task.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scrape_field_errors_finds_banner() {
        let html = r#"<div class="field-error" data-field="category">Unknown category: Junk</div>"#;
        assert_eq!(
            scrape_field_errors(html),
            vec![("category".to_string(), "Unknown category: Junk".to_string())]
        );
    }

    #[test]
    fn scripted_reasoner_pops_in_order_then_exhausts() {
        let mut r = ScriptedReasoner::new(vec![
            vec![PrimitiveCommand::Click { selector: "#a".to_string() }],
            vec![],
        ]);
        let req = ReasonerRequest {
            task: "t".to_string(),
            max_steps: 3,
            current_url: String::new(),
            dom_snapshot: String::new(),
        };
        assert_eq!(r.plan(&req).unwrap().len(), 1);
        assert_eq!(r.plan(&req).unwrap().len(), 0);
        assert!(matches!(r.plan(&req), Err(ReasonerError::Exhausted(_))));
    }

    #[test]
    fn primitive_command_wire_format() {
        let cmd = PrimitiveCommand::Input {
            selector: "#q".to_string(),
            text: "kayak".to_string(),
        };
        let json = serde_json::to_string(&cmd).unwrap();
        assert_eq!(json, r##"{"op":"input","selector":"#q","text":"kayak"}"##);
        let back: PrimitiveCommand = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cmd);
    }
}
