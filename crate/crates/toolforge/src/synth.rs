//! Pass-1 script synthesis: classify each recorded action, build the ordered
//! action script, swap demonstrated literals for `{param}` placeholders, and
//! extract pre-vetted test inputs.
//!
//! Classification follows a fixed decision tree: navigations become
//! navigation steps, extractions become extraction steps, UI interactions
//! with a stable locator become deterministic interactions, locatorless but
//! essential interactions become agentic steps, everything else is skipped.
//! Scripts are straight-line by construction; there is no conditional step
//! type to branch on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{validate_input, InputSchema, ValueType};
use crate::stabilize::{StabilizedTrace, StableLocator};
use crate::trace::{ActionKind, ActionRecord, ExecutionTrace, InteractedElement, ToolCandidate};
use crate::urls;

/// Budget given to synthesized agentic steps. Listing-style scripts keep
/// these tight; 4 sits in the typical 3-8 band.
pub const DEFAULT_AGENTIC_MAX_STEPS: u32 = 4;
pub const AGENTIC_MAX_STEPS_CEILING: u32 = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("every action in the trace was skipped; nothing to script")]
    EmptyScript,
    #[error("placeholder `{{{0}}}` does not name a known parameter")]
    UnboundPlaceholder(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Click,
    Input,
    SelectChange,
    KeyPress,
    Scroll,
    Wait,
}

/// Classification outcome for one recorded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Navigation,
    Interaction(InteractionKind),
    Extraction,
    Agentic,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Step {
    Navigation {
        url_template: String,
        description: String,
        #[serde(skip)]
        origin: Option<(usize, usize)>,
    },
    Interaction {
        kind: InteractionKind,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        locator: Option<StableLocator>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        value: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        selected_text: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        key: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        scroll_x: Option<i64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        scroll_y: Option<i64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        seconds: Option<f64>,
        description: String,
        #[serde(skip)]
        origin: Option<(usize, usize)>,
    },
    Extraction {
        goal: String,
        output: String,
        description: String,
        #[serde(skip)]
        origin: Option<(usize, usize)>,
    },
    Agentic {
        task: String,
        max_steps: u32,
        description: String,
        #[serde(skip)]
        origin: Option<(usize, usize)>,
    },
}

impl Step {
    pub fn description(&self) -> &str {
        match self {
            Step::Navigation { description, .. }
            | Step::Interaction { description, .. }
            | Step::Extraction { description, .. }
            | Step::Agentic { description, .. } => description,
        }
    }

    pub fn origin(&self) -> Option<(usize, usize)> {
        match self {
            Step::Navigation { origin, .. }
            | Step::Interaction { origin, .. }
            | Step::Extraction { origin, .. }
            | Step::Agentic { origin, .. } => *origin,
        }
    }

    pub fn is_agentic(&self) -> bool {
        matches!(self, Step::Agentic { .. })
    }

    /// Placeholder names referenced by this step's templated fields.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Step::Navigation { url_template, .. } => out.extend(urls::placeholders(url_template)),
            Step::Interaction { value, selected_text, .. } => {
                if let Some(v) = value {
                    out.extend(urls::placeholders(v));
                }
                if let Some(v) = selected_text {
                    out.extend(urls::placeholders(v));
                }
            }
            Step::Extraction { .. } => {}
            Step::Agentic { task, .. } => out.extend(urls::placeholders(task)),
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScript {
    pub steps: Vec<Step>,
    pub params: Vec<String>,
}

impl ActionScript {
    /// Structural invariants: nonempty, duplicate-free params, locators on
    /// element interactions, bounded agentic budgets, placeholders all named
    /// in `params`.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.steps.is_empty() {
            return Err(SynthError::InvalidScript("script has no steps".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p) {
                return Err(SynthError::InvalidScript(format!("duplicate param `{p}`")));
            }
        }
        for step in &self.steps {
            match step {
                Step::Interaction { kind, locator, .. } => {
                    let needs_locator = matches!(
                        kind,
                        InteractionKind::Click
                            | InteractionKind::Input
                            | InteractionKind::SelectChange
                            | InteractionKind::KeyPress
                    );
                    if needs_locator && locator.is_none() {
                        return Err(SynthError::InvalidScript(format!(
                            "{kind:?} interaction without a locator"
                        )));
                    }
                }
                Step::Agentic { max_steps, .. }
                    if (*max_steps < 1 || *max_steps > AGENTIC_MAX_STEPS_CEILING) => {
                        return Err(SynthError::InvalidScript(format!(
                            "agentic max_steps {max_steps} outside [1, {AGENTIC_MAX_STEPS_CEILING}]"
                        )));
                    }
                _ => {}
            }
            for ph in step.placeholders() {
                if !self.params.contains(&ph) {
                    return Err(SynthError::UnboundPlaceholder(ph));
                }
            }
        }
        Ok(())
    }

    pub fn agentic_step_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_agentic()).count()
    }

    pub fn agentic_ratio(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.agentic_step_count() as f64 / self.steps.len() as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    /// Distinct placeholders across all steps, in first-appearance order.
    pub fn collect_params(steps: &[Step]) -> Vec<String> {
        let mut params = Vec::new();
        for step in steps {
            for ph in step.placeholders() {
                if !params.contains(&ph) {
                    params.push(ph);
                }
            }
        }
        params
    }
}

/// The Listing-style decision tree, total over all action kinds. `essential`
/// reflects dependency reachability computed by the caller: an unstable
/// action is essential iff a later step's success depends on it.
pub fn classify_action(
    record: &ActionRecord,
    locator: Option<&StableLocator>,
    essential: bool,
) -> StepKind {
    match &record.kind {
        ActionKind::GoToUrl { .. } => StepKind::Navigation,
        ActionKind::ExtractContent { .. } => StepKind::Extraction,
        ActionKind::Wait { .. } => StepKind::Interaction(InteractionKind::Wait),
        ActionKind::ClickElement
        | ActionKind::InputText { .. }
        | ActionKind::SelectChange { .. }
        | ActionKind::KeyPress { .. }
        | ActionKind::Scroll { .. } => {
            if locator.is_some() {
                StepKind::Interaction(match &record.kind {
                    ActionKind::ClickElement => InteractionKind::Click,
                    ActionKind::InputText { .. } => InteractionKind::Input,
                    ActionKind::SelectChange { .. } => InteractionKind::SelectChange,
                    ActionKind::KeyPress { .. } => InteractionKind::KeyPress,
                    ActionKind::Scroll { .. } => InteractionKind::Scroll,
                    _ => unreachable!(),
                })
            } else if essential {
                StepKind::Agentic
            } else {
                StepKind::Skip
            }
        }
    }
}

/// Build the pass-1 script from a stabilized trace.
pub fn synthesize_script(
    stab: &StabilizedTrace,
    _candidate: &ToolCandidate,
) -> Result<ActionScript, SynthError> {
    let trace = &stab.base;
    let bindings = &trace.param_bindings;
    let mut steps: Vec<Step> = Vec::new();

    let flat: Vec<(usize, usize, &ActionRecord)> = trace
        .steps
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.actions.iter().enumerate().map(move |(j, a)| (i, j, a)))
        .collect();

    for (pos, (step_idx, action_idx, action)) in flat.iter().enumerate() {
        let trace_step = &trace.steps[*step_idx];
        let locator = stab.locator_for(*step_idx, *action_idx);
        let element = trace_step.interacted_for_action(*action_idx);
        let essential = is_essential(&flat, pos, trace);
        let kind = classify_action(action, locator, essential);

        match kind {
            StepKind::Skip => continue,
            StepKind::Navigation => {
                let ActionKind::GoToUrl { url } = &action.kind else { unreachable!() };
                // navigating to the page we are already on does nothing
                if *url == trace_step.url {
                    continue;
                }
                let url_template = urls::template_concrete_url(url, bindings);
                steps.push(Step::Navigation {
                    description: format!("Navigate to {url_template}"),
                    url_template,
                    origin: Some((*step_idx, *action_idx)),
                });
            }
            StepKind::Extraction => {
                let ActionKind::ExtractContent { goal } = &action.kind else { unreachable!() };
                steps.push(Step::Extraction {
                    goal: goal.clone(),
                    output: output_name(goal),
                    description: format!("Extract {goal}"),
                    origin: Some((*step_idx, *action_idx)),
                });
            }
            StepKind::Agentic => {
                let task_base = if trace_step.brain.next_goal.is_empty() {
                    describe_action(action, element)
                } else {
                    trace_step.brain.next_goal.clone()
                };
                steps.push(Step::Agentic {
                    task: template_free_text(&task_base, bindings),
                    max_steps: DEFAULT_AGENTIC_MAX_STEPS,
                    description: "No stable locator was recorded; delegate to the reasoner"
                        .to_string(),
                    origin: Some((*step_idx, *action_idx)),
                });
            }
            StepKind::Interaction(ikind) => {
                if ikind == InteractionKind::Click && is_focus_click(&flat, pos, trace) {
                    continue;
                }
                steps.push(build_interaction(
                    ikind,
                    action,
                    locator.cloned(),
                    element,
                    bindings,
                    (*step_idx, *action_idx),
                ));
            }
        }
    }

    if steps.is_empty() {
        return Err(SynthError::EmptyScript);
    }

    let params = ActionScript::collect_params(&steps);
    for p in &params {
        if !bindings.contains_key(p) {
            return Err(SynthError::UnboundPlaceholder(p.clone()));
        }
    }
    let script = ActionScript { steps, params };
    script.validate()?;
    Ok(script)
}

/// A later step's success depends on this action when a submit-style click
/// or an extraction still lies ahead (or the action is itself the submit).
fn is_essential(
    flat: &[(usize, usize, &ActionRecord)],
    pos: usize,
    trace: &ExecutionTrace,
) -> bool {
    flat[pos..].iter().any(|(i, j, action)| {
        match &action.kind {
            ActionKind::ExtractContent { .. } => true,
            ActionKind::ClickElement => trace.steps[*i]
                .interacted_for_action(*j)
                .is_some_and(is_submit_element),
            _ => false,
        }
    })
}

fn is_submit_element(el: &InteractedElement) -> bool {
    el.tag == "button"
        || el.attributes.get("type").map(|t| t == "submit").unwrap_or(false)
}

/// A click that merely focuses the control the next action types into or
/// selects from carries no behavior of its own.
fn is_focus_click(
    flat: &[(usize, usize, &ActionRecord)],
    pos: usize,
    trace: &ExecutionTrace,
) -> bool {
    let (i, j, action) = &flat[pos];
    if !matches!(action.kind, ActionKind::ClickElement) {
        return false;
    }
    let Some(clicked) = trace.steps[*i].interacted_for_action(*j) else {
        return false;
    };
    let Some((ni, nj, next)) = flat.get(pos + 1) else {
        return false;
    };
    if !matches!(
        next.kind,
        ActionKind::InputText { .. } | ActionKind::SelectChange { .. } | ActionKind::KeyPress { .. }
    ) {
        return false;
    }
    trace.steps[*ni]
        .interacted_for_action(*nj)
        .is_some_and(|el| el.element_hash == clicked.element_hash)
}

fn build_interaction(
    kind: InteractionKind,
    action: &ActionRecord,
    locator: Option<StableLocator>,
    element: Option<&InteractedElement>,
    bindings: &BTreeMap<String, String>,
    origin: (usize, usize),
) -> Step {
    let label = element.map(element_label).unwrap_or_else(|| "the page".to_string());
    let (value, selected_text, key, scroll_x, scroll_y, seconds, description) = match &action.kind
    {
        ActionKind::InputText { text } => {
            let templated = template_whole_value(text, bindings, false);
            let description = format!("Enter {templated} into {label}");
            (Some(templated), None, None, None, None, None, description)
        }
        ActionKind::SelectChange { selected_text } => {
            let templated = template_whole_value(selected_text, bindings, true);
            let description = format!("Select {templated} in {label}");
            (None, Some(templated), None, None, None, None, description)
        }
        ActionKind::KeyPress { key } => {
            let description = format!("Press {key} in {label}");
            (None, None, Some(key.clone()), None, None, None, description)
        }
        ActionKind::Scroll { dx, dy } => {
            let description = format!("Scroll by ({dx}, {dy})");
            (None, None, None, Some(*dx), Some(*dy), None, description)
        }
        ActionKind::Wait { seconds } => {
            let description = format!("Wait {seconds}s for the page to settle");
            (None, None, None, None, None, Some(*seconds), description)
        }
        ActionKind::ClickElement => {
            let description = format!("Click {label}");
            (None, None, None, None, None, None, description)
        }
        _ => unreachable!("non-interaction kinds classified elsewhere"),
    };
    Step::Interaction {
        kind,
        locator,
        value,
        selected_text,
        key,
        scroll_x,
        scroll_y,
        seconds,
        description,
        origin: Some(origin),
    }
}

fn element_label(el: &InteractedElement) -> String {
    // clickables are best described by their visible text; form controls by
    // their accessible name or selector
    if matches!(el.tag.as_str(), "button" | "a") && !el.text.is_empty() {
        let t: String = el.text.chars().take(30).collect();
        return format!("\"{t}\"");
    }
    if let Some(label) = el.attributes.get("aria-label") {
        return format!("\"{label}\"");
    }
    if let Some(ph) = el.attributes.get("placeholder") {
        return format!("\"{ph}\"");
    }
    if !el.css_selector.is_empty() {
        return el.css_selector.clone();
    }
    el.tag.clone()
}

/// Whole-field parameterization: exact match against a binding value, and
/// for selects a case-insensitive fallback against the option text. No
/// fuzzy matching.
fn template_whole_value(value: &str, bindings: &BTreeMap<String, String>, is_select: bool) -> String {
    for (name, bound) in bindings {
        if bound == value {
            return format!("{{{name}}}");
        }
    }
    if is_select {
        for (name, bound) in bindings {
            if bound.eq_ignore_ascii_case(value) {
                return format!("{{{name}}}");
            }
        }
    }
    value.to_string()
}

/// Free-text parameterization for agentic tasks: substring-replace binding
/// values of meaningful length.
fn template_free_text(text: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for (name, bound) in bindings {
        if bound.len() >= 3 && out.contains(bound.as_str()) {
            out = out.replace(bound.as_str(), &format!("{{{name}}}"));
        }
    }
    out
}

fn describe_action(action: &ActionRecord, element: Option<&InteractedElement>) -> String {
    let label = element.map(element_label).unwrap_or_else(|| "the page".to_string());
    match &action.kind {
        ActionKind::ClickElement => format!("Click {label}"),
        ActionKind::InputText { text } => format!("Enter \"{text}\" into {label}"),
        ActionKind::SelectChange { selected_text } => format!("Select \"{selected_text}\" in {label}"),
        ActionKind::KeyPress { key } => format!("Press {key} in {label}"),
        ActionKind::Scroll { dx, dy } => format!("Scroll by ({dx}, {dy})"),
        _ => "Complete the recorded action".to_string(),
    }
}

fn output_name(goal: &str) -> String {
    let lower = goal.to_lowercase();
    if lower.contains("comment") {
        "comments".to_string()
    } else if lower.contains("result") || lower.contains("listing") {
        "results".to_string()
    } else {
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .take(3)
            .collect();
        if words.is_empty() {
            "content".to_string()
        } else {
            words.join("_")
        }
    }
}

// ---------------------------------------------------------------------------
// Test-input extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expect", rename_all = "snake_case")]
pub enum Expectation {
    Completes,
    ExtractionNonempty,
    UrlMatches { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub inputs: BTreeMap<String, String>,
    pub expectation: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
}

/// Case 1 replays the demonstrated bindings; each unexercised enum option
/// contributes one further case. Every case is schema-valid by construction.
pub fn extract_test_inputs(
    trace: &ExecutionTrace,
    script: &ActionScript,
    schema: &InputSchema,
) -> TestSuite {
    let mut demo_inputs = BTreeMap::new();
    for field in &schema.fields {
        if let Some(v) = trace.param_bindings.get(&field.name) {
            demo_inputs.insert(field.name.clone(), v.clone());
        }
    }
    let has_extraction = script.steps.iter().any(|s| matches!(s, Step::Extraction { .. }));
    let mut cases = vec![TestCase {
        inputs: demo_inputs.clone(),
        expectation: if has_extraction {
            Expectation::ExtractionNonempty
        } else {
            Expectation::Completes
        },
    }];

    for field in &schema.fields {
        if field.value_type != ValueType::Enum {
            continue;
        }
        let Some(options) = &field.options else { continue };
        for option in options {
            let exercised = cases
                .iter()
                .any(|c| c.inputs.get(&field.name) == Some(option));
            if exercised {
                continue;
            }
            let mut inputs = demo_inputs.clone();
            inputs.insert(field.name.clone(), option.clone());
            cases.push(TestCase {
                inputs,
                expectation: Expectation::Completes,
            });
        }
    }

    debug_assert!(cases
        .iter()
        .all(|c| validate_input(schema, &c.inputs).is_empty()));
    TestSuite { cases }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldSpec;
    use crate::stabilize::stabilize_trace;
    use crate::trace::{AgentBrain, TraceStep};

    fn record(kind: ActionKind) -> ActionRecord {
        ActionRecord {
            kind,
            success: true,
            extracted: None,
            http_method: None,
        }
    }

    fn locator(primary: &str) -> StableLocator {
        StableLocator {
            element_hash: "h".to_string(),
            primary: primary.to_string(),
            alternates: vec![],
            stability_score: 1.0,
        }
    }

    #[test]
    fn classify_follows_decision_tree() {
        let nav = record(ActionKind::GoToUrl { url: "http://f.local/".to_string() });
        assert_eq!(classify_action(&nav, None, false), StepKind::Navigation);

        let loc = locator("#q");
        let input = record(ActionKind::InputText { text: "x".to_string() });
        assert_eq!(
            classify_action(&input, Some(&loc), false),
            StepKind::Interaction(InteractionKind::Input)
        );

        let click = record(ActionKind::ClickElement);
        assert_eq!(classify_action(&click, None, true), StepKind::Agentic);
        assert_eq!(classify_action(&click, None, false), StepKind::Skip);

        let extract = record(ActionKind::ExtractContent { goal: "results".to_string() });
        assert_eq!(classify_action(&extract, None, false), StepKind::Extraction);

        let wait = record(ActionKind::Wait { seconds: 1.0 });
        assert_eq!(
            classify_action(&wait, None, false),
            StepKind::Interaction(InteractionKind::Wait)
        );
    }

    fn nav_step(url: &str, page_url: &str) -> TraceStep {
        TraceStep {
            url: page_url.to_string(),
            title: String::new(),
            brain: AgentBrain::default(),
            actions: vec![record(ActionKind::GoToUrl { url: url.to_string() })],
            interacted: vec![],
        }
    }

    fn candidate() -> ToolCandidate {
        ToolCandidate {
            name: "t".to_string(),
            start_url: "http://f.local/".to_string(),
            description: "test".to_string(),
            elements: vec![],
        }
    }

    #[test]
    fn single_navigation_gives_one_step_script() {
        let trace = ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![nav_step("http://f.local/", "about:blank")],
            param_bindings: BTreeMap::new(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate()).unwrap();
        assert_eq!(script.steps.len(), 1);
        assert!(matches!(&script.steps[0], Step::Navigation { url_template, .. } if url_template == "http://f.local/"));
        assert!(script.params.is_empty());
    }

    #[test]
    fn redundant_navigation_is_elided_to_empty() {
        let trace = ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![nav_step("http://f.local/", "http://f.local/")],
            param_bindings: BTreeMap::new(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        assert!(matches!(
            synthesize_script(&stab, &candidate()),
            Err(SynthError::EmptyScript)
        ));
    }

    #[test]
    fn typed_literal_matching_binding_becomes_placeholder() {
        let element = InteractedElement {
            element_hash: "e1".to_string(),
            tag: "input".to_string(),
            attributes: [("id".to_string(), "searchquery".to_string())].into(),
            dom_path: vec![1, 0, 0],
            css_selector: "#searchquery".to_string(),
            ..Default::default()
        };
        let trace = ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![TraceStep {
                url: "http://f.local/".to_string(),
                title: String::new(),
                brain: AgentBrain::default(),
                actions: vec![record(ActionKind::InputText { text: "blue kayak".to_string() })],
                interacted: vec![element],
            }],
            param_bindings: [("query".to_string(), "blue kayak".to_string())].into(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate()).unwrap();
        assert_eq!(script.params, vec!["query"]);
        match &script.steps[0] {
            Step::Interaction { kind: InteractionKind::Input, value, .. } => {
                assert_eq!(value.as_deref(), Some("{query}"));
            }
            other => panic!("unexpected step {other:?}"),
        }
    }

    #[test]
    fn focus_click_before_typing_is_skipped() {
        let element = |hash: &str| InteractedElement {
            element_hash: hash.to_string(),
            tag: "input".to_string(),
            attributes: [("id".to_string(), "q".to_string())].into(),
            dom_path: vec![1, 0],
            css_selector: "#q".to_string(),
            ..Default::default()
        };
        let trace = ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![TraceStep {
                url: "http://f.local/".to_string(),
                title: String::new(),
                brain: AgentBrain::default(),
                actions: vec![
                    record(ActionKind::ClickElement),
                    record(ActionKind::InputText { text: "kayak".to_string() }),
                ],
                interacted: vec![element("same"), element("same")],
            }],
            param_bindings: BTreeMap::new(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate()).unwrap();
        assert_eq!(script.steps.len(), 1, "focus click must be elided");
        assert!(matches!(&script.steps[0], Step::Interaction { kind: InteractionKind::Input, .. }));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let element = InteractedElement {
            element_hash: "e1".to_string(),
            tag: "input".to_string(),
            attributes: [("id".to_string(), "q".to_string())].into(),
            dom_path: vec![1, 0],
            css_selector: "#q".to_string(),
            ..Default::default()
        };
        let trace = ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![
                nav_step("http://f.local/", "about:blank"),
                TraceStep {
                    url: "http://f.local/".to_string(),
                    title: String::new(),
                    brain: AgentBrain::default(),
                    actions: vec![record(ActionKind::InputText { text: "kayak".to_string() })],
                    interacted: vec![element],
                },
            ],
            param_bindings: [("query".to_string(), "kayak".to_string())].into(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        let a = synthesize_script(&stab, &candidate()).unwrap();
        let b = synthesize_script(&stab, &candidate()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    fn enum_schema() -> InputSchema {
        InputSchema {
            is_static: false,
            fields: vec![
                FieldSpec {
                    name: "query".to_string(),
                    value_type: ValueType::Text,
                    required: true,
                    options: None,
                    default: None,
                    description: "search terms".to_string(),
                    example: Some("blue kayak".to_string()),
                },
                FieldSpec {
                    name: "sort".to_string(),
                    value_type: ValueType::Enum,
                    required: false,
                    options: Some(vec![
                        "newest".to_string(),
                        "price_asc".to_string(),
                        "price_desc".to_string(),
                    ]),
                    default: Some("newest".to_string()),
                    description: "sort order".to_string(),
                    example: Some("price_asc".to_string()),
                },
            ],
        }
    }

    fn script_with_extraction() -> ActionScript {
        ActionScript {
            steps: vec![
                Step::Navigation {
                    url_template: "http://f.local/search?q={query}&sort={sort}".to_string(),
                    description: "navigate".to_string(),
                    origin: None,
                },
                Step::Extraction {
                    goal: "result listings".to_string(),
                    output: "results".to_string(),
                    description: "extract".to_string(),
                    origin: None,
                },
            ],
            params: vec!["query".to_string(), "sort".to_string()],
        }
    }

    fn demo_trace() -> ExecutionTrace {
        ExecutionTrace {
            candidate_name: "search".to_string(),
            steps: vec![nav_step(
                "http://f.local/search?q=blue+kayak&sort=price_asc",
                "about:blank",
            )],
            param_bindings: [
                ("query".to_string(), "blue kayak".to_string()),
                ("sort".to_string(), "price_asc".to_string()),
            ]
            .into(),
        }
    }

    #[test]
    fn demo_case_comes_first_with_extraction_expectation() {
        let suite = extract_test_inputs(&demo_trace(), &script_with_extraction(), &enum_schema());
        assert_eq!(suite.cases[0].inputs["query"], "blue kayak");
        assert_eq!(suite.cases[0].inputs["sort"], "price_asc");
        assert_eq!(suite.cases[0].expectation, Expectation::ExtractionNonempty);
    }

    #[test]
    fn one_case_per_unexercised_enum_option() {
        let suite = extract_test_inputs(&demo_trace(), &script_with_extraction(), &enum_schema());
        // demo exercised price_asc; newest and price_desc remain
        assert_eq!(suite.cases.len(), 3);
        let sorts: Vec<_> = suite.cases.iter().map(|c| c.inputs["sort"].clone()).collect();
        assert_eq!(sorts, vec!["price_asc", "newest", "price_desc"]);
    }

    #[test]
    fn free_text_only_schema_gives_single_case() {
        let schema = InputSchema {
            is_static: false,
            fields: vec![FieldSpec {
                name: "query".to_string(),
                value_type: ValueType::Text,
                required: true,
                options: None,
                default: None,
                description: String::new(),
                example: None,
            }],
        };
        let mut script = script_with_extraction();
        script.params = vec!["query".to_string()];
        script.steps[0] = Step::Navigation {
            url_template: "http://f.local/search?q={query}".to_string(),
            description: "navigate".to_string(),
            origin: None,
        };
        let trace = ExecutionTrace {
            param_bindings: [("query".to_string(), "blue kayak".to_string())].into(),
            ..demo_trace()
        };
        let suite = extract_test_inputs(&trace, &script, &schema);
        assert_eq!(suite.cases.len(), 1);
    }

    #[test]
    fn script_validation_rejects_bounds_violations() {
        let script = ActionScript {
            steps: vec![Step::Agentic {
                task: "do things".to_string(),
                max_steps: 9,
                description: String::new(),
                origin: None,
            }],
            params: vec![],
        };
        assert!(script.validate().is_err());

        let script = ActionScript {
            steps: vec![Step::Interaction {
                kind: InteractionKind::Click,
                locator: None,
                value: None,
                selected_text: None,
                key: None,
                scroll_x: None,
                scroll_y: None,
                seconds: None,
                description: String::new(),
                origin: None,
            }],
            params: vec![],
        };
        assert!(script.validate().is_err());
    }

    #[test]
    fn output_names_are_meaningful() {
        assert_eq!(output_name("result listings"), "results");
        assert_eq!(output_name("comments on the listing"), "comments");
        assert_eq!(output_name("page body text"), "page_body_text");
    }
}
