//! Canonical trace and tool-candidate formats.
//!
//! A trace file is one JSON document: `{candidate, steps[], bindings{}}`.
//! Each step records the page URL/title, the recording agent's annotations,
//! the actions taken, and one interacted-element capture per UI action,
//! aligned by position. Screenshot payloads in recorder output are accepted
//! and discarded; unknown fields are ignored; unknown action kinds are
//! rejected. See docs/formats.md for the full field-by-field description.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace at {position}: {reason}")]
    MalformedTrace { position: String, reason: String },
    #[error("step {step}: {ui_actions} UI actions but {interacted} interacted elements")]
    AlignmentError {
        step: usize,
        ui_actions: usize,
        interacted: usize,
    },
    #[error("binding `{name}` = `{value}` does not occur anywhere in the trace")]
    UnanchoredBinding { name: String, value: String },
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("malformed candidates: {0}")]
    MalformedCandidates(String),
    #[error("duplicate candidate name `{0}`")]
    DuplicateName(String),
}

/// A (start URL, element hints, goal) triple proposed by discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCandidate {
    pub name: String,
    pub start_url: String,
    pub description: String,
    #[serde(default)]
    pub elements: Vec<ElementHint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementHint {
    #[serde(rename = "type")]
    pub kind: HintKind,
    pub purpose: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HintKind {
    Input,
    Select,
    Button,
    Link,
    Textarea,
}

/// The recording agent's per-step annotations. Opaque to synthesis; kept for
/// debugging and for reasoner context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBrain {
    pub evaluation_previous_goal: String,
    pub memory: String,
    pub next_goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    #[serde(flatten)]
    pub kind: ActionKind,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    /// HTTP method the action caused, when it triggered a request. Recorded
    /// by the fixture backend; feeds the promoter's side-effect rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ActionKind {
    GoToUrl { url: String },
    ClickElement,
    InputText { text: String },
    SelectChange { selected_text: String },
    KeyPress { key: String },
    Scroll { dx: i64, dy: i64 },
    ExtractContent { goal: String },
    Wait { seconds: f64 },
}

impl ActionKind {
    /// Actions that target a DOM element and therefore carry an aligned
    /// [`InteractedElement`] capture in the trace.
    pub fn is_ui_interaction(&self) -> bool {
        matches!(
            self,
            ActionKind::ClickElement
                | ActionKind::InputText { .. }
                | ActionKind::SelectChange { .. }
                | ActionKind::KeyPress { .. }
                | ActionKind::Scroll { .. }
        )
    }

    /// String payloads, used to anchor param bindings.
    pub fn payload_strings(&self) -> Vec<&str> {
        match self {
            ActionKind::GoToUrl { url } => vec![url],
            ActionKind::InputText { text } => vec![text],
            ActionKind::SelectChange { selected_text } => vec![selected_text],
            ActionKind::KeyPress { key } => vec![key],
            ActionKind::ExtractContent { goal } => vec![goal],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Capture of a DOM element the agent interacted with, as recorded at
/// interaction time. `text`, `parent_tag`, `select_options` and
/// `preselected` are context captures consumed by element hashing and
/// schema induction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractedElement {
    pub element_hash: String,
    pub tag: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub dom_path: Vec<usize>,
    #[serde(default)]
    pub css_selector: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub parent_tag: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub select_options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preselected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Page URL when the step's actions began.
    pub url: String,
    pub title: String,
    pub brain: AgentBrain,
    pub actions: Vec<ActionRecord>,
    #[serde(default)]
    pub interacted: Vec<InteractedElement>,
}

impl TraceStep {
    pub fn ui_action_count(&self) -> usize {
        self.actions.iter().filter(|a| a.kind.is_ui_interaction()).count()
    }

    /// The interacted element aligned to the given action index, if that
    /// action is a UI interaction.
    pub fn interacted_for_action(&self, action_idx: usize) -> Option<&InteractedElement> {
        let action = self.actions.get(action_idx)?;
        if !action.kind.is_ui_interaction() {
            return None;
        }
        let nth = self.actions[..action_idx]
            .iter()
            .filter(|a| a.kind.is_ui_interaction())
            .count();
        self.interacted.get(nth)
    }
}

/// The recorded demonstration: ordered steps plus the literal values the
/// demonstration supplied for each parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    #[serde(rename = "candidate")]
    pub candidate_name: String,
    pub steps: Vec<TraceStep>,
    #[serde(rename = "bindings", default)]
    pub param_bindings: BTreeMap<String, String>,
}

impl ExecutionTrace {
    /// Enforces the structural invariants that make a trace usable: at least
    /// one step, per-step action/element alignment, nonempty element hashes,
    /// parseable navigation URLs, and anchored bindings.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.steps.is_empty() {
            return Err(TraceError::MalformedTrace {
                position: "steps".to_string(),
                reason: "trace has no steps".to_string(),
            });
        }
        for (i, step) in self.steps.iter().enumerate() {
            let ui = step.ui_action_count();
            if ui != step.interacted.len() {
                return Err(TraceError::AlignmentError {
                    step: i,
                    ui_actions: ui,
                    interacted: step.interacted.len(),
                });
            }
            for el in &step.interacted {
                if el.element_hash.is_empty() {
                    return Err(TraceError::MalformedTrace {
                        position: format!("steps[{i}].interacted"),
                        reason: "empty element_hash on a UI-interaction record".to_string(),
                    });
                }
            }
            for (j, action) in step.actions.iter().enumerate() {
                if let ActionKind::GoToUrl { url } = &action.kind {
                    if Url::parse(url).is_err() {
                        return Err(TraceError::MalformedTrace {
                            position: format!("steps[{i}].actions[{j}]"),
                            reason: format!("go_to_url target `{url}` is not a parseable URL"),
                        });
                    }
                }
            }
        }
        for (name, value) in &self.param_bindings {
            if !self.anchors(value) {
                return Err(TraceError::UnanchoredBinding {
                    name: name.clone(),
                    value: value.clone(),
                });
            }
        }
        Ok(())
    }

    /// True when `value` occurs verbatim in some action payload or step URL
    /// (URLs are also checked percent-decoded).
    fn anchors(&self, value: &str) -> bool {
        self.steps.iter().any(|step| {
            if step.url.contains(value) || percent_decode(&step.url).contains(value) {
                return true;
            }
            step.actions.iter().any(|a| {
                a.kind.payload_strings().iter().any(|p| {
                    p.contains(value) || percent_decode(p).contains(value)
                })
            })
        })
    }

    /// Iterate UI-interaction actions with their aligned element captures.
    pub fn ui_actions(&self) -> impl Iterator<Item = UiActionRef<'_>> {
        self.steps.iter().enumerate().flat_map(|(step_idx, step)| {
            step.actions
                .iter()
                .enumerate()
                .filter(|(_, a)| a.kind.is_ui_interaction())
                .map(move |(action_idx, action)| UiActionRef {
                    step_idx,
                    action_idx,
                    action,
                    element: step
                        .interacted_for_action(action_idx)
                        .expect("validated trace aligns interacted elements"),
                })
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UiActionRef<'a> {
    pub step_idx: usize,
    pub action_idx: usize,
    pub action: &'a ActionRecord,
    pub element: &'a InteractedElement,
}

/// Decode `%xx` escapes and `+` as space. Invalid escapes pass through.
pub fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                let hex = &s[i + 1..i + 3];
                if let Ok(b) = u8::from_str_radix(hex, 16) {
                    out.push(b);
                    i += 3;
                } else {
                    out.push(b'%');
                    i += 1;
                }
            }
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

pub fn parse_trace(raw: &[u8]) -> Result<ExecutionTrace, TraceError> {
    let trace: ExecutionTrace =
        serde_json::from_slice(raw).map_err(|e| TraceError::MalformedTrace {
            position: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
    trace.validate()?;
    Ok(trace)
}

pub fn serialize_trace(trace: &ExecutionTrace) -> String {
    let mut s = serde_json::to_string_pretty(trace).expect("trace serialization is infallible");
    s.push('\n');
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateFile {
    tools: Vec<ToolCandidate>,
}

pub fn parse_candidates(raw: &[u8]) -> Result<Vec<ToolCandidate>, CandidateError> {
    let file: CandidateFile = serde_json::from_slice(raw)
        .map_err(|e| CandidateError::MalformedCandidates(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for cand in &file.tools {
        if cand.name.is_empty() {
            return Err(CandidateError::MalformedCandidates(
                "candidate with empty name".to_string(),
            ));
        }
        if !seen.insert(cand.name.clone()) {
            return Err(CandidateError::DuplicateName(cand.name.clone()));
        }
        if Url::parse(&cand.start_url).is_err() {
            return Err(CandidateError::MalformedCandidates(format!(
                "candidate `{}`: start_url `{}` is not an absolute URL",
                cand.name, cand.start_url
            )));
        }
        for hint in &cand.elements {
            if let Some(options) = &hint.options {
                if options.is_empty() {
                    return Err(CandidateError::MalformedCandidates(format!(
                        "candidate `{}`: select hint `{}` has an empty options list",
                        cand.name, hint.purpose
                    )));
                }
            }
        }
    }
    Ok(file.tools)
}

pub fn serialize_candidates(candidates: &[ToolCandidate]) -> String {
    let file = CandidateFile {
        tools: candidates.to_vec(),
    };
    let mut s =
        serde_json::to_string_pretty(&file).expect("candidate serialization is infallible");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_trace_json() -> String {
        r#"{
            "candidate": "go_home",
            "steps": [{
                "url": "about:blank",
                "title": "",
                "brain": {"evaluation_previous_goal": "", "memory": "", "next_goal": "open the site"},
                "actions": [{"kind": "go_to_url", "payload": {"url": "http://fixture.local/"}, "success": true}],
                "interacted": []
            }],
            "bindings": {}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_single_navigation_trace() {
        let trace = parse_trace(minimal_trace_json().as_bytes()).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].interacted.len(), 0);
        assert_eq!(trace.candidate_name, "go_home");
    }

    #[test]
    fn click_without_interacted_element_is_misaligned() {
        let json = r#"{
            "candidate": "broken",
            "steps": [{
                "url": "http://fixture.local/",
                "title": "Home",
                "brain": {"evaluation_previous_goal": "", "memory": "", "next_goal": ""},
                "actions": [{"kind": "click_element", "success": true}],
                "interacted": []
            }],
            "bindings": {}
        }"#;
        match parse_trace(json.as_bytes()) {
            Err(TraceError::AlignmentError { step: 0, ui_actions: 1, interacted: 0 }) => {}
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_action_kind_is_rejected() {
        let json = minimal_trace_json().replace("go_to_url", "teleport");
        assert!(matches!(
            parse_trace(json.as_bytes()),
            Err(TraceError::MalformedTrace { .. })
        ));
    }

    #[test]
    fn unknown_fields_are_ignored_screenshots_discarded() {
        let json = minimal_trace_json().replace(
            "\"interacted\": []",
            "\"interacted\": [], \"screenshot\": \"base64...\", \"extra\": 1",
        );
        let trace = parse_trace(json.as_bytes()).unwrap();
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn unanchored_binding_is_rejected() {
        let json = minimal_trace_json().replace(
            "\"bindings\": {}",
            "\"bindings\": {\"query\": \"nowhere\"}",
        );
        assert!(matches!(
            parse_trace(json.as_bytes()),
            Err(TraceError::UnanchoredBinding { .. })
        ));
    }

    #[test]
    fn binding_anchored_in_url_is_accepted() {
        let json = minimal_trace_json().replace(
            "\"bindings\": {}",
            "\"bindings\": {\"host\": \"fixture.local\"}",
        );
        assert!(parse_trace(json.as_bytes()).is_ok());
    }

    // Listing-style discovery output: one tool entry, four element hints, a
    // sort select with three options.
    const DISCOVERY_JSON: &str = r#"{
      "tools": [
        {
          "name": "strategic_tools_name",
          "start_url": "https://example.com/some/page",
          "description": "Accomplish specific goal with user-provided parameters",
          "elements": [
            {"type": "input", "purpose": "enter user-provided search terms"},
            {"type": "select", "purpose": "choose user-specified category", "options": ["Electronics", "Clothing", "Books", "All Categories"]},
            {"type": "select", "purpose": "sort results", "options": ["Newly listed", "Lower price first", "Higher price first"]},
            {"type": "button", "purpose": "submit search"}
          ]
        }
      ]
    }"#;

    #[test]
    fn discovery_example_parses() {
        let cands = parse_candidates(DISCOVERY_JSON.as_bytes()).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].elements.len(), 4);
        let sort = &cands[0].elements[2];
        assert_eq!(sort.kind, HintKind::Select);
        assert_eq!(
            sort.options.as_deref().unwrap(),
            ["Newly listed", "Lower price first", "Higher price first"]
        );
    }

    #[test]
    fn empty_tools_array_is_empty_list() {
        let cands = parse_candidates(br#"{"tools": []}"#).unwrap();
        assert!(cands.is_empty());
    }

    #[test]
    fn duplicate_candidate_names_rejected() {
        let json = r#"{"tools": [
            {"name": "search_listings", "start_url": "http://a.local/", "description": "", "elements": []},
            {"name": "search_listings", "start_url": "http://b.local/", "description": "", "elements": []}
        ]}"#;
        assert!(matches!(
            parse_candidates(json.as_bytes()),
            Err(CandidateError::DuplicateName(name)) if name == "search_listings"
        ));
    }

    #[test]
    fn relative_start_url_rejected() {
        let json = r#"{"tools": [
            {"name": "x", "start_url": "/relative", "description": "", "elements": []}
        ]}"#;
        assert!(matches!(
            parse_candidates(json.as_bytes()),
            Err(CandidateError::MalformedCandidates(_))
        ));
    }

    #[test]
    fn select_option_order_is_preserved() {
        let cands = parse_candidates(DISCOVERY_JSON.as_bytes()).unwrap();
        let cat = &cands[0].elements[1];
        assert_eq!(
            cat.options.as_deref().unwrap(),
            ["Electronics", "Clothing", "Books", "All Categories"]
        );
        let round = serialize_candidates(&cands);
        let again = parse_candidates(round.as_bytes()).unwrap();
        assert_eq!(again, cands);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_brain() -> impl Strategy<Value = AgentBrain> {
            ("[a-z ]{0,12}", "[a-z ]{0,12}", "[a-z ]{0,12}").prop_map(|(a, b, c)| AgentBrain {
                evaluation_previous_goal: a,
                memory: b,
                next_goal: c,
            })
        }

        fn arb_action() -> impl Strategy<Value = ActionKind> {
            prop_oneof![
                Just(ActionKind::ClickElement),
                "[a-z ]{1,10}".prop_map(|text| ActionKind::InputText { text }),
                "[A-Za-z]{1,8}".prop_map(|selected_text| ActionKind::SelectChange {
                    selected_text
                }),
                (0i64..500, 0i64..500).prop_map(|(dx, dy)| ActionKind::Scroll { dx, dy }),
                "[a-z ]{1,10}".prop_map(|goal| ActionKind::ExtractContent { goal }),
                Just(ActionKind::Wait { seconds: 0.5 }),
            ]
        }

        fn arb_step() -> impl Strategy<Value = TraceStep> {
            (
                arb_brain(),
                proptest::collection::vec(arb_action(), 1..4),
                "[a-z]{1,8}",
            )
                .prop_map(|(brain, kinds, page)| {
                    let actions: Vec<ActionRecord> = kinds
                        .into_iter()
                        .map(|kind| ActionRecord {
                            kind,
                            success: true,
                            extracted: None,
                            http_method: None,
                        })
                        .collect();
                    let interacted = actions
                        .iter()
                        .filter(|a| a.kind.is_ui_interaction())
                        .enumerate()
                        .map(|(i, _)| InteractedElement {
                            element_hash: format!("h{i}"),
                            tag: "input".to_string(),
                            ..Default::default()
                        })
                        .collect();
                    TraceStep {
                        url: format!("http://fixture.local/{page}"),
                        title: page,
                        brain,
                        actions,
                        interacted,
                    }
                })
        }

        fn arb_trace() -> impl Strategy<Value = ExecutionTrace> {
            proptest::collection::vec(arb_step(), 1..5).prop_map(|steps| {
                // bind a param to the first typed literal so the anchoring
                // invariant is exercised on every generated trace
                let mut param_bindings = BTreeMap::new();
                'outer: for step in &steps {
                    for action in &step.actions {
                        if let ActionKind::InputText { text } = &action.kind {
                            param_bindings.insert("p0".to_string(), text.clone());
                            break 'outer;
                        }
                    }
                }
                ExecutionTrace {
                    candidate_name: "generated".to_string(),
                    steps,
                    param_bindings,
                }
            })
        }

        proptest! {
            #[test]
            fn parse_serialize_is_identity(trace in arb_trace()) {
                prop_assert!(trace.validate().is_ok());
                let json = serialize_trace(&trace);
                let reparsed = parse_trace(json.as_bytes()).unwrap();
                prop_assert_eq!(&reparsed, &trace);
                // serializing again is byte-stable
                prop_assert_eq!(serialize_trace(&reparsed), json);
            }

            #[test]
            fn parsing_preserves_step_order(trace in arb_trace()) {
                let json = serialize_trace(&trace);
                let reparsed = parse_trace(json.as_bytes()).unwrap();
                let urls: Vec<_> = trace.steps.iter().map(|s| &s.url).collect();
                let reparsed_urls: Vec<_> = reparsed.steps.iter().map(|s| &s.url).collect();
                prop_assert_eq!(urls, reparsed_urls);
            }

            #[test]
            fn bindings_are_always_anchored(trace in arb_trace()) {
                for value in trace.param_bindings.values() {
                    prop_assert!(trace.anchors(value));
                }
            }
        }
    }

    // (Also referenced by interacted_element capture fields.)
    #[test]
    fn interacted_for_action_maps_positionally() {
        let step = TraceStep {
            url: "http://fixture.local/".to_string(),
            title: "Home".to_string(),
            brain: AgentBrain::default(),
            actions: vec![
                ActionRecord {
                    kind: ActionKind::GoToUrl { url: "http://fixture.local/".to_string() },
                    success: true,
                    extracted: None,
                    http_method: Some("GET".to_string()),
                },
                ActionRecord {
                    kind: ActionKind::ClickElement,
                    success: true,
                    extracted: None,
                    http_method: None,
                },
                ActionRecord {
                    kind: ActionKind::InputText { text: "kayak".to_string() },
                    success: true,
                    extracted: None,
                    http_method: None,
                },
            ],
            interacted: vec![
                InteractedElement {
                    element_hash: "h-click".to_string(),
                    tag: "button".to_string(),
                    ..Default::default()
                },
                InteractedElement {
                    element_hash: "h-input".to_string(),
                    tag: "input".to_string(),
                    ..Default::default()
                },
            ],
        };
        assert!(step.interacted_for_action(0).is_none());
        assert_eq!(step.interacted_for_action(1).unwrap().element_hash, "h-click");
        assert_eq!(step.interacted_for_action(2).unwrap().element_hash, "h-input");
    }
}
