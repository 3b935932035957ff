//! Locator stabilization: resolve each interacted element to a primary
//! selector with ranked alternates, or flag the surrounding steps unstable.
//!
//! Ranking is attribute-quality based: id > name > aria-label > other stable
//! attributes > positional dom-path. The scores and the depth threshold are
//! calibration constants pinned by tests; tune with care.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::trace::{ExecutionTrace, InteractedElement};
use crate::urls;

pub const SCORE_ID: f64 = 1.0;
pub const SCORE_NAME: f64 = 0.9;
pub const SCORE_ARIA_LABEL: f64 = 0.8;
pub const SCORE_ATTR_CSS: f64 = 0.6;
pub const SCORE_DOM_PATH: f64 = 0.3;
/// dom-path-only elements deeper than this are not worth replaying.
pub const UNSTABLE_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum StabilizeError {
    #[error("every UI action in the trace is unstable")]
    WhollyUnstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableLocator {
    pub element_hash: String,
    pub primary: String,
    pub alternates: Vec<String>,
    pub stability_score: f64,
}

impl StableLocator {
    /// Primary first, then alternates.
    pub fn selectors(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary.as_str()).chain(self.alternates.iter().map(|s| s.as_str()))
    }
}

#[derive(Debug, Clone)]
pub struct StabilizedTrace {
    pub base: ExecutionTrace,
    /// (step index, action index) -> locator, for every stable UI action.
    pub locators: BTreeMap<(usize, usize), StableLocator>,
    /// Inclusive step-index ranges containing unstable UI actions.
    pub unstable_segments: Vec<(usize, usize)>,
}

impl StabilizedTrace {
    pub fn locator_for(&self, step_idx: usize, action_idx: usize) -> Option<&StableLocator> {
        self.locators.get(&(step_idx, action_idx))
    }

    pub fn step_is_unstable(&self, step_idx: usize) -> bool {
        self.unstable_segments
            .iter()
            .any(|(lo, hi)| (*lo..=*hi).contains(&step_idx))
    }

    /// Debug serialization; locator keys become explicit step/action fields.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            step: usize,
            action: usize,
            locator: &'a StableLocator,
        }
        #[derive(Serialize)]
        struct Repr<'a> {
            base: &'a ExecutionTrace,
            locators: Vec<Entry<'a>>,
            unstable_segments: &'a [(usize, usize)],
        }
        let repr = Repr {
            base: &self.base,
            locators: self
                .locators
                .iter()
                .map(|((step, action), locator)| Entry { step: *step, action: *action, locator })
                .collect(),
            unstable_segments: &self.unstable_segments,
        };
        serde_json::to_string_pretty(&repr).expect("stabilized trace serializes")
    }
}

/// Content-derived element identity: survives re-rendering, changes on
/// semantic edits (different id, different label text, different tag).
pub fn compute_element_hash(element: &InteractedElement) -> String {
    let mut canon = String::new();
    canon.push_str("tag=");
    canon.push_str(&element.tag);
    canon.push('\n');
    for key in ["id", "name", "type", "aria-label", "placeholder", "href"] {
        if let Some(value) = element.attributes.get(key) {
            let value = if key == "href" { urls::path_of(value).to_string() } else { value.clone() };
            canon.push_str(key);
            canon.push('=');
            canon.push_str(&value);
            canon.push('\n');
        }
    }
    canon.push_str("text=");
    canon.push_str(&normalize_ws(&element.text));
    canon.push('\n');
    canon.push_str("parent=");
    canon.push_str(&element.parent_tag);
    let digest = Sha256::digest(canon.as_bytes());
    hex::encode(&digest[..8])
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct StabilizeOptions {
    /// Selectors observed failing in a previous validation attempt; excluded
    /// from ranking so refinement swaps to the next most stable candidate.
    pub banned_selectors: BTreeSet<String>,
}

pub fn stabilize_trace(trace: &ExecutionTrace) -> Result<StabilizedTrace, StabilizeError> {
    stabilize_trace_with(trace, &StabilizeOptions::default())
}

pub fn stabilize_trace_with(
    trace: &ExecutionTrace,
    options: &StabilizeOptions,
) -> Result<StabilizedTrace, StabilizeError> {
    let mut locators = BTreeMap::new();
    let mut unstable_steps = BTreeSet::new();
    let mut total_ui = 0usize;

    for ui in trace.ui_actions() {
        total_ui += 1;
        match rank_selectors(ui.element, options) {
            Some(ranked) => {
                locators.insert((ui.step_idx, ui.action_idx), ranked);
            }
            None => {
                unstable_steps.insert(ui.step_idx);
            }
        }
    }

    // an unstable action poisons its whole step: drop that step's locators
    locators.retain(|(step, _), _| !unstable_steps.contains(step));

    if total_ui > 0 && locators.is_empty() && !unstable_steps.is_empty() {
        return Err(StabilizeError::WhollyUnstable);
    }

    Ok(StabilizedTrace {
        base: trace.clone(),
        locators,
        unstable_segments: merge_ranges(&unstable_steps),
    })
}

fn merge_ranges(steps: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for &step in steps {
        match ranges.last_mut() {
            Some((_, hi)) if *hi + 1 == step => *hi = step,
            _ => ranges.push((step, step)),
        }
    }
    ranges
}

fn add_candidate(
    candidates: &mut Vec<(f64, String)>,
    banned: &BTreeSet<String>,
    score: f64,
    selector: String,
) {
    if banned.contains(&selector) {
        return;
    }
    if !candidates.iter().any(|(_, s)| *s == selector) {
        candidates.push((score, selector));
    }
}

/// Ranked selector candidates for one element, or None when the element is
/// unstable (no attribute anchors and a too-deep or missing dom path).
fn rank_selectors(element: &InteractedElement, options: &StabilizeOptions) -> Option<StableLocator> {
    let mut candidates: Vec<(f64, String)> = Vec::new();
    let banned = &options.banned_selectors;

    if let Some(id) = element.attributes.get("id") {
        if !id.is_empty() {
            add_candidate(&mut candidates, banned, SCORE_ID, format!("#{id}"));
        }
    }
    if let Some(name) = element.attributes.get("name") {
        if !name.is_empty() {
            add_candidate(
                &mut candidates,
                banned,
                SCORE_NAME,
                format!("{}[name={}]", element.tag, name),
            );
        }
    }
    if let Some(label) = element.attributes.get("aria-label") {
        if !label.is_empty() {
            add_candidate(
                &mut candidates,
                banned,
                SCORE_ARIA_LABEL,
                format!("{}[aria-label=\"{}\"]", element.tag, label),
            );
        }
    }
    for attr in ["type", "placeholder", "href"] {
        if let Some(value) = element.attributes.get(attr) {
            if !value.is_empty() {
                add_candidate(
                    &mut candidates,
                    banned,
                    SCORE_ATTR_CSS,
                    format!("{}[{}={}]", element.tag, attr, quote_if_needed(value)),
                );
            }
        }
    }
    if !element.css_selector.is_empty() {
        add_candidate(&mut candidates, banned, SCORE_ATTR_CSS, element.css_selector.clone());
    }
    for alt in &element.alternates {
        if !alt.is_empty() {
            add_candidate(&mut candidates, banned, SCORE_ATTR_CSS, alt.clone());
        }
    }

    let has_attribute_anchor = !candidates.is_empty();
    if !element.dom_path.is_empty() && (has_attribute_anchor || element.dom_path.len() <= UNSTABLE_DEPTH)
    {
        let path = element
            .dom_path
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("/");
        // tag-qualified so that structural drift placing another element at
        // this position reads as a miss rather than a wrong-target hit
        add_candidate(
            &mut candidates,
            banned,
            SCORE_DOM_PATH,
            format!("@path:{}:{path}", element.tag),
        );
    }

    if candidates.is_empty() {
        return None;
    }

    // total order: score desc, then shortest selector, then lexicographic
    candidates.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then_with(|| a.len().cmp(&b.len()))
            .then_with(|| a.cmp(b))
    });

    let (score, primary) = candidates[0].clone();
    let alternates = candidates[1..].iter().map(|(_, s)| s.clone()).collect();
    Some(StableLocator {
        element_hash: element.element_hash.clone(),
        primary,
        alternates,
        stability_score: score,
    })
}

fn quote_if_needed(value: &str) -> String {
    if value.chars().any(|c| c.is_whitespace() || c == ']' || c == '=') {
        format!("\"{value}\"")
    } else {
        value.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{ActionKind, ActionRecord, AgentBrain, TraceStep};

    fn element(attrs: &[(&str, &str)], dom_path: Vec<usize>) -> InteractedElement {
        let mut el = InteractedElement {
            element_hash: "seed".to_string(),
            tag: "input".to_string(),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            dom_path,
            ..Default::default()
        };
        el.element_hash = compute_element_hash(&el);
        el
    }

    fn one_click_trace(el: InteractedElement) -> ExecutionTrace {
        ExecutionTrace {
            candidate_name: "t".to_string(),
            steps: vec![TraceStep {
                url: "http://fixture.local/".to_string(),
                title: String::new(),
                brain: AgentBrain::default(),
                actions: vec![ActionRecord {
                    kind: ActionKind::ClickElement,
                    success: true,
                    extracted: None,
                    http_method: None,
                }],
                interacted: vec![el],
            }],
            param_bindings: BTreeMap::new(),
        }
    }

    #[test]
    fn hash_is_deterministic() {
        let a = element(&[("id", "searchquery"), ("name", "q")], vec![1, 0, 0]);
        let b = element(&[("id", "searchquery"), ("name", "q")], vec![1, 0, 0]);
        assert_eq!(compute_element_hash(&a), compute_element_hash(&b));
    }

    #[test]
    fn hash_ignores_attribute_insertion_order() {
        let mut a = InteractedElement {
            tag: "input".to_string(),
            ..Default::default()
        };
        a.attributes.insert("name".to_string(), "q".to_string());
        a.attributes.insert("id".to_string(), "searchquery".to_string());
        let mut b = InteractedElement {
            tag: "input".to_string(),
            ..Default::default()
        };
        b.attributes.insert("id".to_string(), "searchquery".to_string());
        b.attributes.insert("name".to_string(), "q".to_string());
        assert_eq!(compute_element_hash(&a), compute_element_hash(&b));
    }

    #[test]
    fn hash_changes_when_id_renamed() {
        let a = element(&[("id", "searchquery")], vec![1, 0, 0]);
        let b = element(&[("id", "finder")], vec![1, 0, 0]);
        assert_ne!(compute_element_hash(&a), compute_element_hash(&b));
    }

    #[test]
    fn hash_ignores_unstable_attributes_and_position() {
        let a = element(&[("id", "x"), ("class", "a b"), ("style", "c")], vec![1, 0]);
        let b = element(&[("id", "x"), ("class", "zz")], vec![4, 2, 2]);
        assert_eq!(compute_element_hash(&a), compute_element_hash(&b));
    }

    #[test]
    fn ranking_prefers_id_then_name_then_path() {
        let el = element(&[("id", "searchquery"), ("name", "q")], vec![1, 0, 0]);
        let stab = stabilize_trace(&one_click_trace(el)).unwrap();
        let loc = stab.locator_for(0, 0).unwrap();
        assert_eq!(loc.primary, "#searchquery");
        assert_eq!(loc.alternates, vec!["input[name=q]", "@path:input:1/0/0"]);
        assert_eq!(loc.stability_score, SCORE_ID);
    }

    #[test]
    fn no_ui_actions_gives_empty_map() {
        let trace = ExecutionTrace {
            candidate_name: "nav_only".to_string(),
            steps: vec![TraceStep {
                url: "about:blank".to_string(),
                title: String::new(),
                brain: AgentBrain::default(),
                actions: vec![ActionRecord {
                    kind: ActionKind::GoToUrl { url: "http://fixture.local/".to_string() },
                    success: true,
                    extracted: None,
                    http_method: Some("GET".to_string()),
                }],
                interacted: vec![],
            }],
            param_bindings: BTreeMap::new(),
        };
        let stab = stabilize_trace(&trace).unwrap();
        assert!(stab.locators.is_empty());
        assert!(stab.unstable_segments.is_empty());
    }

    #[test]
    fn deep_anonymous_element_is_unstable_and_whole_trace_errors() {
        let el = element(&[], vec![0; 12]);
        match stabilize_trace(&one_click_trace(el)) {
            Err(StabilizeError::WhollyUnstable) => {}
            other => panic!("expected WhollyUnstable, got {other:?}"),
        }
    }

    #[test]
    fn shallow_anonymous_element_gets_dom_path_locator() {
        let el = element(&[], vec![1, 0, 2]);
        let stab = stabilize_trace(&one_click_trace(el)).unwrap();
        let loc = stab.locator_for(0, 0).unwrap();
        assert_eq!(loc.primary, "@path:input:1/0/2");
        assert_eq!(loc.stability_score, SCORE_DOM_PATH);
    }

    #[test]
    fn banned_primary_swaps_to_next_candidate() {
        let el = element(&[("id", "searchquery"), ("name", "q")], vec![1, 0, 0]);
        let trace = one_click_trace(el);
        let mut options = StabilizeOptions::default();
        options.banned_selectors.insert("#searchquery".to_string());
        let stab = stabilize_trace_with(&trace, &options).unwrap();
        assert_eq!(stab.locator_for(0, 0).unwrap().primary, "input[name=q]");
    }

    #[test]
    fn equal_scores_tie_break_short_then_lexicographic() {
        let el = element(&[("type", "text"), ("placeholder", "Search...")], vec![1]);
        let stab = stabilize_trace(&one_click_trace(el)).unwrap();
        let loc = stab.locator_for(0, 0).unwrap();
        assert_eq!(loc.primary, "input[type=text]");
    }

    #[test]
    fn determinism_same_trace_same_output() {
        let el = element(&[("id", "a"), ("name", "b"), ("type", "text")], vec![2, 1]);
        let trace = one_click_trace(el);
        let a = stabilize_trace(&trace).unwrap();
        let b = stabilize_trace(&trace).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn unstable_step_poisons_sibling_locators() {
        let good = element(&[("id", "ok")], vec![1, 0]);
        let bad = element(&[], vec![0; 12]);
        let trace = ExecutionTrace {
            candidate_name: "mixed".to_string(),
            steps: vec![TraceStep {
                url: "http://fixture.local/".to_string(),
                title: String::new(),
                brain: AgentBrain::default(),
                actions: vec![
                    ActionRecord {
                        kind: ActionKind::ClickElement,
                        success: true,
                        extracted: None,
                        http_method: None,
                    },
                    ActionRecord {
                        kind: ActionKind::ClickElement,
                        success: true,
                        extracted: None,
                        http_method: None,
                    },
                ],
                interacted: vec![good, bad],
            }],
            param_bindings: BTreeMap::new(),
        };
        match stabilize_trace(&trace) {
            // both actions live in step 0; the unstable one drags the step down
            Err(StabilizeError::WhollyUnstable) => {}
            Ok(stab) => panic!("expected WhollyUnstable, got {:?}", stab.unstable_segments),
        }
    }
}
