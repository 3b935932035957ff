//! Pass-2 URL promotion: replace an eligible UI subsequence with a single
//! templated navigation, verified by replaying both scripts on
//! identically-seeded sessions and comparing extraction output.
//!
//! Eligibility is conservative. A run is refused outright when the trace
//! crossed a non-GET request, when the post-run URL gained a fresh resource
//! id, when any changed query parameter cannot be attributed to a binding or
//! to the replaced interactions, or when binding-to-parameter assignment is
//! ambiguous. Refusing a sound promotion costs steps; accepting an unsound
//! one corrupts the tool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{execute_script, BackendFactory};
use crate::stabilize::StabilizedTrace;
use crate::synth::{ActionScript, Step};
use crate::trace::{ActionKind, percent_decode};
use crate::urls;

#[derive(Debug, Error)]
pub enum PromoteError {
    #[error("equivalence replay cannot run: {0}")]
    BackendUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlTemplate {
    /// Absolute URL up to (not including) the query string.
    pub base_path: String,
    /// Query pairs in observed order; each value is either an encoded
    /// literal or a `{param}` placeholder.
    pub query_params: Vec<(String, String)>,
    /// Placeholder name -> trace step index where its value was observed.
    pub evidence: BTreeMap<String, usize>,
}

impl UrlTemplate {
    pub fn to_template_string(&self) -> String {
        if self.query_params.is_empty() {
            self.base_path.clone()
        } else {
            format!("{}?{}", self.base_path, urls::build_query(&self.query_params))
        }
    }
}

/// The step range a template replaces, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromotionRange {
    pub start: usize,
    pub end: usize,
}

/// Find the longest contiguous run of interaction steps that ends in a URL
/// change the trace can explain, and template that URL against the demo
/// bindings.
pub fn infer_url_template(
    script: &ActionScript,
    stab: &StabilizedTrace,
) -> Option<(PromotionRange, UrlTemplate)> {
    // promotion shrinks the denominator of the agentic ratio; with agentic
    // steps outside the range the ratio would rise, so refuse early
    if script.agentic_step_count() > 0 {
        return None;
    }
    let trace = &stab.base;
    let bindings = &trace.param_bindings;

    let runs = interaction_runs(script);
    let mut best: Option<(PromotionRange, usize, String, String)> = None;
    for range in runs {
        let first_origin = script.steps[range.start].origin()?;
        let last_origin = script.steps[range.end].origin()?;
        let post_step = last_origin.0 + 1;
        if post_step >= trace.steps.len() {
            continue;
        }
        let pre_url = trace.steps[first_origin.0].url.clone();
        let post_url = trace.steps[post_step].url.clone();
        if pre_url == post_url {
            continue;
        }
        let len = range.end - range.start + 1;
        if best.as_ref().map(|(_, l, _, _)| len > *l).unwrap_or(true) {
            best = Some((range, len, pre_url, post_url));
        }
    }
    let (range, _, pre_url, post_url) = best?;

    let first_step = script.steps[range.start].origin()?.0;
    let post_step = script.steps[range.end].origin()?.0 + 1;

    // side-effect rule 1: any non-GET request across the run
    for step in &trace.steps[first_step..=post_step.min(trace.steps.len() - 1)] {
        for action in &step.actions {
            if let Some(method) = &action.http_method {
                if method != "GET" {
                    return None;
                }
            }
        }
    }
    // side-effect rule 2: the URL path gained a resource id absent before
    let pre_path = urls::path_of(&pre_url).to_string();
    let post_path = urls::path_of(&post_url).to_string();
    let pre_segments: Vec<&str> = pre_path.split('/').collect();
    for segment in post_path.split('/') {
        if !segment.is_empty()
            && segment.chars().all(|c| c.is_ascii_digit())
            && !pre_segments.contains(&segment)
        {
            return None;
        }
    }

    let pre_pairs = urls::query_pairs(&pre_url);
    let post_pairs = urls::query_pairs(&post_url);
    let run_literals = run_literal_values(stab, script, &range);
    let run_control_names = run_element_names(stab, script, &range);

    let mut query_params = Vec::new();
    let mut evidence = BTreeMap::new();
    for (key, value) in &post_pairs {
        let changed = pre_pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v != value)
            .unwrap_or(true);
        if !changed {
            query_params.push((key.clone(), urls::encode_query_value(value)));
            continue;
        }
        if let Some(param) = match_binding(bindings, key, value)? {
            evidence.insert(param.clone(), observation_step(trace, &param, post_step));
            query_params.push((key.clone(), format!("{{{param}}}")));
            continue;
        }
        let explained = value.is_empty()
            || run_literals.iter().any(|lit| urls::values_match(lit, value))
            || run_control_names.contains(key);
        if !explained {
            return None; // e.g. a session token we cannot account for
        }
        query_params.push((key.clone(), urls::encode_query_value(value)));
    }

    let base_path = post_url.split('?').next().unwrap_or(&post_url).to_string();
    let template = UrlTemplate { base_path, query_params, evidence };

    // invariant: the demo bindings must reproduce the observed URL exactly
    let rendered = urls::render_url(&template.to_template_string(), bindings).ok()?;
    if rendered != post_url {
        return None;
    }
    Some((range, template))
}

/// `Ok(Some(param))` when exactly one binding explains the value, `Ok(None)`
/// when no binding matches, and `None` (refusal) on ambiguity.
#[allow(clippy::type_complexity)]
fn match_binding(
    bindings: &BTreeMap<String, String>,
    key: &str,
    value: &str,
) -> Option<Option<String>> {
    let candidates: Vec<&String> = bindings
        .iter()
        .filter(|(_, v)| !v.is_empty() && urls::values_match(v, value))
        .map(|(k, _)| k)
        .collect();
    match candidates.len() {
        0 => Some(None),
        1 => Some(Some(candidates[0].clone())),
        _ => {
            // several bindings share the value: pick by key-name affinity
            if let Some(exact) = candidates.iter().find(|c| c.as_str() == key) {
                return Some(Some((*exact).clone()));
            }
            let substr: Vec<&&String> = candidates
                .iter()
                .filter(|c| c.contains(key) || key.contains(c.as_str()))
                .collect();
            if substr.len() == 1 {
                return Some(Some((*substr[0]).clone()));
            }
            None // ambiguity must not guess
        }
    }
}

fn interaction_runs(script: &ActionScript) -> Vec<PromotionRange> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, step) in script.steps.iter().enumerate() {
        let is_interaction = matches!(step, Step::Interaction { .. });
        match (is_interaction, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(PromotionRange { start: s, end: i - 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(PromotionRange { start: s, end: script.steps.len() - 1 });
    }
    runs
}

/// Literal values typed or selected inside the replaced range, decoded.
fn run_literal_values(
    stab: &StabilizedTrace,
    script: &ActionScript,
    range: &PromotionRange,
) -> Vec<String> {
    let mut out = Vec::new();
    let (first, last) = match (script.steps[range.start].origin(), script.steps[range.end].origin())
    {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return out,
    };
    for step in &stab.base.steps[first..=last] {
        for action in &step.actions {
            match &action.kind {
                ActionKind::InputText { text } => out.push(percent_decode(text)),
                ActionKind::SelectChange { selected_text } => out.push(percent_decode(selected_text)),
                _ => {}
            }
        }
    }
    out
}

/// `name` attributes of form controls interacted with inside the range:
/// their submitted defaults count as explained.
fn run_element_names(
    stab: &StabilizedTrace,
    script: &ActionScript,
    range: &PromotionRange,
) -> Vec<String> {
    let mut out = Vec::new();
    let (first, last) = match (script.steps[range.start].origin(), script.steps[range.end].origin())
    {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return out,
    };
    for (i, step) in stab.base.steps.iter().enumerate() {
        if i < first || i > last {
            continue;
        }
        for el in &step.interacted {
            if let Some(name) = el.attributes.get("name") {
                out.push(name.clone());
            }
        }
    }
    out
}

fn observation_step(trace: &crate::trace::ExecutionTrace, param: &str, fallback: usize) -> usize {
    let Some(value) = trace.param_bindings.get(param) else { return fallback };
    for (i, step) in trace.steps.iter().enumerate() {
        for action in &step.actions {
            if action.kind.payload_strings().iter().any(|p| *p == value) {
                return i;
            }
        }
    }
    fallback
}

/// Apply an inferred promotion if — and only if — the promoted script is
/// strictly shorter and replays extraction-equivalently to the original on
/// an identically-seeded backend with the demo inputs.
pub fn promote_script(
    script: &ActionScript,
    inferred: &(PromotionRange, UrlTemplate),
    backend_factory: Option<&dyn BackendFactory>,
    demo_bindings: &BTreeMap<String, String>,
) -> Result<ActionScript, PromoteError> {
    let (range, template) = inferred;
    let url_template = template.to_template_string();

    let mut steps: Vec<Step> = Vec::new();
    steps.extend_from_slice(&script.steps[..range.start]);
    let description = format!("Navigate to {url_template}");
    steps.push(Step::Navigation { url_template, description, origin: None });
    steps.extend_from_slice(&script.steps[range.end + 1..]);
    let steps = elide_redundant_navigations(steps);

    let params = ActionScript::collect_params(&steps);
    let promoted = ActionScript { steps, params };
    if promoted.validate().is_err() {
        return Ok(script.clone());
    }
    if promoted.steps.len() >= script.steps.len() {
        return Ok(script.clone());
    }
    if promoted.agentic_ratio() > script.agentic_ratio() {
        return Ok(script.clone());
    }

    let factory = backend_factory.ok_or_else(|| {
        PromoteError::BackendUnavailable("no backend factory configured".to_string())
    })?;

    let original_outputs = replay_outputs(script, demo_bindings, factory);
    let promoted_outputs = replay_outputs(&promoted, demo_bindings, factory);
    match (original_outputs, promoted_outputs) {
        (Some(a), Some(b)) if a == b => Ok(promoted),
        _ => Ok(script.clone()),
    }
}

fn replay_outputs(
    script: &ActionScript,
    bindings: &BTreeMap<String, String>,
    factory: &dyn BackendFactory,
) -> Option<BTreeMap<String, String>> {
    let mut backend = factory.make();
    let outcome = execute_script(script, bindings, backend.as_mut(), None);
    if !outcome.succeeded() {
        return None;
    }
    Some(
        outcome
            .outputs
            .into_iter()
            .map(|(k, v)| (k, v.trim().to_string()))
            .collect(),
    )
}

/// A navigation immediately followed by another navigation has no observable
/// effect; drop it. Runs until stable.
fn elide_redundant_navigations(mut steps: Vec<Step>) -> Vec<Step> {
    loop {
        let mut drop_idx = None;
        for i in 0..steps.len().saturating_sub(1) {
            if matches!(steps[i], Step::Navigation { .. })
                && matches!(steps[i + 1], Step::Navigation { .. })
            {
                drop_idx = Some(i);
                break;
            }
        }
        match drop_idx {
            Some(i) => {
                steps.remove(i);
            }
            None => return steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{scripted_demo, FixtureBackend, FixtureFactory};
    use crate::stabilize::stabilize_trace;
    use crate::synth::synthesize_script;
    use crate::trace::ToolCandidate;

    fn candidate(name: &str) -> ToolCandidate {
        ToolCandidate {
            name: name.to_string(),
            start_url: "http://fixture.local/".to_string(),
            description: "test".to_string(),
            elements: vec![],
        }
    }

    fn search_pipeline() -> (ActionScript, StabilizedTrace) {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("search", &mut backend, 0).unwrap();
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate("search_listings")).unwrap();
        (script, stab)
    }

    #[test]
    fn search_run_infers_fully_templated_url() {
        let (script, stab) = search_pipeline();
        let (range, template) = infer_url_template(&script, &stab).expect("inferable");
        assert_eq!((range.start, range.end), (1, 4));
        assert_eq!(
            template.to_template_string(),
            "http://fixture.local/search?q={query}&category={category}&sort={sort}"
        );
        assert_eq!(template.evidence.len(), 3);
        // rendering the demo bindings reproduces the recorded URL
        let rendered = urls::render_url(
            &template.to_template_string(),
            &stab.base.param_bindings,
        )
        .unwrap();
        assert_eq!(
            rendered,
            "http://fixture.local/search?q=blue+kayak&category=Boats&sort=price_asc"
        );
    }

    #[test]
    fn promoted_search_collapses_to_navigation_plus_extraction() {
        let (script, stab) = search_pipeline();
        assert_eq!(script.steps.len(), 6);
        let inferred = infer_url_template(&script, &stab).unwrap();
        let factory = FixtureFactory::new(0);
        let promoted = promote_script(
            &script,
            &inferred,
            Some(&factory),
            &stab.base.param_bindings,
        )
        .unwrap();
        assert_eq!(promoted.steps.len(), 2);
        assert!(matches!(promoted.steps[0], Step::Navigation { .. }));
        assert!(matches!(promoted.steps[1], Step::Extraction { .. }));
        assert_eq!(promoted.params, vec!["query", "category", "sort"]);
    }

    #[test]
    fn post_run_is_never_promoted() {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("post_comment", &mut backend, 0).unwrap();
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate("post_comment")).unwrap();
        assert!(infer_url_template(&script, &stab).is_none());
    }

    #[test]
    fn create_listing_redirect_id_is_a_side_effect() {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("create_listing", &mut backend, 0).unwrap();
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate("create_listing")).unwrap();
        assert!(infer_url_template(&script, &stab).is_none());
    }

    #[test]
    fn unexplained_query_param_refuses_promotion() {
        let (script, mut stab) = search_pipeline();
        // splice a session token into the recorded post-run URL
        let last = stab.base.steps.len() - 1;
        stab.base.steps[last].url.push_str("&session=af31");
        assert!(infer_url_template(&script, &stab).is_none());
    }

    #[test]
    fn gainless_promotion_returns_script_unchanged() {
        // a one-step script cannot get shorter, so the replay never runs and
        // the original comes back even without a backend
        let script = ActionScript {
            steps: vec![Step::Interaction {
                kind: crate::synth::InteractionKind::Click,
                locator: Some(crate::stabilize::StableLocator {
                    element_hash: "h".to_string(),
                    primary: "#go".to_string(),
                    alternates: vec![],
                    stability_score: 1.0,
                }),
                value: None,
                selected_text: None,
                key: None,
                scroll_x: None,
                scroll_y: None,
                seconds: None,
                description: "Click go".to_string(),
                origin: Some((0, 0)),
            }],
            params: vec![],
        };
        let template = UrlTemplate {
            base_path: "http://fixture.local/search".to_string(),
            query_params: vec![],
            evidence: BTreeMap::new(),
        };
        let out = promote_script(
            &script,
            &(PromotionRange { start: 0, end: 0 }, template),
            None,
            &BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(out, script);
    }

    #[test]
    fn missing_backend_refuses_promotion_with_error() {
        let (script, stab) = search_pipeline();
        let inferred = infer_url_template(&script, &stab).unwrap();
        let err = promote_script(&script, &inferred, None, &stab.base.param_bindings);
        assert!(matches!(err, Err(PromoteError::BackendUnavailable(_))));
    }

    #[test]
    fn broken_sort_route_fails_equivalence_and_keeps_original() {
        // variant 2 demonstrates with price_asc: the client-side reorder
        // sorts, the raw URL does not, so the replay outputs differ
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("search_nosort", &mut backend, 2).unwrap();
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate("search_nosort")).unwrap();
        let inferred = infer_url_template(&script, &stab).expect("template is inferable");
        let factory = FixtureFactory::new(0);
        let out = promote_script(&script, &inferred, Some(&factory), &stab.base.param_bindings)
            .unwrap();
        assert_eq!(out, script, "equivalence failure must retain the original");
    }

    #[test]
    fn sort_results_promotes_with_literal_defaults() {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("sort_results", &mut backend, 0).unwrap();
        let stab = stabilize_trace(&trace).unwrap();
        let script = synthesize_script(&stab, &candidate("sort_results")).unwrap();
        let (_, template) = infer_url_template(&script, &stab).expect("inferable");
        assert_eq!(
            template.to_template_string(),
            "http://fixture.local/search?q=&category=All&sort={sort}"
        );
        let factory = FixtureFactory::new(0);
        let promoted = promote_script(
            &script,
            &infer_url_template(&script, &stab).unwrap(),
            Some(&factory),
            &stab.base.param_bindings,
        )
        .unwrap();
        assert_eq!(promoted.steps.len(), 2);
    }
}
