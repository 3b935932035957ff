//! Scripted demonstrations: drive the backend through a named functionality
//! with realistic primitive actions, recording a fully-populated trace
//! (actions, interacted-element captures, agent annotations, bindings).
//!
//! The variant index selects alternative phrasings and input paths so retry
//! attempts do not replay a byte-identical demonstration.

use thiserror::Error;

use crate::dom::Selector;
use crate::exec::ExecutionBackend;
use crate::stabilize::compute_element_hash;
use crate::trace::{
    ActionKind, ActionRecord, AgentBrain, ElementHint, ExecutionTrace, HintKind,
    InteractedElement, ToolCandidate, TraceStep,
};
use crate::validate::{TraceSource, TraceSourceError};

use super::site::absolute;
use super::{FixtureBackend, FixtureConfig};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("unknown demo `{0}`")]
    UnknownDemo(String),
}

struct Recorder<'a> {
    backend: &'a mut FixtureBackend,
    steps: Vec<TraceStep>,
}

impl<'a> Recorder<'a> {
    fn new(backend: &'a mut FixtureBackend) -> Self {
        Recorder { backend, steps: Vec::new() }
    }

    fn capture_element(&self, selector: &str) -> InteractedElement {
        let doc = self.backend.document();
        let parsed = Selector::parse(selector).expect("demo selectors are well-formed");
        let path = doc.find(&parsed).expect("demo selectors resolve");
        let el = doc.get(&path).expect("found path resolves");
        let parent_tag = if path.len() > 1 {
            doc.get(&path[..path.len() - 1]).map(|p| p.tag.clone()).unwrap_or_default()
        } else {
            String::new()
        };
        let css_selector = match el.get_attr("id") {
            Some(id) => format!("#{id}"),
            None => match el.get_attr("name") {
                Some(name) => format!("{}[name={name}]", el.tag),
                None => selector.to_string(),
            },
        };
        let (select_options, preselected) = if el.tag == "select" {
            let options: Vec<String> = el
                .element_children()
                .map(|(_, o)| o)
                .filter(|o| o.tag == "option")
                .map(|o| o.normalized_text())
                .collect();
            let preselected = el
                .element_children()
                .map(|(_, o)| o)
                .filter(|o| o.tag == "option")
                .find(|o| o.attrs.contains_key("selected"))
                .map(|o| o.normalized_text())
                .or_else(|| options.first().cloned());
            (options, preselected)
        } else {
            (Vec::new(), None)
        };
        let mut captured = InteractedElement {
            element_hash: String::new(),
            tag: el.tag.clone(),
            attributes: el.attrs.clone(),
            dom_path: path,
            css_selector,
            alternates: Vec::new(),
            bounding_box: None,
            text: el.normalized_text(),
            parent_tag,
            select_options,
            preselected,
        };
        captured.attributes.remove("value"); // transient, not identity
        captured.element_hash = compute_element_hash(&captured);
        captured
    }

    fn record(
        &mut self,
        brain: AgentBrain,
        kind: ActionKind,
        element: Option<InteractedElement>,
        extracted: Option<String>,
        perform: impl FnOnce(&mut FixtureBackend),
    ) {
        let url = self.backend.current_url();
        let title = self.backend.page_title().to_string();
        let seq_before = self.backend.request_seq();
        perform(self.backend);
        let http_method = if self.backend.request_seq() != seq_before {
            self.backend.last_http_method()
        } else {
            None
        };
        self.steps.push(TraceStep {
            url,
            title,
            brain,
            actions: vec![ActionRecord { kind, success: true, extracted, http_method }],
            interacted: element.into_iter().collect(),
        });
    }

    fn navigate(&mut self, path: &str, brain: AgentBrain) {
        let url = absolute(path);
        self.record(brain, ActionKind::GoToUrl { url: url.clone() }, None, None, |b| {
            b.navigate(&url).expect("demo navigation succeeds");
        });
    }

    fn click(&mut self, selector: &str, brain: AgentBrain) {
        let element = self.capture_element(selector);
        let sel = selector.to_string();
        self.record(brain, ActionKind::ClickElement, Some(element), None, |b| {
            b.click(&sel).expect("demo click succeeds");
        });
    }

    fn input(&mut self, selector: &str, text: &str, brain: AgentBrain) {
        let element = self.capture_element(selector);
        let sel = selector.to_string();
        let text_owned = text.to_string();
        self.record(
            brain,
            ActionKind::InputText { text: text.to_string() },
            Some(element),
            None,
            |b| {
                b.input(&sel, &text_owned).expect("demo input succeeds");
            },
        );
    }

    fn select(&mut self, selector: &str, option: &str, brain: AgentBrain) {
        let element = self.capture_element(selector);
        let sel = selector.to_string();
        let option_owned = option.to_string();
        self.record(
            brain,
            ActionKind::SelectChange { selected_text: option.to_string() },
            Some(element),
            None,
            |b| {
                b.select(&sel, &option_owned).expect("demo select succeeds");
            },
        );
    }

    fn press_enter(&mut self, selector: &str, brain: AgentBrain) {
        let element = self.capture_element(selector);
        let sel = selector.to_string();
        self.record(
            brain,
            ActionKind::KeyPress { key: "Enter".to_string() },
            Some(element),
            None,
            |b| {
                b.click(&sel).expect("demo focus succeeds");
                b.press("Enter").expect("demo key press succeeds");
            },
        );
    }

    fn scroll(&mut self, dx: i64, dy: i64, anchor_selector: &str, brain: AgentBrain) {
        let element = self.capture_element(anchor_selector);
        self.record(brain, ActionKind::Scroll { dx, dy }, Some(element), None, |b| {
            b.scroll(dx, dy).expect("demo scroll succeeds");
        });
    }

    fn extract(&mut self, goal: &str, brain: AgentBrain) {
        let url = self.backend.current_url();
        let title = self.backend.page_title().to_string();
        let extracted = self.backend.extract(goal).expect("demo extraction succeeds");
        self.steps.push(TraceStep {
            url,
            title,
            brain,
            actions: vec![ActionRecord {
                kind: ActionKind::ExtractContent { goal: goal.to_string() },
                success: true,
                extracted: Some(extracted),
                http_method: None,
            }],
            interacted: vec![],
        });
    }

    fn finish(self, candidate_name: &str, bindings: &[(&str, &str)]) -> ExecutionTrace {
        let trace = ExecutionTrace {
            candidate_name: candidate_name.to_string(),
            steps: self.steps,
            param_bindings: bindings
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        trace.validate().expect("recorded demo traces are well-formed");
        trace
    }
}

fn brain(eval: &str, memory: &str, next: &str) -> AgentBrain {
    AgentBrain {
        evaluation_previous_goal: eval.to_string(),
        memory: memory.to_string(),
        next_goal: next.to_string(),
    }
}

/// Record the named demonstration. The five catalog demos back the candidate
/// corpus; `search_nosort` drives the deliberately broken route and
/// `broken_page` points at a 404 for budget-exhaustion scenarios.
pub fn scripted_demo(
    name: &str,
    backend: &mut FixtureBackend,
    variant: u32,
) -> Result<ExecutionTrace, DemoError> {
    match name {
        "search" | "search_listings" => Ok(demo_search(backend, variant)),
        "sort_results" => Ok(demo_sort_results(backend, variant)),
        "create_listing" => Ok(demo_create_listing(backend, variant)),
        "edit_listing" => Ok(demo_edit_listing(backend, variant)),
        "post_comment" => Ok(demo_post_comment(backend, variant)),
        "search_nosort" => Ok(demo_search_nosort(backend, variant)),
        "broken_page" => Ok(demo_broken_page(backend, variant)),
        other => Err(DemoError::UnknownDemo(other.to_string())),
    }
}

/// The search-form control ids as the demonstrating agent finds them on the
/// live page; drift variants move these around.
struct SearchControls {
    query: &'static str,
    category: &'static str,
    sort: &'static str,
    submit: &'static str,
}

fn detect_search_controls(backend: &FixtureBackend) -> SearchControls {
    let has = |sel: &str| {
        Selector::parse(sel)
            .ok()
            .and_then(|s| backend.document().find(&s))
            .is_some()
    };
    if has("#fr-query") {
        SearchControls {
            query: "#fr-query",
            category: "#fr-category",
            sort: "#fr-sort",
            submit: "#fr-submit",
        }
    } else if has("#finder-q") {
        SearchControls {
            query: "#finder-q",
            category: "#category-filter",
            sort: "#sort-order",
            submit: "#search-submit",
        }
    } else {
        SearchControls {
            query: "#searchquery",
            category: "#category-filter",
            sort: "#sort-order",
            submit: "#search-submit",
        }
    }
}

fn demo_search(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    let phrasing = if variant.is_multiple_of(2) { "searching the catalog" } else { "running a search" };
    r.navigate("/", brain("", "", &format!("Open the home page to start {phrasing}")));
    let controls = detect_search_controls(r.backend);
    r.click(
        controls.query,
        brain("Home page loaded", "On the home page", "Focus the search box"),
    );
    r.input(
        controls.query,
        "blue kayak",
        brain("Search box focused", "Ready to type", "Type the search terms"),
    );
    r.select(
        controls.category,
        "Boats",
        brain("Query typed", "Query is in place", "Restrict the category to Boats"),
    );
    r.select(
        controls.sort,
        "price_asc",
        brain("Category chosen", "Filtering Boats", "Sort by lowest price first"),
    );
    if variant.is_multiple_of(2) {
        r.click(
            controls.submit,
            brain("Sort chosen", "All controls set", "Submit the search"),
        );
    } else {
        r.press_enter(
            controls.query,
            brain("Sort chosen", "All controls set", "Submit the search with Enter"),
        );
    }
    r.extract(
        "result listings",
        brain("Results page loaded", "Search submitted", "Collect the result rows"),
    );
    r.finish(
        "search_listings",
        &[("query", "blue kayak"), ("category", "Boats"), ("sort", "price_asc")],
    )
}

fn demo_sort_results(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    let memory = if variant.is_multiple_of(2) { "Browsing everything" } else { "Looking at the full catalog" };
    r.navigate("/", brain("", "", "Open the home page"));
    r.select(
        "#category-filter",
        "All",
        brain("Home page loaded", memory, "Keep every category in scope"),
    );
    r.select(
        "#sort-order",
        "price_desc",
        brain("Category left at All", memory, "Order by highest price first"),
    );
    r.click(
        "#search-submit",
        brain("Sort chosen", memory, "Apply the ordering"),
    );
    r.extract(
        "sorted result listings",
        brain("Results page loaded", memory, "Collect the ordered rows"),
    );
    r.finish("sort_results", &[("sort", "price_desc")])
}

fn demo_create_listing(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    let memo = if variant.is_multiple_of(2) { "Creating a listing" } else { "Posting a new item" };
    r.navigate("/listing/new", brain("", "", "Open the listing creation form"));
    r.input(
        "#title-input",
        "Canoe paddle set",
        brain("Form loaded", memo, "Enter the listing title"),
    );
    r.input(
        "#description-input",
        "Lightly used wooden paddles",
        brain("Title entered", memo, "Describe the item"),
    );
    r.input(
        "#price-input",
        "45",
        brain("Description entered", memo, "Set the asking price"),
    );
    r.select(
        "#category-input",
        "Boats",
        brain("Price set", memo, "Pick the category"),
    );
    r.input(
        "#color-input",
        "red",
        brain("Category picked", memo, "Note the color"),
    );
    r.scroll(
        0,
        240,
        "#create-submit",
        brain("Fields complete", memo, "Scroll the submit button into view"),
    );
    r.click(
        "#create-submit",
        brain("Submit visible", memo, "Create the listing"),
    );
    r.extract(
        "confirm the new listing details",
        brain("Detail page loaded", memo, "Verify what was created"),
    );
    r.finish(
        "create_listing",
        &[
            ("title", "Canoe paddle set"),
            ("description", "Lightly used wooden paddles"),
            ("price", "45"),
            ("category", "Boats"),
            ("color", "red"),
        ],
    )
}

fn demo_edit_listing(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    let memo = if variant.is_multiple_of(2) { "Editing listing 5" } else { "Updating an existing listing" };
    r.navigate("/listing/5/edit", brain("", "", "Open the edit form for listing 5"));
    r.input(
        "#edit-title",
        "Refurbished oak dresser",
        brain("Edit form loaded", memo, "Replace the title"),
    );
    r.input(
        "#edit-price",
        "120",
        brain("Title replaced", memo, "Adjust the price"),
    );
    r.click(
        "#edit-submit",
        brain("Price adjusted", memo, "Save the changes"),
    );
    r.extract(
        "confirm the updated listing",
        brain("Detail page loaded", memo, "Verify the update"),
    );
    r.finish(
        "edit_listing",
        &[("listing_id", "5"), ("title", "Refurbished oak dresser"), ("price", "120")],
    )
}

fn demo_post_comment(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    let memo = if variant.is_multiple_of(2) { "Commenting on listing 7" } else { "Leaving an offer" };
    r.navigate("/listing/7", brain("", "", "Open the listing to comment on"));
    r.input(
        "#comment-text",
        "offer $10 under asking",
        brain("Listing loaded", memo, "Write the comment"),
    );
    r.click(
        "#comment-submit",
        brain("Comment written", memo, "Post it"),
    );
    r.extract(
        "comments on the listing",
        brain("Page reloaded", memo, "Confirm the comment is visible"),
    );
    r.finish(
        "post_comment",
        &[("listing_id", "7"), ("text", "offer $10 under asking")],
    )
}

fn demo_search_nosort(backend: &mut FixtureBackend, variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    // variants 0/1 demonstrate with the default ordering; variant 2 picks a
    // price sort, which exposes the route's broken server-side sort at
    // promotion time instead of during validation
    let sort = if variant >= 2 { "price_asc" } else { "newest" };
    r.navigate(
        "/search-nosort?q=kayak",
        brain("", "", "Open the kayak browse page"),
    );
    r.select(
        "#nosort-sort",
        sort,
        brain("Browse page loaded", "Looking at kayaks", "Reorder the displayed results"),
    );
    r.extract(
        "result listings",
        brain("Results reordered", "Rows rearranged", "Collect the ordered rows"),
    );
    r.finish("search_nosort", &[("sort", sort)])
}

fn demo_broken_page(backend: &mut FixtureBackend, _variant: u32) -> ExecutionTrace {
    let mut r = Recorder::new(backend);
    r.navigate("/missing", brain("", "", "Open the catalog page"));
    r.extract(
        "result listings",
        brain("Page loaded", "", "Collect the result rows"),
    );
    r.finish("broken_page", &[])
}

/// Map a candidate to the demo that demonstrates it.
pub fn demo_name_for_candidate(candidate: &ToolCandidate) -> &str {
    match candidate.name.as_str() {
        "search_listings" => "search",
        other => other,
    }
}

/// Demonstrates candidates by replaying scripted demos; attempt k records
/// demo variant k-1 against a fresh identically-seeded session, so retries
/// re-demonstrate without changing the catalog the bindings refer to.
pub struct FixtureTraceSource {
    pub seed: u64,
    pub config: FixtureConfig,
}

impl FixtureTraceSource {
    pub fn new(seed: u64) -> Self {
        FixtureTraceSource { seed, config: FixtureConfig::default() }
    }
}

impl TraceSource for FixtureTraceSource {
    fn demonstrate(
        &mut self,
        candidate: &ToolCandidate,
        attempt: u32,
    ) -> Result<ExecutionTrace, TraceSourceError> {
        let mut backend = FixtureBackend::with_config(self.seed, self.config);
        scripted_demo(demo_name_for_candidate(candidate), &mut backend, attempt.saturating_sub(1))
            .map_err(|e| TraceSourceError::DemonstrationFailed(e.to_string()))
    }
}

fn hint(kind: HintKind, purpose: &str, options: Option<Vec<&str>>) -> ElementHint {
    ElementHint {
        kind,
        purpose: purpose.to_string(),
        options: options.map(|o| o.into_iter().map(str::to_string).collect()),
    }
}

/// The canonical candidate corpus for the fixture site: the five tools the
/// end-to-end suite builds, as discovery would propose them.
pub fn demo_candidates() -> Vec<ToolCandidate> {
    vec![
        ToolCandidate {
            name: "search_listings".to_string(),
            start_url: absolute("/"),
            description: "Search listings by user-provided terms, optionally filtered by category and ordered by a sort rule".to_string(),
            elements: vec![
                hint(HintKind::Input, "enter user-provided search terms", None),
                hint(
                    HintKind::Select,
                    "choose user-specified category",
                    Some(vec!["All", "Boats", "Electronics", "Furniture"]),
                ),
                hint(
                    HintKind::Select,
                    "sort results",
                    Some(vec!["newest", "price_asc", "price_desc"]),
                ),
                hint(HintKind::Button, "submit search", None),
            ],
        },
        ToolCandidate {
            name: "sort_results".to_string(),
            start_url: absolute("/"),
            description: "Reorder the full catalog by a user-specified sort rule".to_string(),
            elements: vec![
                hint(
                    HintKind::Select,
                    "keep category scope",
                    Some(vec!["All", "Boats", "Electronics", "Furniture"]),
                ),
                hint(
                    HintKind::Select,
                    "sort rule to apply",
                    Some(vec!["newest", "price_asc", "price_desc"]),
                ),
                hint(HintKind::Button, "apply ordering", None),
            ],
        },
        ToolCandidate {
            name: "create_listing".to_string(),
            start_url: absolute("/listing/new"),
            description: "Create a listing with user-provided title, description, price, category, and color".to_string(),
            elements: vec![
                hint(HintKind::Input, "listing title", None),
                hint(HintKind::Textarea, "item description", None),
                hint(HintKind::Input, "asking price in dollars", None),
                hint(
                    HintKind::Select,
                    "listing category",
                    Some(vec!["Boats", "Electronics", "Furniture"]),
                ),
                hint(HintKind::Input, "item color", None),
                hint(HintKind::Button, "create the listing", None),
            ],
        },
        ToolCandidate {
            name: "edit_listing".to_string(),
            start_url: absolute("/listing/5/edit"),
            description: "Locate a listing by id and update its title and price".to_string(),
            elements: vec![
                hint(HintKind::Input, "replacement title", None),
                hint(HintKind::Input, "replacement price in dollars", None),
                hint(HintKind::Button, "save the changes", None),
            ],
        },
        ToolCandidate {
            name: "post_comment".to_string(),
            start_url: absolute("/listing/7"),
            description: "Post a user-provided comment on a listing identified by id".to_string(),
            elements: vec![
                hint(HintKind::Textarea, "comment text", None),
                hint(HintKind::Button, "post the comment", None),
            ],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn search_demo_shape_matches_recording() {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("search", &mut backend, 0).unwrap();
        // brute counts over the recorded structure
        assert_eq!(trace.steps.len(), 7);
        let interacted: usize = trace.steps.iter().map(|s| s.interacted.len()).sum();
        assert_eq!(interacted, 5);
        let ui_actions: usize = trace.steps.iter().map(|s| s.ui_action_count()).sum();
        assert_eq!(ui_actions, interacted);
        assert!(trace.validate().is_ok());
    }

    #[test]
    fn post_comment_demo_ends_with_a_post() {
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("post_comment", &mut backend, 0).unwrap();
        let methods: Vec<_> = trace
            .steps
            .iter()
            .flat_map(|s| s.actions.iter().filter_map(|a| a.http_method.clone()))
            .collect();
        assert_eq!(methods.last().map(String::as_str), Some("POST"));
    }

    #[test]
    fn create_listing_demo_is_deterministic_and_ui_heavy() {
        let record = || {
            let mut backend = FixtureBackend::new(0);
            let t = scripted_demo("create_listing", &mut backend, 0).unwrap();
            crate::trace::serialize_trace(&t)
        };
        assert_eq!(record(), record());
        let mut backend = FixtureBackend::new(0);
        let trace = scripted_demo("create_listing", &mut backend, 0).unwrap();
        let ui: usize = trace.steps.iter().map(|s| s.ui_action_count()).sum();
        assert!(ui >= 5, "content management demos skew to deterministic UI steps");
    }

    #[test]
    fn unknown_demo_is_an_error() {
        let mut backend = FixtureBackend::new(0);
        assert!(matches!(
            scripted_demo("upvote", &mut backend, 0),
            Err(DemoError::UnknownDemo(_))
        ));
    }

    #[test]
    fn variants_change_phrasing_not_bindings() {
        let mut b0 = FixtureBackend::new(0);
        let t0 = scripted_demo("search", &mut b0, 0).unwrap();
        let mut b1 = FixtureBackend::new(0);
        let t1 = scripted_demo("search", &mut b1, 1).unwrap();
        assert_eq!(t0.param_bindings, t1.param_bindings);
        assert_ne!(
            crate::trace::serialize_trace(&t0),
            crate::trace::serialize_trace(&t1)
        );
    }

    #[test]
    fn demo_candidates_parse_cleanly() {
        let json = crate::trace::serialize_candidates(&demo_candidates());
        let parsed = crate::trace::parse_candidates(json.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 5);
        let names: Vec<_> = parsed.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["search_listings", "sort_results", "create_listing", "edit_listing", "post_comment"]
        );
    }
}
