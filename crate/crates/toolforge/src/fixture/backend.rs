//! The in-process browser over the fixture site: resolves selectors against
//! the current page, fills and submits forms, follows redirects, simulates
//! the nosort page's client-side sort widget, and projects page content for
//! extraction goals.

use std::collections::BTreeMap;

use url::form_urlencoded;

use crate::dom::{Element, Selector};
use crate::exec::{BackendError, BackendFactory, ExecutionBackend};
use crate::urls;

use super::site::{absolute, handle_request, nosort_page};
use super::{seed_env_with, FixtureConfig, FixtureState, BASE_URL};

pub struct FixtureBackend {
    state: FixtureState,
    current_url: String,
    title: String,
    doc: Element,
    last_method: Option<String>,
    request_seq: u64,
    focused: Option<Vec<usize>>,
    scroll_pos: (i64, i64),
    client_sorted: bool,
}

impl FixtureBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_config(seed, FixtureConfig::default())
    }

    pub fn with_config(seed: u64, config: FixtureConfig) -> Self {
        FixtureBackend {
            state: seed_env_with(seed, config),
            current_url: "about:blank".to_string(),
            title: String::new(),
            doc: Element::new("html").child(Element::new("body")),
            last_method: None,
            request_seq: 0,
            focused: None,
            scroll_pos: (0, 0),
            client_sorted: false,
        }
    }

    pub fn state(&self) -> &FixtureState {
        &self.state
    }

    /// Monotone counter of user-triggered requests; lets the recorder tell
    /// which actions actually hit the server.
    pub fn request_seq(&self) -> u64 {
        self.request_seq
    }

    pub fn page_title(&self) -> &str {
        &self.title
    }

    pub fn document(&self) -> &Element {
        &self.doc
    }

    fn current_path_query(&self) -> String {
        match self.current_url.strip_prefix(BASE_URL) {
            Some(pq) if !pq.is_empty() => pq.to_string(),
            _ => "/".to_string(),
        }
    }

    fn load(&mut self, method: &str, path_query: &str, form: &[(String, String)]) {
        self.request_seq += 1;
        self.last_method = Some(method.to_string());
        self.client_sorted = false;
        self.focused = None;
        let mut resp = handle_request(&mut self.state, method, path_query, form);
        let mut final_path = path_query.to_string();
        while let Some(target) = resp.redirect.take() {
            final_path = target.clone();
            resp = handle_request(&mut self.state, "GET", &target, &[]);
        }
        self.doc = resp.doc;
        self.title = resp.title;
        self.current_url = absolute(&final_path);
    }

    /// Re-render the current page from state without issuing a new request,
    /// carrying typed form values and selections across the rebuild.
    fn rerender(&mut self) {
        let saved = self.collect_form_values();
        let pq = self.current_path_query();
        let resp = if self.client_sorted {
            let pairs = urls::query_pairs(&pq);
            let get = |k: &str| pairs.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
            nosort_page(
                &self.state,
                &get("q").unwrap_or_default(),
                &get("category").unwrap_or_else(|| "All".to_string()),
                &get("sort").unwrap_or_else(|| "newest".to_string()),
                true,
            )
        } else {
            handle_request(&mut self.state, "GET", &pq, &[])
        };
        self.doc = resp.doc;
        self.title = resp.title;
        self.restore_form_values(saved);
    }

    fn collect_form_values(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let controls = self.doc.find_all(&|el| {
            matches!(el.tag.as_str(), "input" | "textarea" | "select") && el.get_attr("name").is_some()
        });
        for path in controls {
            let el = self.doc.get(&path).unwrap();
            let name = el.get_attr("name").unwrap().to_string();
            let value = control_value(el);
            out.insert(name, value);
        }
        out
    }

    fn restore_form_values(&mut self, saved: BTreeMap<String, String>) {
        for (name, value) in saved {
            let found = self.doc.find_all(&|el| {
                matches!(el.tag.as_str(), "input" | "textarea" | "select")
                    && el.get_attr("name") == Some(&name)
            });
            let Some(path) = found.first() else { continue };
            let el = self.doc.get_mut(path).unwrap();
            if el.tag == "select" {
                select_option_by_text(el, &value).ok();
            } else {
                el.attrs.insert("value".to_string(), value);
            }
        }
    }

    fn find_element(&self, selector: &str) -> Result<Vec<usize>, BackendError> {
        let parsed = Selector::parse(selector).map_err(|e| BackendError::BadSelector {
            selector: selector.to_string(),
            reason: e.reason,
        })?;
        self.doc
            .find(&parsed)
            .ok_or_else(|| BackendError::ElementNotFound(selector.to_string()))
    }

    fn submit_enclosing_form(&mut self, path: &[usize]) -> Result<(), BackendError> {
        let Some(form_path) = self.doc.enclosing(path, "form") else {
            return Ok(()); // a stray submit outside a form does nothing
        };
        let form = self.doc.get(&form_path).unwrap();
        let method = form
            .get_attr("method")
            .unwrap_or("get")
            .to_ascii_uppercase();
        let action = form
            .get_attr("action")
            .map(str::to_string)
            .unwrap_or_else(|| {
                let pq = self.current_path_query();
                pq.split('?').next().unwrap_or("/").to_string()
            });

        let mut pairs: Vec<(String, String)> = Vec::new();
        let control_paths = form.find_all(&|el| {
            matches!(el.tag.as_str(), "input" | "textarea" | "select") && el.get_attr("name").is_some()
        });
        for cp in control_paths {
            let el = form.get(&cp).unwrap();
            pairs.push((el.get_attr("name").unwrap().to_string(), control_value(el)));
        }

        if method == "POST" {
            self.load("POST", &action, &pairs);
        } else {
            let query: String = form_urlencoded::Serializer::new(String::new())
                .extend_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .finish();
            self.load("GET", &format!("{action}?{query}"), &[]);
        }
        Ok(())
    }

    /// The nosort page's sort widget: reorder the displayed results locally
    /// and update the URL, without any server round-trip.
    fn apply_client_sort(&mut self, sort: &str) {
        let pq = self.current_path_query();
        let pairs = urls::query_pairs(&pq);
        let get = |k: &str| pairs.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
        let q = get("q").unwrap_or_default();
        let category = get("category").unwrap_or_else(|| "All".to_string());
        let resp = nosort_page(&self.state, &q, &category, sort, true);
        self.doc = resp.doc;
        self.title = resp.title;
        self.client_sorted = true;
        let mut query = form_urlencoded::Serializer::new(String::new());
        query.append_pair("q", &q);
        if pairs.iter().any(|(k, _)| k == "category") {
            query.append_pair("category", &category);
        }
        query.append_pair("sort", sort);
        self.current_url = absolute(&format!("/search-nosort?{}", query.finish()));
    }
}

fn control_value(el: &Element) -> String {
    match el.tag.as_str() {
        "select" => el
            .element_children()
            .map(|(_, o)| o)
            .filter(|o| o.tag == "option")
            .find(|o| o.attrs.contains_key("selected"))
            .or_else(|| {
                el.element_children()
                    .map(|(_, o)| o)
                    .find(|o| o.tag == "option")
            })
            .map(|o| o.normalized_text())
            .unwrap_or_default(),
        "textarea" => el
            .get_attr("value")
            .map(str::to_string)
            .unwrap_or_else(|| el.normalized_text()),
        _ => el.get_attr("value").unwrap_or("").to_string(),
    }
}

fn select_option_by_text(select: &mut Element, option_text: &str) -> Result<(), Vec<String>> {
    let mut available = Vec::new();
    let mut target: Option<usize> = None;
    for (idx, child) in select.element_children() {
        if child.tag != "option" {
            continue;
        }
        let text = child.normalized_text();
        if text == option_text {
            target = Some(idx);
        }
        available.push(text);
    }
    let Some(target) = target else {
        return Err(available);
    };
    let count = select.element_children().count();
    for idx in 0..count {
        let child = select.element_child_mut(idx).unwrap();
        if child.tag != "option" {
            continue;
        }
        if idx == target {
            child.attrs.insert("selected".to_string(), String::new());
        } else {
            child.attrs.remove("selected");
        }
    }
    Ok(())
}

impl ExecutionBackend for FixtureBackend {
    fn navigate(&mut self, url: &str) -> Result<(), BackendError> {
        if url == "about:blank" {
            self.current_url = url.to_string();
            self.doc = Element::new("html").child(Element::new("body"));
            self.title = String::new();
            return Ok(());
        }
        let path_query = url.strip_prefix(BASE_URL).ok_or_else(|| {
            BackendError::NavigationFailed {
                url: url.to_string(),
                reason: format!("host not reachable from the fixture session (expected {BASE_URL})"),
            }
        })?;
        let pq = if path_query.is_empty() { "/" } else { path_query };
        self.load("GET", pq, &[]);
        Ok(())
    }

    fn click(&mut self, selector: &str) -> Result<(), BackendError> {
        let path = self.find_element(selector)?;
        let el = self.doc.get(&path).unwrap().clone();

        if el.get_attr("data-dismiss") == Some("popup") {
            self.state.popup_dismissed = true;
            self.rerender();
            return Ok(());
        }
        if el.tag == "a" {
            if let Some(href) = el.get_attr("href") {
                let href = href.to_string();
                self.load("GET", &href, &[]);
                return Ok(());
            }
        }
        let is_submit = (el.tag == "button"
            && el.get_attr("type").map(|t| t == "submit").unwrap_or(true))
            || (el.tag == "input" && el.get_attr("type") == Some("submit"));
        if is_submit {
            return self.submit_enclosing_form(&path);
        }
        self.focused = Some(path);
        Ok(())
    }

    fn input(&mut self, selector: &str, text: &str) -> Result<(), BackendError> {
        let path = self.find_element(selector)?;
        let el = self.doc.get_mut(&path).unwrap();
        if !matches!(el.tag.as_str(), "input" | "textarea") {
            return Err(BackendError::WrongElementKind {
                selector: selector.to_string(),
                operation: "text input".to_string(),
            });
        }
        el.attrs.insert("value".to_string(), text.to_string());
        self.focused = Some(path);
        Ok(())
    }

    fn select(&mut self, selector: &str, option_text: &str) -> Result<(), BackendError> {
        let path = self.find_element(selector)?;
        let el = self.doc.get_mut(&path).unwrap();
        if el.tag != "select" {
            return Err(BackendError::WrongElementKind {
                selector: selector.to_string(),
                operation: "option selection".to_string(),
            });
        }
        select_option_by_text(el, option_text).map_err(|available| {
            BackendError::OptionNotFound {
                selector: selector.to_string(),
                option: option_text.to_string(),
                available,
            }
        })?;
        let is_client_sort = el
            .get_attr("class")
            .map(|c| c.split_whitespace().any(|p| p == "client-sort"))
            .unwrap_or(false);
        self.focused = Some(path);
        if is_client_sort {
            self.apply_client_sort(option_text);
        }
        Ok(())
    }

    fn press(&mut self, key: &str) -> Result<(), BackendError> {
        if key == "Enter" {
            if let Some(path) = self.focused.clone() {
                return self.submit_enclosing_form(&path);
            }
        }
        Ok(())
    }

    fn scroll(&mut self, dx: i64, dy: i64) -> Result<(), BackendError> {
        self.scroll_pos.0 += dx;
        self.scroll_pos.1 += dy;
        Ok(())
    }

    fn wait(&mut self, _seconds: f64) -> Result<(), BackendError> {
        // logical time: one tick per wait call, regardless of duration
        self.state.wait_ticks += 1;
        self.rerender();
        Ok(())
    }

    fn current_url(&self) -> String {
        self.current_url.clone()
    }

    fn dom_snapshot(&self) -> String {
        format!("<!DOCTYPE html>{}", self.doc.to_html())
    }

    fn extract(&mut self, goal: &str) -> Result<String, BackendError> {
        let lower = goal.to_lowercase();
        if lower.contains("comment") {
            let items = self
                .doc
                .find_all(&|el| el.get_attr("class") == Some("comment"));
            let lines: Vec<String> = items
                .iter()
                .map(|p| self.doc.get(p).unwrap().normalized_text())
                .collect();
            return Ok(lines.join("\n"));
        }
        if lower.contains("result") || lower.contains("listing") {
            let cards = self
                .doc
                .find_all(&|el| el.get_attr("class") == Some("listing-card"));
            if !cards.is_empty() {
                let lines: Vec<String> = cards
                    .iter()
                    .map(|p| {
                        let card = self.doc.get(p).unwrap();
                        let link = card
                            .element_children()
                            .map(|(_, c)| c)
                            .find(|c| c.tag == "a");
                        let title = link.map(|a| a.normalized_text()).unwrap_or_default();
                        let href = link
                            .and_then(|a| a.get_attr("href"))
                            .unwrap_or("")
                            .to_string();
                        let price = card
                            .element_children()
                            .map(|(_, c)| c)
                            .find(|c| c.get_attr("class") == Some("price"))
                            .map(|c| c.normalized_text())
                            .unwrap_or_default();
                        format!("{title} | {price} | {href}")
                    })
                    .collect();
                return Ok(lines.join("\n"));
            }
            if let Some(path) = self
                .doc
                .find(&Selector::parse("#listing-detail").expect("static selector"))
            {
                let detail = self.doc.get(&path).unwrap();
                let part = |class: &str| {
                    detail
                        .element_children()
                        .map(|(_, c)| c)
                        .find(|c| c.get_attr("class") == Some(class))
                        .map(|c| c.normalized_text())
                        .unwrap_or_default()
                };
                let title = detail
                    .element_children()
                    .map(|(_, c)| c)
                    .find(|c| c.tag == "h2")
                    .map(|c| c.normalized_text())
                    .unwrap_or_default();
                return Ok(format!(
                    "{title} | {} | {} | {}",
                    part("price"),
                    part("category"),
                    part("color")
                ));
            }
            return Ok(String::new());
        }
        // generic: readable text of the main content
        let main = self
            .doc
            .find(&Selector::parse("main").expect("static selector"))
            .and_then(|p| self.doc.get(&p).map(|el| el.normalized_text()))
            .unwrap_or_default();
        Ok(main)
    }

    fn last_http_method(&self) -> Option<String> {
        self.last_method.clone()
    }
}

/// Hands out identically-seeded fresh sessions.
#[derive(Debug, Clone)]
pub struct FixtureFactory {
    pub seed: u64,
    pub config: FixtureConfig,
}

impl FixtureFactory {
    pub fn new(seed: u64) -> Self {
        FixtureFactory { seed, config: FixtureConfig::default() }
    }
}

impl BackendFactory for FixtureFactory {
    fn make(&self) -> Box<dyn ExecutionBackend> {
        Box::new(FixtureBackend::with_config(self.seed, self.config))
    }
}
