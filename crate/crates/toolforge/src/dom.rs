//! Minimal in-memory DOM used by the fixture website and its backend.
//!
//! Pages are built as element trees, rendered to HTML5 on demand, and
//! queried with a small selector language: `#id`, `tag`, `tag#id`,
//! `tag[attr=value]`, bare `[attr=value]` clauses, and positional
//! `@path:i/j/k` selectors (element-child indices from the root).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Path of element-child indices from a root element down to a node.
pub type ElemPath = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub tag: String,
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(tag: &str) -> Self {
        Element {
            tag: tag.to_string(),
            attrs: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    pub fn attr(mut self, key: &str, value: &str) -> Self {
        self.attrs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn text(mut self, text: &str) -> Self {
        self.children.push(Node::Text(text.to_string()));
        self
    }

    pub fn child(mut self, el: Element) -> Self {
        self.children.push(Node::Element(el));
        self
    }

    pub fn children(mut self, els: Vec<Element>) -> Self {
        for el in els {
            self.children.push(Node::Element(el));
        }
        self
    }

    pub fn get_attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(|s| s.as_str())
    }

    /// Element children with their element-child indices (text nodes skipped).
    pub fn element_children(&self) -> impl Iterator<Item = (usize, &Element)> {
        self.children
            .iter()
            .filter_map(|n| match n {
                Node::Element(e) => Some(e),
                Node::Text(_) => None,
            })
            .enumerate()
    }

    pub fn element_child_mut(&mut self, index: usize) -> Option<&mut Element> {
        self.children
            .iter_mut()
            .filter_map(|n| match n {
                Node::Element(e) => Some(e),
                Node::Text(_) => None,
            })
            .nth(index)
    }

    pub fn get(&self, path: &[usize]) -> Option<&Element> {
        let mut cur = self;
        for &idx in path {
            cur = cur.element_children().nth(idx).map(|(_, e)| e)?;
        }
        Some(cur)
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut Element> {
        let mut cur = self;
        for &idx in path {
            cur = cur.element_child_mut(idx)?;
        }
        Some(cur)
    }

    /// Concatenated text content, whitespace collapsed to single spaces.
    pub fn normalized_text(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn collect_text(&self, out: &mut String) {
        for node in &self.children {
            match node {
                Node::Text(t) => {
                    out.push(' ');
                    out.push_str(t);
                }
                Node::Element(e) => e.collect_text(out),
            }
        }
    }

    /// First element (in document order) matching the selector, as a path
    /// relative to `self`. `self` itself is never a match candidate.
    pub fn find(&self, sel: &Selector) -> Option<ElemPath> {
        match sel {
            Selector::Path { path, tag } => {
                let el = self.get(path)?;
                match tag {
                    Some(t) if el.tag != *t => None,
                    _ => Some(path.clone()),
                }
            }
            _ => {
                let mut path = Vec::new();
                self.find_rec(sel, &mut path)
            }
        }
    }

    fn find_rec(&self, sel: &Selector, path: &mut ElemPath) -> Option<ElemPath> {
        for (idx, child) in self.element_children() {
            path.push(idx);
            if sel.matches(child) {
                return Some(path.clone());
            }
            if let Some(found) = child.find_rec(sel, path) {
                return Some(found);
            }
            path.pop();
        }
        None
    }

    /// Paths of every element matching the predicate, in document order.
    pub fn find_all(&self, pred: &dyn Fn(&Element) -> bool) -> Vec<ElemPath> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.find_all_rec(pred, &mut path, &mut out);
        out
    }

    fn find_all_rec(
        &self,
        pred: &dyn Fn(&Element) -> bool,
        path: &mut ElemPath,
        out: &mut Vec<ElemPath>,
    ) {
        for (idx, child) in self.element_children() {
            path.push(idx);
            if pred(child) {
                out.push(path.clone());
            }
            child.find_all_rec(pred, path, out);
            path.pop();
        }
    }

    /// Nearest ancestor-or-self with the given tag, looking upward from `path`.
    pub fn enclosing(&self, path: &[usize], tag: &str) -> Option<ElemPath> {
        let mut end = path.len();
        loop {
            let prefix = &path[..end];
            if let Some(el) = self.get(prefix) {
                if el.tag == tag {
                    return Some(prefix.to_vec());
                }
            }
            if end == 0 {
                return None;
            }
            end -= 1;
        }
    }

    pub fn remove_child_at(&mut self, path: &[usize]) -> Option<Node> {
        let (last, parent_path) = path.split_last()?;
        let parent = self.get_mut(parent_path)?;
        // translate element-child index to raw child index
        let raw = parent
            .children
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Element(_)))
            .nth(*last)
            .map(|(i, _)| i)?;
        Some(parent.children.remove(raw))
    }

    pub fn to_html(&self) -> String {
        let mut out = String::new();
        self.write_html(&mut out);
        out
    }

    fn write_html(&self, out: &mut String) {
        out.push('<');
        out.push_str(&self.tag);
        for (k, v) in &self.attrs {
            out.push(' ');
            out.push_str(k);
            if !v.is_empty() || !is_boolean_attr(k) {
                out.push_str("=\"");
                out.push_str(&escape_attr(v));
                out.push('"');
            }
        }
        out.push('>');
        if is_void_tag(&self.tag) {
            return;
        }
        for child in &self.children {
            match child {
                Node::Text(t) => out.push_str(&escape_text(t)),
                Node::Element(e) => e.write_html(out),
            }
        }
        out.push_str("</");
        out.push_str(&self.tag);
        out.push('>');
    }
}

fn is_void_tag(tag: &str) -> bool {
    matches!(tag, "input" | "br" | "hr" | "img" | "meta" | "link")
}

fn is_boolean_attr(key: &str) -> bool {
    matches!(key, "required" | "selected" | "checked" | "disabled")
}

pub fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable selector `{selector}`: {reason}")]
pub struct SelectorError {
    pub selector: String,
    pub reason: String,
}

/// The selector subset shared by the stabilizer (which emits these) and the
/// fixture backend (which resolves them).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// `@path:1/0/3` or tag-checked `@path:button:1/0/3` — element-child
    /// indices from the root element. With a tag, a different element now
    /// sitting at that position is a miss, not a match.
    Path { path: ElemPath, tag: Option<String> },
    /// `tag`, `#id`, `tag#id`, `tag[a=b][c=d]`, `[a=b]`.
    Compound {
        tag: Option<String>,
        id: Option<String>,
        attrs: Vec<(String, String)>,
    },
}

impl Selector {
    pub fn parse(input: &str) -> Result<Selector, SelectorError> {
        let fail = |reason: &str| SelectorError {
            selector: input.to_string(),
            reason: reason.to_string(),
        };
        let s = input.trim();
        if s.is_empty() {
            return Err(fail("empty"));
        }
        if let Some(rest) = s.strip_prefix("@path:") {
            let (tag, indices) = match rest.split_once(':') {
                Some((t, rest)) if !t.is_empty() && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') => {
                    (Some(t.to_string()), rest)
                }
                _ => (None, rest),
            };
            let mut path = Vec::new();
            for part in indices.split('/') {
                let idx: usize = part.parse().map_err(|_| fail("bad path index"))?;
                path.push(idx);
            }
            return Ok(Selector::Path { path, tag });
        }

        let mut tag = None;
        let mut id = None;
        let mut attrs = Vec::new();
        let mut rest = s;

        let tag_end = rest
            .find(['#', '['])
            .unwrap_or(rest.len());
        if tag_end > 0 {
            let t = &rest[..tag_end];
            if !t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return Err(fail("bad tag name"));
            }
            tag = Some(t.to_string());
        }
        rest = &rest[tag_end..];

        if let Some(r) = rest.strip_prefix('#') {
            let id_end = r.find('[').unwrap_or(r.len());
            let v = &r[..id_end];
            if v.is_empty() {
                return Err(fail("empty id"));
            }
            id = Some(v.to_string());
            rest = &r[id_end..];
        }

        while let Some(r) = rest.strip_prefix('[') {
            let close = r.find(']').ok_or_else(|| fail("unclosed attribute clause"))?;
            let clause = &r[..close];
            let (k, v) = clause
                .split_once('=')
                .ok_or_else(|| fail("attribute clause needs key=value"))?;
            let v = v.trim_matches('"').trim_matches('\'');
            if k.is_empty() {
                return Err(fail("empty attribute key"));
            }
            attrs.push((k.to_string(), v.to_string()));
            rest = &r[close + 1..];
        }

        if !rest.is_empty() {
            return Err(fail("trailing garbage"));
        }
        if tag.is_none() && id.is_none() && attrs.is_empty() {
            return Err(fail("selects nothing"));
        }
        Ok(Selector::Compound { tag, id, attrs })
    }

    pub fn matches(&self, el: &Element) -> bool {
        match self {
            Selector::Path { .. } => false, // positional, resolved via get()
            Selector::Compound { tag, id, attrs } => {
                if let Some(t) = tag {
                    if el.tag != *t {
                        return false;
                    }
                }
                if let Some(i) = id {
                    if el.get_attr("id") != Some(i.as_str()) {
                        return false;
                    }
                }
                attrs
                    .iter()
                    .all(|(k, v)| el.get_attr(k) == Some(v.as_str()))
            }
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Path { path, tag } => {
                write!(f, "@path:")?;
                if let Some(t) = tag {
                    write!(f, "{t}:")?;
                }
                for (i, idx) in path.iter().enumerate() {
                    if i > 0 {
                        write!(f, "/")?;
                    }
                    write!(f, "{idx}")?;
                }
                Ok(())
            }
            Selector::Compound { tag, id, attrs } => {
                if let Some(t) = tag {
                    write!(f, "{t}")?;
                }
                if let Some(i) = id {
                    write!(f, "#{i}")?;
                }
                for (k, v) in attrs {
                    if v.chars().any(|c| c.is_whitespace() || c == ']') {
                        write!(f, "[{k}=\"{v}\"]")?;
                    } else {
                        write!(f, "[{k}={v}]")?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Element {
        Element::new("html").child(Element::new("head")).child(
            Element::new("body")
                .child(
                    Element::new("form").attr("action", "/search").child(
                        Element::new("input")
                            .attr("id", "searchquery")
                            .attr("name", "q")
                            .attr("type", "text"),
                    ),
                )
                .child(Element::new("p").text("hello  world")),
        )
    }

    #[test]
    fn find_by_id_and_attr() {
        let doc = sample();
        let by_id = doc.find(&Selector::parse("#searchquery").unwrap()).unwrap();
        let by_name = doc
            .find(&Selector::parse("input[name=q]").unwrap())
            .unwrap();
        assert_eq!(by_id, by_name);
        assert_eq!(by_id, vec![1, 0, 0]);
    }

    #[test]
    fn path_selector_round_trips() {
        let doc = sample();
        let sel = Selector::Path { path: vec![1, 0, 0], tag: None };
        let printed = sel.to_string();
        assert_eq!(printed, "@path:1/0/0");
        let reparsed = Selector::parse(&printed).unwrap();
        assert_eq!(doc.find(&reparsed).unwrap(), vec![1, 0, 0]);
    }

    #[test]
    fn tagged_path_selector_rejects_tag_mismatch() {
        let doc = sample();
        let ok = Selector::parse("@path:input:1/0/0").unwrap();
        assert_eq!(doc.find(&ok).unwrap(), vec![1, 0, 0]);
        assert_eq!(ok.to_string(), "@path:input:1/0/0");
        let wrong = Selector::parse("@path:button:1/0/0").unwrap();
        assert!(doc.find(&wrong).is_none(), "a different tag at the path is a miss");
    }

    #[test]
    fn text_is_normalized() {
        let doc = sample();
        let p = doc.get(&[1, 1]).unwrap();
        assert_eq!(p.normalized_text(), "hello world");
    }

    #[test]
    fn html_escapes_and_renders_deterministically() {
        let el = Element::new("p").attr("title", "a\"b").text("1 < 2 & 3");
        assert_eq!(
            el.to_html(),
            "<p title=\"a&quot;b\">1 &lt; 2 &amp; 3</p>"
        );
        assert_eq!(el.to_html(), el.clone().to_html());
    }

    #[test]
    fn enclosing_form_found_from_control() {
        let doc = sample();
        let input = doc.find(&Selector::parse("#searchquery").unwrap()).unwrap();
        let form = doc.enclosing(&input, "form").unwrap();
        assert_eq!(form, vec![1, 0]);
    }

    #[test]
    fn bad_selectors_are_rejected() {
        for bad in ["", "#", "[x]", "input[", "a b", "@path:x"] {
            assert!(Selector::parse(bad).is_err(), "{bad} should fail");
        }
    }
}
