//! URL templating: `{param}` placeholders in navigation targets, plus the
//! encoding-aware rendering and matching rules the promoter relies on.
//!
//! Templates are ordinary URL strings with placeholders already sitting in
//! encoded position, so rendering is a textual substitution of each
//! placeholder with the correctly-encoded input value: query-encoded after
//! the first `?`, path-segment-encoded before it.

use std::collections::BTreeMap;

use thiserror::Error;
use url::form_urlencoded;

use crate::trace::percent_decode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("placeholder `{{{name}}}` has no bound value")]
pub struct UnboundPlaceholder {
    pub name: String,
}

/// Placeholder names appearing in a templated string, in order, duplicates
/// included.
pub fn placeholders(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = s[i + 1..].find('}') {
                let name = &s[i + 1..i + 1 + end];
                if is_param_name(name) {
                    out.push(name.to_string());
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

fn is_param_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Substitute placeholders in a plain text field (no URL encoding).
pub fn render_text(template: &str, inputs: &BTreeMap<String, String>) -> Result<String, UnboundPlaceholder> {
    render_with(template, |name| inputs.get(name).cloned())
}

/// Substitute placeholders in a URL template, encoding each value for the
/// position it lands in.
pub fn render_url(template: &str, inputs: &BTreeMap<String, String>) -> Result<String, UnboundPlaceholder> {
    let query_start = template.find('?').map(|p| p + 1).unwrap_or(template.len());
    let (path_part, query_part) = template.split_at(query_start);
    let path = render_with(path_part, |name| {
        inputs.get(name).map(|v| encode_path_segment(v))
    })?;
    let query = render_with(query_part, |name| {
        inputs.get(name).map(|v| encode_query_value(v))
    })?;
    Ok(path + &query)
}

fn render_with(
    template: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, UnboundPlaceholder> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let (before, after) = rest.split_at(open);
        out.push_str(before);
        if let Some(close) = after.find('}') {
            let name = &after[1..close];
            if is_param_name(name) {
                match lookup(name) {
                    Some(value) => {
                        out.push_str(&value);
                        rest = &after[close + 1..];
                        continue;
                    }
                    None => {
                        return Err(UnboundPlaceholder { name: name.to_string() });
                    }
                }
            }
        }
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// `application/x-www-form-urlencoded` value encoding (spaces become `+`),
/// matching what a browser form submission produces.
pub fn encode_query_value(value: &str) -> String {
    form_urlencoded::byte_serialize(value.as_bytes()).collect()
}

pub fn encode_path_segment(value: &str) -> String {
    let mut out = String::new();
    for b in value.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// Build a query string from (key, already-encoded-or-placeholder value)
/// pairs. Keys are encoded; values are emitted verbatim so placeholders
/// survive.
pub fn build_query(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{}={}", encode_query_value(k), v))
        .collect::<Vec<_>>()
        .join("&")
}

/// Decoded query pairs in document order.
pub fn query_pairs(url: &str) -> Vec<(String, String)> {
    match url.split_once('?') {
        Some((_, query)) => form_urlencoded::parse(query.as_bytes())
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect(),
        None => Vec::new(),
    }
}

pub fn path_of(url: &str) -> &str {
    let without_query = url.split('?').next().unwrap_or(url);
    match without_query.find("://") {
        Some(pos) => {
            let after_scheme = &without_query[pos + 3..];
            match after_scheme.find('/') {
                Some(slash) => &after_scheme[slash..],
                None => "/",
            }
        }
        None => without_query,
    }
}

/// Values compare equal when their percent-decoded, plus-normalized forms do.
pub fn values_match(a: &str, b: &str) -> bool {
    a == b || percent_decode(a) == percent_decode(b)
}

/// Template a concrete URL against the demo bindings: whole path segments
/// and whole query values equal to a binding value become placeholders.
pub fn template_concrete_url(url: &str, bindings: &BTreeMap<String, String>) -> String {
    let (base, query) = match url.split_once('?') {
        Some((b, q)) => (b, Some(q)),
        None => (url, None),
    };

    let mut out = String::new();
    if let Some(scheme_end) = base.find("://") {
        let after = &base[scheme_end + 3..];
        let host_end = after.find('/').unwrap_or(after.len());
        out.push_str(&base[..scheme_end + 3 + host_end]);
        let path = &after[host_end..];
        out.push_str(&template_path(path, bindings));
    } else {
        out.push_str(&template_path(base, bindings));
    }

    if let Some(q) = query {
        let pairs: Vec<(String, String)> = form_urlencoded::parse(q.as_bytes())
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect();
        let templated: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(k, v)| {
                match bindings.iter().find(|(_, bv)| **bv == v) {
                    Some((name, _)) => (k, format!("{{{name}}}")),
                    None => (k, encode_query_value(&v)),
                }
            })
            .collect();
        out.push('?');
        out.push_str(&build_query(&templated));
    }
    out
}

fn template_path(path: &str, bindings: &BTreeMap<String, String>) -> String {
    path.split('/')
        .map(|seg| {
            let decoded = percent_decode(seg);
            match bindings.iter().find(|(_, v)| **v == decoded && !v.is_empty()) {
                Some((name, _)) => format!("{{{name}}}"),
                None => seg.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bindings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn render_encodes_by_position() {
        let b = bindings(&[("query", "blue kayak"), ("id", "5 a")]);
        let url = render_url("http://f.local/item/{id}?q={query}", &b).unwrap();
        assert_eq!(url, "http://f.local/item/5%20a?q=blue+kayak");
    }

    #[test]
    fn unbound_placeholder_errors() {
        let err = render_url("http://f.local/?q={query}", &BTreeMap::new()).unwrap_err();
        assert_eq!(err.name, "query");
    }

    #[test]
    fn non_placeholder_braces_pass_through() {
        let b = bindings(&[("q", "x")]);
        assert_eq!(render_text("a {q} {not found} {1bad}", &b).unwrap(), "a x {not found} {1bad}");
        assert_eq!(placeholders("{q} {not found} {q2}"), ["q", "q2"]);
    }

    #[test]
    fn template_concrete_url_matches_bindings() {
        let b = bindings(&[("query", "blue kayak"), ("category", "Boats")]);
        let t = template_concrete_url(
            "http://f.local/search?q=blue+kayak&category=Boats&sort=price_asc",
            &b,
        );
        assert_eq!(t, "http://f.local/search?q={query}&category={category}&sort=price_asc");
        // rendering with the same bindings reproduces the original URL
        let rendered = render_url(&t, &b).unwrap();
        assert_eq!(rendered, "http://f.local/search?q=blue+kayak&category=Boats&sort=price_asc");
    }

    #[test]
    fn template_path_segments() {
        let b = bindings(&[("listing_id", "5")]);
        let t = template_concrete_url("http://f.local/listing/5/edit", &b);
        assert_eq!(t, "http://f.local/listing/{listing_id}/edit");
        // "5" inside a longer segment is not templated
        let t2 = template_concrete_url("http://f.local/listing/57/edit", &b);
        assert_eq!(t2, "http://f.local/listing/57/edit");
    }

    #[test]
    fn query_pairs_decode() {
        let pairs = query_pairs("http://f.local/search?q=blue+kayak&sort=price_asc");
        assert_eq!(
            pairs,
            vec![
                ("q".to_string(), "blue kayak".to_string()),
                ("sort".to_string(), "price_asc".to_string())
            ]
        );
        assert_eq!(path_of("http://f.local/search?q=1"), "/search");
        assert_eq!(path_of("http://f.local"), "/");
    }

    #[test]
    fn values_match_normalizes_encodings() {
        assert!(values_match("blue+kayak", "blue kayak"));
        assert!(values_match("blue%20kayak", "blue kayak"));
        assert!(!values_match("bluekayak", "blue kayak"));
    }
}
