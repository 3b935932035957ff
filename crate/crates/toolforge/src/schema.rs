//! Input-schema induction and validation.
//!
//! One field per script parameter. Select-bound parameters become enums
//! whose options merge the DOM capture (presentation order first) with any
//! candidate hint options; requiredness mirrors the form's `required`
//! markers when captured and otherwise follows whether the demo supplied a
//! value. Types are inferred conservatively: a parameter is numeric only
//! when the demo literal parses as a number AND the element is a numeric
//! input. Over-typing breaks valid inputs; under-typing never does.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{ActionScript, Step};
use crate::trace::{ExecutionTrace, HintKind, InteractedElement, ToolCandidate};
use crate::urls;
use crate::validate::FeedbackItem;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("parameter `{0}` cannot be traced to any element, URL, or task")]
    MissingParamSource(String),
    #[error("schema has no field named `{0}`")]
    UnknownField(String),
    #[error("invalid schema: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Text,
    Integer,
    Number,
    Boolean,
    Enum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub value_type: ValueType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
}

impl FieldSpec {
    fn value_conforms(&self, value: &str) -> bool {
        match self.value_type {
            ValueType::Text => true,
            ValueType::Integer => value.parse::<i64>().is_ok(),
            ValueType::Number => value.parse::<f64>().is_ok(),
            ValueType::Boolean => matches!(value, "true" | "false"),
            ValueType::Enum => self
                .options
                .as_ref()
                .is_some_and(|opts| opts.iter().any(|o| o == value)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSchema {
    /// Set when the tool takes no inputs at all.
    #[serde(rename = "static", default, skip_serializing_if = "std::ops::Not::not")]
    pub is_static: bool,
    pub fields: Vec<FieldSpec>,
}

impl InputSchema {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.fields.is_empty() && !self.is_static {
            return Err(SchemaError::Invalid(
                "non-static tool needs at least one input field".to_string(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.fields {
            if !seen.insert(&f.name) {
                return Err(SchemaError::Invalid(format!("duplicate field `{}`", f.name)));
            }
            if f.value_type == ValueType::Enum {
                match &f.options {
                    Some(opts) if opts.len() >= 2 => {}
                    _ => {
                        return Err(SchemaError::Invalid(format!(
                            "enum field `{}` needs at least 2 options",
                            f.name
                        )))
                    }
                }
            }
            for (label, v) in [("default", &f.default), ("example", &f.example)] {
                if let Some(v) = v {
                    if !f.value_conforms(v) {
                        return Err(SchemaError::Invalid(format!(
                            "{label} `{v}` does not satisfy field `{}`",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolve the full rendering environment for an input map: explicit
    /// inputs win, then field defaults, then the empty string (what an
    /// untouched form control submits).
    pub fn effective_bindings(&self, inputs: &BTreeMap<String, String>) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for field in &self.fields {
            let value = inputs
                .get(&field.name)
                .cloned()
                .or_else(|| field.default.clone())
                .unwrap_or_default();
            out.insert(field.name.clone(), value);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    MissingRequired,
    UnknownKey,
    TypeMismatch,
    EnumMembership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: ViolationRule,
    pub message: String,
}

/// Check an input map against a schema. Returns the violations rather than
/// raising; an empty list means ok.
pub fn validate_input(schema: &InputSchema, inputs: &BTreeMap<String, String>) -> Vec<Violation> {
    let mut violations = Vec::new();
    for key in inputs.keys() {
        if schema.field(key).is_none() {
            violations.push(Violation {
                field: key.clone(),
                rule: ViolationRule::UnknownKey,
                message: format!("`{key}` is not an input of this tool"),
            });
        }
    }
    for field in &schema.fields {
        match inputs.get(&field.name) {
            None => {
                if field.required && field.default.is_none() {
                    violations.push(Violation {
                        field: field.name.clone(),
                        rule: ViolationRule::MissingRequired,
                        message: format!("`{}` is required", field.name),
                    });
                }
            }
            Some(value) => {
                if !field.value_conforms(value) {
                    let rule = if field.value_type == ValueType::Enum {
                        ViolationRule::EnumMembership
                    } else {
                        ViolationRule::TypeMismatch
                    };
                    let message = match (&field.value_type, &field.options) {
                        (ValueType::Enum, Some(opts)) => {
                            format!("`{value}` is not one of {opts:?}")
                        }
                        _ => format!("`{value}` is not a valid {:?}", field.value_type),
                    };
                    violations.push(Violation { field: field.name.clone(), rule, message });
                }
            }
        }
    }
    violations
}

/// Where a parameter's value flows into the site.
enum ParamSource<'a> {
    Element(&'a InteractedElement),
    Url,
    AgenticTask,
}

/// Induce the input schema for a synthesized script.
pub fn induce_schema(
    trace: &ExecutionTrace,
    script: &ActionScript,
    candidate: &ToolCandidate,
) -> Result<InputSchema, SchemaError> {
    if script.params.is_empty() {
        return Ok(InputSchema { is_static: true, fields: Vec::new() });
    }

    let mut fields = Vec::new();
    let mut used_select_hints = std::collections::BTreeSet::new();
    let mut text_hint_cursor = 0usize;

    for param in &script.params {
        let source = find_source(trace, script, param)
            .ok_or_else(|| SchemaError::MissingParamSource(param.clone()))?;
        let example = trace.param_bindings.get(param).cloned();
        let field = match source {
            ParamSource::Element(el) if el.tag == "select" => {
                let hint = best_select_hint(candidate, el, &mut used_select_hints);
                let mut options = el.select_options.clone();
                if let Some(hint_options) = hint.and_then(|h| h.options.as_ref()) {
                    for o in hint_options {
                        if !options.contains(o) {
                            options.push(o.clone());
                        }
                    }
                }
                let description = hint
                    .map(|h| h.purpose.clone())
                    .unwrap_or_else(|| format!("value for {param}"));
                if options.len() >= 2 {
                    FieldSpec {
                        name: param.clone(),
                        value_type: ValueType::Enum,
                        required: el.attributes.contains_key("required"),
                        options: Some(options),
                        default: el.preselected.clone(),
                        description,
                        example,
                    }
                } else {
                    FieldSpec {
                        name: param.clone(),
                        value_type: ValueType::Text,
                        required: el.attributes.contains_key("required"),
                        options: None,
                        default: el.preselected.clone(),
                        description,
                        example,
                    }
                }
            }
            ParamSource::Element(el) => {
                let hint = next_hint(
                    candidate,
                    &[HintKind::Input, HintKind::Textarea],
                    &mut text_hint_cursor,
                );
                let description = hint
                    .map(|h| h.purpose.clone())
                    .unwrap_or_else(|| format!("value for {param}"));
                let is_numeric_input =
                    el.attributes.get("type").map(|t| t == "number").unwrap_or(false);
                let value_type = match (&example, is_numeric_input) {
                    (Some(v), true) if v.parse::<i64>().is_ok() => ValueType::Integer,
                    (Some(v), true) if v.parse::<f64>().is_ok() => ValueType::Number,
                    _ => ValueType::Text,
                };
                FieldSpec {
                    name: param.clone(),
                    value_type,
                    required: el.attributes.contains_key("required"),
                    options: None,
                    default: None,
                    description,
                    example,
                }
            }
            ParamSource::Url => FieldSpec {
                name: param.clone(),
                value_type: ValueType::Text,
                required: true,
                options: None,
                default: None,
                description: format!("value for the {{{param}}} part of the navigated URL"),
                example,
            },
            ParamSource::AgenticTask => FieldSpec {
                name: param.clone(),
                value_type: ValueType::Text,
                required: true,
                options: None,
                default: None,
                description: format!("value for {param}"),
                example,
            },
        };
        fields.push(field);
    }

    let schema = InputSchema { is_static: false, fields };
    schema.validate()?;
    Ok(schema)
}

/// Scan the script for the first step carrying the placeholder; element
/// sources out-rank URL sources out-rank agentic task text.
fn find_source<'a>(
    trace: &'a ExecutionTrace,
    script: &ActionScript,
    param: &str,
) -> Option<ParamSource<'a>> {
    let marker = format!("{{{param}}}");
    let mut url_hit = false;
    let mut task_hit = false;
    for step in &script.steps {
        match step {
            Step::Interaction { value, selected_text, origin, .. } => {
                let used = value.as_deref().is_some_and(|v| v.contains(&marker))
                    || selected_text.as_deref().is_some_and(|v| v.contains(&marker));
                if used {
                    if let Some((si, ai)) = origin {
                        if let Some(el) = trace.steps.get(*si).and_then(|s| s.interacted_for_action(*ai)) {
                            return Some(ParamSource::Element(el));
                        }
                    }
                }
            }
            Step::Navigation { url_template, .. } => {
                if url_template.contains(&marker) {
                    url_hit = true;
                }
            }
            Step::Agentic { task, .. } => {
                if task.contains(&marker) {
                    task_hit = true;
                }
            }
            Step::Extraction { .. } => {}
        }
    }
    if url_hit {
        Some(ParamSource::Url)
    } else if task_hit {
        Some(ParamSource::AgenticTask)
    } else {
        None
    }
}

fn next_hint<'a>(
    candidate: &'a ToolCandidate,
    kinds: &[HintKind],
    cursor: &mut usize,
) -> Option<&'a crate::trace::ElementHint> {
    let matching: Vec<_> = candidate
        .elements
        .iter()
        .filter(|h| kinds.contains(&h.kind))
        .collect();
    let hint = matching.get(*cursor).copied();
    *cursor += 1;
    hint
}

/// Pair a select element with the candidate hint whose option list overlaps
/// it most; ties and zero-overlap fall back to the first unused select hint.
fn best_select_hint<'a>(
    candidate: &'a ToolCandidate,
    element: &InteractedElement,
    used: &mut std::collections::BTreeSet<usize>,
) -> Option<&'a crate::trace::ElementHint> {
    let select_hints: Vec<(usize, &crate::trace::ElementHint)> = candidate
        .elements
        .iter()
        .enumerate()
        .filter(|(i, h)| h.kind == HintKind::Select && !used.contains(i))
        .collect();
    let overlap = |hint: &crate::trace::ElementHint| -> usize {
        hint.options
            .as_ref()
            .map(|opts| {
                opts.iter()
                    .filter(|o| element.select_options.contains(o))
                    .count()
            })
            .unwrap_or(0)
    };
    let chosen = select_hints
        .iter()
        .max_by_key(|(i, h)| (overlap(h), std::cmp::Reverse(*i)))
        .map(|(i, h)| (*i, *h))?;
    used.insert(chosen.0);
    Some(chosen.1)
}

/// Apply one feedback item to the schema. Enum coverage amendments only
/// append (monotone) and are idempotent; requiredness feedback flips the
/// flag; every other feedback kind is handled elsewhere and leaves the
/// schema untouched.
pub fn amend_schema(schema: &InputSchema, feedback: &FeedbackItem) -> Result<InputSchema, SchemaError> {
    let mut amended = schema.clone();
    match feedback {
        FeedbackItem::UncoveredEnum { field, value } => {
            let spec = amended
                .fields
                .iter_mut()
                .find(|f| f.name == *field)
                .ok_or_else(|| SchemaError::UnknownField(field.clone()))?;
            if let Some(options) = &mut spec.options {
                if !options.iter().any(|o| o == value) {
                    options.push(value.clone());
                }
            }
        }
        FeedbackItem::RequirednessMismatch { field } => {
            let spec = amended
                .fields
                .iter_mut()
                .find(|f| f.name == *field)
                .ok_or_else(|| SchemaError::UnknownField(field.clone()))?;
            spec.required = !spec.required;
        }
        _ => {}
    }
    Ok(amended)
}

/// Sanity hook used at tool assembly: the script's placeholders and the
/// schema's fields must be exactly the same set.
pub fn check_bijection(script: &ActionScript, schema: &InputSchema) -> Result<(), SchemaError> {
    let mut placeholders: Vec<String> = Vec::new();
    for step in &script.steps {
        for p in step.placeholders() {
            if !placeholders.contains(&p) {
                placeholders.push(p);
            }
        }
    }
    for p in &placeholders {
        if schema.field(p).is_none() {
            return Err(SchemaError::Invalid(format!(
                "placeholder `{{{p}}}` has no schema field"
            )));
        }
    }
    for f in &schema.fields {
        if !placeholders.contains(&f.name) {
            return Err(SchemaError::Invalid(format!(
                "schema field `{}` is referenced by no step",
                f.name
            )));
        }
    }
    Ok(())
}

/// URL-encoding-aware equality helper for option matching in diagnostics.
pub fn option_matches(a: &str, b: &str) -> bool {
    urls::values_match(a, b)
}
