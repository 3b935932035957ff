//! Tool persistence: validated tools land in a directory registry, one
//! versioned JSON file per tool (`{name}.v{version}.tool.json`), with full
//! build provenance retained for auditing and the `report` command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::InputSchema;
use crate::synth::TestSuite;
use crate::tool::Tool;
use crate::trace::ToolCandidate;
use crate::validate::{AttemptRecord, BuildOutput, ValidationReport};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("tool `{name}` version {version} already registered")]
    Conflict { name: String, version: u32 },
    #[error("record failed validation gate: fail_rate {fail_rate} != 0")]
    NotValidated { fail_rate: f64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub candidate: ToolCandidate,
    pub attempts: Vec<AttemptRecord>,
    pub final_report: ValidationReport,
    pub suite: TestSuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub version: u32,
    pub tool: Tool,
    pub provenance: Provenance,
}

impl ToolRecord {
    /// Assemble an unversioned record from a successful build.
    pub fn from_build(output: &BuildOutput) -> Option<ToolRecord> {
        Some(ToolRecord {
            version: 0,
            tool: output.tool.clone()?,
            provenance: Provenance {
                candidate: output.candidate.clone(),
                attempts: output.attempts.clone(),
                final_report: output.final_report.clone()?,
                suite: output.suite.clone()?,
            },
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}.v{}.tool.json", self.tool.name, self.version)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

/// Action descriptor handed to agents: the contract without the script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: InputSchema,
}

/// Holds tools during validation only; no gate, no versions, no disk.
#[derive(Debug, Default)]
pub struct StagingRegistry {
    tools: BTreeMap<String, Tool>,
}

impl StagingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: Tool) {
        self.tools.insert(tool.name.clone(), tool);
    }

    pub fn get(&self, name: &str) -> Option<&Tool> {
        self.tools.get(name)
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    /// name -> versions, ascending.
    records: BTreeMap<String, Vec<ToolRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDiagnostic {
    pub file: String,
    pub error: String,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a validated record. Version 0 requests auto-assignment
    /// (current max + 1); an explicit version that already exists conflicts.
    /// Superseded versions are retained.
    pub fn register_tool(&mut self, mut record: ToolRecord) -> Result<u32, RegistryError> {
        if record.provenance.final_report.fail_rate != 0.0 {
            return Err(RegistryError::NotValidated {
                fail_rate: record.provenance.final_report.fail_rate,
            });
        }
        record
            .tool
            .validate()
            .map_err(|e| RegistryError::InvalidRecord(e.to_string()))?;
        let versions = self.records.entry(record.tool.name.clone()).or_default();
        let max = versions.iter().map(|r| r.version).max().unwrap_or(0);
        if record.version == 0 {
            record.version = max + 1;
        } else if versions.iter().any(|r| r.version == record.version) {
            return Err(RegistryError::Conflict {
                name: record.tool.name.clone(),
                version: record.version,
            });
        }
        let version = record.version;
        versions.push(record);
        versions.sort_by_key(|r| r.version);
        Ok(version)
    }

    pub fn names(&self) -> Vec<&str> {
        self.records.keys().map(|s| s.as_str()).collect()
    }

    /// Highest validated version, the one `run` uses.
    pub fn latest(&self, name: &str) -> Option<&ToolRecord> {
        self.records.get(name).and_then(|v| v.last())
    }

    pub fn all_latest(&self) -> Vec<&ToolRecord> {
        self.records.values().filter_map(|v| v.last()).collect()
    }

    pub fn all_records(&self) -> Vec<&ToolRecord> {
        self.records.values().flatten().collect()
    }

    pub fn descriptor(record: &ToolRecord) -> ActionDescriptor {
        ActionDescriptor {
            name: record.tool.name.clone(),
            description: record.tool.description.clone(),
            input_schema: record.tool.input_schema.clone(),
        }
    }

    /// Load every `*.tool.json` in the directory. Corrupt files become
    /// diagnostics; valid ones load regardless.
    pub fn load(dir: &Path) -> Result<(Registry, Vec<LoadDiagnostic>), RegistryError> {
        let mut registry = Registry::new();
        let mut diagnostics = Vec::new();
        if !dir.exists() {
            return Ok((registry, diagnostics));
        }
        let mut entries: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".tool.json")))
            .collect();
        entries.sort();
        for path in entries {
            let file = path.file_name().unwrap().to_string_lossy().to_string();
            let mut push_err = |error: String| diagnostics.push(LoadDiagnostic { file: file.clone(), error });
            match fs::read(&path) {
                Err(e) => push_err(e.to_string()),
                Ok(bytes) => match serde_json::from_slice::<ToolRecord>(&bytes) {
                    Err(e) => push_err(e.to_string()),
                    Ok(record) => {
                        if let Err(e) = record.tool.validate() {
                            push_err(format!("invariant violation: {e}"));
                            continue;
                        }
                        let versions = registry.records.entry(record.tool.name.clone()).or_default();
                        if versions.iter().any(|r| r.version == record.version) {
                            push_err(format!(
                                "duplicate version {} for `{}`",
                                record.version, record.tool.name
                            ));
                            continue;
                        }
                        versions.push(record);
                        versions.sort_by_key(|r| r.version);
                    }
                },
            }
        }
        Ok((registry, diagnostics))
    }

    /// Write every record to the directory. Deterministic bytes; save ->
    /// load -> save is byte-stable.
    pub fn save(&self, dir: &Path) -> Result<(), RegistryError> {
        fs::create_dir_all(dir)?;
        for record in self.all_records() {
            fs::write(dir.join(record.file_name()), record.to_json())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ActionScript, Step, TestCase};

    fn minimal_tool(name: &str) -> Tool {
        Tool {
            name: name.to_string(),
            description: "test tool".to_string(),
            start_url: "http://fixture.local/".to_string(),
            script: ActionScript {
                steps: vec![Step::Navigation {
                    url_template: "http://fixture.local/".to_string(),
                    description: "go home".to_string(),
                    origin: None,
                }],
                params: vec![],
            },
            unpromoted_script: None,
            input_schema: InputSchema { is_static: true, fields: vec![] },
        }
    }

    fn record(name: &str, fail_rate: f64) -> ToolRecord {
        ToolRecord {
            version: 0,
            tool: minimal_tool(name),
            provenance: Provenance {
                candidate: ToolCandidate {
                    name: name.to_string(),
                    start_url: "http://fixture.local/".to_string(),
                    description: String::new(),
                    elements: vec![],
                },
                attempts: vec![],
                final_report: ValidationReport {
                    fail_rate,
                    step_count: 1,
                    agentic_ratio: 0.0,
                    per_case: vec![crate::validate::CaseResult {
                        case: TestCase {
                            inputs: Default::default(),
                            expectation: crate::synth::Expectation::Completes,
                        },
                        passed: fail_rate == 0.0,
                        outcome: crate::exec::ExecutionOutcome {
                            status: crate::exec::ExecStatus::Success,
                            steps_executed: 1,
                            agentic_steps_executed: 0,
                            outputs: Default::default(),
                            failure: None,
                            primitive_calls: 1,
                            via_fallback: false,
                            final_url: "http://fixture.local/".to_string(),
                            final_page_errors: vec![],
                        },
                    }],
                    feedback: vec![],
                },
                suite: TestSuite { cases: vec![] },
            },
        }
    }

    #[test]
    fn first_registration_gets_version_one() {
        let mut reg = Registry::new();
        assert_eq!(reg.register_tool(record("search_listings", 0.0)).unwrap(), 1);
        assert_eq!(reg.latest("search_listings").unwrap().version, 1);
    }

    #[test]
    fn re_registration_bumps_version_and_keeps_old() {
        let mut reg = Registry::new();
        reg.register_tool(record("search_listings", 0.0)).unwrap();
        assert_eq!(reg.register_tool(record("search_listings", 0.0)).unwrap(), 2);
        assert_eq!(reg.all_records().len(), 2);
        assert_eq!(reg.latest("search_listings").unwrap().version, 2);
    }

    #[test]
    fn unvalidated_record_is_rejected() {
        let mut reg = Registry::new();
        assert!(matches!(
            reg.register_tool(record("bad_tool", 0.4)),
            Err(RegistryError::NotValidated { .. })
        ));
    }

    #[test]
    fn explicit_duplicate_version_conflicts() {
        let mut reg = Registry::new();
        let mut r1 = record("t", 0.0);
        r1.version = 3;
        reg.register_tool(r1).unwrap();
        let mut r2 = record("t", 0.0);
        r2.version = 3;
        assert!(matches!(
            reg.register_tool(r2),
            Err(RegistryError::Conflict { version: 3, .. })
        ));
    }

    #[test]
    fn save_load_save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut reg = Registry::new();
        reg.register_tool(record("alpha", 0.0)).unwrap();
        reg.register_tool(record("beta", 0.0)).unwrap();
        reg.save(dir.path()).unwrap();

        let first: BTreeMap<String, Vec<u8>> = read_dir_bytes(dir.path());
        let (loaded, diags) = Registry::load(dir.path()).unwrap();
        assert!(diags.is_empty());
        loaded.save(dir.path()).unwrap();
        let second = read_dir_bytes(dir.path());
        assert_eq!(first, second);
    }

    #[test]
    fn corrupt_file_among_valid_ones_is_diagnosed_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut reg = Registry::new();
        for name in ["a", "b", "c", "d"] {
            reg.register_tool(record(name, 0.0)).unwrap();
        }
        reg.save(dir.path()).unwrap();
        std::fs::write(dir.path().join("zz.v1.tool.json"), b"{not json").unwrap();

        let (loaded, diags) = Registry::load(dir.path()).unwrap();
        assert_eq!(loaded.all_records().len(), 4);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].file, "zz.v1.tool.json");
    }

    #[test]
    fn empty_dir_is_empty_registry() {
        let dir = tempfile::tempdir().unwrap();
        let (loaded, diags) = Registry::load(dir.path()).unwrap();
        assert!(loaded.names().is_empty());
        assert!(diags.is_empty());
    }

    fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().to_string(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect()
    }
}
