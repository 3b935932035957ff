//! Command-line driver for the whole pipeline.
//!
//! Exit codes: 0 success, 1 operation failure (build/validation/run
//! failures, missing tools, schema violations), 2 usage errors (clap).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::exec::{execute_tool, Reasoner, ScriptedReasoner};
use crate::fixture::{
    demo_candidates, scripted_demo, FixtureBackend, FixtureConfig, FixtureFactory,
    FixtureServer, FixtureTraceSource,
};
use crate::reasoner::HttpReasoner;
use crate::registry::{Registry, ToolRecord};
use crate::trace::{parse_candidates, serialize_candidates, serialize_trace, ToolCandidate};
use crate::validate::{build_tool, validate_tool, BuildBudget, BuildOutput};

#[derive(Parser)]
#[command(
    name = "toolforge",
    version,
    about = "Reverse-engineer website functionality from recorded traces into validated tools"
)]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a tool-candidate file.
    IngestCandidates { file: PathBuf },
    /// Record a scripted demonstration trace on the fixture site.
    DemoRecord {
        /// search | sort_results | create_listing | edit_listing |
        /// post_comment | search_nosort | broken_page
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        variant: u32,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the built-in fixture candidate corpus.
    FixtureCandidates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build (demonstrate, generate, validate) one candidate or all of them.
    Build {
        /// Candidate name; omit with --all to build the whole file.
        candidate: Option<String>,
        #[arg(long)]
        all: bool,
        /// Candidate file; defaults to the built-in fixture corpus.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, default_value = "tools")]
        registry: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_attempts: u32,
        /// `stub` or an HTTP endpoint URL speaking the reasoner contract.
        #[arg(long, default_value = "stub")]
        reasoner: String,
    },
    /// Re-run a registered tool's stored test suite.
    Validate {
        tool: String,
        #[arg(long, default_value = "tools")]
        registry: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute a registered tool with the given inputs.
    Run {
        tool: String,
        /// Repeatable key=value input.
        #[arg(long = "input", value_name = "K=V")]
        inputs: Vec<String>,
        #[arg(long, default_value = "tools")]
        registry: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List registered tools.
    List {
        #[arg(long, default_value = "tools")]
        registry: PathBuf,
    },
    /// Per-tool metrics and the tries-until-success table.
    Report {
        #[arg(long, default_value = "tools")]
        registry: PathBuf,
    },
    /// Serve the fixture site over local HTTP until interrupted.
    Serve {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

struct CliError {
    message: String,
}

impl CliError {
    fn new(message: impl Into<String>) -> Self {
        CliError { message: message.into() }
    }
}

struct CommandOutput {
    human: String,
    json: Value,
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let json_mode = cli.json;
    match dispatch(cli) {
        Ok(output) => {
            if json_mode {
                println!("{}", serde_json::to_string_pretty(&output.json).expect("json encodes"));
            } else {
                println!("{}", output.human);
            }
            0
        }
        Err(e) => {
            if json_mode {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({ "error": e.message })).expect("json encodes")
                );
            } else {
                eprintln!("error: {}", e.message);
            }
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<CommandOutput, CliError> {
    match cli.command {
        Command::IngestCandidates { file } => ingest_candidates(&file),
        Command::DemoRecord { name, seed, variant, out } => demo_record(&name, seed, variant, out.as_deref()),
        Command::FixtureCandidates { out } => fixture_candidates(out.as_deref()),
        Command::Build { candidate, all, candidates, registry, seed, max_attempts, reasoner } => {
            build(candidate.as_deref(), all, candidates.as_deref(), &registry, seed, max_attempts, &reasoner)
        }
        Command::Validate { tool, registry, seed } => validate_cmd(&tool, &registry, seed),
        Command::Run { tool, inputs, registry, seed } => run_cmd(&tool, &inputs, &registry, seed),
        Command::List { registry } => list_cmd(&registry),
        Command::Report { registry } => report_cmd(&registry),
        Command::Serve { seed, port } => serve_cmd(seed, port),
    }
}

fn ingest_candidates(file: &Path) -> Result<CommandOutput, CliError> {
    let raw = std::fs::read(file).map_err(|e| CliError::new(format!("read {}: {e}", file.display())))?;
    let candidates = parse_candidates(&raw).map_err(|e| CliError::new(e.to_string()))?;
    let names: Vec<&str> = candidates.iter().map(|c| c.name.as_str()).collect();
    Ok(CommandOutput {
        human: format!("{} candidate(s): {}", candidates.len(), names.join(", ")),
        json: json!({ "count": candidates.len(), "names": names }),
    })
}

fn demo_record(name: &str, seed: u64, variant: u32, out: Option<&Path>) -> Result<CommandOutput, CliError> {
    let mut backend = FixtureBackend::new(seed);
    let trace = scripted_demo(name, &mut backend, variant).map_err(|e| CliError::new(e.to_string()))?;
    let serialized = serialize_trace(&trace);
    if let Some(path) = out {
        std::fs::write(path, &serialized)
            .map_err(|e| CliError::new(format!("write {}: {e}", path.display())))?;
        Ok(CommandOutput {
            human: format!(
                "recorded `{name}` (seed {seed}, variant {variant}): {} steps -> {}",
                trace.steps.len(),
                path.display()
            ),
            json: json!({
                "demo": name,
                "seed": seed,
                "variant": variant,
                "steps": trace.steps.len(),
                "file": path.display().to_string(),
            }),
        })
    } else {
        Ok(CommandOutput {
            human: serialized.clone(),
            json: serde_json::from_str(&serialized).expect("trace serializes to valid json"),
        })
    }
}

fn fixture_candidates(out: Option<&Path>) -> Result<CommandOutput, CliError> {
    let serialized = serialize_candidates(&demo_candidates());
    match out {
        Some(path) => {
            std::fs::write(path, &serialized)
                .map_err(|e| CliError::new(format!("write {}: {e}", path.display())))?;
            Ok(CommandOutput {
                human: format!("wrote fixture candidates -> {}", path.display()),
                json: json!({ "file": path.display().to_string() }),
            })
        }
        None => Ok(CommandOutput {
            human: serialized.clone(),
            json: serde_json::from_str(&serialized).expect("candidates serialize to valid json"),
        }),
    }
}

fn load_candidates(path: Option<&Path>) -> Result<Vec<ToolCandidate>, CliError> {
    match path {
        Some(path) => {
            let raw = std::fs::read(path)
                .map_err(|e| CliError::new(format!("read {}: {e}", path.display())))?;
            parse_candidates(&raw).map_err(|e| CliError::new(e.to_string()))
        }
        None => Ok(demo_candidates()),
    }
}

fn make_reasoner(choice: &str) -> Result<Box<dyn Reasoner>, CliError> {
    if choice == "stub" {
        Ok(Box::new(ScriptedReasoner::empty()))
    } else {
        Ok(Box::new(HttpReasoner::new(choice).map_err(|e| CliError::new(e.to_string()))?))
    }
}

fn build_summary(output: &BuildOutput, version: Option<u32>, file: Option<String>) -> Value {
    json!({
        "candidate": output.candidate.name,
        "built": output.succeeded(),
        "version": version,
        "file": file,
        "attempts": output.attempts.len(),
        "attempt_log": output.attempts,
        "metrics": output.final_report.as_ref().map(|r| json!({
            "fail_rate": r.fail_rate,
            "step_count": r.step_count,
            "agentic_ratio": r.agentic_ratio,
            "cases": r.per_case.len(),
        })),
    })
}

fn build(
    candidate_name: Option<&str>,
    all: bool,
    candidates_path: Option<&Path>,
    registry_dir: &Path,
    seed: u64,
    max_attempts: u32,
    reasoner_choice: &str,
) -> Result<CommandOutput, CliError> {
    let candidates = load_candidates(candidates_path)?;
    let selected: Vec<&ToolCandidate> = if all {
        candidates.iter().collect()
    } else {
        let name = candidate_name
            .ok_or_else(|| CliError::new("give a candidate name or pass --all"))?;
        vec![candidates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CliError::new(format!("no candidate named `{name}`")))?]
    };

    let (mut registry, _) = Registry::load(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
    let budget = BuildBudget { max_attempts };
    let factory = FixtureFactory::new(seed);

    let mut summaries = Vec::new();
    let mut human_lines = Vec::new();
    let mut any_failed = false;

    for candidate in selected {
        let mut source = FixtureTraceSource::new(seed);
        let mut reasoner = make_reasoner(reasoner_choice)?;
        let output = build_tool(candidate, &mut source, &budget, &factory, Some(reasoner.as_mut()));
        if output.succeeded() {
            let record = ToolRecord::from_build(&output).expect("successful build has a record");
            let file_name = |v: u32| format!("{}.v{v}.tool.json", candidate.name);
            let version = registry
                .register_tool(record)
                .map_err(|e| CliError::new(e.to_string()))?;
            registry.save(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
            let report = output.final_report.as_ref().expect("successful build has a report");
            human_lines.push(format!(
                "built `{}` v{version} in {} attempt(s): steps={}, agentic_ratio={:.2}, fail_rate={:.2} -> {}",
                candidate.name,
                output.attempts.len(),
                report.step_count,
                report.agentic_ratio,
                report.fail_rate,
                registry_dir.join(file_name(version)).display(),
            ));
            summaries.push(build_summary(
                &output,
                Some(version),
                Some(registry_dir.join(file_name(version)).display().to_string()),
            ));
        } else {
            any_failed = true;
            human_lines.push(format!(
                "FAILED `{}` after {} attempt(s); last note: {}",
                candidate.name,
                output.attempts.len(),
                output.attempts.last().map(|a| a.note.as_str()).unwrap_or("none"),
            ));
            summaries.push(build_summary(&output, None, None));
        }
    }

    let output = CommandOutput {
        human: human_lines.join("\n"),
        json: json!({ "builds": summaries }),
    };
    if any_failed {
        // structured detail still lands on stdout in json mode
        return Err(CliError::new(output.human));
    }
    Ok(output)
}

fn load_tool<'r>(registry: &'r Registry, name: &str) -> Result<&'r ToolRecord, CliError> {
    registry
        .latest(name)
        .ok_or_else(|| CliError::new(format!("no registered tool named `{name}`")))
}

fn validate_cmd(tool_name: &str, registry_dir: &Path, seed: u64) -> Result<CommandOutput, CliError> {
    let (registry, _) = Registry::load(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
    let record = load_tool(&registry, tool_name)?;
    let factory = FixtureFactory::new(seed);
    let report = validate_tool(&record.tool, &record.provenance.suite, &factory, None);
    let human = format!(
        "`{tool_name}` v{}: fail_rate={:.2}, steps={}, agentic_ratio={:.2} over {} case(s)",
        record.version,
        report.fail_rate,
        report.step_count,
        report.agentic_ratio,
        report.per_case.len()
    );
    let json = json!({
        "tool": tool_name,
        "version": record.version,
        "fail_rate": report.fail_rate,
        "step_count": report.step_count,
        "agentic_ratio": report.agentic_ratio,
        "cases": report.per_case.len(),
        "feedback": report.feedback,
    });
    if report.fail_rate > 0.0 {
        return Err(CliError::new(human));
    }
    Ok(CommandOutput { human, json })
}

fn parse_inputs(raw: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::new(format!("input `{item}` is not key=value")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn run_cmd(
    tool_name: &str,
    raw_inputs: &[String],
    registry_dir: &Path,
    seed: u64,
) -> Result<CommandOutput, CliError> {
    let (registry, _) = Registry::load(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
    let record = load_tool(&registry, tool_name)?;
    let inputs = parse_inputs(raw_inputs)?;

    let violations = crate::schema::validate_input(&record.tool.input_schema, &inputs);
    if !violations.is_empty() {
        let detail = violations
            .iter()
            .map(|v| format!("{} ({:?}): {}", v.field, v.rule, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::new(format!("schema violation: {detail}")));
    }

    let mut backend = FixtureBackend::new(seed);
    let outcome = execute_tool(&record.tool, &inputs, &mut backend, None)
        .map_err(|e| CliError::new(e.to_string()))?;

    let mut human = String::new();
    for (name, value) in &outcome.outputs {
        human.push_str(&format!("## {name}\n{value}\n"));
    }
    human.push_str(&format!(
        "status={:?} steps={} agentic={} url={}",
        outcome.status, outcome.steps_executed, outcome.agentic_steps_executed, outcome.final_url
    ));
    let json = json!({
        "tool": tool_name,
        "version": record.version,
        "outcome": outcome,
    });
    if !outcome.succeeded() {
        return Err(CliError::new(format!(
            "execution failed at step {:?}",
            outcome.failure.as_ref().map(|(i, f)| format!("{i}: {f:?}"))
        )));
    }
    Ok(CommandOutput { human, json })
}

fn list_cmd(registry_dir: &Path) -> Result<CommandOutput, CliError> {
    let (registry, diagnostics) =
        Registry::load(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    for record in registry.all_latest() {
        lines.push(format!(
            "{} v{} — {} ({} params)",
            record.tool.name,
            record.version,
            record.tool.description,
            record.tool.input_schema.fields.len()
        ));
        entries.push(json!({
            "name": record.tool.name,
            "version": record.version,
            "description": record.tool.description,
            "params": record.tool.input_schema.field_names(),
        }));
    }
    for d in &diagnostics {
        lines.push(format!("[diagnostic] {}: {}", d.file, d.error));
    }
    Ok(CommandOutput {
        human: if lines.is_empty() { "(empty registry)".to_string() } else { lines.join("\n") },
        json: json!({ "tools": entries, "diagnostics": diagnostics }),
    })
}

fn report_cmd(registry_dir: &Path) -> Result<CommandOutput, CliError> {
    let (registry, _) = Registry::load(registry_dir).map_err(|e| CliError::new(e.to_string()))?;
    let mut rows = Vec::new();
    let mut tries_histogram: BTreeMap<u32, u32> = BTreeMap::new();
    let mut human = String::from("tool                 ver  steps  agentic  fail  tries\n");
    for record in registry.all_latest() {
        // recompute every metric from stored provenance; nothing cached
        let report = &record.provenance.final_report;
        let fail_rate = crate::validate::recompute_fail_rate(report);
        let steps = record.tool.script.steps.len();
        let agentic = record.tool.script.agentic_ratio();
        let tries = record.provenance.attempts.len() as u32;
        *tries_histogram.entry(tries).or_insert(0) += 1;
        human.push_str(&format!(
            "{:<20} {:>3}  {:>5}  {:>7.2}  {:>4.2}  {:>5}\n",
            record.tool.name, record.version, steps, agentic, fail_rate, tries
        ));
        rows.push(json!({
            "name": record.tool.name,
            "version": record.version,
            "step_count": steps,
            "agentic_ratio": agentic,
            "fail_rate": fail_rate,
            "tries_until_success": tries,
        }));
    }
    human.push_str("\ntries-until-success histogram:\n");
    for (tries, count) in &tries_histogram {
        human.push_str(&format!("  {tries} tries: {count} tool(s) {}\n", "#".repeat(*count as usize)));
    }
    Ok(CommandOutput {
        human,
        json: json!({ "tools": rows, "tries_histogram": tries_histogram }),
    })
}

fn serve_cmd(seed: u64, port: u16) -> Result<CommandOutput, CliError> {
    let server = FixtureServer::start(seed, FixtureConfig::default(), port)
        .map_err(|e| CliError::new(e.to_string()))?;
    eprintln!("fixture site on {} (seed {seed}); Ctrl-C to stop", server.base_url());
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
