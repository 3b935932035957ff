//! toolforge reverse-engineers website functionality from recorded
//! interaction traces into validated, parameterized, re-executable tools.
//!
//! The pipeline: a recorded demonstration (`trace`) is resolved to stable
//! locators (`stabilize`), compiled to a straight-line action script
//! (`synth`), optionally collapsed onto a reverse-engineered URL route
//! (`promote`), given an induced input schema (`schema`), and then executed
//! end-to-end against pre-vetted test inputs (`exec`, `validate`) until it
//! passes or the attempt budget runs out. Validated tools persist in a
//! versioned registry (`registry`) and run as atomic actions. A seedable
//! fixture website (`fixture`) makes every step reproducible offline.

pub mod cli;
pub mod dom;
pub mod exec;
pub mod fixture;
pub mod promote;
pub mod reasoner;
pub mod registry;
pub mod schema;
pub mod stabilize;
pub mod synth;
pub mod tool;
pub mod trace;
pub mod urls;
pub mod validate;
