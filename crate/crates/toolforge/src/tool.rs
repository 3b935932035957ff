//! The callable tool: an action script plus its validated input schema.

use serde::{Deserialize, Serialize};

use crate::schema::{check_bijection, InputSchema, SchemaError};
use crate::synth::ActionScript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub description: String,
    pub start_url: String,
    pub script: ActionScript,
    /// The pass-1 script retained when URL promotion fired, so validation
    /// can keep asserting extraction equivalence between the two routes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unpromoted_script: Option<ActionScript>,
    pub input_schema: InputSchema,
}

impl Tool {
    /// Script/schema bijection plus the scripts' own structural invariants.
    pub fn validate(&self) -> Result<(), SchemaError> {
        self.input_schema.validate()?;
        self.script
            .validate()
            .map_err(|e| SchemaError::Invalid(e.to_string()))?;
        check_bijection(&self.script, &self.input_schema)?;
        if let Some(unpromoted) = &self.unpromoted_script {
            unpromoted
                .validate()
                .map_err(|e| SchemaError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn is_promoted(&self) -> bool {
        self.unpromoted_script.is_some()
    }
}
