//! The built-in root environment: task control actions shared by every
//! session.

use gdt_core::{ActionKind, ActionSchema, ActionValue, ParamSpec, ParamType};

use crate::host::{text, Environment, HandlerError, Params};
use crate::protocol::EnvironmentSpec;

pub const ROOT_ENV: &str = "root";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RootState {
    pub submitted_answer: Option<String>,
    pub complete_called: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RootEnv {
    pub state: RootState,
}

impl Environment for RootEnv {
    fn spec(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            name: ROOT_ENV.into(),
            description: "The benchmark root environment, used to submit answers and end the task.".into(),
            actions: vec![
                ActionSchema::new(ROOT_ENV, "submit", ActionKind::Regular, "Submit your answer if the task asks for one.")
                    .param(ParamSpec::new("answer", ParamType::String, "the answer to submit.")),
                ActionSchema::new(
                    ROOT_ENV,
                    "complete",
                    ActionKind::Regular,
                    "Tell the system the task is completed.",
                ),
                ActionSchema::new(
                    ROOT_ENV,
                    "answer_equals",
                    ActionKind::Evaluator,
                    "Whether the last submitted answer equals the expected text exactly.",
                )
                .param(ParamSpec::new("expected", ParamType::String, "the expected answer.")),
            ],
        }
    }

    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError> {
        match action {
            "submit" => {
                self.state.submitted_answer = Some(text(params, "answer").to_owned());
                Ok(ActionValue::None)
            }
            "complete" => {
                self.state.complete_called = true;
                Ok(ActionValue::None)
            }
            "answer_equals" => Ok(ActionValue::Bool(
                self.state.submitted_answer.as_deref() == Some(text(params, "expected")),
            )),
            other => Err(HandlerError::new("UnknownAction", other)),
        }
    }

    fn reset(&mut self) {
        self.state = RootState::default();
    }
}
