use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::society::{HumanRequest, SocietyRun};
use super::RuntimeError;
use crate::cpn::Token;

pub const ANSWERS_FORMAT: &str = "answers/1";

/// What a human does for one request: output scalars by label, and robot
/// commands issued through the interface before answering.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAnswer {
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robot_commands: Vec<String>,
}

/// Answers per procedure name, consumed in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerScript {
    pub format: String,
    pub answers: BTreeMap<String, Vec<ScriptedAnswer>>,
}

pub fn parse_answers(text: &str) -> Result<AnswerScript, String> {
    let script: AnswerScript = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if script.format != ANSWERS_FORMAT {
        return Err(format!("unsupported format `{}`, expected `{ANSWERS_FORMAT}`", script.format));
    }
    Ok(script)
}

/// Stands in for the people behind human-interface agents.
pub trait HumanDriver {
    fn answer(&mut self, request: &HumanRequest) -> Option<ScriptedAnswer>;
}

/// Answers from an [`AnswerScript`]. Once a procedure's list is used up its
/// last answer is repeated.
#[derive(Debug, Clone)]
pub struct ScriptedHuman {
    script: AnswerScript,
    used: BTreeMap<String, usize>,
}

impl ScriptedHuman {
    pub fn new(script: AnswerScript) -> Self {
        ScriptedHuman {
            script,
            used: BTreeMap::new(),
        }
    }
}

impl HumanDriver for ScriptedHuman {
    fn answer(&mut self, request: &HumanRequest) -> Option<ScriptedAnswer> {
        let list = self.script.answers.get(&request.procedure)?;
        let n = self.used.entry(request.procedure.clone()).or_default();
        let a = list.get(*n).or(list.last()).cloned();
        *n += 1;
        a
    }
}

/// Runs until quiescence, answering requests through `driver`.
pub fn run_society(run: &mut SocietyRun, driver: &mut dyn HumanDriver, max_steps: u64) -> Result<(), RuntimeError> {
    loop {
        let pending: Vec<HumanRequest> = run.pending_requests().into_iter().cloned().collect();
        for req in pending {
            let answer = driver.answer(&req).ok_or_else(|| RuntimeError::UnscriptedRequest {
                procedure: req.procedure.clone(),
                request: req.id.clone(),
            })?;
            for line in &answer.robot_commands {
                run.robot_command(line).map_err(|reason| RuntimeError::ProcedureFailure {
                    agent: req.agent.clone(),
                    procedure: req.procedure.clone(),
                    reason,
                })?;
            }
            let mut outputs = BTreeMap::new();
            for p in &req.result_schema {
                let text = answer.outputs.get(&p.label).ok_or_else(|| RuntimeError::SchemaMismatch {
                    request: req.id.clone(),
                    reason: format!("scripted answer lacks output `{}`", p.label),
                })?;
                outputs.insert(
                    p.label.clone(),
                    Token::new(p.colorset.name.clone(), p.colorset.value_from_scalar(text)),
                );
            }
            run.submit_result(&req.id, outputs)?;
        }
        if run.is_quiescent() {
            return Ok(());
        }
        if run.steps() >= max_steps {
            return Err(RuntimeError::Starvation { steps: run.steps() });
        }
        if !run.step()? {
            return Err(RuntimeError::Deadlock {
                queued: run.channels.queued(),
            });
        }
    }
}
